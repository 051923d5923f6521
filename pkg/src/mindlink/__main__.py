import sys

from mindlink.cli import main

sys.exit(main())
