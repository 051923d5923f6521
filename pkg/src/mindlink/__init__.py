"""Simulated brain-activity link: synthetic traces, templates, relay, classifiers."""

from mindlink.errors import MindlinkError

__version__ = "0.1.0"

__all__ = ["MindlinkError", "__version__"]
