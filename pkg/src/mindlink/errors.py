"""Exception hierarchy shared by all modules."""


class MindlinkError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(MindlinkError, ValueError):
    pass


class DataError(MindlinkError):
    """Malformed input data or on-disk/wire format."""


# signal
class BandViolation(MindlinkError, ValueError):
    pass


class EmptyVocabularyLabel(MindlinkError, ValueError):
    pass


# enroll / match / neuralnet
class ShapeMismatch(DataError, ValueError):
    pass


class CorruptTemplate(DataError):
    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason


class DuplicateItem(DataError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class TooShort(DataError, ValueError):
    pass


class DegenerateDataset(MindlinkError, ValueError):
    pass


class NonFiniteLoss(MindlinkError, ArithmeticError):
    pass


class CorruptNetwork(DataError):
    pass


# relay
class FrameError(DataError):
    """Base for wire-format decode failures."""


class BadMagic(FrameError):
    pass


class UnsupportedVersion(FrameError):
    pass


class ChecksumMismatch(FrameError):
    pass


class TruncatedFrame(FrameError):
    pass


class InconsistentHeaders(DataError, ValueError):
    pass
