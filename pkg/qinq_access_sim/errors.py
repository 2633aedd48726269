class FrameError(ValueError):
    """Base class for malformed or invalid frames."""


class VlanRangeError(FrameError):
    pass


class TagUnderflowError(FrameError):
    pass


class TruncatedFrameError(FrameError):
    pass


class ChecksumError(FrameError):
    pass


class FrameFormatError(FrameError):
    pass


class ClassificationError(ValueError):
    pass


class ConfigError(ValueError):
    """Invalid scenario configuration. `key` is the dotted path of the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
        self.message = message


class SimulationOrderError(RuntimeError):
    pass


class AccountingError(RuntimeError):
    pass


class ReportError(ValueError):
    """A run directory is missing or holds unreadable results."""
