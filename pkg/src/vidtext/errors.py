"""Exception hierarchy shared by every subpackage."""


class VidTextError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(VidTextError, ValueError):
    pass


class ConfigError(VidTextError, ValueError):
    pass


class DegenerateInputError(VidTextError, ValueError):
    """Zero-norm vectors, empty inputs and similar degenerate cases."""


class NumericError(VidTextError, ArithmeticError):
    """A NaN or infinity showed up where a finite value is required."""


class BatchError(VidTextError, ValueError):
    pass


class ScheduleError(VidTextError, ValueError):
    pass


class MalformedCaptionError(VidTextError, ValueError):
    pass


class FormatError(VidTextError, ValueError):
    """Corrupt or truncated on-disk container."""

    def __init__(self, message, offset=None, path=None):
        self.offset = offset
        self.path = path
        parts = [message]
        if offset is not None:
            parts.append(f"at byte offset {offset}")
        if path is not None:
            parts.append(f"in {path}")
        super().__init__(" ".join(parts))
