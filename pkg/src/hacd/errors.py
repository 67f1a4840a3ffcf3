"""Exception hierarchy shared by every module in the package."""


class HacdError(Exception):
    """Base class for all package errors."""


class ShapeError(HacdError, ValueError):
    pass


class FormatError(HacdError, ValueError):
    """Malformed file content (ENVI header, checkpoint, config)."""


class UnsupportedError(HacdError, ValueError):
    pass


class TruncationError(HacdError, ValueError):
    pass


class DegenerateError(HacdError, ValueError):
    """Input lacks the variability an operation needs (zero-variance band,
    single-element batch, single-class mask)."""


class ConditioningError(HacdError, ArithmeticError):
    pass


class PlacementError(HacdError, RuntimeError):
    pass


class LifecycleError(HacdError, RuntimeError):
    pass


class MisuseError(HacdError, RuntimeError):
    pass


class ConfigError(HacdError, ValueError):
    pass
