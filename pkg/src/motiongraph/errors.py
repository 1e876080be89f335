"""Exception types shared across the package."""


class MotionGraphError(Exception):
    pass


class DimensionError(MotionGraphError, ValueError):
    """Operand extents are incompatible with the requested operation."""


class ConfigurationError(MotionGraphError, ValueError):
    """A configuration value violates a structural constraint."""


class InputError(MotionGraphError, ValueError):
    """Input data is malformed (NaN, wrong range, bad file contents)."""


class StateError(MotionGraphError, RuntimeError):
    """An operation was invoked in an invalid state (e.g. backward without a tape)."""


class DivergenceError(MotionGraphError, FloatingPointError):
    """Training produced a non-finite loss or gradient."""

    def __init__(self, message: str, group: str | None = None):
        super().__init__(message)
        self.group = group
