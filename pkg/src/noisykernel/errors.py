"""Exception types shared across the package."""


class InvalidParameterError(ValueError):
    """A parameter violates its documented precondition."""


class NumericFaultError(ArithmeticError):
    """A computation produced a non-finite value or failed to converge."""


class IndexCapExceededError(NumericFaultError):
    """The randomized truncation index exceeded the hard safety cap."""


class DimensionMismatchError(ValueError):
    """Vector operands have incompatible dimensions."""


class EstimateMismatchError(ValueError):
    """Feature estimates were built under different kernels or sample laws."""


class QueryBudgetExceededError(RuntimeError):
    """An oracle received more queries than its per-round budget allows."""


class HorizonExceededError(ValueError):
    """A round index beyond the configured horizon was requested."""


class ConfigError(ValueError):
    """An experiment specification failed validation."""
