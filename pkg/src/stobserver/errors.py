"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Tensor shapes are incompatible for the requested operation."""


class ConfigurationError(ValueError):
    """A model, layer or experiment configuration is invalid."""


class GroupingError(ValueError):
    """Sequence length or channel count is not divisible by the group size."""


class ContractError(RuntimeError):
    """An API precondition was violated (e.g. backward on a non-scalar)."""


class NumericalError(ArithmeticError):
    """A computation produced non-finite values."""


class FormatError(ValueError):
    """A binary file has a bad magic, version or is truncated."""


class CheckpointError(ValueError):
    """A checkpoint does not match the model it is being loaded into."""
