"""Exception types shared across the package."""


class DegenerateBatchError(RuntimeError):
    """A weighted batch carries no usable weight."""


class NumericError(FloatingPointError):
    """A non-finite value appeared where a finite one is required."""


class TrainingError(RuntimeError):
    """Training could not proceed."""


class CheckpointError(ValueError):
    """A checkpoint file could not be read or does not match its declared shape."""
