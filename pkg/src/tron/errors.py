"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
DivergenceError -> 4.
"""


class TronError(Exception):
    """Base class for all package errors."""


class ConfigError(TronError):
    """Invalid or inconsistent configuration."""


class DataError(TronError):
    """Malformed, missing, or inconsistent data."""


class DimensionError(TronError):
    """Operand shapes do not conform."""


class EmptySequenceError(DimensionError):
    """A recurrent unroll received a zero-length sequence."""


class DegenerateNormalizationError(DimensionError):
    """Layer normalization over fewer than two features."""


class DivergenceError(TronError):
    """Training produced a non-finite quantity."""


class NonFiniteGradientError(DivergenceError):
    """An optimizer step saw a NaN or infinite gradient element."""


class UnfillableGapError(DataError):
    """A sensor gap exceeds the maximum fillable length."""


class UnfittedScalerError(DataError):
    """transform/inverse_transform called before fit."""


class DegenerateChannelError(DataError):
    """A channel has max == min and cannot be min-max scaled."""


class GridError(ConfigError):
    """Grid step does not evenly divide the coordinate range."""


class ScenarioError(ConfigError):
    """Synthetic scenario parameters produce an invalid field."""


class DegenerateSampleError(DataError):
    """A target row has zero norm; relative error is undefined."""


class DegenerateVarianceError(DataError):
    """Targets have zero variance; R^2 is undefined."""


class CheckpointError(DataError):
    """Checkpoint bytes are truncated, corrupt, or mismatched."""
