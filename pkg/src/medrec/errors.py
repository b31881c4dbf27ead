"""Shared exception types.

Every error raised by the package derives from MedrecError so the CLI and
service can map failures to exit codes / HTTP statuses in one place.
"""


class MedrecError(Exception):
    """Base class for all package errors."""


class ShapeError(MedrecError):
    """Tensor operands have incompatible shapes."""


class NumericError(MedrecError):
    """Non-finite values where finite ones are required."""


class ConfigError(MedrecError):
    """Invalid configuration value."""


class CheckError(MedrecError):
    """Gradient check could not be evaluated."""


class EncodingError(MedrecError):
    """Code index out of range for its vocabulary."""


class SplitError(MedrecError):
    """Cohort cannot be partitioned as requested."""


class CohortFormatError(MedrecError):
    """Cohort file line failed to parse."""


class SchemaError(MedrecError):
    """Cohort record carries an unknown field."""


class DataError(MedrecError):
    """Input data violates a documented precondition."""


class GraphError(MedrecError):
    """Drug graph structure is unusable (e.g. empty neighborhood)."""


class MetricError(MedrecError):
    """Metric undefined for the given inputs."""


class TrainingError(MedrecError):
    """Training diverged or hit an unrecoverable state."""
