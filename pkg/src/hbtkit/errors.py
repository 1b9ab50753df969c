"""Exception hierarchy shared by all hbtkit modules."""


class HbtError(ValueError):
    """Base class for all toolkit errors."""


class DiscriminantError(HbtError):
    """A^2 - 4B < 0: the rate set has complex relaxation rates."""


class DegenerateCoefficientsError(HbtError):
    """The coefficient formulas divide by zero (r31 = 0 or tau1 = tau2)."""


class InfeasibleRatesError(HbtError):
    """No non-negative rate set reproduces the requested coefficients."""


class StreamError(HbtError):
    """Timestamp stream violates ordering or duration requirements."""


class MetadataError(HbtError):
    """A histogram lacks the metadata needed for the requested stage."""


class StageError(HbtError):
    """Histogram stage transition out of order."""


class FitDataError(HbtError):
    """Input data unsuitable for the requested fit."""


class SingularJacobianError(HbtError):
    """The Jacobian is rank deficient at the solution."""


class FileFormatError(HbtError):
    """A data file could not be parsed."""

    def __init__(self, message, record=None):
        if record is not None:
            message = f"{message} (record {record})"
        super().__init__(message)
        self.record = record


class ConfigError(HbtError):
    """Invalid pipeline configuration; ``field`` names the offending entry."""

    def __init__(self, message, field=None, line=None):
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)
        self.field = field
        self.line = line
