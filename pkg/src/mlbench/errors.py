"""Exception hierarchy shared by every module."""


class MLBenchError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(MLBenchError, ValueError):
    """An argument violates a documented precondition."""


class ModelEvaluationError(MLBenchError, ArithmeticError):
    """A user-supplied density returned NaN."""


class UnsupportedTargetError(MLBenchError):
    """The requested operation is not available for this target."""


class InitializationError(MLBenchError):
    """No starting point with finite density could be found."""


class ConstrainedSamplingError(MLBenchError):
    """Sampling from a likelihood-constrained prior failed."""


class DegenerateWeightsError(MLBenchError, ArithmeticError):
    """All importance weights vanish, or a ratio has a zero denominator.

    ``level`` records the ladder level or iteration where it happened,
    when that is meaningful.
    """

    def __init__(self, message: str = "", level: int | None = None):
        super().__init__(message)
        self.level = level
