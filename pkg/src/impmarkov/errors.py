"""Exception types raised across the package."""


class ImpMarkovError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(ImpMarkovError, ValueError):
    pass


class NegativeOffDiagonal(ImpMarkovError, ValueError):
    pass


class RowSumViolation(ImpMarkovError, ValueError):
    pass


class NotUniquelyErgodic(ImpMarkovError):
    """The generator has more than one invariant probability measure."""


class NotReversible(ImpMarkovError):
    pass


class IntegrationByPartsViolation(ImpMarkovError):
    pass


class EllipticityError(ImpMarkovError, ValueError):
    pass


class PecletViolation(UserWarning):
    """Central differences produced a negative rate; the grid is too coarse."""


class IntransitiveRelation(ImpMarkovError):
    pass


class TooLarge(ImpMarkovError, ValueError):
    pass


class MissingExtremes(ImpMarkovError):
    """The family has no least or no greatest element."""


class NoConvergence(ImpMarkovError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConfigError(ImpMarkovError):
    def __init__(self, message, pointer=""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


class TaskFailure(ImpMarkovError):
    pass
