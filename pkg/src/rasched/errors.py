"""Exception hierarchy shared by all modules."""


class RaschedError(Exception):
    """Base class for every error raised by this package."""


class DomainError(RaschedError, ValueError):
    """An argument lies outside the domain of the operation."""


class FittingError(RaschedError):
    """A moment pair cannot be represented within the configured limits."""


class EvaluationError(RaschedError):
    """The exact objective could not be evaluated."""


class NumericalHealthError(EvaluationError):
    """An expectation came out negative beyond round-off."""


class InstanceFormatError(RaschedError, ValueError):
    """An instance or solution file is malformed."""
