"""Exception hierarchy.

Every domain error derives from :class:`CocycleError`, so the CLI can map the
whole family to exit code 1.
"""


class CocycleError(Exception):
    """Base class for all domain errors raised by this package."""


class InvalidMatrix(CocycleError):
    pass


class InvalidBase(CocycleError):
    pass


class ShapeMismatch(CocycleError):
    pass


class OutOfRange(CocycleError):
    pass


class InvalidArgument(CocycleError):
    pass


class InvalidDim(CocycleError):
    pass


class NumericalFailure(CocycleError):
    pass


class NoStrongDirection(CocycleError):
    pass


class IllConditionedGap(CocycleError):
    pass


class NotSaddle(CocycleError):
    pass


class NotInvariant(CocycleError):
    pass


class AlreadyRealizable(CocycleError):
    """The 2x2 product has negative determinant, so its eigenvalues are real."""


class PeriodTooShort(CocycleError):
    def __init__(self, message, deficit=None):
        super().__init__(message)
        self.deficit = deficit


class ModuliNotDistinct(CocycleError):
    pass


class StillDominated(CocycleError):
    def __init__(self, message, achieved_angle=None):
        super().__init__(message)
        self.achieved_angle = achieved_angle


class EigenvaluesNotReal(CocycleError):
    pass


class BranchExhausted(CocycleError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class EndpointMismatch(CocycleError):
    pass


class NotInvertible(CocycleError):
    pass


class IncompatibleConcatenation(CocycleError):
    pass


class Escaped(CocycleError):
    pass


class InfeasibleSpec(CocycleError):
    pass


class StageFailed(CocycleError):
    """A pipeline stage failed; ``partial`` holds the outcome built so far."""

    def __init__(self, stage, cause, partial=None):
        super().__init__(f"stage {stage!r} failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
        self.partial = partial
