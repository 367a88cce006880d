"""Exception hierarchy shared by every module."""


class CapreqError(ValueError):
    """Base class for all validation and numerical errors raised here."""


# market construction
class NonRefiningFiltration(CapreqError):
    pass


class ZeroProbabilityOutcome(CapreqError):
    pass


class FinalPartitionNotSingletons(CapreqError):
    pass


class SpaceMismatch(CapreqError):
    pass


class NotADensity(CapreqError):
    pass


# geometry
class DimensionMismatch(CapreqError):
    pass


class InvalidExponent(CapreqError):
    pass


class EmptySet(CapreqError):
    pass


class NoConvergence(CapreqError):
    pass


# scenarios / LP
class NotInHull(CapreqError):
    pass


class NumericalBreakdown(CapreqError):
    pass


class NoWitness(CapreqError):
    pass


class EmptySpec(CapreqError):
    pass


# hedging
class StepPositivityViolated(CapreqError):
    pass


class NegativeDensity(CapreqError):
    pass


class Infeasible(CapreqError):
    pass
