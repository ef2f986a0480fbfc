"""Exception hierarchy shared by all prta modules."""


class PrtaError(ValueError):
    pass


# pmf
class NegativeProbability(PrtaError):
    pass


class DuplicateSupportPoint(PrtaError):
    pass


class MassExceedsOne(PrtaError):
    pass


class UnnormalizedInput(PrtaError):
    pass


class TransformSizeOverflow(PrtaError):
    pass


class ZeroRepetitions(PrtaError):
    pass


# taskset
class EmptyRange(PrtaError):
    pass


class InfeasibleTotal(PrtaError):
    pass


class WcetBelowResolution(PrtaError):
    pass


class SchemaVersionMismatch(PrtaError):
    pass


class InvariantViolation(PrtaError):
    pass


# analysis
class UnknownTask(PrtaError):
    pass


class EmptyTaskSet(PrtaError):
    pass


class ZeroSamples(PrtaError):
    pass


# simulator
class SampleOutOfRange(PrtaError):
    pass


class MissingSample(PrtaError):
    pass


class ZeroScenarios(PrtaError):
    pass


class InvalidArrivalSequence(PrtaError):
    pass


# harness
class MissingMethodRows(PrtaError):
    pass
