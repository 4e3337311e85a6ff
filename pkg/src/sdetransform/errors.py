"""Exception types raised by the library."""


class SdeTransformError(Exception):
    """Base class for all library errors."""


class QueryOutsideTubularNeighborhood(SdeTransformError):
    pass


class NoConvergence(SdeTransformError):
    pass


class NotOnSurface(SdeTransformError):
    pass


class DegenerateDiffusionAtJump(SdeTransformError):
    pass


class NonParallelityViolated(SdeTransformError):
    pass


class EmptySurfaceSampling(SdeTransformError):
    pass


class NonpositiveBound(SdeTransformError):
    pass


class SingularJacobian(SdeTransformError):
    pass


class InverseIterationDiverged(SdeTransformError):
    pass


class NonFiniteState(SdeTransformError):
    pass


class SimulationFailureBudgetExceeded(SdeTransformError):
    def __init__(self, failed, total):
        super().__init__(f"{failed} of {total} paths failed (budget 0.1%)")
        self.failed = failed
        self.total = total


class InsufficientLevels(SdeTransformError):
    pass


class MismatchedPathCounts(SdeTransformError):
    pass


class DegenerateDesign(SdeTransformError):
    pass


class InvalidIntensityMatrix(SdeTransformError):
    pass


class InvalidSimplexStart(SdeTransformError):
    pass


class ConfigurationError(SdeTransformError):
    pass
