"""Exception hierarchy shared by all ifcsim modules."""


class IfcSimError(Exception):
    """Base class for every error raised by ifcsim."""


class NonSimpleConfiguration(IfcSimError):
    pass


class IndexOutOfRange(IfcSimError, IndexError):
    pass


class CollisionTooClose(IfcSimError):
    """Drift requested at a point closer than the collision tolerance to another particle."""


class NonConvergentSum(IfcSimError):
    pass


class MCMCNotMixed(IfcSimError):
    pass


class CollisionAbort(IfcSimError):
    """Sub-stepping could not keep particles apart (or in order) within the depth budget."""

    def __init__(self, message, time=None, events=None):
        super().__init__(message)
        self.time = time
        self.events = events or []


class DomainViolation(CollisionAbort):
    """A Bessel particle crossed the hard edge at 0."""


class IndivisibleFactor(IfcSimError, ValueError):
    pass


class InsufficientEnsemble(IfcSimError, ValueError):
    pass


class GridMismatch(IfcSimError, ValueError):
    pass


class DegeneratePair(IfcSimError, ValueError):
    pass


class NonPositiveArgument(IfcSimError, ValueError):
    pass


class SchemaMismatch(IfcSimError, ValueError):
    pass


class ConfigError(IfcSimError, ValueError):
    """Invalid run configuration (unknown key, bad value)."""
