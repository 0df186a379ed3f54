"""Exception types raised across the package."""


class ResconError(Exception):
    """Base class for all package errors."""


class NoSpanningTree(ResconError):
    pass


class EmptySubset(ResconError, ValueError):
    pass


class TooLarge(ResconError, ValueError):
    pass


class NotStabilizable(ResconError):
    pass


class DegenerateVariance(ResconError, ValueError):
    pass


class DimensionMismatch(ResconError, ValueError):
    pass


class QuadratureFailure(ResconError):
    pass


class TooFewSamples(ResconError, ValueError):
    pass


class ConfigError(ResconError, ValueError):
    """A scenario violates one of its invariants."""


class SchemaError(ResconError, ValueError):
    """A scenario file could not be read or failed schema validation."""


class RefusesAttackScenario(ResconError, ValueError):
    """Threshold calibration was asked to run on a scenario containing attacks."""
