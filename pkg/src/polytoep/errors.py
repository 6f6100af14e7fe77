"""Exception hierarchy shared by all modules."""


class PolytoepError(ValueError):
    """Base class for every error raised by this package."""


# geometry
class DegenerateTriangle(PolytoepError):
    pass


class HypothesisTViolated(PolytoepError):
    """Raised when a signed perimeter weight of the triangle is not positive."""


class EmptyInterior(PolytoepError):
    pass


class NotConvex(PolytoepError):
    pass


class PointOutsideTriangle(PolytoepError):
    pass


# symbols and factorization
class AliasedGrid(PolytoepError):
    pass


class NonPositiveSymbol(PolytoepError):
    pass


class NonRealMean(PolytoepError):
    pass


class NonNegligibleImaginaryPart(PolytoepError):
    pass


class NotUnimodular(PolytoepError):
    pass


class ConeTooNarrowForExactPath(PolytoepError):
    """The log-symbol has spectrum outside the double cone and the singular
    transfer was disabled."""


class ConeNotInVertexCone(PolytoepError):
    pass


# operators
class NotPositiveDefinite(PolytoepError):
    pass


class DimensionMismatch(PolytoepError):
    pass


class BoxTooSmall(PolytoepError):
    pass


class SingularPathUnsupported(PolytoepError):
    pass


class TooLarge(PolytoepError):
    pass


class SolverDiverged(PolytoepError):
    pass


# asymptotics and harness
class SymbolNotContraction(PolytoepError):
    pass


class InsufficientData(PolytoepError):
    pass


class ConfigError(PolytoepError):
    pass
