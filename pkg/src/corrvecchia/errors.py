"""Exception types shared across the library."""


class CorrVecchiaError(Exception):
    """Base class for all library errors."""


class NotPositiveDefinite(CorrVecchiaError):
    """A matrix that must be SPD failed its factorization."""


class SingularMatrix(CorrVecchiaError):
    """Triangular solve hit a zero diagonal."""


class DimensionMismatch(CorrVecchiaError):
    """Operands have incompatible shapes."""


class InvalidParameter(CorrVecchiaError):
    """A covariance parameter is out of its valid domain or non-finite."""


class NegativeNoise(CorrVecchiaError):
    """A noise variance is negative."""


class ZeroNoise(CorrVecchiaError):
    """The IC noise path requires strictly positive noise variances."""


class InvalidShape(CorrVecchiaError):
    """Scenario shape parameters are inconsistent."""


class EmptyTestSet(CorrVecchiaError):
    """A train/test split produced no test items."""


class ParseError(CorrVecchiaError):
    """A CSV cell failed to parse; message names row and column."""


class MissingColumn(CorrVecchiaError):
    """A required CSV column is absent."""


class DivergenceDetected(CorrVecchiaError):
    """Fisher scoring kept decreasing the loglikelihood despite damping."""
