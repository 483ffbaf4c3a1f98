"""Exception types shared across the package."""


class GpSketchError(Exception):
    """Base class for all gpsketch errors."""


class DimensionMismatch(GpSketchError):
    """Operands have incompatible shapes."""


class InvalidShape(GpSketchError):
    """A size or rank argument is out of range."""


class NotPositiveDefinite(GpSketchError):
    """Cholesky pivot fell below the jitter floor even after regularization."""


class SingularMatrix(GpSketchError):
    """Smallest eigenvalue is numerically nonpositive."""


class ConvergenceFailure(GpSketchError):
    """An iterative eigensolver hit its iteration cap."""


class RankDeficientSketch(GpSketchError):
    """The sketched core matrix has no usable rank left."""


class SingularKnotMatrix(GpSketchError):
    """Knot covariance is singular (duplicate or near-duplicate knots)."""


class NegativeVarianceDeficit(GpSketchError):
    """Approximate variance exceeds the exact variance beyond tolerance."""


class NonFiniteLikelihood(GpSketchError):
    """Log-likelihood evaluated to NaN or infinity."""


class NonFiniteState(GpSketchError):
    """A sampler state became non-finite; message carries the iteration."""


class ChainTooShort(GpSketchError):
    """Chain has too few samples for the requested diagnostic."""


class SingularCovariance(GpSketchError):
    """A covariance operand is not invertible."""


class SchemaMismatch(GpSketchError):
    """Raw data file does not match the declared ingestion schema."""


class ParseError(GpSketchError):
    """A data or config file failed to parse; message carries the line."""
