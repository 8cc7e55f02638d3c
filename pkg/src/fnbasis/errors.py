"""Exception and warning types shared across the toolkit."""


class FnbasisError(Exception):
    """Base class for all toolkit errors."""


class ParseError(FnbasisError):
    """A mesh or data file could not be parsed under the declared format."""


class ValidationError(FnbasisError):
    """A mesh or derived structure violates a structural invariant."""


class UnsupportedFormat(FnbasisError):
    """File format not supported (e.g. binary PLY)."""


class DegenerateGeometry(FnbasisError):
    """Geometry too degenerate for a numerically meaningful operator."""


class ConvergenceError(FnbasisError):
    """Iterative eigensolver failed to converge."""


class DimensionError(FnbasisError):
    """Requested dimensions are incompatible with the input sizes."""


class ZeroFunction(FnbasisError):
    """A function with (numerically) zero norm was passed where a nonzero one is required."""


class RankError(FnbasisError):
    """A basis concatenation or solve produced a rank-deficient matrix."""


class MissingEigenvalues(FnbasisError):
    """An operation needs a basis with eigenvalues but got one without."""


class EmptyResult(FnbasisError):
    """An operation removed everything (e.g. a cut radius exceeding the mesh diameter)."""


class NonFiniteGradient(FnbasisError):
    """A training step produced NaN or infinite gradients."""


class RankWarning(UserWarning):
    """A solve involved an ill-conditioned matrix; the pseudoinverse result is flagged."""
