"""Exception types shared across the package."""


class SSMAMPError(Exception):
    """Base class for all package-specific errors."""


class SingularSequence(SSMAMPError):
    """An L-banded value sequence has a repeated adjacent entry, so the
    implied covariance matrix is singular."""


class SingularCovariance(SSMAMPError):
    """A covariance matrix is numerically singular (rcond below threshold)."""


class SingularAugmentation(SSMAMPError):
    """Appending a row/column to a covariance matrix made it singular."""


class NonpositiveVariance(SSMAMPError):
    """A variance that must be positive is zero or negative."""


class DegenerateDivergence(SSMAMPError):
    """A denoiser divergence is so close to one that orthogonalization
    would blow up (no information gained about the signal)."""


class NoConvergence(SSMAMPError):
    """An iterative fixed-point search did not converge."""


class MissingHistory(SSMAMPError):
    """A diagnostic was requested on a trajectory that did not retain the
    per-iteration message history."""


class MonotonicityViolation(SSMAMPError):
    """A state-evolution variance sequence increased, indicating an
    internal inconsistency."""
