"""Exception types shared across the package."""


class DoaError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(DoaError):
    """Input vector length does not match the machine count."""


class NoConvergence(DoaError):
    """An iterative solver or descent flow did not converge.

    Carries optional diagnostics so callers can inspect the failed run.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class NotStable(DoaError):
    """A refined operating point has a non-negative Jacobian eigenvalue."""


class NotEquilibrium(DoaError):
    """Classification requested at a point with a large field residual."""


class DegenerateDirections(DoaError):
    """The augmented-direction pair (v, w) became numerically orthogonal."""


class NonFiniteField(DoaError):
    """A vector-field callback returned NaN or Inf."""


class DivergedLoss(DoaError):
    """Training loss became non-finite; last finite checkpoint is attached."""

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint


class OriginPoint(DoaError):
    """Radial extension is undefined for a cloud point at the origin."""


class ZeroVectorAtNode(DoaError):
    """A cosine diagnostic was requested against a zero vector."""


class HyperbolicityWarning(UserWarning):
    """An eigenvalue real part is too close to zero to classify reliably."""
