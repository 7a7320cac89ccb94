"""Exception types raised across the package."""


class DomainError(ValueError):
    """A function was evaluated outside the interval it is defined on."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


class IntegrationError(RuntimeError):
    """The Runge-Kutta integrator failed (step-size underflow, blow-up, ...)."""


class ConvergenceError(RuntimeError):
    """A fixed-point or Picard iteration did not converge."""


class NonHyperbolicError(ValueError):
    """An eigenvalue lies too close to the imaginary axis."""


class AdmissibilityError(ValueError):
    """Constants violate the smallness condition a result depends on."""


class AccuracyError(RuntimeError):
    """A computed quantity drifted from an identity it must satisfy."""
