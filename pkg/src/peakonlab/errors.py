"""Exception types shared across the package.

The CLI maps these onto exit codes: scenario/config problems exit with 2,
runtime failures (collision, lost convergence) with 3.
"""


class PeakonLabError(Exception):
    """Base class for all package errors."""


class InvalidScenario(PeakonLabError):
    """Scenario or config violates an invariant (bad velocities, spacing...)."""


class SignOrderViolation(PeakonLabError):
    """Perturbed train lost the negative-left / positive-right pattern."""


class IntegrationError(PeakonLabError):
    """Base for failures inside the ODE integrator; carries the failure time."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class CollisionDetected(IntegrationError):
    """Two positions came within the collision threshold; the ordered-train
    regime no longer applies."""


class StepSizeUnderflow(IntegrationError):
    """The step controller could not meet the error tolerance."""


class NotPositiveDefinite(PeakonLabError):
    """The symmetric kernel matrix has a numerically nonpositive eigenvalue
    (coincident positions)."""


class BadScale(PeakonLabError):
    """Explicitly requested weight scale outside the admissible range."""


class WeightProfileError(PeakonLabError):
    """Constructed weight profile failed one of its build-time checks."""


class NoConvergence(PeakonLabError):
    """Damped Newton failed to reach tolerance; the field left the tube where
    the modulation equations have a nearby zero."""

    def __init__(self, message, t=None, residual=None):
        super().__init__(message)
        self.t = t
        self.residual = residual


class OrderingLost(PeakonLabError):
    """Modulation iterates ceased to be strictly increasing."""


class EmptyWindow(PeakonLabError):
    """Bump-tracking window exited the grid."""


class NotSettled(PeakonLabError):
    """Terminal speeds still drift too fast for the asymptotic comparison."""
