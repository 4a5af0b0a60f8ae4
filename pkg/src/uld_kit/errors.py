"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """Inputs do not satisfy an operation's preconditions."""


class NumericalFailure(RuntimeError):
    """An iterative numerical routine did not converge."""


class PoisonedStateError(FloatingPointError):
    """A chain produced a non-finite gradient or state."""

    def __init__(self, step, message="non-finite gradient"):
        super().__init__(f"{message} at step {step}")
        self.step = step


class ReferenceResolutionError(RuntimeError):
    """The fine reference integrator could not meet its Richardson tolerance."""


class InstabilityError(FloatingPointError):
    """Exact law propagation diverged (step size outside the stable region)."""


class UnsupportedModelError(TypeError):
    """The requested check needs a potential family that was not supplied."""
