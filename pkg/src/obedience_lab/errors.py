"""Exception types raised across the package."""


class ObedienceLabError(Exception):
    """Base class for all package errors."""


class NumericalFailure(ObedienceLabError):
    """A numerical routine could not proceed reliably (tiny pivots, lost rank)."""


class UnsupportedNorm(ObedienceLabError):
    """The requested norm/mode combination has no polyhedral formulation."""


class MissingNashProfile(ObedienceLabError):
    """The recommendation set lacks a statewise Nash flow."""

    def __init__(self, state: int):
        super().__init__(f"no recommendation profile matches the Nash flow of state {state}")
        self.state = state


class EmptySupport(ObedienceLabError):
    """A route carries no recommendation mass under the policy."""


class NotOptimal(ObedienceLabError):
    """An operation needs an optimal solve report."""


class NondifferentiablePoint(ObedienceLabError):
    """The dual-norm term is not differentiable at the given policy."""


class RankDeficientActiveSet(ObedienceLabError):
    """Active constraint gradients are (numerically) linearly dependent."""

    def __init__(self, sigma_min: float):
        super().__init__(f"smallest singular value {sigma_min:.3e} below threshold")
        self.sigma_min = sigma_min


class InputError(ObedienceLabError, ValueError):
    """Malformed input file or arguments."""
