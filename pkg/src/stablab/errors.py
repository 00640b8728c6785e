"""Exception hierarchy shared by every stablab module."""


class StabLabError(Exception):
    """Base class for all library errors."""


class ParameterError(StabLabError, ValueError):
    """A model or integrator parameter violates its declared constraints."""


class InputError(StabLabError, ValueError):
    """A state, partial derivative or noise draw is not finite."""


class MonomialOverflowError(StabLabError, OverflowError):
    def __init__(self, monomial, x=None, y=None):
        self.monomial = monomial
        self.x = x
        self.y = y
        super().__init__(f"non-finite value while evaluating {monomial} at x={x!r}, y={y!r}")


class WrongRegimeError(StabLabError, ValueError):
    """Closed form requested for the wrong exponent regime (m == n vs m != n)."""


class UnsupportedOperationError(StabLabError):
    pass


class BlowUpError(StabLabError, ArithmeticError):
    """The deterministic flow leaves every bounded set at ``t_star``.

    ``t_star`` is either the exact blow-up time (closed form) or the last time
    the numerical integrator could still resolve the solution.
    """

    def __init__(self, t_star, message=None, partial=None):
        self.t_star = float(t_star)
        self.partial = partial  # trajectory up to t_star, when one was computed
        super().__init__(message or f"solution blows up at t* = {self.t_star!r}")


class DerivationError(StabLabError):
    """The constant-selection loop failed to satisfy every invariant."""


class SamplerContractError(StabLabError):
    """A region sampler returned points outside its region."""


class AssemblyError(StabLabError):
    """The global Lyapunov function cannot be glued for this ledger."""


class FitUnavailableError(StabLabError):
    """Too few checkpoints above the noise floor to fit an exponential decay."""

    def __init__(self, message, times=None, distances=None):
        self.times = times
        self.distances = distances
        super().__init__(message)
