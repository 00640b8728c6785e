"""The perturbed stochastic Hamiltonian system on the plane.

    dx = (w - |w|^q) n x dt + eps_x dB1
    dy = (-w - |w|^q) m y dt + eps_y dB2,      w = h'(x^m y^n) x^(m-1) y^(n-1)

With the q-terms dropped and no noise this is the Hamiltonian flow of
H(x, y) = h(x^m y^n), whose closed-form solutions are provided for checking.

All evaluators accept either a :class:`State` or an ``(x, y)`` pair of
numpy arrays and broadcast over the arrays.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import (
    BlowUpError,
    InputError,
    MonomialOverflowError,
    ParameterError,
    UnsupportedOperationError,
    WrongRegimeError,
)


@dataclass(frozen=True)
class HProfile:
    name: str
    h: Callable
    h_prime: Callable
    a: float


def _identity(t):
    return t


def _one(t):
    return np.ones_like(np.asarray(t, dtype=float))


def _negated(t):
    return -np.asarray(t, dtype=float)


def _minus_one(t):
    return -np.ones_like(np.asarray(t, dtype=float))


def _wobble(t):
    return t + 0.5 * np.sin(t)


def _wobble_prime(t):
    return 1.0 + 0.5 * np.cos(t)


PROFILES = {
    "identity": HProfile("identity", _identity, _one, 1.0),
    "negated": HProfile("negated", _negated, _minus_one, 1.0),
    "wobble": HProfile("wobble", _wobble, _wobble_prime, 0.5),
}


@dataclass(frozen=True)
class State:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InputError(f"state must be finite, got ({self.x!r}, {self.y!r})")

    def __iter__(self):
        yield self.x
        yield self.y


@dataclass(frozen=True)
class ModelParams:
    """Parameters (m, n, q, eps_x, eps_y, h, h', a) of the system.

    ``degenerate_noise`` admits eps_x = eps_y = 0 (deterministic limits in
    tests); ``pure_hamiltonian`` drops the |w|^q dissipation so the drift is
    exactly the Hamiltonian vector field.
    """

    m: int
    n: int
    q: float
    eps_x: float
    eps_y: float
    h_prime: Callable
    a: float
    h: Callable | None = None
    profile: str | None = None
    pure_hamiltonian: bool = False
    degenerate_noise: bool = False

    def __post_init__(self):
        for name in ("m", "n"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 2:
                raise ParameterError(f"{name} must be an integer >= 2 (got {v!r})")
        if not (math.isfinite(self.q) and self.q > 1):
            raise ParameterError(f"q must be a real number > 1 (got {self.q!r})")
        for name in ("eps_x", "eps_y"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0 or (v == 0 and not self.degenerate_noise):
                raise ParameterError(f"{name} must be > 0 (got {v!r})")
        if not (math.isfinite(self.a) and self.a > 0):
            raise ParameterError(f"a (lower bound on |h'|) must be > 0 (got {self.a!r})")

    @classmethod
    def from_profile(cls, m, n, q, eps_x, eps_y, profile="identity", **kw):
        try:
            p = PROFILES[profile]
        except KeyError:
            raise ParameterError(f"unknown h profile {profile!r}; choose from {sorted(PROFILES)}") from None
        return cls(m=m, n=n, q=float(q), eps_x=float(eps_x), eps_y=float(eps_y),
                   h_prime=p.h_prime, a=p.a, h=p.h, profile=p.name, **kw)

    def replace(self, **changes) -> "ModelParams":
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields.update(changes)
        return ModelParams(**fields)

    def check_profile(self, ts=None, fd_step=1e-4):
        """Probe |h'| >= a and, if h is given, that h' is the derivative of h.

        Returns the worst second-order finite-difference mismatch (0 when h
        is absent); raises ParameterError when |h'| dips below a.
        """
        if ts is None:
            ts = np.concatenate([np.linspace(-50, 50, 20001), np.geomspace(1e-8, 1e12, 400),
                                 -np.geomspace(1e-8, 1e12, 400)])
        ts = np.asarray(ts, dtype=float)
        hp = np.asarray(self.h_prime(ts), dtype=float)
        bad = np.abs(hp) < self.a
        if bad.any():
            t0 = ts[np.argmax(bad)]
            raise ParameterError(f"|h'({t0!r})| = {abs(self.h_prime(t0))!r} < a = {self.a!r}")
        if self.h is None:
            return 0.0
        local = ts[np.abs(ts) < 1e3]
        fd = (self.h(local + fd_step) - self.h(local - fd_step)) / (2 * fd_step)
        return float(np.max(np.abs(fd - self.h_prime(local))))

    def to_dict(self):
        return {
            "m": int(self.m), "n": int(self.n), "q": float(self.q),
            "eps_x": float(self.eps_x), "eps_y": float(self.eps_y),
            "a": float(self.a), "h": self.profile or "custom",
            "pure_hamiltonian": bool(self.pure_hamiltonian),
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


class DriftFields(NamedTuple):
    w: np.ndarray
    u: np.ndarray
    fx: np.ndarray
    fy: np.ndarray


def ipow(x, k: int):
    """x**k for a non-negative integer k by repeated squaring (exact sign for x < 0)."""
    x = np.asarray(x, dtype=float)
    result = np.ones_like(x)
    base = x
    while k:
        if k & 1:
            result = result * base
        k >>= 1
        if k:
            base = base * base
    return result


def _raw_fields(params: ModelParams, x, y):
    m, n = params.m, params.n
    xm1 = ipow(x, m - 1)
    yn1 = ipow(y, n - 1)
    mono = xm1 * yn1
    t = mono * x * y
    w = np.asarray(params.h_prime(t), dtype=float) * mono
    u = np.abs(w)
    if params.pure_hamiltonian:
        fx = w * n * x
        fy = -w * m * y
    else:
        uq = u ** params.q
        fx = (w - uq) * n * x
        fy = (-w - uq) * m * y
    return t, w, u, fx, fy


def _as_xy(s):
    x, y = s
    return np.asarray(x, dtype=float), np.asarray(y, dtype=float)


def drift_fields(params: ModelParams, s) -> DriftFields:
    x, y = _as_xy(s)
    with np.errstate(over="ignore", invalid="ignore"):
        t, w, u, fx, fy = _raw_fields(params, x, y)
    for label, arr in (("x^m y^n", t), ("w = h'(x^m y^n) x^(m-1) y^(n-1)", w),
                       ("x-drift", fx), ("y-drift", fy)):
        bad = ~np.isfinite(arr)
        if bad.any():
            i = np.unravel_index(np.argmax(bad), bad.shape) if bad.ndim else ()
            raise MonomialOverflowError(label, float(np.broadcast_to(x, bad.shape)[i]),
                                        float(np.broadcast_to(y, bad.shape)[i]))
    return DriftFields(w, u, fx, fy)


class LyapunovValue(NamedTuple):
    """Value, first partials and pure second partials of a C^2 function at a point.

    The generator has no mixed derivative term, so d2/dxdy is never needed.
    """

    value: np.ndarray
    dx: np.ndarray
    dy: np.ndarray
    dxx: np.ndarray
    dyy: np.ndarray


def generator_apply(params: ModelParams, f: LyapunovValue, s):
    """Apply the diffusion generator to the jet ``f`` evaluated at ``s``."""
    for name, part in zip(("dx", "dy", "dxx", "dyy"), f[1:]):
        if not np.all(np.isfinite(part)):
            raise InputError(f"partial {name} is not finite")
    fields = drift_fields(params, s)
    return (fields.fx * f.dx + 0.5 * params.eps_x ** 2 * f.dxx
            + fields.fy * f.dy + 0.5 * params.eps_y ** 2 * f.dyy)


def generator_fd(params: ModelParams, f: Callable, s, h):
    """Generator of the scalar function ``f(x, y)`` from central differences.

    ``h`` is one step for both coordinates or a pair ``(hx, hy)``; either
    may be an array broadcasting against the points.
    """
    x, y = _as_xy(s)
    hx, hy = (h, h) if np.ndim(h) == 0 else h
    f0 = f(x, y)
    fxp, fxm = f(x + hx, y), f(x - hx, y)
    fyp, fym = f(x, y + hy), f(x, y - hy)
    jet = LyapunovValue(f0, (fxp - fxm) / (2 * hx), (fyp - fym) / (2 * hy),
                        (fxp - 2 * f0 + fxm) / (hx * hx), (fyp - 2 * f0 + fym) / (hy * hy))
    return generator_apply(params, jet, (x, y))


def hamiltonian(params: ModelParams, s):
    if params.h is None:
        raise UnsupportedOperationError("hamiltonian needs h; only h' was supplied")
    x, y = _as_xy(s)
    return params.h(ipow(x, params.m) * ipow(y, params.n))


def _initial_rate(params: ModelParams, x0, y0):
    m, n = params.m, params.n
    t0 = ipow(x0, m) * ipow(y0, n)
    return float(params.h_prime(t0) * ipow(x0, m - 1) * ipow(y0, n - 1))


def deterministic_solution_equal(params: ModelParams, s0, t: float) -> State:
    """Closed-form Hamiltonian flow for m == n (global in time)."""
    if params.m != params.n:
        raise WrongRegimeError("the exponential closed form needs m == n; use deterministic_solution_unequal")
    x0, y0 = (float(v) for v in s0)
    rate = params.m * _initial_rate(params, x0, y0)
    return State(x0 * math.exp(rate * t), y0 * math.exp(-rate * t))


def blowup_time(params: ModelParams, s0) -> float | None:
    """Forward blow-up time of the Hamiltonian flow for m != n, or None if global."""
    if params.m == params.n:
        raise WrongRegimeError("m == n: the Hamiltonian flow is global, there is no blow-up time")
    x0, y0 = (float(v) for v in s0)
    k = (params.m - params.n) * _initial_rate(params, x0, y0)
    if k <= 0:
        return None
    t_star = 1.0 / k
    return t_star if math.isfinite(t_star) else None


def deterministic_solution_unequal(params: ModelParams, s0, t: float) -> State:
    if params.m == params.n:
        raise WrongRegimeError("m == n: use deterministic_solution_equal")
    m, n = params.m, params.n
    x0, y0 = (float(v) for v in s0)
    bracket = 1.0 - (m - n) * _initial_rate(params, x0, y0) * t
    if bracket <= 0:
        raise BlowUpError(blowup_time(params, s0))
    return State(x0 * bracket ** (n / (n - m)), y0 * bracket ** (m / (m - n)))
