"""Lyapunov construction: constants, local functions, gluing and drift checks.

The plane is split by the size of the monomial P = |x|^(m-1) |y|^(n-1):

    R1 = {P >= c1}                      v1 = x^2 + y^2
    R2 = {P <= 2 c1, |x| >= c2}         v2 = x^2 (1 - k2 y^2)
    R3 = {P <= 2 c1, |y| >= c3}         v3 = y^2 (1 - k3 x^2)

and on the overlaps R1 & Ri the local functions are blended with a C^2
cut-off of lambda = (P / c1)^2, which runs from 1 to 4 across the overlap.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import AssemblyError, DerivationError, SamplerContractError
from .model import LyapunovValue, ModelParams, State, drift_fields, generator_apply, ipow

SAFETY = 1.05
# fraction of c2 (c3) where the global function starts handing over to v2 (v3)
HANDOVER = 0.9


# ---------------------------------------------------------------------------
# cut-off


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (s * (6 * s - 15) + 10)


def _smoothstep_d1(s):
    inside = (s > 0) & (s < 1)
    return np.where(inside, 30 * s * s * (1 - s) ** 2, 0.0)


def _smoothstep_d2(s):
    inside = (s > 0) & (s < 1)
    return np.where(inside, 60 * s * (1 - s) * (1 - 2 * s), 0.0)


def phi(t):
    """Cut-off: 0 for |t| <= 1, 1 for |t| >= 4, quintic smoothstep in between.

    Returns ``(value, first derivative, second derivative)``. The function is
    even in t.
    """
    t = np.asarray(t, dtype=float)
    s = (np.abs(t) - 1.0) / 3.0
    sign = np.sign(t)
    return _smoothstep(s), sign * _smoothstep_d1(s) / 3.0, _smoothstep_d2(s) / 9.0


def phi_bound(grid_size=200_001):
    """max(|phi|, |phi'|, |phi''|) over a fine grid of [0, 5]."""
    t = np.linspace(0.0, 5.0, grid_size)
    v, d1, d2 = phi(t)
    return float(max(np.max(np.abs(v)), np.max(np.abs(d1)), np.max(np.abs(d2))))


PHI_DESCRIPTION = "quintic smoothstep 6s^5-15s^4+10s^3, s=(|t|-1)/3 clipped to [0,1]"


# ---------------------------------------------------------------------------
# constants


@dataclass(frozen=True)
class LyapunovConstants:
    a: float
    rho: float
    b: float
    k2: float
    k3: float
    c1: float
    c2: float
    c3: float
    C2: float
    C3: float
    b12: float
    b13: float

    def to_dict(self):
        return asdict(self)


def _k_common(q):
    return 4.0 ** (q / (q - 1.0)) + 1.0


def _c2_from_c1(c1, C2, m, n):
    # invert C2 = (2 c1 / c2^(m-1))^(2/(n-1))
    return (2.0 * c1 * C2 ** (-(n - 1) / 2.0)) ** (1.0 / (m - 1))


def _c3_from_c1(c1, C3, m, n):
    # invert C3 = (2 c1 / c3^(n-1))^(2/(m-1))
    return (2.0 * c1 * C3 ** (-(m - 1) / 2.0)) ** (1.0 / (n - 1))


def c1_lower_bounds(params: ModelParams, rho: float, b: float) -> dict:
    """Every lower bound on c1 needed by the local drift inequalities and the gluing step."""
    m, n, q, a = params.m, params.n, params.q, params.a
    K = _k_common(q)
    k2 = K * n / params.eps_y ** 2
    k3 = K * m / params.eps_x ** 2
    C2 = n / (b * k2 * (m + n))
    C3 = m / (b * k3 * (m + n))
    b13 = 80.0 * params.eps_x ** 2 * rho * m * m * k3
    b12 = 80.0 * params.eps_y ** 2 * rho * n * n * k2
    return {
        "u_threshold": 4.0 ** (1.0 / (q - 1.0)) / a,
        "b13_square": 4.0 * math.sqrt(b13) / a,
        "b12_square": 4.0 * math.sqrt(b12) / a,
        "b13_power_q": (16.0 * b13) ** (1.0 / q) / a,
        "b12_power_q": (16.0 * b12) ** (1.0 / q) / a,
        "c3_noise_floor": 0.5 * (6.0 / k3) ** ((n - 1) / 2.0) * C3 ** ((m - 1) / 2.0),
        "c2_noise_floor": 0.5 * (6.0 / k2) ** ((m - 1) / 2.0) * C2 ** ((n - 1) / 2.0),
        "r2_r3_disjoint": 0.5 * C2 ** ((n - 1) / 2.0) * C3 ** ((m - 1) / 2.0),
    }


def check_invariants(params: ModelParams, k: LyapunovConstants, rtol=1e-9):
    """Independent assertion pass over a ledger.

    Returns a list of ``(name, ok, detail)`` tuples, one per invariant.
    """
    m, n, q, a = params.m, params.n, params.q, params.a
    K = _k_common(q)

    def close(u, v):
        return abs(u - v) <= rtol * max(abs(u), abs(v))

    out = []

    def add(name, ok, detail):
        out.append((name, bool(ok), detail))

    add("k2 = (4^(q/(q-1))+1) n / eps_y^2", close(k.k2, K * n / params.eps_y ** 2), k.k2)
    add("k3 = (4^(q/(q-1))+1) m / eps_x^2", close(k.k3, K * m / params.eps_x ** 2), k.k3)
    phimax = phi_bound()
    add("rho > max(|phi|,|phi'|,|phi''|) and rho > 1", k.rho > max(1.0, phimax), (k.rho, phimax))
    add("b > max(4, 64 rho m n)", k.b > max(4.0, 64 * k.rho * m * n), k.b)
    add("C2 = n / (b k2 (m+n))", close(k.C2, n / (k.b * k.k2 * (m + n))), k.C2)
    add("C3 = m / (b k3 (m+n))", close(k.C3, m / (k.b * k.k3 * (m + n))), k.C3)
    add("(2 c1 / c2^(m-1))^(2/(n-1)) = C2",
        close((2 * k.c1 / k.c2 ** (m - 1)) ** (2.0 / (n - 1)), k.C2), k.c2)
    add("(2 c1 / c3^(n-1))^(2/(m-1)) = C3",
        close((2 * k.c1 / k.c3 ** (n - 1)) ** (2.0 / (m - 1)), k.C3), k.c3)
    add("b13 = 80 eps_x^2 rho m^2 k3", close(k.b13, 80 * params.eps_x ** 2 * k.rho * m * m * k.k3), k.b13)
    add("b12 = 80 eps_y^2 rho n^2 k2", close(k.b12, 80 * params.eps_y ** 2 * k.rho * n * n * k.k2), k.b12)
    add("c1 > 4^(1/(q-1)) / a", k.c1 > 4.0 ** (1.0 / (q - 1.0)) / a, k.c1)
    add("a^2 c1^2 >= 16 b13", (a * k.c1) ** 2 >= 16 * k.b13, (a * k.c1) ** 2)
    add("a^2 c1^2 >= 16 b12", (a * k.c1) ** 2 >= 16 * k.b12, (a * k.c1) ** 2)
    add("(a c1)^q >= 16 b13", (a * k.c1) ** q >= 16 * k.b13, (a * k.c1) ** q)
    add("(a c1)^q >= 16 b12", (a * k.c1) ** q >= 16 * k.b12, (a * k.c1) ** q)
    add("c3^2 >= 6 / k3", k.c3 ** 2 >= 6.0 / k.k3, k.c3 ** 2)
    add("c2^2 >= 6 / k2", k.c2 ** 2 >= 6.0 / k.k2, k.c2 ** 2)
    add("R2 and R3 disjoint: c2^(m-1) c3^(n-1) > 2 c1",
        k.c2 ** (m - 1) * k.c3 ** (n - 1) > 2 * k.c1, k.c2 ** (m - 1) * k.c3 ** (n - 1))
    finite = all(math.isfinite(v) for v in asdict(k).values())
    add("all constants finite", finite, None)
    return out


def _ledger(params, rho, b, c1):
    m, n, q = params.m, params.n, params.q
    K = _k_common(q)
    k2 = K * n / params.eps_y ** 2
    k3 = K * m / params.eps_x ** 2
    C2 = n / (b * k2 * (m + n))
    C3 = m / (b * k3 * (m + n))
    return LyapunovConstants(
        a=params.a, rho=rho, b=b, k2=k2, k3=k3, c1=c1,
        c2=_c2_from_c1(c1, C2, m, n), c3=_c3_from_c1(c1, C3, m, n), C2=C2, C3=C3,
        b12=80.0 * params.eps_y ** 2 * rho * n * n * k2,
        b13=80.0 * params.eps_x ** 2 * rho * m * m * k3,
    )


def derive_constants(params: ModelParams, rho: float | None = None, safety: float = SAFETY,
                     max_doublings: int = 64) -> LyapunovConstants:
    """Solve the constant chain rho -> b -> k2, k3 -> c1 -> c2, c3.

    c1 starts at ``safety`` times the largest lower bound and is doubled until
    the independent assertion pass succeeds.
    """
    if params.eps_x <= 0 or params.eps_y <= 0:
        raise DerivationError("the Lyapunov construction needs eps_x, eps_y > 0")
    if rho is None:
        rho = safety * max(1.0, phi_bound())
    b = safety * max(4.001, 64.0 * rho * params.m * params.n)
    c1 = safety * max(c1_lower_bounds(params, rho, b).values())
    for _ in range(max_doublings + 1):
        with np.errstate(over="ignore"):
            k = _ledger(params, rho, b, c1)
        if all(ok for _, ok, _ in check_invariants(params, k)):
            return k
        c1 *= 2.0
    failed = [name for name, ok, _ in check_invariants(params, k) if not ok]
    raise DerivationError(f"constant selection did not converge; failing: {failed}")


def with_overrides(params: ModelParams, k: LyapunovConstants, **overrides) -> LyapunovConstants:
    """Replace ledger entries; c2 and c3 follow c1 unless overridden themselves.

    No invariant is re-checked, so this is how sabotaged ledgers are built.
    """
    unknown = set(overrides) - set(k.__dataclass_fields__)
    if unknown:
        raise KeyError(f"unknown constants: {sorted(unknown)}")
    k = replace(k, **{key: float(v) for key, v in overrides.items()})
    follow = {}
    if "c2" not in overrides:
        follow["c2"] = _c2_from_c1(k.c1, k.C2, params.m, params.n)
    if "c3" not in overrides:
        follow["c3"] = _c3_from_c1(k.c1, k.C3, params.m, params.n)
    return replace(k, **follow)


# ---------------------------------------------------------------------------
# regions


class RegionLabel(NamedTuple):
    in_r1: np.ndarray
    in_r2: np.ndarray
    in_r3: np.ndarray
    in_center: np.ndarray


def monomial(m, n, s):
    """P = |x|^(m-1) |y|^(n-1)."""
    x, y = s
    return ipow(np.abs(x), m - 1) * ipow(np.abs(y), n - 1)


def classify_region(k: LyapunovConstants, m: int, n: int, s) -> RegionLabel:
    x, y = (np.asarray(v, dtype=float) for v in s)
    P = monomial(m, n, (x, y))
    r1 = P >= k.c1
    low = P <= 2 * k.c1
    r2 = low & (np.abs(x) >= k.c2)
    r3 = low & (np.abs(y) >= k.c3)
    return RegionLabel(r1, r2, r3, ~(r1 | r2 | r3))


# ---------------------------------------------------------------------------
# local functions


def _xy(s):
    x, y = s
    return np.asarray(x, dtype=float), np.asarray(y, dtype=float)


def v1(s) -> LyapunovValue:
    x, y = _xy(s)
    two = np.full(np.broadcast(x, y).shape, 2.0)
    return LyapunovValue(x * x + y * y, 2 * x, 2 * y, two, two)


def v2(k: LyapunovConstants, s) -> LyapunovValue:
    x, y = _xy(s)
    g = 1.0 - k.k2 * y * y
    return LyapunovValue(x * x * g, 2 * x * g, -2 * k.k2 * x * x * y, 2 * g, -2 * k.k2 * x * x)


def v3(k: LyapunovConstants, s) -> LyapunovValue:
    x, y = _xy(s)
    g = 1.0 - k.k3 * x * x
    return LyapunovValue(y * y * g, -2 * k.k3 * x * y * y, 2 * y * g, -2 * k.k3 * y * y, 2 * g)


def lambda_fn(k: LyapunovConstants, m: int, n: int, s):
    return (monomial(m, n, s) / k.c1) ** 2


def lambda_jet(k: LyapunovConstants, m: int, n: int, s) -> LyapunovValue:
    """lambda and its partials written as polynomials (no division by x or y)."""
    x, y = _xy(s)
    c = 1.0 / (k.c1 * k.c1)
    ye = ipow(y, 2 * n - 2)
    xe = ipow(x, 2 * m - 2)
    lam = c * xe * ye
    lx = c * 2 * (m - 1) * ipow(x, 2 * m - 3) * ye
    ly = c * 2 * (n - 1) * xe * ipow(y, 2 * n - 3)
    lxx = c * 2 * (m - 1) * (2 * m - 3) * ipow(x, 2 * m - 4) * ye
    lyy = c * 2 * (n - 1) * (2 * n - 3) * xe * ipow(y, 2 * n - 4)
    return LyapunovValue(lam, lx, ly, lxx, lyy)


def _compose_phi(lam: LyapunovValue) -> LyapunovValue:
    p, p1, p2 = phi(lam.value)
    return LyapunovValue(p, p1 * lam.dx, p1 * lam.dy,
                         p2 * lam.dx ** 2 + p1 * lam.dxx, p2 * lam.dy ** 2 + p1 * lam.dyy)


def _blend(weight: LyapunovValue, f: LyapunovValue, g: LyapunovValue) -> LyapunovValue:
    """weight * f + (1 - weight) * g with the product rule applied to each partial."""
    wv = weight.value
    d = f.value - g.value
    return LyapunovValue(
        wv * f.value + (1 - wv) * g.value,
        weight.dx * d + wv * f.dx + (1 - wv) * g.dx,
        weight.dy * d + wv * f.dy + (1 - wv) * g.dy,
        weight.dxx * d + 2 * weight.dx * (f.dx - g.dx) + wv * f.dxx + (1 - wv) * g.dxx,
        weight.dyy * d + 2 * weight.dy * (f.dy - g.dy) + wv * f.dyy + (1 - wv) * g.dyy,
    )


def v_blend(i: int, params: ModelParams, k: LyapunovConstants, s) -> LyapunovValue:
    """phi(lambda) v1 + (1 - phi(lambda)) vi for i in {2, 3}.

    Meant for R1 & Ri; use :func:`blend_domain` to flag points outside it.
    """
    if i not in (2, 3):
        raise ValueError("blend index must be 2 or 3")
    vi = v2(k, s) if i == 2 else v3(k, s)
    weight = _compose_phi(lambda_jet(k, params.m, params.n, s))
    return _blend(weight, v1(s), vi)


def blend_domain(i: int, params: ModelParams, k: LyapunovConstants, s):
    lab = classify_region(k, params.m, params.n, s)
    return lab.in_r1 & (lab.in_r2 if i == 2 else lab.in_r3)


def _handover(x, c):
    """C^2 switch in |x|: 0 below HANDOVER*c, 1 above c."""
    width = (1.0 - HANDOVER) * c
    s = (np.abs(x) - HANDOVER * c) / width
    sign = np.sign(x)
    return _smoothstep(s), sign * _smoothstep_d1(s) / width, _smoothstep_d2(s) / width ** 2


def check_assembly(params: ModelParams, k: LyapunovConstants):
    """Conditions under which the glued global function is well defined and >= 1."""
    m, n = params.m, params.n
    if not k.c2 ** (m - 1) * k.c3 ** (n - 1) > 2 * k.c1:
        raise AssemblyError("R2 and R3 overlap: c2^(m-1) c3^(n-1) <= 2 c1")
    if not (HANDOVER * k.c2) ** (m - 1) * (HANDOVER * k.c3) ** (n - 1) > 2 * k.c1:
        raise AssemblyError("handover bands of v2 and v3 overlap where phi < 1")
    # y^2 (resp. x^2) bound inside the handover band keeps v2 (v3) >= 3/4 of x^2 (y^2)
    if k.k2 * k.C2 * HANDOVER ** (-2.0 * (m - 1) / (n - 1)) > 0.25:
        raise AssemblyError("v2 may turn negative in its handover band")
    if k.k3 * k.C3 * HANDOVER ** (-2.0 * (n - 1) / (m - 1)) > 0.25:
        raise AssemblyError("v3 may turn negative in its handover band")


def global_V(params: ModelParams, k: LyapunovConstants, s, checked: bool = True) -> LyapunovValue:
    """Global Lyapunov function V >= 1.

    V = 1 + phi(lambda) v1 + (1 - phi(lambda)) W, where W equals v2 for
    |x| >= c2, v3 for |y| >= c3 and v1 on the rest, with C^2 handovers in the
    bounded bands HANDOVER*c <= |.| <= c. Off a bounded set V - 1 coincides
    with v1, v2, v3, v12 or v13.
    """
    if checked:
        check_assembly(params, k)
    x, y = _xy(s)
    f1 = v1((x, y))
    f2 = v2(k, (x, y))
    f3 = v3(k, (x, y))
    hx, hx1, hx2 = _handover(x, k.c2)
    hy, hy1, hy2 = _handover(y, k.c3)
    zero = np.zeros_like(hx)
    chi_x = LyapunovValue(hx, hx1, zero, hx2, zero)
    chi_y = LyapunovValue(hy, zero, hy1, zero, hy2)
    W = _blend(chi_x, f2, f1)
    W = _blend(chi_y, f3, W)
    weight = _compose_phi(lambda_jet(k, params.m, params.n, (x, y)))
    V = _blend(weight, f1, W)
    return V._replace(value=V.value + 1.0)


def analytic_Lv1(params: ModelParams, s):
    """Closed-form generator of v1: 2n x^2 (w - u^q) + 2m y^2 (-w - u^q) + eps_x^2 + eps_y^2."""
    x, y = _xy(s)
    f = drift_fields(params, (x, y))
    uq = 0.0 if params.pure_hamiltonian else f.u ** params.q
    return (2 * params.n * x * x * (f.w - uq) + 2 * params.m * y * y * (-f.w - uq)
            + params.eps_x ** 2 + params.eps_y ** 2)


def analytic_Lv2(params: ModelParams, k: LyapunovConstants, s):
    x, y = _xy(s)
    f = drift_fields(params, (x, y))
    uq = f.u ** params.q
    g = 1 - k.k2 * y * y
    return (2 * params.n * x * x * g * (f.w - uq) + 2 * params.m * k.k2 * x * x * y * y * (f.w + uq)
            + params.eps_x ** 2 * g - params.eps_y ** 2 * k.k2 * x * x)


def analytic_Lv3(params: ModelParams, k: LyapunovConstants, s):
    x, y = _xy(s)
    f = drift_fields(params, (x, y))
    uq = f.u ** params.q
    g = 1 - k.k3 * x * x
    return (2 * params.m * y * y * g * (-f.w - uq) + 2 * params.n * k.k3 * x * x * y * y * (uq - f.w)
            + params.eps_y ** 2 * g - params.eps_x ** 2 * k.k3 * y * y)


# ---------------------------------------------------------------------------
# drift-condition verification


@dataclass(frozen=True)
class DriftConditionSpec:
    a1: float
    a2: float | None
    extra: str


DRIFT_CONDITIONS = {
    "v1": DriftConditionSpec(0.5, None, "Lv1 <= -v1/2 - u^q v1 + eps_x^2 + eps_y^2 on R1"),
    "v2": DriftConditionSpec(1.0, None, "Lv2 <= -v2 - x^2 u^q / 2 + eps_x^2 on R2"),
    "v3": DriftConditionSpec(1.0, None, "Lv3 <= -v3 - y^2 u^q / 2 + eps_y^2 on R3"),
    "v3_u2": DriftConditionSpec(1.0, None, "Lv3 <= -v3 - y^2 u^2 / 2 + eps_y^2 on R3 (q = 2 form)"),
    "v12": DriftConditionSpec(0.5, None, "Lv12 <= -v12/2 + C on R1 & R2"),
    "v13": DriftConditionSpec(0.5, None, "Lv13 <= -v13/2 + C on R1 & R3"),
    "V": DriftConditionSpec(0.5, None, "LV <= -V/2 + a2 on the disk of radius 10 max(c2, c3)"),
}

DEFAULT_REGION = {"v1": "R1", "v2": "R2", "v3": "R3", "v3_u2": "R3",
                  "v12": "R12", "v13": "R13", "V": "disk"}


@dataclass(frozen=True)
class ViolationReport:
    which: str
    region: str
    count: int
    max_violation: float
    argmax_x: float
    argmax_y: float
    passed: bool
    C: float | None = None
    a1: float | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        d = {"which": self.which, "region": self.region, "count": self.count,
             "max_violation": self.max_violation, "argmax_x": self.argmax_x,
             "argmax_y": self.argmax_y, "pass": self.passed}
        if self.C is not None:
            d["C"] = self.C
        if self.a1 is not None:
            d["a1"] = self.a1
        d.update(self.extra)
        return d


def _argmax_lex(values, x, y):
    top = np.max(values)
    idx = np.flatnonzero(values == top)
    if idx.size > 1:
        idx = idx[np.lexsort((y[idx], x[idx]))]
    return int(idx[0])


def drift_terms(which: str, params: ModelParams, k: LyapunovConstants, s):
    """(LHS, RHS-without-C) of the drift inequality for ``which`` at the points ``s``."""
    x, y = _xy(s)
    u = drift_fields(params, (x, y)).u
    uq = u ** params.q
    ex2, ey2 = params.eps_x ** 2, params.eps_y ** 2
    if which == "v1":
        f = v1((x, y))
        return generator_apply(params, f, (x, y)), -0.5 * f.value - uq * f.value + ex2 + ey2
    if which == "v2":
        f = v2(k, (x, y))
        return generator_apply(params, f, (x, y)), -f.value - 0.5 * x * x * uq + ex2
    if which in ("v3", "v3_u2"):
        f = v3(k, (x, y))
        up = uq if which == "v3" else u * u
        return generator_apply(params, f, (x, y)), -f.value - 0.5 * y * y * up + ey2
    if which in ("v12", "v13"):
        f = v_blend(2 if which == "v12" else 3, params, k, (x, y))
        return generator_apply(params, f, (x, y)), -0.5 * f.value
    if which == "V":
        f = global_V(params, k, (x, y))
        return generator_apply(params, f, (x, y)), -0.5 * f.value
    raise ValueError(f"unknown Lyapunov function {which!r}")


def polish_maximum(fun, x, y, contains, top: int = 8, rtol: float = 1e-12):
    """Refine the largest sampled values of ``fun`` by local maximization.

    Each of the ``top`` best points is used as a Nelder-Mead start in
    (log|x|, log|y|) with the signs held fixed; candidates leaving the region
    are rejected. Returns ``(value, x, y)`` of the best point found.
    """
    from scipy.optimize import minimize

    vals = fun(x, y)
    order = np.argsort(vals)[::-1]
    best = (float(vals[order[0]]), float(x[order[0]]), float(y[order[0]]))
    seen = 0
    for j in order:
        if seen >= top:
            break
        if x[j] == 0 or y[j] == 0:
            continue
        seen += 1
        sx, sy = np.sign(x[j]), np.sign(y[j])

        def neg(z):
            px, py = sx * np.exp(z[0]), sy * np.exp(z[1])
            if not contains(np.array([px]), np.array([py]))[0]:
                return np.inf
            with np.errstate(all="ignore"):
                v = fun(np.array([px]), np.array([py]))[0]
            return -v if np.isfinite(v) else np.inf

        z0 = np.array([np.log(abs(x[j])), np.log(abs(y[j]))])
        f0 = abs(float(vals[j])) or 1.0
        res = minimize(neg, z0, method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": rtol * f0, "maxiter": 4000,
                                "initial_simplex": [z0, z0 + [1e-3, 0], z0 + [0, 1e-3]]})
        if np.isfinite(res.fun) and -res.fun > best[0]:
            best = (float(-res.fun), float(sx * np.exp(res.x[0])), float(sy * np.exp(res.x[1])))
    return best


def verify_drift_condition(params: ModelParams, k: LyapunovConstants, which: str,
                           sampler=None, n_samples: int = 100_000, seed: int = 0,
                           polish: bool = True) -> ViolationReport:
    """Evaluate a drift inequality on sampled points of its region.

    For v1, v2, v3 the inequality is analytic and any positive LHS - RHS is a
    failure. For the blended and global functions the additive constant C is
    the largest LHS + value/2 found, sampled and then locally polished; the
    check passes when C is finite.
    """
    from .sampling import RegionSampler

    if which not in DRIFT_CONDITIONS:
        raise ValueError(f"unknown Lyapunov function {which!r}")
    if sampler is None:
        sampler = RegionSampler.for_condition(which, params, k)
    x, y = sampler.sample(n_samples, seed=seed)
    inside = sampler.contains(x, y)
    if not np.all(inside):
        j = int(np.argmin(inside))
        raise SamplerContractError(f"sampler for {sampler.region} produced ({x[j]!r}, {y[j]!r}) outside the region")
    lhs, rhs = drift_terms(which, params, k, (x, y))
    spec = DRIFT_CONDITIONS[which]
    if which in ("v12", "v13", "V"):
        slack = lhs - rhs
        j = _argmax_lex(slack, x, y)
        C, ax, ay = float(slack[j]), float(x[j]), float(y[j])
        sampled_C = C
        if polish:
            def excess(px, py):
                a, b = drift_terms(which, params, k, (px, py))
                return a - b
            C, ax, ay = polish_maximum(excess, x, y, sampler.contains)
        return ViolationReport(which, sampler.region, int(x.size), 0.0, ax, ay,
                               bool(math.isfinite(C)), C=C, a1=spec.a1,
                               extra={"sampled_C": sampled_C})
    viol = lhs - rhs
    j = _argmax_lex(viol, x, y)
    worst = float(viol[j])
    return ViolationReport(which, sampler.region, int(x.size), worst, float(x[j]), float(y[j]),
                           bool(worst <= 0.0))


__all__ = [
    "LyapunovConstants", "LyapunovValue", "RegionLabel", "State", "ViolationReport",
    "analytic_Lv1", "classify_region", "derive_constants", "global_V", "lambda_fn",
    "phi", "v1", "v2", "v3", "v_blend", "verify_drift_condition",
]
