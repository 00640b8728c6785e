"""Empirical ergodicity: Wasserstein decay, boundedness in probability, returns.

The weighted distance W_V cannot be computed from samples directly. Two
proxies are reported instead: the exact empirical W1 between (sub)sampled
clouds, and a lower bound on W_V from a dictionary of test functions whose
weighted norm sup |phi| / (1 + V) <= 1 has been checked on probe points.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial.distance import cdist

from .errors import FitUnavailableError, InputError, ParameterError
from .lyapunov import LyapunovConstants, global_V
from .model import ModelParams, State
from .sde import Ensemble, IntegratorConfig, Trajectory, simulate_ensemble

MAX_ASSIGNMENT = 4096
FLOOR_FACTOR = 10.0


def _points(A):
    pts = A.states if isinstance(A, Ensemble) else np.asarray(A, dtype=float)
    pts = np.reshape(pts, (-1, 2))
    if pts.shape[0] == 0:
        raise InputError("empty ensemble")
    return pts[:MAX_ASSIGNMENT]


def _ot():
    # keep the optional deep-learning backends from loading on import
    for name in ("PYTORCH", "TENSORFLOW", "JAX", "CUPY"):
        os.environ.setdefault(f"POT_BACKEND_DISABLE_{name}", "1")
    import ot

    return ot


def empirical_wasserstein1(A, B) -> float:
    """Exact W1 between two equal-size point clouds (Euclidean ground cost).

    Clouds larger than MAX_ASSIGNMENT are cut to their first MAX_ASSIGNMENT
    points; ensemble paths are i.i.d., so this is an unbiased subsample.
    """
    a, b = _points(A), _points(B)
    if a.shape[0] != b.shape[0]:
        raise InputError(f"ensembles differ in size ({a.shape[0]} vs {b.shape[0]})")
    M = cdist(a, b)
    w = np.full(a.shape[0], 1.0 / a.shape[0])
    ot = _ot()
    plan = ot.emd(w, w, M, numItermax=10_000_000)
    # an optimal vertex of the assignment polytope is a permutation; summing
    # the matched distances exactly makes the value independent of order
    rows, cols = np.nonzero(plan > 0.5 / a.shape[0])
    if rows.size == a.shape[0]:
        return math.fsum(M[rows, cols]) / a.shape[0]
    return math.fsum((plan * M).ravel())


# ---------------------------------------------------------------------------
# test-function dictionary


@dataclass(frozen=True)
class DictionaryEntry:
    name: str
    fn: Callable
    probes: int = 0
    worst_ratio: float = math.nan  # max |phi| / (1 + V) over the probes
    certified: bool = False


def _ramp(coord, scale):
    return lambda x, y: np.clip((x if coord == 0 else y) / scale, -1.0, 1.0)


def _bump(scale):
    return lambda x, y: np.exp(-(x * x + y * y) / (scale * scale))


def _normalized(params, k, coord):
    def f(x, y):
        V = global_V(params, k, (x, y), checked=False).value
        return (x if coord == 0 else y) / (1.0 + V)
    return f


class TestFunctionDictionary:
    """Test functions with a sampled certificate |phi| <= 1 + V."""

    __test__ = False  # not a pytest class

    def __init__(self, params: ModelParams, k: LyapunovConstants, entries):
        self.params = params
        self.k = k
        self.entries = list(entries)
        self.rejected: list[DictionaryEntry] = []

    @classmethod
    def default(cls, params, k, scales=None):
        """Clipped coordinate ramps, radial bumps and x/(1+V), y/(1+V)."""
        if scales is None:
            scales = np.geomspace(0.25, 32.0, 8)
        entries = []
        for s in scales:
            entries.append(DictionaryEntry(f"ramp_x/{s:g}", _ramp(0, s)))
            entries.append(DictionaryEntry(f"ramp_y/{s:g}", _ramp(1, s)))
            entries.append(DictionaryEntry(f"bump/{s:g}", _bump(s)))
        entries.append(DictionaryEntry("x/(1+V)", _normalized(params, k, 0)))
        entries.append(DictionaryEntry("y/(1+V)", _normalized(params, k, 1)))
        return cls(params, k, entries)

    def certify(self, box, probes: int = 1_000_000, seed: int = 0):
        """Check |phi| <= 1 + V at ``probes`` uniform points of ``box``.

        ``box`` is ``(xmin, xmax, ymin, ymax)``. Entries that fail are moved
        to ``rejected``. Returns self.
        """
        xmin, xmax, ymin, ymax = box
        rng = np.random.default_rng(seed)
        x = rng.uniform(xmin, xmax, probes)
        y = rng.uniform(ymin, ymax, probes)
        # always probe the corners and the origin as well
        x = np.concatenate([x, [xmin, xmin, xmax, xmax, 0.0]])
        y = np.concatenate([y, [ymin, ymax, ymin, ymax, 0.0]])
        V = global_V(self.params, self.k, (x, y)).value
        kept, rejected = [], []
        for e in self.entries:
            ratio = float(np.max(np.abs(e.fn(x, y)) / (1.0 + V)))
            rec = DictionaryEntry(e.name, e.fn, x.size, ratio, ratio <= 1.0)
            (kept if rec.certified else rejected).append(rec)
        self.entries = kept
        self.rejected.extend(rejected)
        return self

    @property
    def certified(self):
        return bool(self.entries) and all(e.certified for e in self.entries)

    def records(self):
        return [{"name": e.name, "probes": e.probes, "worst_ratio": e.worst_ratio,
                 "certified": e.certified} for e in self.entries + self.rejected]


def wv_lower_bound(A, B, dictionary: TestFunctionDictionary) -> float:
    """max over entries of |mean_A phi - mean_B phi|, a lower bound on W_V."""
    a = A.states if isinstance(A, Ensemble) else np.reshape(np.asarray(A, float), (-1, 2))
    b = B.states if isinstance(B, Ensemble) else np.reshape(np.asarray(B, float), (-1, 2))
    best = 0.0
    for e in dictionary.entries:
        diff = abs(float(np.mean(e.fn(a[:, 0], a[:, 1]))) - float(np.mean(e.fn(b[:, 0], b[:, 1]))))
        best = max(best, diff)
    return best


# ---------------------------------------------------------------------------
# exponential fit


@dataclass(frozen=True)
class ExponentialFit:
    C: float
    c: float
    r2: float
    used: tuple  # indices of the points entering the fit


def fit_exponential(times, distances, floor: float = 0.0) -> ExponentialFit:
    """Least-squares fit of log d = log C - c t over points with d > floor.

    Raises FitUnavailableError when fewer than three points qualify.
    """
    t = np.asarray(times, dtype=float)
    d = np.asarray(distances, dtype=float)
    use = np.flatnonzero((d > floor) & (d > 0) & np.isfinite(d))
    if use.size < 3:
        raise FitUnavailableError(
            f"only {use.size} checkpoint(s) above the noise threshold {floor!r}; need 3",
            times=t.tolist(), distances=d.tolist())
    tt, ld = t[use], np.log(d[use])
    A = np.column_stack([np.ones_like(tt), -tt])
    (logC, c), *_ = np.linalg.lstsq(A, ld, rcond=None)
    resid = ld - A @ np.array([logC, c])
    ss_tot = float(np.sum((ld - ld.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return ExponentialFit(float(math.exp(logC)), float(c), r2, tuple(int(i) for i in use))


# ---------------------------------------------------------------------------
# reports


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def dumps(obj) -> str:
    """JSON with every float written as its shortest round-trip repr."""
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default, allow_nan=True)


@dataclass(frozen=True)
class MixingReport:
    times: tuple
    w1: tuple
    wv_lb: tuple
    fitted_C: float
    fitted_c: float
    fit_r2: float
    noise_floor: float = math.nan
    fit_points: tuple = ()
    coupling: str = "independent"
    N: int = 0
    seed: int = 0
    dictionary: list = field(default_factory=list)

    def __post_init__(self):
        t = np.asarray(self.times)
        if np.any(np.diff(t) <= 0):
            raise InputError("times must be increasing")
        if any(v < 0 for v in self.w1 + self.wv_lb):
            raise InputError("distances must be non-negative")

    def to_dict(self):
        return {
            "times": list(self.times), "w1": list(self.w1), "wv_lb": list(self.wv_lb),
            "fitted_C": self.fitted_C, "fitted_c": self.fitted_c, "fit_r2": self.fit_r2,
            "noise_floor": self.noise_floor, "fit_points": list(self.fit_points),
            "coupling": self.coupling, "N": self.N, "seed": self.seed,
            "dictionary": self.dictionary,
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())

    def to_csv(self) -> str:
        return series_csv(self.times, self.w1, self.wv_lb)


def series_csv(times, w1, wv_lb=None) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["t", "w1", "wv_lb"])
    for i, t in enumerate(times):
        lb = wv_lb[i] if wv_lb is not None else math.nan
        wr.writerow([f"{t:.17g}", f"{w1[i]:.17g}", f"{lb:.17g}"])
    return buf.getvalue()


@dataclass(frozen=True)
class StabilityReport:
    M: float
    delta: float  # largest tail fraction over the checkpoints
    empirical_tail: tuple
    times: tuple = ()
    N: int = 0

    def __post_init__(self):
        if any(not 0.0 <= v <= 1.0 for v in self.empirical_tail):
            raise InputError("tail fractions must lie in [0, 1]")

    def to_dict(self):
        return {"M": self.M, "delta": self.delta, "empirical_tail": list(self.empirical_tail),
                "times": list(self.times), "N": self.N}

    def to_json(self) -> str:
        return dumps(self.to_dict())


# ---------------------------------------------------------------------------
# experiments


def mixing_experiment(params: ModelParams, k: LyapunovConstants, s0_a, s0_b, N: int, checkpoints,
                      seed: int = 0, dt: float = 1e-3, coupling: str = "independent",
                      dictionary: TestFunctionDictionary | None = None, probes: int = 1_000_000,
                      threads: int | None = None) -> MixingReport:
    """Distance between the laws started at s0_a and s0_b, and its decay fit.

    Ensemble A uses paths 0..N-1 of ``seed``. With independent coupling B
    uses paths N..2N-1, with synchronous coupling it reuses A's paths. The
    noise floor is the mean W1 between A (resp. B) and a same-law copy on
    fresh paths, taken at the last checkpoint; only checkpoints with
    W1 > FLOOR_FACTOR * floor enter the fit.
    """
    if coupling not in ("independent", "synchronous"):
        raise ParameterError(f"coupling must be 'independent' or 'synchronous' (got {coupling!r})")
    checkpoints = [float(t) for t in checkpoints]
    if any(b <= a for a, b in zip(checkpoints, checkpoints[1:])):
        raise ParameterError("checkpoints must be increasing")
    steps = int(round(checkpoints[-1] / dt))
    cfg = IntegratorConfig("tamed_euler", dt, steps, seed)
    sa, sb = State(*s0_a), State(*s0_b)
    ens_a = simulate_ensemble(params, cfg, sa, N, checkpoints, threads, path_offset=0)
    off_b = 0 if coupling == "synchronous" else N
    ens_b = simulate_ensemble(params, cfg, sb, N, checkpoints, threads, path_offset=off_b)
    twin_a = simulate_ensemble(params, cfg, sa, N, checkpoints[-1:], threads, path_offset=2 * N)[0]
    twin_b = simulate_ensemble(params, cfg, sb, N, checkpoints[-1:], threads, path_offset=3 * N)[0]
    floor = 0.5 * (empirical_wasserstein1(ens_a[-1], twin_a) + empirical_wasserstein1(ens_b[-1], twin_b))

    if dictionary is None:
        pts = np.concatenate([e.states for e in ens_a + ens_b])
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        pad = 0.1 * (hi - lo) + 1.0
        box = (lo[0] - pad[0], hi[0] + pad[0], lo[1] - pad[1], hi[1] + pad[1])
        dictionary = TestFunctionDictionary.default(params, k).certify(box, probes, seed)

    w1 = tuple(empirical_wasserstein1(a, b) for a, b in zip(ens_a, ens_b))
    lb = tuple(wv_lower_bound(a, b, dictionary) for a, b in zip(ens_a, ens_b))
    fit = fit_exponential(checkpoints, w1, FLOOR_FACTOR * floor)
    return MixingReport(tuple(checkpoints), w1, lb, fit.C, fit.c, fit.r2, floor, fit.used,
                        coupling, int(N), int(seed), dictionary.records())


def tail_fractions(ensembles, M: float):
    return tuple(float(np.mean(np.hypot(e.x, e.y) > M)) for e in ensembles)


def radius_quantile(ensemble: Ensemble, q: float) -> float:
    return float(np.quantile(np.hypot(ensemble.x, ensemble.y), q))


def stability_check(params: ModelParams, config: IntegratorConfig, s0, N: int, M: float,
                    checkpoints, threads: int | None = None) -> StabilityReport:
    """Fraction of N paths outside the disk of radius M at each checkpoint."""
    if not M > 0:
        raise ParameterError(f"M must be > 0 (got {M!r})")
    ens = simulate_ensemble(params, config, s0, N, checkpoints, threads)
    return stability_from_ensembles(ens, M)


def stability_from_ensembles(ensembles, M: float) -> StabilityReport:
    tails = tail_fractions(ensembles, M)
    return StabilityReport(float(M), max(tails), tails, tuple(e.t for e in ensembles), ensembles[0].N)


@dataclass(frozen=True)
class ReturnTimeSummary:
    durations: tuple = ()
    censored: int = 0  # excursions still outside at the end of the path
    mean: float = math.nan
    max: float = math.nan
    histogram: tuple = ((), ())
    log_survival_slope: float | None = None

    @property
    def empty(self):
        return not self.durations

    def to_dict(self):
        return {"durations": list(self.durations), "censored": self.censored, "mean": self.mean,
                "max": self.max, "histogram": {"counts": list(self.histogram[0]),
                                               "edges": list(self.histogram[1])},
                "log_survival_slope": self.log_survival_slope}


def return_time_stats(traj: Trajectory, radius: float) -> ReturnTimeSummary:
    """Durations of the excursions of ``traj`` outside the disk of ``radius``.

    An excursion runs from the first recorded state outside the disk to the
    next recorded state inside it.
    """
    if not radius > 0:
        raise ParameterError(f"radius must be > 0 (got {radius!r})")
    outside = np.hypot(traj.x, traj.y) > radius
    edges = np.diff(outside.astype(np.int8))
    starts = np.flatnonzero(edges == 1) + 1
    ends = np.flatnonzero(edges == -1) + 1
    if outside[0]:
        starts = np.concatenate([[0], starts])
    censored = int(starts.size > ends.size)
    starts = starts[: ends.size]
    if starts.size == 0:
        return ReturnTimeSummary(censored=censored)
    d = traj.times[ends] - traj.times[starts]
    counts, bins = np.histogram(d, bins="auto")
    slope = None
    ds = np.sort(d)
    surv = 1.0 - np.arange(ds.size) / ds.size
    if ds[-1] - ds[0] > 1e-9 * ds[-1]:  # needs at least two distinct lengths
        slope = float(np.polyfit(ds, np.log(surv), 1)[0])
    return ReturnTimeSummary(tuple(float(v) for v in d), censored, float(d.mean()), float(d.max()),
                             (tuple(int(c) for c in counts), tuple(float(b) for b in bins)), slope)


__all__ = [
    "MAX_ASSIGNMENT", "FLOOR_FACTOR", "empirical_wasserstein1", "DictionaryEntry",
    "TestFunctionDictionary", "wv_lower_bound", "ExponentialFit", "fit_exponential", "dumps",
    "MixingReport", "series_csv", "StabilityReport", "mixing_experiment", "tail_fractions",
    "radius_quantile", "stability_check", "stability_from_ensembles", "ReturnTimeSummary",
    "return_time_stats",
]
