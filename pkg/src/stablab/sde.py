"""Stochastic simulation of the system with a tamed Euler scheme.

Noise is drawn from a counter-based stream: path ``j`` under master seed
``seed`` owns the Philox key ``(seed, j)`` and step ``k`` consumes raw words
``2k`` and ``2k + 1`` of that stream. Normals come from the inverse normal CDF,
so every draw is a pure function of (seed, path, step) and the output never
depends on how paths are split across threads.
"""

from __future__ import annotations

import json
import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import ndtri

from .errors import BlowUpError, InputError, ParameterError
from .model import ModelParams, State, _raw_fields, generator_apply

SCHEMES = ("tamed_euler", "euler")
# steps of noise generated per refill; even so every refill starts on a word pair
NOISE_BLOCK = 256
PATH_CHUNK = 1024
_MAGIC = b"STABLAB\x01"


@dataclass(frozen=True)
class IntegratorConfig:
    scheme: str = "tamed_euler"
    dt: float = 1e-3
    steps: int = 1000
    seed: int = 0
    thin: int = 1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ParameterError(f"scheme must be one of {SCHEMES} (got {self.scheme!r})")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ParameterError(f"dt must be > 0 (got {self.dt!r})")
        if isinstance(self.steps, bool) or int(self.steps) != self.steps or self.steps < 1:
            raise ParameterError(f"steps must be an integer >= 1 (got {self.steps!r})")
        if isinstance(self.seed, bool) or int(self.seed) != self.seed or not 0 <= self.seed < 2 ** 64:
            raise ParameterError(f"seed must be an unsigned 64-bit integer (got {self.seed!r})")
        if int(self.thin) != self.thin or self.thin < 1:
            raise ParameterError(f"thin must be an integer >= 1 (got {self.thin!r})")

    @property
    def horizon(self) -> float:
        return self.dt * self.steps

    def to_dict(self):
        return {"scheme": self.scheme, "dt": self.dt, "steps": int(self.steps),
                "seed": int(self.seed), "thin": int(self.thin)}


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Trajectory:
    """Recorded path; ``states`` has shape (len(times), 2)."""

    times: np.ndarray
    states: np.ndarray
    blowup_flag: bool = False
    params_digest: str = ""

    def __post_init__(self):
        object.__setattr__(self, "times", _frozen(self.times))
        object.__setattr__(self, "states", _frozen(np.reshape(self.states, (-1, 2))))
        if self.times.shape[0] != self.states.shape[0]:
            raise InputError("times and states differ in length")

    @property
    def x(self):
        return self.states[:, 0]

    @property
    def y(self):
        return self.states[:, 1]

    def final(self) -> State:
        return State(*self.states[-1])

    def to_csv(self, path_or_buf, path_id: int = 0):
        rows = np.column_stack([np.full(self.times.size, path_id), self.times, self.states])
        _write_csv(path_or_buf, rows)

    def to_binary(self, path):
        _write_binary(path, {"kind": "trajectory", "blowup_flag": self.blowup_flag},
                      self.params_digest, np.column_stack([self.times, self.states]))


@dataclass(frozen=True)
class Ensemble:
    """N states at a common time ``t``; ``states`` has shape (N, 2)."""

    t: float
    states: np.ndarray
    seed: int = 0
    params_digest: str = ""

    def __post_init__(self):
        object.__setattr__(self, "states", _frozen(np.reshape(self.states, (-1, 2))))
        if self.states.shape[0] < 1:
            raise InputError("an ensemble needs at least one state")
        if not np.all(np.isfinite(self.states)):
            raise InputError("ensemble states must be finite")

    @property
    def N(self) -> int:
        return self.states.shape[0]

    @property
    def x(self):
        return self.states[:, 0]

    @property
    def y(self):
        return self.states[:, 1]

    def to_csv(self, path_or_buf):
        rows = np.column_stack([np.arange(self.N), np.full(self.N, self.t), self.states])
        _write_csv(path_or_buf, rows)

    def to_binary(self, path):
        _write_binary(path, {"kind": "ensemble", "t": self.t, "seed": int(self.seed)},
                      self.params_digest, self.states)


# ---------------------------------------------------------------------------
# serialization


def _write_csv(path_or_buf, rows):
    header = "path_id,t,x,y"
    if isinstance(path_or_buf, (str, os.PathLike)):
        with open(path_or_buf, "w", newline="") as fh:
            _write_csv(fh, rows)
        return
    path_or_buf.write(header + "\n")
    for r in rows:
        path_or_buf.write(f"{int(r[0])},{r[1]:.17g},{r[2]:.17g},{r[3]:.17g}\n")


def _write_binary(path, meta, digest, data):
    data = np.ascontiguousarray(data, dtype="<f8")
    meta = dict(meta, params_digest=digest, shape=list(data.shape))
    blob = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(data.tobytes())


def read_binary(path):
    """Inverse of ``to_binary``: returns a Trajectory or an Ensemble."""
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise InputError(f"{path}: not a stablab binary file")
        (size,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(size))
        data = np.frombuffer(fh.read(), dtype="<f8").reshape(meta["shape"]).astype(float)
    if meta["kind"] == "trajectory":
        return Trajectory(data[:, 0], data[:, 1:], meta["blowup_flag"], meta["params_digest"])
    return Ensemble(meta["t"], data, meta["seed"], meta["params_digest"])


def read_csv(path_or_buf):
    """Rows of a ``path_id,t,x,y`` CSV as (path_id, t, states) arrays."""
    rows = np.loadtxt(path_or_buf, delimiter=",", skiprows=1, ndmin=2)
    return rows[:, 0].astype(np.int64), rows[:, 1], rows[:, 2:4]


# ---------------------------------------------------------------------------
# noise


def _to_normal(raw):
    u = ((raw >> np.uint64(11)).astype(float) + 0.5) * 2.0 ** -53
    return ndtri(u)


class NoiseStream:
    """Standard normal pairs for a set of paths, consumed step by step."""

    def __init__(self, seed: int, path_ids):
        self.seed = int(seed)
        self._gens = [np.random.Philox(key=[self.seed, int(j)]) for j in path_ids]

    def next_block(self, steps: int):
        """Array of shape (steps, 2, n_paths)."""
        raw = np.stack([g.random_raw(2 * steps) for g in self._gens], axis=-1)
        return _to_normal(raw).reshape(steps, 2, len(self._gens))


def normal_draws(seed: int, path: int, steps: int):
    """The (steps, 2) normals that path ``path`` uses under ``seed``."""
    return NoiseStream(seed, [path]).next_block(steps)[:, :, 0]


# ---------------------------------------------------------------------------
# stepping


def _tamed_increment(params, x, y, dt):
    with np.errstate(over="ignore", invalid="ignore"):
        _, _, _, fx, fy = _raw_fields(params, x, y)
        norm = np.hypot(fx, fy)
        fac = dt / (1.0 + dt * norm)
        dx, dy = fac * fx, fac * fy
    bad = ~(np.isfinite(dx) & np.isfinite(dy))
    if np.any(bad):
        # |f| overflowed: the tamed increment tends to f / |f|, and at that
        # size the dissipative part dominates, pointing along -(n x, m y)
        gx, gy = -params.n * x, -params.m * y
        with np.errstate(over="ignore", invalid="ignore"):
            scale = np.maximum(np.abs(gx), np.abs(gy))
            scale = np.where(scale > 0, scale, 1.0)
            gx, gy = gx / scale, gy / scale
            g = np.hypot(gx, gy)
            g = np.where(g > 0, g, 1.0)
        dx = np.where(bad, gx / g, dx)
        dy = np.where(bad, gy / g, dy)
    return dx, dy


def _euler_increment(params, x, y, dt):
    with np.errstate(over="ignore", invalid="ignore"):
        _, _, _, fx, fy = _raw_fields(params, x, y)
        return dt * fx, dt * fy


_INCREMENTS = {"tamed_euler": _tamed_increment, "euler": _euler_increment}


def step_tamed(params: ModelParams, s, dt: float, xi) -> State:
    """One tamed Euler step: s + dt f / (1 + dt |f|) + (eps_x, eps_y) sqrt(dt) xi."""
    if not dt > 0:
        raise ParameterError(f"dt must be > 0 (got {dt!r})")
    xi1, xi2 = (float(v) for v in xi)
    if not (math.isfinite(xi1) and math.isfinite(xi2)):
        raise InputError(f"noise draws must be finite (got {xi!r})")
    x, y = (np.asarray(float(v)) for v in s)
    dx, dy = _tamed_increment(params, x, y, dt)
    sq = math.sqrt(dt)
    return State(float(x + dx + params.eps_x * sq * xi1), float(y + dy + params.eps_y * sq * xi2))


def _run(params, config, x0, y0, path_ids, record_steps):
    """Integrate a batch of paths, returning the states at ``record_steps``.

    Returns ``(out, dead)`` where ``out`` has shape (len(record_steps), 2, n)
    and ``dead`` is the first step index with a non-finite state (-1 if none).
    """
    inc = _INCREMENTS[config.scheme]
    n = len(path_ids)
    x = np.array(np.broadcast_to(x0, (n,)), dtype=float)
    y = np.array(np.broadcast_to(y0, (n,)), dtype=float)
    dt = config.dt
    sx = params.eps_x * math.sqrt(dt)
    sy = params.eps_y * math.sqrt(dt)
    noise = NoiseStream(config.seed, path_ids)
    rec = {int(k): i for i, k in enumerate(record_steps)}
    out = np.full((len(record_steps), 2, n), np.nan)
    dead = np.full(n, -1, dtype=np.int64)
    if 0 in rec:
        out[rec[0], 0], out[rec[0], 1] = x, y
    last = max(record_steps) if len(record_steps) else 0
    k = 0
    while k < last:
        block = min(NOISE_BLOCK, config.steps - k)
        z = noise.next_block(block)
        for j in range(block):
            dx, dy = inc(params, x, y, dt)
            with np.errstate(over="ignore", invalid="ignore"):
                x = x + dx + sx * z[j, 0]
                y = y + dy + sy * z[j, 1]
            k += 1
            if config.scheme == "euler":
                bad = ~(np.isfinite(x) & np.isfinite(y)) & (dead < 0)
                if bad.any():
                    dead[bad] = k
                    if np.all(dead >= 0):
                        return out, dead
            if k in rec:
                out[rec[k], 0], out[rec[k], 1] = x, y
            if k >= last:
                break
    return out, dead


def simulate_path(params: ModelParams, config: IntegratorConfig, s0, path_id: int = 0) -> Trajectory:
    """One path, recording every ``config.thin``-th step and the last one.

    With the plain ``euler`` scheme a non-finite state ends the trajectory
    early with ``blowup_flag`` set.
    """
    s0 = State(*s0)
    steps = list(range(0, config.steps + 1, config.thin))
    if steps[-1] != config.steps:
        steps.append(config.steps)
    out, dead = _run(params, config, s0.x, s0.y, [path_id], steps)
    times = np.array(steps, dtype=float) * config.dt
    states = out[:, :, 0]
    if dead[0] >= 0:
        keep = np.array(steps) < dead[0]
        return Trajectory(times[keep], states[keep], True, params.digest())
    return Trajectory(times, states, False, params.digest())


def _checkpoint_steps(config, checkpoints):
    steps = []
    for t in checkpoints:
        k = int(round(t / config.dt))
        if k < 0 or k > config.steps or abs(k * config.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ParameterError(f"checkpoint t={t!r} is not on the step grid (dt={config.dt!r}, steps={config.steps})")
        steps.append(k)
    if any(b <= a for a, b in zip(steps, steps[1:])):
        raise ParameterError("checkpoints must be strictly increasing")
    return steps


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get("STAB_LAB_THREADS")
        threads = int(env) if env else 1
    if threads < 1:
        raise ParameterError(f"threads must be >= 1 (got {threads!r})")
    return threads


def simulate_ensemble(params: ModelParams, config: IntegratorConfig, s0, N: int,
                      checkpoints=None, threads: int | None = None,
                      path_offset: int = 0) -> list[Ensemble]:
    """N paths from ``s0`` (a State, or an (N, 2) array of starting points).

    Path ``j`` draws from noise stream ``path_offset + j``.

    Returns one Ensemble per checkpoint time (default: the horizon). Paths
    are integrated in fixed chunks whose noise depends only on (seed, path),
    so the result is bitwise identical for any ``threads``.
    """
    if isinstance(N, bool) or int(N) != N or N < 1:
        raise ParameterError(f"N must be an integer >= 1 (got {N!r})")
    N = int(N)
    if checkpoints is None:
        checkpoints = [config.horizon]
    steps = _checkpoint_steps(config, checkpoints)
    init = np.asarray(s0 if not isinstance(s0, State) else tuple(s0), dtype=float)
    if init.shape == (2,):
        init = np.broadcast_to(init, (N, 2))
    if init.shape != (N, 2) or not np.all(np.isfinite(init)):
        raise InputError(f"initial states must be finite with shape (2,) or ({N}, 2)")
    chunks = [range(a, min(a + PATH_CHUNK, N)) for a in range(0, N, PATH_CHUNK)]

    def work(ids):
        lo, hi = ids.start, ids.stop
        return _run(params, config, init[lo:hi, 0], init[lo:hi, 1],
                    [path_offset + j for j in ids], steps)

    workers = min(resolve_threads(threads), len(chunks))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    out = np.concatenate([p[0] for p in parts], axis=2)
    dead = np.concatenate([p[1] for p in parts])
    if np.any(dead >= 0):
        first = int(dead[dead >= 0].min())
        raise BlowUpError(first * config.dt,
                          f"{int(np.sum(dead >= 0))} of {N} paths became non-finite; first at t={first * config.dt!r}")
    digest = params.digest()
    return [Ensemble(float(k * config.dt), out[i].T, int(config.seed), digest) for i, k in enumerate(steps)]


# ---------------------------------------------------------------------------
# deterministic reference


def ode_reference(params: ModelParams, s0, t_end: float, pure_hamiltonian: bool | None = None,
                  t_eval=None, rtol: float = 1e-9, atol: float = 1e-12,
                  escape_radius: float = 1e12) -> Trajectory:
    """Adaptive RK45 integration of the noiseless drift.

    Leaving the disk of ``escape_radius`` or a solver failure raises
    BlowUpError carrying the last time the solution was resolved.
    """
    if pure_hamiltonian is not None and pure_hamiltonian != params.pure_hamiltonian:
        params = params.replace(pure_hamiltonian=pure_hamiltonian)
    s0 = State(*s0)
    if t_end < 0:
        raise ParameterError(f"t_end must be >= 0 (got {t_end!r})")
    if t_end == 0:
        return Trajectory([0.0], [[s0.x, s0.y]], False, params.digest())

    def rhs(t, s):
        with np.errstate(over="ignore", invalid="ignore"):
            _, _, _, fx, fy = _raw_fields(params, np.asarray(s[0]), np.asarray(s[1]))
        return [float(fx), float(fy)]

    def escape(t, s):
        return escape_radius - math.hypot(s[0], s[1])

    escape.terminal = True
    with np.errstate(over="ignore", invalid="ignore"):
        sol = solve_ivp(rhs, (0.0, t_end), [s0.x, s0.y], method="RK45", rtol=rtol, atol=atol,
                        t_eval=t_eval, events=escape)
    ok = np.all(np.isfinite(sol.y), axis=0)
    partial = Trajectory(sol.t[ok], sol.y.T[ok], True, params.digest()) if ok.any() else None
    if sol.status == 1:
        t_hit = float(sol.t_events[0][0])
        raise BlowUpError(t_hit, f"solution left the disk of radius {escape_radius:g} at t={t_hit!r}", partial)
    if sol.status != 0 or not ok.all():
        t_last = float(sol.t[ok][-1]) if ok.any() else 0.0
        raise BlowUpError(t_last, f"integrator stopped at t={t_last!r}: {sol.message}", partial)
    return Trajectory(sol.t, sol.y.T, False, params.digest())


# ---------------------------------------------------------------------------
# weak consistency


@dataclass(frozen=True)
class DynkinReport:
    dt: float
    estimate: float
    stderr: float
    generator: float
    z: float
    samples: int
    passed: bool = field(default=False)

    def to_dict(self):
        return dict(self.__dict__)


def dynkin_one_step(params: ModelParams, f, s0, dt: float, samples: int = 1_000_000,
                    seed: int = 0, sigmas: float = 3.0) -> DynkinReport:
    """Compare (E f(X_dt) - f(s0)) / dt over one tamed step with (L f)(s0).

    ``f((x, y))`` must return a LyapunovValue. The zero-mean first
    order noise term grad f . noise is subtracted as a control variate.
    """
    s0 = State(*s0)
    jet = f((np.asarray(s0.x), np.asarray(s0.y)))
    Lf = float(generator_apply(params, jet, (s0.x, s0.y)))
    ids = np.arange(samples)
    xi = np.empty((2, samples))
    for a in range(0, samples, 65536):
        xi[:, a:a + 65536] = NoiseStream(seed, ids[a:a + 65536]).next_block(1)[0]
    dx, dy = _tamed_increment(params, np.asarray(s0.x), np.asarray(s0.y), dt)
    nx = params.eps_x * math.sqrt(dt) * xi[0]
    ny = params.eps_y * math.sqrt(dt) * xi[1]
    x1, y1 = s0.x + dx + nx, s0.y + dy + ny
    after = f((x1, y1)).value
    Y = (after - float(jet.value) - float(jet.dx) * nx - float(jet.dy) * ny) / dt
    est = float(np.mean(Y))
    se = float(np.std(Y, ddof=1) / math.sqrt(samples))
    z = (est - Lf) / se if se > 0 else (0.0 if est == Lf else math.inf)
    return DynkinReport(dt, est, se, Lf, z, samples, bool(abs(z) <= sigmas))


__all__ = [
    "SCHEMES", "IntegratorConfig", "Trajectory", "Ensemble", "NoiseStream", "normal_draws",
    "step_tamed", "simulate_path", "simulate_ensemble", "ode_reference", "read_binary", "read_csv",
    "resolve_threads", "DynkinReport", "dynkin_one_step",
]
