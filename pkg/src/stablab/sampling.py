"""Stratified, boundary-biased samplers for the Lyapunov regions.

Each region is parametrized by the magnitude of one coordinate (log-uniform)
and the monomial P = |x|^(m-1) |y|^(n-1); the other coordinate is solved for,
and a Latin hypercube supplies the stratification (plus two sign bits).
A fixed share of every sample is squeezed into the 1% band next to each
boundary of the parametrization, where the inequalities are tightest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .lyapunov import DEFAULT_REGION, LyapunovConstants, classify_region
from .model import ModelParams

BOUNDARY_SHARE = 0.2
BAND = 0.01


@dataclass(frozen=True)
class _Axis:
    lo: float
    hi: float
    law: str  # "log", "linear" or "mixed" (half log over 12 decades, half linear)

    def draw(self, u):
        u = np.clip(u, 1e-9, 1 - 1e-9)
        if self.law == "linear":
            return self.lo + (self.hi - self.lo) * u
        if self.law == "log":
            return np.exp(np.log(self.lo) + (np.log(self.hi) - np.log(self.lo)) * u)
        lin = u < 0.5
        v = np.where(lin, 2 * u, 2 * u - 1)
        floor = max(self.lo, self.hi * 1e-12)
        logv = np.exp(np.log(floor) + (np.log(self.hi) - np.log(floor)) * v)
        return np.where(lin, self.lo + (self.hi - self.lo) * v, logv)

    def band(self, u, edge):
        """Values within 1% of the ``edge`` ("lo" or "hi") end of the axis."""
        u = np.clip(u, 1e-9, 1 - 1e-9)
        if edge == "lo":
            top = self.lo * (1 + BAND) if self.lo > 0 else self.hi * BAND
            return self.lo + (min(top, self.hi) - self.lo) * u
        return self.hi - (self.hi - max(self.hi / (1 + BAND), self.lo)) * u


@dataclass(frozen=True)
class _Piece:
    primary: str  # which coordinate the magnitude axis refers to
    mag: _Axis
    mono: _Axis
    boundaries: tuple  # (("mag" | "mono"), ("lo" | "hi")) pairs


def _solve_other(primary, mag, P, m, n):
    if primary == "x":
        return (P / mag ** (m - 1)) ** (1.0 / (n - 1))
    return (P / mag ** (n - 1)) ** (1.0 / (m - 1))


def _draw_piece(piece: _Piece, count: int, m: int, n: int, rng):
    if count <= 0:
        return np.empty(0), np.empty(0)
    nb = len(piece.boundaries)
    n_band = int(round(BOUNDARY_SHARE * count)) if nb else 0
    n_band = min(n_band, count // (nb + 1)) if nb else 0
    n_bulk = count - nb * n_band
    chunks = []
    lhs = qmc.LatinHypercube(d=4, seed=rng)
    U = lhs.random(n_bulk)
    chunks.append((piece.mag.draw(U[:, 0]), piece.mono.draw(U[:, 1]), U[:, 2], U[:, 3]))
    for which, edge in piece.boundaries:
        U = qmc.LatinHypercube(d=4, seed=rng).random(n_band) if n_band else np.empty((0, 4))
        if which == "mag":
            mag, mono = piece.mag.band(U[:, 0], edge), piece.mono.draw(U[:, 1])
        else:
            mag, mono = piece.mag.draw(U[:, 0]), piece.mono.band(U[:, 1], edge)
        chunks.append((mag, mono, U[:, 2], U[:, 3]))
    mag = np.concatenate([c[0] for c in chunks])
    P = np.concatenate([c[1] for c in chunks])
    sx = np.where(np.concatenate([c[2] for c in chunks]) < 0.5, -1.0, 1.0)
    sy = np.where(np.concatenate([c[3] for c in chunks]) < 0.5, -1.0, 1.0)
    other = _solve_other(piece.primary, mag, P, m, n)
    if piece.primary == "x":
        return sx * mag, sy * other
    return sx * other, sy * mag


class RegionSampler:
    """Samples a named region: R1, R2, R3, R12 (= R1 & R2), R13, center or disk."""

    REGIONS = ("R1", "R2", "R3", "R12", "R13", "center", "disk")

    def __init__(self, region: str, params: ModelParams, k: LyapunovConstants,
                 radius: float | None = None, span: float = 100.0):
        if region not in self.REGIONS:
            raise ValueError(f"unknown region {region!r}")
        self.region = region
        self.params = params
        self.k = k
        self.span = span
        if region == "disk" and radius is None:
            radius = 10.0 * max(k.c2, k.c3)
        self.radius = radius

    @classmethod
    def for_condition(cls, which: str, params: ModelParams, k: LyapunovConstants):
        return cls(DEFAULT_REGION[which], params, k)

    # -- parametrizations -------------------------------------------------
    def _pieces(self, region, cap=None):
        k, m, n, span = self.k, self.params.m, self.params.n, self.span
        c1, c2, c3 = k.c1, k.c2, k.c3
        xcap = cap if cap is not None else span * c2
        ycap = cap if cap is not None else span * c3
        if region == "R1":
            x_lo = (c1 / (span * c3) ** (n - 1)) ** (1.0 / (m - 1))
            return [_Piece("x", _Axis(x_lo, xcap, "log"), _Axis(c1, c1 * 1e6, "log"),
                           (("mono", "lo"),))]
        if region == "R2":
            return [_Piece("x", _Axis(c2, xcap, "log"), _Axis(0.0, 2 * c1, "mixed"),
                           (("mag", "lo"), ("mono", "hi")))]
        if region == "R3":
            return [_Piece("y", _Axis(c3, ycap, "log"), _Axis(0.0, 2 * c1, "mixed"),
                           (("mag", "lo"), ("mono", "hi")))]
        if region == "R12":
            return [_Piece("x", _Axis(c2, xcap, "log"), _Axis(c1, 2 * c1, "linear"),
                           (("mag", "lo"), ("mono", "lo"), ("mono", "hi")))]
        if region == "R13":
            return [_Piece("y", _Axis(c3, ycap, "log"), _Axis(c1, 2 * c1, "linear"),
                           (("mag", "lo"), ("mono", "lo"), ("mono", "hi")))]
        raise ValueError(region)

    def _center(self, count, rng):
        k, m, n = self.k, self.params.m, self.params.n
        xs, ys = [], []
        have = 0
        while have < count:
            need = count - have
            U = qmc.LatinHypercube(d=5, seed=rng).random(2 * need + 16)
            # per coordinate: log scale resolves the thin neighbourhoods of
            # the axes, linear scale fills the bulk of the box
            ax = np.where(U[:, 2] < 0.5, U[:, 0] * k.c2, k.c2 * np.exp(-28.0 * U[:, 0]))
            ay = np.where(U[:, 3] < 0.5, U[:, 1] * k.c3, k.c3 * np.exp(-28.0 * U[:, 1]))
            sx = np.where((U[:, 4] * 4) % 2 < 1, -1.0, 1.0)
            sy = np.where(U[:, 4] < 0.5, -1.0, 1.0)
            x, y = sx * ax, sy * ay
            keep = classify_region(k, m, n, (x, y)).in_center
            xs.append(x[keep][:need])
            ys.append(y[keep][:need])
            have += xs[-1].size
        return np.concatenate(xs), np.concatenate(ys)

    def _handover_pieces(self):
        # bounded bands next to |x| = c2 and |y| = c3 where the global
        # function switches from v1 to v2 / v3
        k = self.k
        return {
            "band_x": [_Piece("x", _Axis(0.5 * k.c2, k.c2, "linear"), _Axis(0.0, 2 * k.c1, "mixed"),
                              (("mag", "hi"),))],
            "band_y": [_Piece("y", _Axis(0.5 * k.c3, k.c3, "linear"), _Axis(0.0, 2 * k.c1, "mixed"),
                              (("mag", "hi"),))],
        }

    def _disk(self, count, rng):
        R = self.radius
        shares = {"R1": 0.2, "R2": 0.1, "R3": 0.1, "R12": 0.1, "R13": 0.1, "center": 0.2,
                  "band_x": 0.1, "band_y": 0.1}
        bands = self._handover_pieces()
        xs, ys = [], []
        for name, share in shares.items():
            want = int(round(share * count))
            got = 0
            tries = 0
            while got < want and tries < 64:
                tries += 1
                if name == "center":
                    x, y = self._center(2 * (want - got) + 16, rng)
                else:
                    pieces = bands[name] if name in bands else self._pieces(name, cap=R)
                    x, y = self._draw(pieces, 2 * (want - got) + 16, rng)
                keep = np.hypot(x, y) <= R
                x, y = x[keep][: want - got], y[keep][: want - got]
                xs.append(x)
                ys.append(y)
                got += x.size
        x, y = np.concatenate(xs), np.concatenate(ys)
        if x.size < count:
            cx, cy = self._center(count - x.size, rng)
            x, y = np.concatenate([x, cx]), np.concatenate([y, cy])
        return x[:count], y[:count]

    def _draw(self, pieces, count, rng):
        m, n = self.params.m, self.params.n
        parts = [_draw_piece(p, count, m, n, rng) for p in pieces]
        return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])

    # -- public -----------------------------------------------------------
    def sample(self, count: int, seed: int = 0):
        """Exactly ``count`` points of the region, a pure function of ``seed``."""
        rng = np.random.default_rng(seed)
        xs, ys, have = [], [], 0
        while have < count:
            if self.region == "center":
                x, y = self._center(count - have, rng)
            elif self.region == "disk":
                x, y = self._disk(count - have, rng)
            else:
                x, y = self._draw(self._pieces(self.region), count - have, rng)
            # rounding in the solved coordinate can land a hair outside
            keep = self.contains(x, y)
            xs.append(x[keep])
            ys.append(y[keep])
            have += int(keep.sum())
        return np.concatenate(xs)[:count], np.concatenate(ys)[:count]

    def contains(self, x, y):
        lab = classify_region(self.k, self.params.m, self.params.n, (x, y))
        if self.region == "R1":
            return lab.in_r1
        if self.region == "R2":
            return lab.in_r2
        if self.region == "R3":
            return lab.in_r3
        if self.region == "R12":
            return lab.in_r1 & lab.in_r2
        if self.region == "R13":
            return lab.in_r1 & lab.in_r3
        if self.region == "center":
            return lab.in_center
        return np.hypot(x, y) <= self.radius
