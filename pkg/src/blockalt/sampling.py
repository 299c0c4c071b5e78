"""Feasible starting points: grid, Latin hypercube, Monte Carlo and hybrid.

The hybrid sampler keeps the ``round(N/2)`` cheapest feasible grid
candidates (half-to-even rounding) and fills the remaining ``N - round(N/2)``
with Latin hypercube samples.

Random streams
--------------
All randomness comes from numpy's PCG64 seeded through
``SeedSequence(seed, spawn_key=(stream, index))``:

* LHS: stream 1, ``index`` = draw attempt. Attempt ``a`` builds a full design,
  dimension by dimension, drawing ``permutation(count)`` then
  ``random(count)``. Feasible rows are taken in row order, attempt after
  attempt, until ``count`` points are collected or ``rejection_cap * count``
  draws are spent; any shortfall is filled with the grid candidates nearest
  to the rows of the last draw.
* Monte Carlo: stream 2, ``index`` = point index. Point ``j`` draws
  ``random(n)`` repeatedly from its own stream until one is feasible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .problem import DEFAULT_FEAS_TOL, Point, Problem, check_feasible

METHODS = ("hybrid", "grid", "lhs", "monte_carlo")
LHS_STREAM = 1
MC_STREAM = 2
_CHUNK = 1 << 16


class SamplingError(RuntimeError):
    """No feasible point could be produced within the configured caps."""


@dataclass(frozen=True)
class SamplerConfig:
    n_points: int
    method: str = "hybrid"
    seed: int = 0
    grid_candidate_cap: int = 100_000
    rejection_cap: int = 100
    feas_tol: float = DEFAULT_FEAS_TOL

    def __post_init__(self):
        if self.n_points < 1:
            raise ValueError("n_points must be at least 1")
        if self.method not in METHODS:
            raise ValueError(f"unknown sampling method {self.method!r}")
        if self.grid_candidate_cap < 1 or self.rejection_cap < 1:
            raise ValueError("caps must be at least 1")


@dataclass(frozen=True)
class StartSet:
    points: tuple
    provenance: tuple
    seed: int = 0
    method: str = "hybrid"
    backfilled: int = 0  # grid shortfall made up with extra LHS points
    fallbacks: int = 0  # LHS points replaced by their nearest grid candidate

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "method": self.method,
            "seed": self.seed,
            "n_points": len(self.points),
            "points": [list(pt) for pt in self.points],
            "provenance": list(self.provenance),
            "backfilled": self.backfilled,
            "fallbacks": self.fallbacks,
        }

    @classmethod
    def from_json(cls, data: dict) -> "StartSet":
        return cls(
            points=tuple(tuple(float(v) for v in pt) for pt in data["points"]),
            provenance=tuple(data["provenance"]),
            seed=data.get("seed", 0),
            method=data.get("method", "hybrid"),
            backfilled=data.get("backfilled", 0),
            fallbacks=data.get("fallbacks", 0),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def stream(seed: int, stream_id: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed & (2**64 - 1), spawn_key=(stream_id, index))
    return np.random.Generator(np.random.PCG64(ss))


def half_even_round(x: float) -> int:
    # Python's round() already rounds half to even.
    return int(round(x))


def grid_resolution(n: int, cap: int) -> int:
    """Points per dimension, ``max(3, floor(cap ** (1/n)))`` in exact integers."""
    m = int(math.floor(cap ** (1.0 / n)))
    while (m + 1) ** n <= cap:
        m += 1
    while m > 1 and m**n > cap:
        m -= 1
    return max(3, m)


@dataclass
class GridCandidates:
    points: np.ndarray  # (k, n), sorted by ascending cost then lexicographically
    costs: np.ndarray
    resolution: int

    def __len__(self) -> int:
        return len(self.costs)

    def nearest(self, x) -> Optional[Point]:
        if not len(self):
            return None
        d = np.sum((self.points - np.asarray(x)) ** 2, axis=1)
        return tuple(float(v) for v in self.points[int(np.argmin(d))])


def grid_candidates(
    p: Problem, cap: int = 100_000, feas_tol: float = DEFAULT_FEAS_TOL
) -> GridCandidates:
    """Feasible points of the regular grid, cheapest first.

    The grid has ``m = max(3, floor(cap^(1/n)))`` equally spaced values per
    dimension, endpoints included. Ties in cost are broken by lexicographic
    order of the point.
    """
    n = p.n
    m = grid_resolution(n, cap)
    axes = [np.linspace(lo, hi, m) for lo, hi in p.bounds]
    total = m**n
    kept_x, kept_c = [], []
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total))
        digits = np.empty((len(idx), n), dtype=np.int64)
        rem = idx.copy()
        for d in range(n - 1, -1, -1):
            digits[:, d] = rem % m
            rem //= m
        X = np.column_stack([axes[d][digits[:, d]] for d in range(n)])
        ok = p.violation_batch(X) <= feas_tol
        if not ok.any():
            continue
        X = X[ok]
        c = p.cost_batch(X)
        fin = np.isfinite(c)
        kept_x.append(X[fin])
        kept_c.append(c[fin])
    if not kept_x:
        return GridCandidates(np.empty((0, n)), np.empty(0), m)
    X = np.concatenate(kept_x)
    c = np.concatenate(kept_c)
    order = np.lexsort([X[:, d] for d in range(n - 1, -1, -1)] + [c])
    return GridCandidates(X[order], c[order], m)


def lhs_design(n: int, count: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Unit-cube Latin hypercube of ``count`` rows; also returns the strata."""
    strata = np.empty((count, n), dtype=np.int64)
    U = np.empty((count, n))
    for d in range(n):
        strata[:, d] = rng.permutation(count)
        U[:, d] = (strata[:, d] + rng.random(count)) / count
    return U, strata


def lhs_draw(p: Problem, count: int, seed: int, attempt: int = 0) -> np.ndarray:
    """Raw (unfiltered) LHS draw ``attempt`` scaled to the box."""
    U, _ = lhs_design(p.n, count, stream(seed, LHS_STREAM, attempt))
    return p.lower + (p.upper - p.lower) * U


def _lhs(
    p: Problem,
    count: int,
    seed: int,
    rejection_cap: int,
    feas_tol: float,
    grid: Optional[GridCandidates] = None,
    grid_cap: int = 100_000,
) -> tuple[list, int]:
    out: list = []
    X = None
    for attempt in range(rejection_cap * count):
        X = lhs_draw(p, count, seed, attempt)
        ok = p.violation_batch(X) <= feas_tol
        for j in np.flatnonzero(ok):
            pt = tuple(float(v) for v in X[j])
            if check_feasible(p, pt, feas_tol).feasible:
                out.append(pt)
                if len(out) == count:
                    return out, 0
    missing = count - len(out)
    if grid is None:
        grid = grid_candidates(p, grid_cap, feas_tol)
    if len(grid):
        out.extend(grid.nearest(X[j]) for j in range(missing))
    else:
        # Empty grid: last resort is rejection sampling on per-point streams.
        out.extend(monte_carlo(p, missing, seed, rejection_cap, feas_tol))
    return out, missing


def lhs(
    p: Problem,
    count: int,
    seed: int,
    rejection_cap: int = 100,
    feas_tol: float = DEFAULT_FEAS_TOL,
) -> list:
    """``count`` feasible points by Latin hypercube sampling with rejection."""
    if count < 1:
        raise ValueError("count must be at least 1")
    pts, _ = _lhs(p, count, seed, rejection_cap, feas_tol)
    return pts


def monte_carlo(
    p: Problem,
    count: int,
    seed: int,
    rejection_cap: int = 100,
    feas_tol: float = DEFAULT_FEAS_TOL,
) -> list:
    """``count`` uniform box samples, each redrawn until feasible."""
    if count < 1:
        raise ValueError("count must be at least 1")
    lo, width = p.lower, p.upper - p.lower
    out = []
    for j in range(count):
        rng = stream(seed, MC_STREAM, j)
        for _ in range(rejection_cap):
            pt = tuple(float(v) for v in lo + width * rng.random(p.n))
            if check_feasible(p, pt, feas_tol).feasible:
                out.append(pt)
                break
        else:
            raise SamplingError(
                f"Monte Carlo point {j}: no feasible sample in {rejection_cap} draws"
            )
    return out


def _verified(p: Problem, grid: GridCandidates, k: int, feas_tol: float) -> list:
    out = []
    for row in grid.points:
        if len(out) == k:
            break
        pt = tuple(float(v) for v in row)
        if check_feasible(p, pt, feas_tol).feasible:
            out.append(pt)
    return out


def hybrid(p: Problem, cfg: SamplerConfig) -> StartSet:
    N = cfg.n_points
    n_grid = half_even_round(N / 2)
    grid = grid_candidates(p, cfg.grid_candidate_cap, cfg.feas_tol)
    chosen = _verified(p, grid, n_grid, cfg.feas_tol)
    shortfall = n_grid - len(chosen)
    n_lhs = N - len(chosen)
    lhs_pts, fallbacks = _lhs(
        p, n_lhs, cfg.seed, cfg.rejection_cap, cfg.feas_tol, grid=grid
    )
    return StartSet(
        points=tuple(chosen + lhs_pts),
        provenance=("grid",) * len(chosen) + ("lhs",) * n_lhs,
        seed=cfg.seed,
        method="hybrid",
        backfilled=shortfall,
        fallbacks=fallbacks,
    )


def sample(p: Problem, cfg: SamplerConfig) -> StartSet:
    """Dispatch on ``cfg.method``."""
    N = cfg.n_points
    if cfg.method == "hybrid":
        return hybrid(p, cfg)
    if cfg.method == "grid":
        grid = grid_candidates(p, cfg.grid_candidate_cap, cfg.feas_tol)
        pts = _verified(p, grid, N, cfg.feas_tol)
        if len(pts) < N:
            raise SamplingError(
                f"only {len(pts)} feasible grid candidates, {N} requested"
            )
        return StartSet(tuple(pts), ("grid",) * N, cfg.seed, "grid")
    if cfg.method == "lhs":
        pts, fallbacks = _lhs(
            p, N, cfg.seed, cfg.rejection_cap, cfg.feas_tol,
            grid_cap=cfg.grid_candidate_cap,
        )
        return StartSet(tuple(pts), ("lhs",) * N, cfg.seed, "lhs", fallbacks=fallbacks)
    pts = monte_carlo(p, N, cfg.seed, cfg.rejection_cap, cfg.feas_tol)
    return StartSet(tuple(pts), ("monte_carlo",) * N, cfg.seed, "monte_carlo")
