"""Independent block-alternating runs from many starting points."""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .bai import RunTrace, SolverConfig, solve
from .problem import Point, Problem


class AllStartsFailed(RuntimeError):
    pass


@dataclass(frozen=True)
class StartResult:
    index: int
    start: Point
    final: Optional[Point]
    cost: float
    iterations: int
    truncated: bool = False
    error: Optional[str] = None
    feasible: bool = True

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "start": list(self.start),
            "final": None if self.final is None else list(self.final),
            "cost": self.cost if self.error is None else None,
            "iterations": self.iterations,
            "truncated": self.truncated,
            "feasible": self.feasible,
            "error": self.error,
        }


@dataclass
class SolverReport:
    method: str
    best_point: Point
    best_cost: float
    winner_index: int
    per_start: list
    wall_time: float
    # Winner's history: one (iteration, cost) pair per record.
    history: list = field(default_factory=list)
    trace: Optional[RunTrace] = None
    best_feasible: bool = True

    def to_json(self) -> dict:
        out = {
            "schema_version": 1,
            "method": self.method,
            "best_point": list(self.best_point),
            "best_cost": self.best_cost,
            "best_feasible": self.best_feasible,
            "winner_index": self.winner_index,
            "n_starts": len(self.per_start),
            "wall_time": self.wall_time,
            "history": [{"iteration": k, "cost": c} for k, c in self.history],
            "per_start": [r.to_json() for r in self.per_start],
        }
        if self.trace is not None:
            out["trace"] = self.trace.to_json()
        return out

    def comparable(self) -> dict:
        """JSON view without timing, for run-to-run comparisons."""
        d = self.to_json()
        d.pop("wall_time")
        return d


def _run_one(args) -> tuple[StartResult, Optional[RunTrace]]:
    p, idx, x0, cfg = args
    try:
        res = solve(p, x0, cfg)
    except Exception as exc:  # isolate: one bad start never aborts siblings
        return (
            StartResult(idx, tuple(x0), None, float("inf"), 0, error=f"{type(exc).__name__}: {exc}"),
            None,
        )
    return (
        StartResult(idx, tuple(x0), res.point, res.cost, res.iterations, res.truncated),
        res.trace,
    )


def select_winner(results: Sequence[StartResult], cost_tol: float) -> int:
    """Lowest cost; within ``cost_tol`` of it, fewest iterations, then lowest index."""
    ok = [r for r in results if r.error is None]
    if not ok:
        raise AllStartsFailed("every start failed")
    best = min(r.cost for r in ok)
    near = [r for r in ok if r.cost <= best + cost_tol]
    return min(near, key=lambda r: (r.iterations, r.index)).index


def run(
    p: Problem,
    starts: Sequence[Point],
    cfg: SolverConfig = SolverConfig(),
    workers: int = 1,
) -> SolverReport:
    """Solve from every start and keep the best run.

    The report does not depend on ``workers``: results are gathered in start
    order and the winner rule is a pure function of them.
    """
    starts = [tuple(s) for s in starts]
    if not starts:
        raise ValueError("no starting points")
    if workers < 1:
        raise ValueError("workers must be at least 1")
    t0 = time.perf_counter()
    tasks = [(p, i, s, cfg) for i, s in enumerate(starts)]
    if workers == 1 or len(tasks) == 1:
        outcomes = [_run_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            outcomes = list(pool.map(_run_one, tasks))
    results = [o[0] for o in outcomes]
    w = select_winner(results, cfg.cost_tol)
    trace = outcomes[w][1]
    return SolverReport(
        method="bai",
        best_point=results[w].final,
        best_cost=results[w].cost,
        winner_index=w,
        per_start=results,
        wall_time=time.perf_counter() - t0,
        history=[(r.k, r.cost) for r in trace],
        trace=trace,
    )
