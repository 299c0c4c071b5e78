"""Block-alternating iterative optimization.

Iteration ``k`` (1-based) updates coordinate ``i = rem(k, n)``, with 0 read as
``n``: the coordinate is replaced by the minimizer of the cost over its
feasible interval while all other coordinates stay frozen. Starting from a
feasible point, every iterate stays feasible and the cost never increases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .expr import DomainError
from .problem import DEFAULT_FEAS_TOL, Point, Problem, check_feasible
from .scalar import GOLDEN_TOL, INTERVAL_TOL, feasible_interval, minimize_1d


class InfeasibleStartError(ValueError):
    """The initial point handed to :func:`solve` is not feasible."""


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 1000
    x_tol: float = 1e-8
    cost_tol: float = 1e-10
    interval_tol: float = INTERVAL_TOL
    golden_tol: float = GOLDEN_TOL
    feas_tol: float = DEFAULT_FEAS_TOL

    def __post_init__(self):
        for name in ("x_tol", "cost_tol", "interval_tol", "golden_tol", "feas_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True)
class TraceRecord:
    k: int  # iteration, 0 for the starting point
    i: int  # 1-based coordinate updated at iteration k, 0 for the start
    point: Point
    cost: float


@dataclass
class RunTrace:
    records: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def costs(self) -> list:
        return [r.cost for r in self.records]

    def to_json(self) -> list:
        return [
            {"k": r.k, "coordinate": r.i, "point": list(r.point), "cost": r.cost}
            for r in self.records
        ]


@dataclass
class SolveResult:
    point: Point
    cost: float
    trace: RunTrace
    iterations: int
    n: int
    truncated: bool = False
    warnings: list = field(default_factory=list)

    @property
    def cycles(self) -> int:
        """Full sweeps over the coordinates, ``ceil(iterations / n)``."""
        return -(-self.iterations // self.n)


def coordinate_step(
    p: Problem, x: Sequence[float], i: int, cfg: SolverConfig = SolverConfig()
) -> tuple[Point, float, Optional[str]]:
    """Minimize over coordinate ``i`` (0-based) and return ``(point, cost, warning)``.

    All other coordinates are returned bit-identical. When the incoming value
    is within ``cost_tol`` of the best value found it is kept, so flat
    directions do not cause drift.
    """
    x = tuple(float(v) for v in x)
    cost_in = p.cost.evaluate(x)
    if not p.cost.depends_on(i):
        return x, cost_in, None
    iv = feasible_interval(p, x, i, cfg.interval_tol, cfg.feas_tol)
    if iv.degenerate:
        return x, cost_in, None
    sol = minimize_1d(p, x, i, iv, cfg.golden_tol)
    if sol.warning or not sol.cost < cost_in - cfg.cost_tol:
        return x, cost_in, sol.warning
    y = x[:i] + (sol.value,) + x[i + 1:]
    return y, sol.cost, None


def solve(
    p: Problem, x0: Sequence[float], cfg: SolverConfig = SolverConfig()
) -> SolveResult:
    """Run the cyclic coordinate scheme from the feasible point ``x0``.

    Stops once a full cycle of ``n`` consecutive updates moved no coordinate
    by more than ``x_tol`` and lowered the cost by at most ``cost_tol``, or
    after ``max_iterations`` updates (``truncated`` is then set).
    """
    n = p.n
    x = p.point(x0)
    verdict = check_feasible(p, x, cfg.feas_tol)
    if not verdict.feasible:
        raise InfeasibleStartError(
            f"initial point {x} is infeasible "
            f"(worst violation {verdict.worst_violation:.3g}, "
            f"violated {', '.join(verdict.violated_indices)})"
        )
    try:
        cost = p.cost.evaluate(x)
    except DomainError as exc:
        raise InfeasibleStartError(f"cost undefined at initial point: {exc}") from None

    trace = RunTrace([TraceRecord(0, 0, x, cost)])
    warnings = []
    moves = []  # per-iteration max coordinate change
    k = 0
    while k < cfg.max_iterations:
        k += 1
        i = k % n or n
        y, new_cost, warn = coordinate_step(p, x, i - 1, cfg)
        if warn:
            warnings.append(f"iteration {k}: {warn}")
        moves.append(abs(y[i - 1] - x[i - 1]))
        x, cost = y, new_cost
        trace.records.append(TraceRecord(k, i, x, cost))
        if k >= n:
            drop = trace.records[k - n].cost - cost
            if max(moves[-n:]) <= cfg.x_tol and drop <= cfg.cost_tol:
                return SolveResult(x, cost, trace, k, n, False, warnings)
    return SolveResult(x, cost, trace, k, n, True, warnings)
