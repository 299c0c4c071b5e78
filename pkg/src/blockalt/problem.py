"""Box-bounded problems with per-coordinate convex cost and constraints.

A :class:`Problem` is ``min cost(x)`` subject to ``lo_i <= x_i <= hi_i`` and
``g_j(x) <= 0`` for every constraint ``g_j``. Points are plain tuples of
floats, 0-indexed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .expr import DomainError, Expr, parse, parse_constraint

DEFAULT_FEAS_TOL = 1e-9

Point = tuple  # tuple[float, ...]


class ProblemError(ValueError):
    """An ill-formed problem definition."""


@dataclass(frozen=True)
class FeasibilityVerdict:
    feasible: bool
    worst_violation: float
    violated_bounds: tuple[int, ...] = ()
    violated_constraints: tuple[int, ...] = ()

    @property
    def violated_indices(self) -> tuple[str, ...]:
        """Labels ``x<i>`` for bounds and ``g<j>`` for constraints, 1-based."""
        return tuple(f"x{i + 1}" for i in self.violated_bounds) + tuple(
            f"g{j + 1}" for j in self.violated_constraints
        )


@dataclass(frozen=True)
class Problem:
    bounds: tuple[tuple[float, float], ...]
    cost: Expr
    constraints: tuple[Expr, ...] = ()
    name: str = ""
    # Constraint source lines as written by the user, kept for round-tripping files.
    constraint_sources: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "constraints", tuple(self.constraints))
        n = len(bounds)
        if n < 1:
            raise ProblemError("a problem needs at least one variable")
        for i, (lo, hi) in enumerate(bounds):
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ProblemError(f"bounds of x{i + 1} must be finite")
            if lo > hi:
                raise ProblemError(f"empty bounds for x{i + 1}: {lo} > {hi}")
        for e in (self.cost, *self.constraints):
            if e.variables and max(e.variables) >= n:
                raise ProblemError(
                    f"expression {e} references x{max(e.variables) + 1} but n = {n}"
                )

    @classmethod
    def from_text(
        cls,
        bounds: Iterable[Sequence[float]],
        cost: str,
        constraints: Iterable[str] = (),
        name: str = "",
    ) -> "Problem":
        """Build a problem from expression source strings."""
        bounds = tuple((lo, hi) for lo, hi in bounds)
        n = len(bounds)
        constraints = tuple(constraints)
        return cls(
            bounds=bounds,
            cost=parse(cost, n),
            constraints=tuple(parse_constraint(c, n) for c in constraints),
            name=name,
            constraint_sources=constraints,
        )

    @property
    def n(self) -> int:
        return len(self.bounds)

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds])

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds])

    def point(self, values: Iterable[float]) -> Point:
        p = tuple(float(v) for v in values)
        if len(p) != self.n:
            raise ProblemError(f"point has dimension {len(p)}, expected {self.n}")
        if not all(math.isfinite(v) for v in p):
            raise ProblemError(f"point has non-finite entries: {p}")
        return p

    def violation(self, x: Sequence[float]) -> float:
        """Largest bound residual or constraint value; +inf on a domain error."""
        worst = -math.inf
        for v, (lo, hi) in zip(x, self.bounds):
            worst = max(worst, lo - v, v - hi)
        for g in self.constraints:
            try:
                worst = max(worst, g.evaluate(x))
            except DomainError:
                return math.inf
        return worst

    def is_feasible(self, x: Sequence[float], tol: float = DEFAULT_FEAS_TOL) -> bool:
        return self.violation(x) <= tol

    def violation_batch(self, X) -> np.ndarray:
        """Row-wise :meth:`violation` for an ``(m, n)`` array, inf for domain errors."""
        X = np.asarray(X, dtype=float)
        worst = np.max(np.maximum(self.lower - X, X - self.upper), axis=1)
        for g in self.constraints:
            gv = g.evaluate_batch(X)
            worst = np.maximum(worst, np.where(np.isnan(gv), np.inf, gv))
        return worst

    def cost_batch(self, X) -> np.ndarray:
        return self.cost.evaluate_batch(X)


def check_feasible(
    p: Problem, x: Sequence[float], tol: float = DEFAULT_FEAS_TOL
) -> FeasibilityVerdict:
    """Feasibility of ``x`` at tolerance ``tol``.

    A domain error inside a constraint counts as an infinite violation of that
    constraint; nothing is raised.
    """
    worst = -math.inf
    bad_bounds = []
    for i, (v, (lo, hi)) in enumerate(zip(x, p.bounds)):
        r = max(lo - v, v - hi)
        worst = max(worst, r)
        if r > tol:
            bad_bounds.append(i)
    bad_cons = []
    for j, g in enumerate(p.constraints):
        try:
            r = g.evaluate(x)
        except DomainError:
            r = math.inf
        worst = max(worst, r)
        if r > tol:
            bad_cons.append(j)
    return FeasibilityVerdict(
        feasible=worst <= tol,
        worst_violation=worst,
        violated_bounds=tuple(bad_bounds),
        violated_constraints=tuple(bad_cons),
    )


def cost_at(p: Problem, x: Sequence[float]) -> float:
    return p.cost.evaluate(x)
