"""One-coordinate subproblems.

With every coordinate but ``x_i`` frozen, each constraint convex in ``x_i``
cuts out an interval; their intersection with the box is the feasible
interval. The cost, convex in ``x_i``, is then minimized over that interval
by golden-section search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .expr import DomainError
from .problem import DEFAULT_FEAS_TOL, Problem

INTERVAL_TOL = 1e-10
GOLDEN_TOL = 1e-9

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
# First expansion step, as a fraction of the distance to the box edge.
_FIRST_STEP = 2.0**-20


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def degenerate(self) -> bool:
        return self.hi <= self.lo

    def contains(self, t: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= t <= self.hi + tol


@dataclass(frozen=True)
class ScalarSolution:
    value: float
    cost: float
    interval: Interval
    probes: int
    warning: Optional[str] = None


def _feasible_pred(g, x, i, limit):
    h = g.restrict(x, i)

    def ok(t: float) -> bool:
        try:
            return h(t) <= limit
        except DomainError:
            return False

    return ok


def _edge(ok: Callable[[float], bool], a: float, b: float, tol: float) -> float:
    """Last feasible point walking from feasible ``a`` toward infeasible ``b``.

    Steps outward geometrically from ``a`` so that the nearest boundary is
    found even if the constraint is feasible again further on, then bisects
    the bracketing step down to ``tol``.
    """
    span = b - a
    step = max(abs(span) * _FIRST_STEP, tol)
    sign = 1.0 if span > 0 else -1.0
    good = a
    bad = b
    while True:
        t = a + sign * step
        if (t - b) * sign >= 0:
            break
        if ok(t):
            good = t
            step *= 2.0
        else:
            bad = t
            break
    while abs(bad - good) > tol:
        mid = 0.5 * (good + bad)
        if mid == good or mid == bad:
            break
        if ok(mid):
            good = mid
        else:
            bad = mid
    return good


def feasible_interval(
    p: Problem,
    x: Sequence[float],
    i: int,
    tol: float = INTERVAL_TOL,
    feas_tol: float = DEFAULT_FEAS_TOL,
) -> Interval:
    """Feasible interval of coordinate ``i`` (0-based) with the rest of ``x`` frozen.

    ``x`` must be feasible. The result always contains ``x[i]``; it collapses
    to ``[x[i], x[i]]`` when the coordinate is pinned.
    """
    xi = float(x[i])
    blo, bhi = p.bounds[i]
    lo, hi = min(blo, xi), max(bhi, xi)
    for g in p.constraints:
        if not g.depends_on(i):
            continue
        # Search with g <= 0 so iterates never drift into the tolerance band;
        # fall back to the band only if x itself already sits inside it.
        ok = _feasible_pred(g, x, i, 0.0)
        if not ok(xi):
            ok = _feasible_pred(g, x, i, feas_tol)
            if not ok(xi):
                return Interval(xi, xi)
        ok_lo, ok_hi = ok(lo), ok(hi)
        if ok_lo and ok_hi:
            # Convex in x_i: feasible at both ends means feasible in between.
            continue
        if not ok_hi:
            hi = _edge(ok, xi, hi, tol)
        if not ok_lo:
            lo = _edge(ok, xi, lo, tol)
    return Interval(lo, hi)


def minimize_1d(
    p: Problem,
    x: Sequence[float],
    i: int,
    iv: Interval,
    tol: float = GOLDEN_TOL,
) -> ScalarSolution:
    """Minimize the cost over coordinate ``i`` restricted to ``iv``.

    Golden-section search down to a bracket of width ``tol``. The bracket
    midpoint is returned unless an endpoint of ``iv`` is strictly better,
    which is how minima sitting on the boundary are captured exactly.
    Domain errors count as +inf.
    """
    f = p.cost.restrict(x, i)
    probes = 0
    finite = 0

    def fs(t: float) -> float:
        nonlocal probes, finite
        probes += 1
        try:
            v = f(t)
        except DomainError:
            return math.inf
        finite += 1
        return v

    xi = float(x[i])
    if iv.degenerate:
        return ScalarSolution(xi, fs(xi), iv, probes)

    a, b = iv.lo, iv.hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = fs(c), fs(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = fs(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = fs(d)

    best_t = 0.5 * (a + b)
    best_f = fs(best_t)
    for t in (iv.lo, iv.hi):
        ft = fs(t)
        if ft < best_f:
            best_t, best_f = t, ft

    if finite == 0:
        return ScalarSolution(
            xi, fs(xi), iv, probes, warning="every probe hit a domain error"
        )
    return ScalarSolution(best_t, best_f, iv, probes)
