"""Acceptance suite: one check per criterion, each at its stated tolerance
and wall-clock budget.

Under pytest every criterion is a test and a PASS/FAIL line per criterion is
printed in the terminal summary. Run directly (``python3 tests/test_acceptance.py``)
to get just the lines.
"""

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from blockalt.bai import solve  # noqa: E402
from blockalt.baselines import MetaConfig, ga_solve, pso_solve  # noqa: E402
from blockalt.cli import load_problem  # noqa: E402
from blockalt.multistart import run  # noqa: E402
from blockalt.problem import Problem, check_feasible  # noqa: E402
from blockalt.sampling import (  # noqa: E402
    LHS_STREAM,
    SamplerConfig,
    half_even_round,
    hybrid,
    lhs_design,
    monte_carlo,
    sample,
    stream,
)
from blockalt.scalar import Interval, feasible_interval, minimize_1d  # noqa: E402

import oracles  # noqa: E402
from conftest import EQ12_OPT_COST, EQ12_OPT_POINT, PROBLEMS, SEED  # noqa: E402
from generators import random_instances  # noqa: E402

COST_TOL = 1e-4
POINT_TOL = 1e-3
SWEEP = tuple(2**k for k in range(10))

RESULTS: dict = {}


def _eq12():
    return load_problem(PROBLEMS / "eq12.prob")


def _fig1():
    return load_problem(PROBLEMS / "fig1.prob")


def _accuracy(point, cost):
    perr = float(np.max(np.abs(np.asarray(point) - EQ12_OPT_POINT)))
    return abs(cost - EQ12_OPT_COST), perr


def _fmt_n(v):
    return "none" if v is None else str(v)


def criterion_1():
    p = _eq12()
    t0 = time.perf_counter()
    starts = hybrid(p, SamplerConfig(32, seed=SEED)).points
    rep = run(p, starts)
    wall = time.perf_counter() - t0
    cerr, perr = _accuracy(rep.best_point, rep.best_cost)
    ok = cerr <= COST_TOL and perr <= POINT_TOL and wall < 5
    return ok, f"cost err {cerr:.2e} (tol 1e-4), point err {perr:.2e} (tol 1e-3), {wall:.2f} s (< 5 s)"


def criterion_2():
    p = _eq12()
    t0 = time.perf_counter()
    starts = hybrid(p, SamplerConfig(32, seed=SEED)).points
    rep = run(p, starts)
    wall = time.perf_counter() - t0
    costs = rep.trace.costs
    final = costs[-1]
    k = next(j for j, c in enumerate(costs) if c <= final + 1e-6)
    cycles = math.ceil(k / p.n)
    ok = cycles <= 10 and wall < 1
    return ok, f"within 1e-6 of final cost after {k} updates = {cycles} cycles (<= 10), {wall:.2f} s (< 1 s)"


def criterion_3():
    p = _eq12()
    t0 = time.perf_counter()
    first = {"bai": None, "pso": None, "ga": None}
    for N in SWEEP:
        starts = sample(p, SamplerConfig(N, seed=SEED)).points
        reps = {
            "bai": run(p, starts),
            "pso": pso_solve(p, starts, MetaConfig(seed=SEED)),
            "ga": ga_solve(p, starts, MetaConfig(seed=SEED)),
        }
        for m, rep in reps.items():
            if first[m] is None and rep.best_feasible:
                cerr, perr = _accuracy(rep.best_point, rep.best_cost)
                if cerr <= COST_TOL and perr <= POINT_TOL:
                    first[m] = N
    wall = time.perf_counter() - t0
    inf = math.inf
    b, s, g = (first[m] if first[m] is not None else inf for m in ("bai", "pso", "ga"))
    parts = {"N_bai <= 8": b <= 8, "N_bai <= N_pso": b <= s, "N_pso <= N_ga": s <= g,
             "N_ga >= 64": g >= 64}
    ok = all(parts.values()) and wall < 120
    failed = [k for k, v in parts.items() if not v]
    return ok, (
        f"first success N: bai {_fmt_n(first['bai'])}, pso {_fmt_n(first['pso'])}, "
        f"ga {_fmt_n(first['ga'])}; violated: {', '.join(failed) or 'none'}; {wall:.1f} s (< 120 s)"
    )


def criterion_4():
    t0 = time.perf_counter()
    bad_feas = bad_mono = traces = 0
    for p, starts in random_instances(seed=2024, count=50):
        for x0 in starts:
            res = solve(p, x0)
            traces += 1
            if not all(check_feasible(p, r.point).feasible for r in res.trace):
                bad_feas += 1
            c = res.trace.costs
            if any(b > a + 1e-10 for a, b in zip(c, c[1:])):
                bad_mono += 1
    wall = time.perf_counter() - t0
    ok = bad_feas == 0 and bad_mono == 0 and wall < 30
    return ok, (
        f"50 problems, {traces} traces: {bad_feas} with an infeasible iterate, "
        f"{bad_mono} with a cost increase > 1e-10; {wall:.1f} s (< 30 s)"
    )


def criterion_5():
    p = _eq12()
    t0 = time.perf_counter()
    starts = monte_carlo(p, 32, seed=SEED, rejection_cap=10_000)
    finals = np.array([solve(p, x0).point for x0 in starts])
    wall = time.perf_counter() - t0
    spread = float(np.max(finals.max(axis=0) - finals.min(axis=0)))
    ok = spread <= 1e-5 and wall < 5
    return ok, f"max pairwise coordinate gap {spread:.2e} (tol 1e-5), {wall:.2f} s (< 5 s)"


def criterion_6():
    p = _fig1()
    t0 = time.perf_counter()
    problems = []
    for N in (1, 4, 5, 32):
        cfg = SamplerConfig(N, seed=SEED)
        s = hybrid(p, cfg)
        n_grid = half_even_round(N / 2)
        if s.provenance != ("grid",) * n_grid + ("lhs",) * (N - n_grid):
            problems.append(f"N={N} split {s.provenance.count('grid')}/{s.provenance.count('lhs')}")
        if not all(check_feasible(p, pt).feasible for pt in s):
            problems.append(f"N={N} infeasible output")
        if hybrid(p, cfg) != s:
            problems.append(f"N={N} not deterministic")
        # Raw LHS draws of the first few attempts are stratified per dimension.
        count = N - n_grid
        for attempt in range(4):
            U, _ = lhs_design(p.n, count, stream(SEED, LHS_STREAM, attempt))
            for d in range(p.n):
                if sorted(np.floor(U[:, d] * count).astype(int)) != list(range(count)):
                    problems.append(f"N={N} attempt {attempt} dim {d} not stratified")
        lhs_only = sample(p, SamplerConfig(N, method="lhs", seed=SEED))
        if lhs_only != sample(p, SamplerConfig(N, method="lhs", seed=SEED)):
            problems.append(f"N={N} lhs not deterministic")
    wall = time.perf_counter() - t0
    ok = not problems and wall < 5
    return ok, f"{'; '.join(problems) or 'split, stratification, feasibility, determinism hold'}; {wall:.2f} s (< 5 s)"


def _random_convex_constraint(rng, y):
    """A constraint convex in x1 with x2 frozen at ``y``.

    Returns the source text and an independent numpy version of g(x1) at x2 = y.
    """
    kind = rng.integers(5)
    if kind == 0:
        a, b, c = rng.uniform(0.5, 5), rng.uniform(-0.2, 1.2), rng.uniform(0.01, 0.5)
        return f"{a!r}*(x1 - {b!r})^2 <= {c!r}", lambda t: a * (t - b) ** 2 - c
    if kind == 1:
        s, k = rng.uniform(-4, 4), rng.uniform(0.5, 3)
        return f"exp({s!r}*x1 + 0.1*x2) <= {k!r}", lambda t: np.exp(s * t + 0.1 * y) - k
    if kind == 2:
        b, c = rng.uniform(-0.2, 1.2), rng.uniform(0.05, 0.6)
        return f"abs(x1 - {b!r}) <= {c!r}", lambda t: np.abs(t - b) - c
    if kind == 3:
        k = rng.uniform(-0.5, 1.5)
        return f"x1*x2 <= {k!r}", lambda t: t * y - k
    cx, cy, r = rng.uniform(-0.2, 1.2), y + rng.uniform(-0.3, 0.3), rng.uniform(0.35, 1.0)
    return (
        f"(x1 - {cx!r})^2 + (x2 - {cy!r})^2 <= {r * r!r}",
        lambda t: (t - cx) ** 2 + (y - cy) ** 2 - r * r,
    )


def criterion_7():
    rng = np.random.default_rng(7007)
    t0 = time.perf_counter()
    worst_q = 0.0
    for _ in range(200):
        a, b, c = rng.uniform(0.01, 100), rng.uniform(-10, 10), rng.uniform(-10, 10)
        lo = rng.uniform(-5, 5)
        hi = lo + rng.uniform(0.01, 10)
        p = Problem.from_text([(lo, hi)], f"{a!r}*(x1 - ({b!r}))^2 + ({c!r})")
        x0 = (float(rng.uniform(lo, hi)),)
        s = minimize_1d(p, x0, 0, Interval(lo, hi))
        worst_q = max(worst_q, abs(s.value - oracles.clamped_vertex(a, b, lo, hi)))
    worst_i = 0.0
    done = 0
    while done < 200:
        lo = float(rng.uniform(-0.5, 0.5))
        hi = lo + 0.9999  # 10^4 scan points then sit 1e-4 apart
        y = float(rng.uniform(0.2, 1.0))
        drawn = [_random_convex_constraint(rng, y) for _ in range(int(rng.integers(1, 4)))]
        p = Problem.from_text([(lo, hi), (0, 2)], "x1", [src for src, _ in drawn])
        fns = [fn for _, fn in drawn]

        def g(t):
            return np.max([fn(t) for fn in fns], axis=0)

        ts = np.linspace(lo, hi, 10_000)
        ok = np.max([fn(ts) for fn in fns], axis=0) <= 0
        if not ok.any():
            continue
        feas = ts[ok]
        xi = float(feas[int(rng.integers(len(feas)))])
        s_lo, s_hi = oracles.scan_interval(g, xi, lo, hi)
        iv = feasible_interval(p, (xi, y), 0)
        worst_i = max(worst_i, abs(iv.lo - s_lo), abs(iv.hi - s_hi))
        done += 1
    wall = time.perf_counter() - t0
    ok = worst_q <= 1e-6 and worst_i <= 1e-4 and wall < 10
    return ok, (
        f"quadratics max err {worst_q:.2e} (tol 1e-6), intervals max err {worst_i:.2e} "
        f"(tol 1e-4), {wall:.1f} s (< 10 s)"
    )


def criterion_8():
    from blockalt.control import (
        LinearModel,
        Scenario,
        equilibrium_target,
        lyapunov_value,
        run_closed_loop,
    )

    t0 = time.perf_counter()
    osap = run_closed_loop(Scenario(controller="osap", duration=600, T_amb=25, r=50))
    lqr = run_closed_loop(Scenario(controller="lqr", duration=600, T_amb=25, r=50))
    wall = time.perf_counter() - t0

    t = np.array(osap.t)
    y = np.array(osap.y)
    final = t >= 500
    settle_err = float(np.max(np.abs(y[final] - 50)))

    model = LinearModel(T_amb=25)
    xb, ub = equilibrium_target(model, 50)
    theta = osap.scenario.theta
    bad_lyap = bad_pd = accepted = 0
    for k in range(len(osap)):
        if osap.fallback[k]:
            continue
        accepted += 1
        p11, p22, p12 = osap.P[k]
        P = np.array([[p11, p12], [p12, p22]])
        try:
            np.linalg.cholesky(P)
        except np.linalg.LinAlgError:
            bad_pd += 1
        x = np.array([osap.x1_hat[k], osap.x2_hat[k]])
        e = x - xb
        if np.linalg.norm(e) <= 1e-12:
            continue
        e1 = model.A @ x + model.B * osap.u[k] - xb
        v0 = lyapunov_value(e, P)
        if lyapunov_value(e1, P) - v0 + theta * v0 > 0:
            bad_lyap += 1
    max_solve = max(osap.solve_time) if len(osap) else 0.0

    transient = np.array(lqr.t) < 500
    du_o = float(np.std(np.diff(np.array(osap.u)[transient])))
    du_l = float(np.std(np.diff(np.array(lqr.u)[transient])))

    parts = {
        "settling": settle_err < 1,
        "lyapunov": bad_lyap == 0,
        "pd": bad_pd == 0,
        "solve time": max_solve < 0.5,
        "smoothness": du_o < du_l,
        "runtime": wall < 600,
    }
    ok = all(parts.values())
    failed = [k for k, v in parts.items() if not v]
    return ok, (
        f"max |y-50| last 100 s {settle_err:.2f} (< 1); accepted ticks {accepted}/{len(osap)}, "
        f"Lyapunov violations {bad_lyap}, non-PD {bad_pd}; max solve {max_solve:.3f} s (< 0.5); "
        f"std du osap {du_o:.3g} vs lqr {du_l:.3g}; {wall:.0f} s (< 600 s); "
        f"violated: {', '.join(failed) or 'none'}"
    )


def criterion_9():
    t0 = time.perf_counter()
    sq = Problem.from_text([(-5, 5), (-5, 5)], "(x1 - x2)^2")
    rng = np.random.default_rng(9)
    starts = [tuple(rng.uniform(-5, 5, 2)) for _ in range(8)]
    finals = [solve(sq, x0) for x0 in starts]
    zero = all(r.cost == 0 or r.cost < 1e-15 for r in finals)
    distinct = len({tuple(np.round(r.point, 6)) for r in finals}) == len(finals)

    disc = Problem.from_text(
        [(-3, 3), (-3, 3)],
        "(x1 - 1)^2 + (x2 + 1)^2",
        ["x1*x2 + 0.5 <= 0", "(x1 - 1)*(x2 + 1) - 0.5 <= 0"],
    )
    X = rng.uniform(-3, 3, (4000, 2))
    feas = X[disc.violation_batch(X) <= 0]
    pos = [tuple(x) for x in feas if x[0] > 0][:10]
    neg = [tuple(x) for x in feas if x[0] < 0][:10]
    escapes = 0
    for x0 in pos + neg:
        side = math.copysign(1, x0[0])
        for r in solve(disc, x0).trace:
            x1, x2 = r.point
            if not (x1 * x2 + 0.5 <= 1e-9 and math.copysign(1, x1) == side):
                escapes += 1
                break
    wall = time.perf_counter() - t0
    ok = zero and distinct and escapes == 0 and len(pos) and len(neg) and wall < 2
    return bool(ok), (
        f"(a) zero cost from all 8 starts: {zero}, distinct limits: {distinct}; "
        f"(b) {len(pos)}+{len(neg)} starts in the two components, {escapes} escaped; "
        f"{wall:.2f} s (< 2 s)"
    )


def criterion_10():
    p = _eq12()
    t0 = time.perf_counter()
    starts = hybrid(p, SamplerConfig(32, seed=SEED)).points
    a = run(p, starts, workers=1).comparable()
    b = run(p, starts, workers=4).comparable()
    wall = time.perf_counter() - t0
    ok = a == b and wall < 10
    return ok, f"workers 1 vs 4 identical: {a == b}, {wall:.2f} s (< 10 s)"


CRITERIA = {
    1: ("benchmark optimum", criterion_1),
    2: ("convergence speed", criterion_2),
    3: ("start-count ordering", criterion_3),
    4: ("feasibility and monotonicity", criterion_4),
    5: ("uniqueness on the benchmark", criterion_5),
    6: ("sampling contracts", criterion_6),
    7: ("1-D oracle equivalence", criterion_7),
    8: ("closed-loop control", criterion_8),
    9: ("counterexample fixtures", criterion_9),
    10: ("multistart determinism", criterion_10),
}


def evaluate(num):
    title, fn = CRITERIA[num]
    ok, detail = fn()
    line = f"criterion {num:2d} [{title}]: {'PASS' if ok else 'FAIL'} - {detail}"
    RESULTS[num] = line
    return ok, line


@pytest.mark.parametrize("num", sorted(CRITERIA))
def test_criterion(num):
    ok, line = evaluate(num)
    print(line)
    assert ok, line


if __name__ == "__main__":
    nums = [int(a) for a in sys.argv[1:]] or sorted(CRITERIA)
    failed = 0
    for num in nums:
        ok, line = evaluate(num)
        print(line, flush=True)
        failed += not ok
    sys.exit(1 if failed else 0)
