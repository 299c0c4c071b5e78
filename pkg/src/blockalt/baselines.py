"""Genetic algorithm and particle swarm baselines.

Both take their initial population (or swarm) from a start set and score
individuals by the static penalty fitness

    fitness(x) = cost(x) + penalty_weight * sum_j max(0, g_j(x))^2

with individuals clipped to the box. Undefined cost or constraint values give
an infinite fitness. The reported answer is the best *feasible* point seen
over the whole run.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .multistart import SolverReport, StartResult
from .problem import DEFAULT_FEAS_TOL, Problem, check_feasible

GA_STREAM = 3
PSO_STREAM = 4


@dataclass(frozen=True)
class MetaConfig:
    max_iterations: int = 200
    penalty_weight: float = 1e6
    seed: int = 0
    feas_tol: float = DEFAULT_FEAS_TOL
    # GA
    crossover_rate: float = 0.9
    mutation_rate: float = 0.1
    mutation_sigma: float = 0.05  # fraction of box width
    tournament_size: int = 2
    # PSO
    inertia: float = 0.729
    cognitive: float = 1.49445
    social: float = 1.49445
    velocity_clamp: float = 0.2  # fraction of box width

    def __post_init__(self):
        for name in ("crossover_rate", "mutation_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not self.penalty_weight > 0:
            raise ValueError("penalty_weight must be positive")
        if self.tournament_size < 1 or self.max_iterations < 0:
            raise ValueError("invalid GA/PSO sizes")


def penalty_fitness(p: Problem, X, weight: float):
    """Return ``(fitness, cost, violation)`` for each row of ``X``.

    ``violation`` is the largest constraint value clipped at 0, +inf where
    anything is undefined. Rows are assumed to lie inside the box.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    cost = p.cost_batch(X)
    pen = np.zeros(len(X))
    viol = np.zeros(len(X))
    for g in p.constraints:
        gv = g.evaluate_batch(X)
        pos = np.maximum(gv, 0.0)
        pen = pen + pos * pos
        viol = np.maximum(viol, pos)
        viol = np.where(np.isnan(gv), np.inf, viol)
    fitness = cost + weight * pen
    bad = ~np.isfinite(fitness)
    fitness = np.where(bad, np.inf, fitness)
    viol = np.where(np.isnan(cost), np.inf, viol)
    return fitness, cost, viol


class _BestTracker:
    def __init__(self, p: Problem, feas_tol: float):
        self.p = p
        self.tol = feas_tol
        self.x = None
        self.cost = math.inf
        self.slot = -1
        self.fallback = None  # best fitness, used only if nothing is feasible
        self.fallback_fit = math.inf
        self.fallback_slot = -1

    def update(self, X, fit, cost, viol):
        ok = (viol <= self.tol) & np.isfinite(cost)
        if ok.any():
            c = np.where(ok, cost, np.inf)
            j = int(np.argmin(c))
            if c[j] < self.cost:
                pt = tuple(float(v) for v in X[j])
                if check_feasible(self.p, pt, self.tol).feasible:
                    self.x, self.cost, self.slot = pt, float(c[j]), j
        j = int(np.argmin(fit))
        if fit[j] < self.fallback_fit:
            self.fallback = tuple(float(v) for v in X[j])
            self.fallback_fit = float(fit[j])
            self.fallback_slot = j


def _report(method, p, starts, finals, tracker, history, iterations, t0) -> SolverReport:
    feasible = tracker.x is not None
    if feasible:
        best, best_cost, slot = tracker.x, tracker.cost, tracker.slot
    else:
        best, slot = tracker.fallback, tracker.fallback_slot
        try:
            best_cost = p.cost.evaluate(best) if best is not None else math.inf
        except ArithmeticError:
            best_cost = math.inf
    per = []
    for i, (s, f) in enumerate(zip(starts, finals)):
        pt = tuple(float(v) for v in f)
        try:
            c = p.cost.evaluate(pt)
        except ArithmeticError:
            c = math.inf
        per.append(
            StartResult(
                i, tuple(s), pt, c, iterations,
                feasible=check_feasible(p, pt).feasible,
            )
        )
    return SolverReport(
        method=method,
        best_point=best,
        best_cost=best_cost,
        winner_index=slot,
        per_start=per,
        wall_time=time.perf_counter() - t0,
        history=history,
        best_feasible=feasible,
    )


def _history_entry(k, tracker):
    return (k, tracker.cost if tracker.x is not None else None)


def ga_solve(p: Problem, starts: Sequence, cfg: MetaConfig = MetaConfig()) -> SolverReport:
    """Generational GA seeded with ``starts`` as the initial population.

    Tournament selection, arithmetic crossover of consecutive parent pairs,
    per-gene Gaussian mutation clipped to the box, and one elite carried over
    each generation.
    """
    t0 = time.perf_counter()
    starts = [tuple(s) for s in starts]
    pop = np.array(starts, dtype=float)
    N, n = pop.shape
    lo, hi = p.lower, p.upper
    sigma = cfg.mutation_sigma * (hi - lo)
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(cfg.seed & (2**64 - 1), spawn_key=(GA_STREAM,)))
    )
    tracker = _BestTracker(p, cfg.feas_tol)
    fit, cost, viol = penalty_fitness(p, pop, cfg.penalty_weight)
    tracker.update(pop, fit, cost, viol)
    history = [_history_entry(0, tracker)]
    n_pairs = N // 2
    for gen in range(1, cfg.max_iterations + 1):
        entrants = rng.integers(0, N, size=(N, cfg.tournament_size))
        # Stable argmin keeps the first entrant on ties.
        winners = entrants[np.arange(N), np.argmin(fit[entrants], axis=1)]
        parents = pop[winners]
        children = parents.copy()
        do_cx = rng.random(n_pairs) < cfg.crossover_rate
        alpha = rng.random(n_pairs)[:, None]
        p1, p2 = parents[0 : 2 * n_pairs : 2], parents[1 : 2 * n_pairs : 2]
        c1 = alpha * p1 + (1 - alpha) * p2
        c2 = (1 - alpha) * p1 + alpha * p2
        children[0 : 2 * n_pairs : 2] = np.where(do_cx[:, None], c1, p1)
        children[1 : 2 * n_pairs : 2] = np.where(do_cx[:, None], c2, p2)
        mutate = rng.random((N, n)) < cfg.mutation_rate
        noise = rng.normal(0.0, 1.0, (N, n)) * sigma
        children = np.clip(np.where(mutate, children + noise, children), lo, hi)

        e = int(np.argmin(fit))
        cfit, ccost, cviol = penalty_fitness(p, children, cfg.penalty_weight)
        worst = int(np.argmax(cfit))
        if fit[e] < cfit[worst]:
            children[worst] = pop[e]
            cfit[worst], ccost[worst], cviol[worst] = fit[e], cost[e], viol[e]
        pop, fit, cost, viol = children, cfit, ccost, cviol
        tracker.update(pop, fit, cost, viol)
        history.append(_history_entry(gen, tracker))
    return _report("ga", p, starts, pop, tracker, history, cfg.max_iterations, t0)


def pso_solve(p: Problem, starts: Sequence, cfg: MetaConfig = MetaConfig()) -> SolverReport:
    """Global-best PSO with constriction-style coefficients and zero initial velocity."""
    t0 = time.perf_counter()
    starts = [tuple(s) for s in starts]
    X = np.array(starts, dtype=float)
    N, n = X.shape
    lo, hi = p.lower, p.upper
    vmax = cfg.velocity_clamp * (hi - lo)
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(cfg.seed & (2**64 - 1), spawn_key=(PSO_STREAM,)))
    )
    V = np.zeros_like(X)
    tracker = _BestTracker(p, cfg.feas_tol)
    fit, cost, viol = penalty_fitness(p, X, cfg.penalty_weight)
    tracker.update(X, fit, cost, viol)
    pbest, pfit = X.copy(), fit.copy()
    g = int(np.argmin(pfit))
    history = [_history_entry(0, tracker)]
    for it in range(1, cfg.max_iterations + 1):
        r1 = rng.random((N, n))
        r2 = rng.random((N, n))
        V = (
            cfg.inertia * V
            + cfg.cognitive * r1 * (pbest - X)
            + cfg.social * r2 * (pbest[g] - X)
        )
        V = np.clip(V, -vmax, vmax)
        X = np.clip(X + V, lo, hi)
        fit, cost, viol = penalty_fitness(p, X, cfg.penalty_weight)
        tracker.update(X, fit, cost, viol)
        better = fit < pfit
        pbest[better] = X[better]
        pfit[better] = fit[better]
        g = int(np.argmin(pfit))
        history.append(_history_entry(it, tracker))
    return _report("pso", p, starts, pbest, tracker, history, cfg.max_iterations, t0)
