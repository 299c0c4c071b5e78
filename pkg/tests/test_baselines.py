import numpy as np
import pytest

from blockalt.baselines import MetaConfig, ga_solve, penalty_fitness, pso_solve
from blockalt.problem import Problem, check_feasible
from blockalt.sampling import SamplerConfig, sample

from conftest import EQ12_OPT_COST, SEED

SPHERE = Problem.from_text([(-5, 5), (-5, 5)], "x1^2 + x2^2")


def test_ga_large_population_near_optimum(eq12):
    starts = sample(eq12, SamplerConfig(512, seed=SEED)).points
    rep = ga_solve(eq12, starts, MetaConfig(seed=SEED))
    assert rep.best_feasible
    assert abs(rep.best_cost - EQ12_OPT_COST) <= 1e-2


def test_pso_sixteen_near_optimum(eq12):
    starts = sample(eq12, SamplerConfig(16, seed=SEED)).points
    rep = pso_solve(eq12, starts, MetaConfig(seed=SEED))
    assert rep.best_feasible
    assert abs(rep.best_cost - EQ12_OPT_COST) <= 1e-3


def test_ga_stationary_without_variation(eq12):
    pt = (2.5, 2.5, 0.8)
    cfg = MetaConfig(mutation_rate=0.0, seed=1)
    rep = ga_solve(eq12, [pt] * 6, cfg)
    assert all(r.final == pt for r in rep.per_start)
    assert rep.best_point == pt


def test_ga_two_individuals(eq12):
    starts = sample(eq12, SamplerConfig(2, seed=SEED)).points
    rep = ga_solve(eq12, starts)
    assert len(rep.per_start) == 2


def test_pso_single_particle_stationary(eq12):
    pt = (2.5, 2.5, 0.8)
    rep = pso_solve(eq12, [pt])
    assert rep.best_point == pt
    assert rep.per_start[0].final == pt


def test_pso_sphere():
    starts = sample(SPHERE, SamplerConfig(8, seed=0)).points
    rep = pso_solve(SPHERE, starts)
    assert rep.best_cost < 1e-4


@pytest.mark.parametrize("solver", [ga_solve, pso_solve])
def test_best_is_feasible_and_deterministic(eq12, solver):
    starts = sample(eq12, SamplerConfig(16, seed=SEED)).points
    a = solver(eq12, starts, MetaConfig(seed=3))
    b = solver(eq12, starts, MetaConfig(seed=3))
    assert a.comparable() == b.comparable()
    assert check_feasible(eq12, a.best_point).feasible
    costs = [c for _, c in a.history if c is not None]
    assert all(y <= x for x, y in zip(costs, costs[1:]))


def test_penalty_equals_cost_when_feasible(eq12):
    starts = np.array(sample(eq12, SamplerConfig(10, seed=SEED)).points)
    fit, cost, viol = penalty_fitness(eq12, starts, 1e6)
    assert np.array_equal(fit, cost)
    assert np.all(viol == 0)


def test_penalty_quadratic_in_violation(eq12):
    X = np.array([[2.0, 3.5, 1.0]])  # x1 + x2 - 5 = 0.5
    fit, cost, viol = penalty_fitness(eq12, X, 10.0)
    assert viol[0] == 0.5
    assert fit[0] == pytest.approx(cost[0] + 10.0 * 0.25)


def test_undefined_fitness_is_infinite():
    p = Problem.from_text([(-1, 1)], "log(x1)")
    fit, _, viol = penalty_fitness(p, [[-0.5], [0.5]], 1e6)
    assert np.isinf(fit[0]) and np.isfinite(fit[1])
    assert np.isinf(viol[0])


def test_infeasible_only_outcome_is_flagged():
    p = Problem.from_text([(0, 1)], "x1", ["x1 >= 2"])
    rep = pso_solve(p, [(0.5,), (0.7,)], MetaConfig(max_iterations=5))
    assert not rep.best_feasible


def test_meta_config_validation():
    with pytest.raises(ValueError):
        MetaConfig(crossover_rate=1.5)
    with pytest.raises(ValueError):
        MetaConfig(penalty_weight=0)
