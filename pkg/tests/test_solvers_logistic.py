import numpy as np
import pytest

from fcpen.errors import ConvergenceError
from fcpen.model import Estimate, Problem
from fcpen.solvers import (SolverOptions, kkt_residual, solve_weighted_l1_logistic,
                           weighted_l1_objective)

OPTS = SolverOptions()


def random_instance(rng, n, p, strength=1.0):
    x = rng.standard_normal((n, p))
    beta = np.zeros(p)
    beta[: max(1, p // 3)] = strength * rng.standard_normal(max(1, p // 3))
    prob = 1.0 / (1.0 + np.exp(-(x @ beta)))
    y = (rng.random(n) < prob).astype(float)
    return Problem.logistic(x, y)


def grid_minimum(objective, lo=-5.0, hi=5.0):
    # coarse-to-fine 2-d grid refinement; the objective is convex, so
    # narrowing around the incumbent cell is safe
    center = np.array([(lo + hi) / 2.0, (lo + hi) / 2.0])
    half = (hi - lo) / 2.0
    best_val, best_pt = np.inf, center
    for _ in range(4):
        g = np.linspace(-half, half, 41)
        for b1 in center[0] + g:
            for b2 in center[1] + g:
                v = objective(np.array([b1, b2]))
                if v < best_val:
                    best_val, best_pt = v, np.array([b1, b2])
        center = best_pt
        half = 3.0 * (g[1] - g[0])
    return best_val, best_pt


class TestLogisticSolver:
    def test_bounded_gradient_zero_solution(self):
        rng = np.random.default_rng(0)
        prob = random_instance(rng, 30, 5)
        w = np.full(5, np.max(np.abs(prob.design).sum(axis=0)) / prob.n)
        est = solve_weighted_l1_logistic(prob, w, OPTS)
        assert np.all(est.values == 0.0)

    def test_matches_grid_search(self):
        rng = np.random.default_rng(1)
        prob = random_instance(rng, 20, 2, strength=1.5)
        w = np.array([0.05, 0.12])
        est = solve_weighted_l1_logistic(prob, w, OPTS)
        obj = lambda b: weighted_l1_objective(prob, w, Estimate(b))
        grid_val, _ = grid_minimum(obj)
        solver_val = obj(est.values)
        assert solver_val <= grid_val + 1e-8
        assert abs(solver_val - grid_val) <= 1e-5

    def test_kkt_on_random_instances(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            n = int(rng.integers(25, 80))
            p = int(rng.integers(2, 25))
            prob = random_instance(rng, n, p)
            w = rng.uniform(0.02, 0.3, p)
            est = solve_weighted_l1_logistic(prob, w, OPTS)
            assert kkt_residual(prob, w, est) <= 10 * OPTS.tol

    def test_objective_not_above_zero_vector(self):
        rng = np.random.default_rng(3)
        prob = random_instance(rng, 40, 6)
        w = np.full(6, 0.05)
        est = solve_weighted_l1_logistic(prob, w, OPTS)
        zero = Estimate(np.zeros(6))
        assert (weighted_l1_objective(prob, w, est)
                <= weighted_l1_objective(prob, w, zero) + 1e-12)

    def test_separable_data_reports_convergence_error(self):
        # perfectly separable, one unpenalized coordinate: the MLE runs away
        x = np.linspace(-2, 2, 20).reshape(-1, 1)
        y = (x[:, 0] > 0).astype(float)
        prob = Problem.logistic(x, y)
        with pytest.raises(ConvergenceError):
            solve_weighted_l1_logistic(prob, np.zeros(1), OPTS)
