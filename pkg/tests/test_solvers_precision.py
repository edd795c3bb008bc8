import numpy as np
import pytest

from fcpen.model import Estimate, Problem, sample_covariance
from fcpen.solvers import (SolverOptions, kkt_residual, solve_weighted_l1_precision,
                           weighted_l1_objective)

OPTS = SolverOptions()


def random_cov(rng, q, n_factor=4):
    return sample_covariance(rng.standard_normal((n_factor * q, q)))


def offdiag_weights(q, lam):
    w = np.full((q, q), float(lam))
    np.fill_diagonal(w, 0.0)
    return w


def ista_reference(s, w, tol=1e-10, max_iter=200000):
    """Slow proximal-gradient reference solver (independent algorithm path)."""
    q = s.shape[0]
    theta = np.diag(1.0 / np.diag(s))

    def smooth(th):
        sign, ld = np.linalg.slogdet(th)
        return np.inf if sign <= 0 else -ld + float(np.sum(s * th))

    f = smooth(theta)
    t = 1.0
    for _ in range(max_iter):
        inv = np.linalg.inv(theta)
        grad = s - (inv + inv.T) / 2.0
        while True:
            z = theta - t * grad
            new = np.sign(z) * np.maximum(np.abs(z) - t * w, 0.0)
            new = (new + new.T) / 2.0
            d = new - theta
            f_new = smooth(new)
            bound = f + float(np.sum(grad * d)) + float(np.sum(d * d)) / (2.0 * t)
            if np.isfinite(f_new) and f_new <= bound + 1e-15:
                break
            t /= 2.0
        change = float(np.max(np.abs(new - theta)))
        theta, f = new, f_new
        t *= 1.1
        if change < tol:
            break
    return theta


class TestPrecisionSolver:
    def test_unweighted_gives_inverse(self):
        rng = np.random.default_rng(0)
        s = random_cov(rng, 5)
        est = solve_weighted_l1_precision(s, offdiag_weights(5, 0.0), OPTS)
        assert np.max(np.abs(est.values - np.linalg.inv(s))) < 1e-7

    def test_huge_weights_give_diagonal(self):
        rng = np.random.default_rng(1)
        s = random_cov(rng, 6)
        off = s.copy()
        np.fill_diagonal(off, 0.0)
        w = offdiag_weights(6, np.max(np.abs(off)) * 1.01)
        est = solve_weighted_l1_precision(s, w, OPTS)
        expected = np.diag(1.0 / np.diag(s))
        assert np.max(np.abs(est.values - expected)) < 1e-8
        assert est.support == ()

    def test_matches_proximal_gradient_reference(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            s = random_cov(rng, 3)
            w = offdiag_weights(3, 0.5 * np.max(np.abs(s - np.diag(np.diag(s)))))
            est = solve_weighted_l1_precision(s, w, OPTS)
            ref = ista_reference(s, w)
            assert np.max(np.abs(est.values - ref)) <= 1e-6

    def test_kkt_and_pd_on_random_instances(self):
        rng = np.random.default_rng(3)
        for _ in range(15):
            q = int(rng.integers(3, 12))
            s = random_cov(rng, q)
            lam = float(rng.uniform(0.05, 0.5)) * np.max(np.abs(s))
            w = offdiag_weights(q, lam)
            prob = Problem.precision(s)
            est = solve_weighted_l1_precision(s, w, OPTS)
            assert est.smallest_eigenvalue() > 0
            assert kkt_residual(prob, w, est) <= 10 * OPTS.tol

    def test_objective_not_above_diagonal_start(self):
        rng = np.random.default_rng(4)
        s = random_cov(rng, 5)
        w = offdiag_weights(5, 0.1)
        prob = Problem.precision(s)
        est = solve_weighted_l1_precision(s, w, OPTS)
        diag_est = Estimate(np.diag(1.0 / np.diag(s)))
        assert (weighted_l1_objective(prob, w, est)
                <= weighted_l1_objective(prob, w, diag_est) + 1e-10)

    def test_warm_start_same_solution(self):
        rng = np.random.default_rng(5)
        s = random_cov(rng, 6)
        w = offdiag_weights(6, 0.15)
        a = solve_weighted_l1_precision(s, w, OPTS)
        start = Estimate(np.diag(1.0 / np.diag(s)))
        b = solve_weighted_l1_precision(s, w, OPTS, start=start)
        assert np.max(np.abs(a.values - b.values)) < 1e-7
