import numpy as np
import pytest

from fcpen.errors import (DomainError, InsufficientDataError,
                          UnsupportedOperationError, ValidationError)
from fcpen.model import (Estimate, Problem, check_loss, load_problem, loss_gradient,
                         loss_value, logistic_psi, sample_covariance, save_problem,
                         subgradient_interval, zero_estimate)


def fd_gradient(fun, x, h=1e-5):
    # central finite differences, the independent oracle for smooth losses
    g = np.zeros_like(x, dtype=float)
    for i in range(x.size):
        e = np.zeros_like(g)
        e.flat[i] = h
        g.flat[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def random_problem(kind, n, p, rng, tau=0.5):
    x = rng.standard_normal((n, p))
    if kind == "linear":
        return Problem.linear(x, x @ rng.standard_normal(p) + rng.standard_normal(n))
    if kind == "logistic":
        return Problem.logistic(x, (rng.random(n) < 0.5).astype(float))
    if kind == "quantile":
        return Problem.quantile(x, x @ rng.standard_normal(p) + rng.standard_normal(n), tau)
    q = p
    z = rng.standard_normal((3 * q, q))
    return Problem.precision(sample_covariance(z))


class TestValidation:
    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            Problem.linear(np.zeros((3, 2)), np.zeros(4))

    def test_nan_rejected(self):
        with pytest.raises(ValidationError):
            Problem.linear(np.array([[np.nan]]), np.zeros(1))

    def test_logistic_response_01(self):
        with pytest.raises(ValidationError):
            Problem.logistic(np.zeros((2, 1)), np.array([0.0, 2.0]))

    def test_quantile_tau_range(self):
        with pytest.raises(ValidationError):
            Problem.quantile(np.zeros((2, 1)), np.zeros(2), 1.5)

    def test_precision_symmetry(self):
        with pytest.raises(ValidationError):
            Problem.precision(np.array([[1.0, 0.1], [0.2, 1.0]]))

    def test_precision_diagonal(self):
        with pytest.raises(ValidationError):
            Problem.precision(np.array([[0.0, 0.0], [0.0, 1.0]]))

    def test_estimate_support_recomputed(self):
        est = Estimate(np.array([1.0, 0.0, -2.0]))
        assert est.support == (0, 2)
        m = Estimate(np.array([[2.0, 0.5, 0.0], [0.5, 2.0, 0.0], [0.0, 0.0, 2.0]]))
        assert m.support == ((0, 1),)


class TestLossValues:
    def test_linear_interpolant_zero(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((6, 3))
        b = rng.standard_normal(3)
        prob = Problem.linear(x, x @ b)
        assert loss_value(prob, Estimate(b)) == pytest.approx(0.0, abs=1e-14)

    def test_quantile_hand_value(self):
        # residuals (-1, 2) at tau = 0.5: (0.5*1 + 0.5*2)/2 = 0.75
        x = np.zeros((2, 1))
        y = np.array([-1.0, 2.0])
        prob = Problem.quantile(x, y, 0.5)
        assert loss_value(prob, Estimate(np.zeros(1))) == pytest.approx(0.75)

    def test_precision_identity(self):
        q = 4
        prob = Problem.precision(np.eye(q))
        assert loss_value(prob, Estimate(np.eye(q))) == pytest.approx(q)

    def test_precision_requires_pd(self):
        prob = Problem.precision(np.eye(2))
        with pytest.raises(DomainError):
            loss_value(prob, Estimate(np.diag([1.0, -1.0])))

    def test_logistic_psi_overflow_safe(self):
        t = np.array([-1e6, -50.0, 0.0, 50.0, 1e6])
        v = logistic_psi(t)
        assert np.all(np.isfinite(v))
        assert v[0] == 0.0 and v[-1] == pytest.approx(1e6)
        assert v[2] == pytest.approx(np.log(2))


class TestGradients:
    def test_linear_zero(self):
        prob = Problem.linear(np.zeros((3, 2)), np.zeros(3))
        assert np.all(loss_gradient(prob, zero_estimate(prob)) == 0)

    def test_precision_stationary_at_inverse(self):
        rng = np.random.default_rng(1)
        prob = random_problem("precision", 0, 5, rng)
        theta = np.linalg.inv(prob.sample_cov)
        g = loss_gradient(prob, Estimate((theta + theta.T) / 2))
        assert np.max(np.abs(g)) < 1e-10

    @pytest.mark.parametrize("kind", ["linear", "logistic"])
    def test_fd_agreement_vector(self, kind):
        rng = np.random.default_rng(2)
        for _ in range(20):
            prob = random_problem(kind, 12, 4, rng)
            b = 0.5 * rng.standard_normal(4)
            g = loss_gradient(prob, Estimate(b))
            fd = fd_gradient(lambda v: loss_value(prob, Estimate(v)), b)
            assert np.max(np.abs(g - fd)) <= 1e-6 * (1.0 + np.max(np.abs(fd)))

    def test_fd_agreement_precision(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            prob = random_problem("precision", 0, 4, rng)
            a = rng.standard_normal((4, 4)) * 0.1
            theta = np.eye(4) + (a + a.T) / 2
            g = loss_gradient(prob, Estimate(theta))
            fd = np.zeros((4, 4))
            h = 1e-5
            for i in range(4):
                for j in range(4):
                    e = np.zeros((4, 4))
                    e[i, j] = e[j, i] = h
                    fp = loss_value(prob, Estimate(theta + e))
                    fm = loss_value(prob, Estimate(theta - e))
                    d = (fp - fm) / (2 * h)
                    fd[i, j] = d / (1.0 if i == j else 2.0)
            assert np.max(np.abs(g - fd)) <= 1e-5

    def test_quantile_gradient_unsupported(self):
        rng = np.random.default_rng(4)
        prob = random_problem("quantile", 5, 2, rng)
        with pytest.raises(UnsupportedOperationError):
            loss_gradient(prob, zero_estimate(prob))


class TestConvexity:
    @pytest.mark.parametrize("kind", ["linear", "logistic", "quantile", "precision"])
    def test_segment_inequality(self, kind):
        rng = np.random.default_rng(5)
        for _ in range(10):
            prob = random_problem(kind, 10, 3, rng)
            if kind == "precision":
                def draw():
                    a = 0.2 * rng.standard_normal((3, 3))
                    return np.eye(3) + (a + a.T) / 2
                b1, b2 = draw(), draw()
            else:
                b1, b2 = rng.standard_normal(3), rng.standard_normal(3)
            t = rng.uniform(0.05, 0.95)
            mid = loss_value(prob, Estimate(t * b1 + (1 - t) * b2))
            lhs = t * loss_value(prob, Estimate(b1)) + (1 - t) * loss_value(prob, Estimate(b2))
            assert mid <= lhs + 1e-10


class TestSubgradientInterval:
    def test_point_interval_when_no_zero_residual(self):
        rng = np.random.default_rng(6)
        prob = random_problem("quantile", 8, 3, rng)
        lo, hi = subgradient_interval(prob, Estimate(rng.standard_normal(3)))
        assert np.all(lo == hi)

    def test_single_zero_residual_hand_case(self):
        prob = Problem.quantile(np.array([[1.0]]), np.array([0.0]), 0.5)
        lo, hi = subgradient_interval(prob, Estimate(np.zeros(1)))
        assert lo[0] == pytest.approx(-0.5)
        assert hi[0] == pytest.approx(0.5)

    def test_width_matches_zero_rows(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((6, 2))
        b = rng.standard_normal(2)
        y = x @ b
        y[3:] += rng.standard_normal(3)  # rows 0..2 have exactly zero residual
        prob = Problem.quantile(x, y, 0.3)
        lo, hi = subgradient_interval(prob, Estimate(b))
        assert np.allclose(hi - lo, np.abs(x[:3]).sum(axis=0) / 6.0)

    def test_contains_smoothed_gradient_limit(self):
        # huberized check loss: rho_h -> rho as h -> 0; its gradient at a
        # zero residual must land inside the reported interval
        rng = np.random.default_rng(8)
        x = rng.standard_normal((5, 2))
        b = rng.standard_normal(2)
        y = x @ b
        y[2:] += rng.standard_normal(3)
        tau = 0.7
        prob = Problem.quantile(x, y, tau)
        lo, hi = subgradient_interval(prob, Estimate(b))

        def smoothed_grad(h):
            r = y - x @ b
            core = np.where(r > h, tau, np.where(r < -h, tau - 1.0,
                                                 tau - 0.5 - r / (2 * h)))
            return -(x * core[:, None]).sum(axis=0) / len(y)

        for h in [1e-2, 1e-4, 1e-6]:
            g = smoothed_grad(h)
            assert np.all(g >= lo - 1e-9) and np.all(g <= hi + 1e-9)

    def test_wrong_kind_rejected(self):
        prob = Problem.linear(np.zeros((2, 1)), np.zeros(2))
        with pytest.raises(UnsupportedOperationError):
            subgradient_interval(prob, zero_estimate(prob))


class TestSampleCovariance:
    def test_constant_rows_zero(self):
        assert np.all(sample_covariance(np.ones((5, 3))) == 0)

    def test_two_point_variance(self):
        cov = sample_covariance(np.array([[0.0], [2.0]]))
        assert cov[0, 0] == pytest.approx(1.0)  # divisor-n convention

    def test_symmetry_exact(self):
        rng = np.random.default_rng(9)
        cov = sample_covariance(rng.standard_normal((20, 6)))
        assert np.array_equal(cov, cov.T)

    def test_insufficient_rows(self):
        with pytest.raises(InsufficientDataError):
            sample_covariance(np.ones((1, 3)))


class TestCsvRoundtrip:
    @pytest.mark.parametrize("kind", ["linear", "logistic", "quantile", "precision"])
    def test_roundtrip(self, kind, tmp_path):
        rng = np.random.default_rng(10)
        prob = random_problem(kind, 7, 3, rng, tau=0.25)
        path = tmp_path / "data.csv"
        save_problem(prob, path)
        back = load_problem(path)
        assert back.kind == prob.kind
        if kind == "precision":
            assert np.array_equal(back.sample_cov, prob.sample_cov)
        else:
            assert np.array_equal(back.design, prob.design)
            assert np.array_equal(back.response, prob.response)
            if kind == "quantile":
                assert back.tau == prob.tau

    def test_malformed_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("# kind=linear n=2 p=2\n1.0,2.0,3.0\n1.0,oops,3.0\n")
        with pytest.raises(ValidationError, match=r"bad.csv:3:2"):
            load_problem(path)

    def test_missing_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1.0,2.0\n")
        with pytest.raises(ValidationError, match="header"):
            load_problem(path)
