"""Weighted-l1 penalized convex solvers.

These are the inner problems of the reweighting loop: for a convex loss
``l(b)`` and nonnegative per-coordinate weights ``w`` they minimize
``l(b) + sum_j w_j |b_j]``.  Also here: support-restricted (unpenalized)
fits, the constrained-l1 precision initializer, and an independent KKT
checker used by the tests.

Solver choices per family:

* linear: cyclic coordinate descent on the Gram form with an active-set
  outer loop;
* logistic: proximal Newton (weighted-l1 quadratic model solved by the same
  coordinate descent kernel, backtracking on the true objective);
* quantile: linearized ADMM with closed-form proximal maps, then an
  active-set polish that re-solves the small support subproblem exactly and
  certifies the subgradient KKT conditions;
* precision: block coordinate descent over columns in the graphical-lasso
  style, generalized to entrywise weights, diagonal unpenalized.
"""

import weakref
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .backend import get_kernels
from .errors import (ConvergenceError, SingularityError, UnsupportedOperationError,
                     ValidationError)
from .model import (LINEAR, LOGISTIC, PRECISION, QUANTILE, Estimate, Problem,
                    logistic_mu, loss_gradient, loss_value, subgradient_interval)


@dataclass(frozen=True)
class SolverOptions:
    """Tolerances and iteration budgets shared by all solvers.

    ``tol`` is the KKT residual target.  ``admm_rho`` is the initial ADMM
    penalty (adapted by residual balancing); ``newton_inner_tol`` bounds the
    proximal-Newton subproblem residual (default ``0.1 * tol``).
    """

    tol: float = 1e-8
    max_iter: int = 10000
    admm_rho: float = 1.0
    newton_inner_tol: float = None

    def __post_init__(self):
        if not (self.tol > 0):
            raise ValidationError("tol must be positive")
        if self.max_iter < 1:
            raise ValidationError("max_iter must be >= 1")
        if self.newton_inner_tol is None:
            object.__setattr__(self, "newton_inner_tol", 0.1 * self.tol)


DEFAULT_OPTIONS = SolverOptions()

# per-problem cache of derived quantities (Gram matrix, step bounds)
_problem_cache = weakref.WeakKeyDictionary()


def _cached(problem, key, builder):
    store = _problem_cache.setdefault(problem, {})
    if key not in store:
        store[key] = builder()
    return store[key]


def _gram(problem):
    def build():
        x = problem.design
        g = x.T @ x / problem.n
        return np.ascontiguousarray((g + g.T) / 2.0)
    return _cached(problem, "gram", build)


def _gram_lin(problem):
    return _cached(problem, "lin",
                   lambda: problem.design.T @ problem.response / problem.n)


def validate_weights(problem, weights):
    """Check and return the weight vector (or symmetric matrix) as float64."""
    w = np.ascontiguousarray(np.asarray(weights, dtype=float))
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValidationError("weights must be finite and nonnegative")
    if problem.kind == PRECISION:
        q = problem.p
        if w.shape != (q, q):
            raise ValidationError(f"precision weights must be {q}x{q}")
        if np.max(np.abs(w - w.T)) > 0:
            raise ValidationError("precision weight matrix must be symmetric")
        if np.any(np.diag(w) != 0):
            raise ValidationError("diagonal is unpenalized; weight diagonal must be 0")
    elif w.shape != (problem.p,):
        raise ValidationError(f"expected {problem.p} weights, got shape {w.shape}")
    return w


def weighted_l1_objective(problem, weights, est):
    """Loss plus the weighted l1 term (matrix weights count ordered pairs)."""
    return loss_value(problem, est) + float(np.sum(weights * np.abs(est.values)))


def kkt_residual(problem, weights, est):
    """Independent stationarity residual of the weighted-l1 problem.

    Computed from the model-level gradient / subgradient interval, not from
    any solver state.  Zero coordinates contribute ``(|g_j| - w_j)_+``;
    active ones ``|g_j + w_j sign(b_j)|``; quantile problems use the
    attainable subgradient range.
    """
    w = validate_weights(problem, weights)
    v = est.values
    if problem.kind == QUANTILE:
        lo, hi = subgradient_interval(problem, est)
        s = np.sign(v)
        zero = v == 0
        res_zero = np.maximum(lo - w, 0.0) + np.maximum(-(hi + w), 0.0)
        res_act = np.maximum(lo + w * s, 0.0) + np.maximum(-(hi + w * s), 0.0)
        return float(np.max(np.where(zero, res_zero, res_act), initial=0.0))
    g = loss_gradient(problem, est)
    zero = v == 0
    res = np.where(zero, np.maximum(np.abs(g) - w, 0.0),
                   np.abs(g + w * np.sign(v)))
    return float(np.max(res, initial=0.0))


# ---------------------------------------------------------------------------
# linear
# ---------------------------------------------------------------------------

def solve_weighted_l1_linear(problem, weights, opts=DEFAULT_OPTIONS, start=None):
    if problem.kind != LINEAR:
        raise ValidationError("solve_weighted_l1_linear needs a linear problem")
    w = validate_weights(problem, weights)
    beta = np.zeros(problem.p) if start is None else np.array(start.values, dtype=float)
    kern = get_kernels()
    _, res, ok = kern.cd_wl1_gram(_gram(problem), _gram_lin(problem), w, beta,
                                  opts.tol, opts.max_iter)
    if not ok:
        raise ConvergenceError("weighted-l1 linear solver exhausted max_iter",
                               iterate=Estimate(beta), residual=res,
                               iterations=opts.max_iter)
    return Estimate(beta)


# ---------------------------------------------------------------------------
# logistic
# ---------------------------------------------------------------------------

_NEWTON_MAX_OUTER = 200


def solve_weighted_l1_logistic(problem, weights, opts=DEFAULT_OPTIONS, start=None):
    if problem.kind != LOGISTIC:
        raise ValidationError("solve_weighted_l1_logistic needs a logistic problem")
    w = validate_weights(problem, weights)
    x, y, n = problem.design, problem.response, problem.n
    beta = np.zeros(problem.p) if start is None else np.array(start.values, dtype=float)
    kern = get_kernels()
    res = np.inf
    for _ in range(_NEWTON_MAX_OUTER):
        est = Estimate(beta)
        res = kkt_residual(problem, w, est)
        if res <= opts.tol:
            return est
        if np.max(np.abs(beta)) > 1e8:
            break  # runaway coefficients: (near-)separable data
        t = x @ beta
        mu = logistic_mu(t)
        sig = mu * (1.0 - mu)
        hess = (x * sig[:, None]).T @ x / n
        hess = np.ascontiguousarray((hess + hess.T) / 2.0)
        ridge = 1e-12 * max(1.0, np.max(np.diag(hess)))
        hess[np.diag_indices_from(hess)] += ridge
        grad = x.T @ (mu - y) / n
        lin = hess @ beta - grad
        z = beta.copy()
        kern.cd_wl1_gram(hess, lin, w, z, opts.newton_inner_tol, opts.max_iter)
        direction = z - beta
        decrease = grad @ direction + np.sum(w * np.abs(z)) - np.sum(w * np.abs(beta))
        obj0 = weighted_l1_objective(problem, w, est)
        step = 1.0
        accepted = False
        while step >= 1e-14:
            cand = beta + step * direction
            if weighted_l1_objective(problem, w, Estimate(cand)) <= obj0 + 0.25 * step * decrease:
                accepted = True
                break
            step /= 2.0
        if not accepted or decrease > -1e-16 * max(1.0, abs(obj0)):
            break
        beta = cand
    raise ConvergenceError("weighted-l1 logistic solver failed to reach tol "
                           "(possibly separable data)",
                           iterate=Estimate(beta), residual=res,
                           iterations=_NEWTON_MAX_OUTER)


# ---------------------------------------------------------------------------
# quantile
# ---------------------------------------------------------------------------

def _lp_weighted_quantile(x, y, tau, w):
    """Exact minimizer of (1/n) sum rho_tau(y - x b) + sum w|b| via LP.

    Dual simplex returns a basic (vertex) solution, so residuals of
    interpolated observations and inactive coefficients are exact zeros.
    """
    n, k = x.shape
    cost = np.concatenate([w, w, np.full(n, tau / n), np.full(n, (1.0 - tau) / n)])
    a_eq = np.hstack([x, -x, np.eye(n), -np.eye(n)])
    res = linprog(cost, A_eq=a_eq, b_eq=y, bounds=(0, None), method="highs-ds")
    if not res.success:
        raise ConvergenceError(f"quantile LP subproblem failed: {res.message}")
    return res.x[:k] - res.x[k:2 * k]


def _quantile_eta(problem):
    def build():
        gram = _gram(problem) * problem.n  # X'X
        return 1.01 * float(np.linalg.eigvalsh(gram)[-1]) + 1e-12
    return _cached(problem, "eta", build)


def _quantile_violations(problem, w, beta, tol):
    lo, hi = subgradient_interval(problem, Estimate(beta))
    s = np.sign(beta)
    zero = beta == 0
    res_zero = np.maximum(lo - w, 0.0) + np.maximum(-(hi + w), 0.0)
    res_act = np.maximum(lo + w * s, 0.0) + np.maximum(-(hi + w * s), 0.0)
    res = np.where(zero, res_zero, res_act)
    return res, float(np.max(res, initial=0.0))


def solve_weighted_l1_quantile(problem, weights, opts=DEFAULT_OPTIONS, start=None):
    if problem.kind != QUANTILE:
        raise ValidationError("solve_weighted_l1_quantile needs a quantile problem")
    w = validate_weights(problem, weights)
    x, y, tau = problem.design, problem.response, problem.tau
    n, p = x.shape
    beta = np.zeros(p) if start is None else np.array(start.values, dtype=float)
    kern = get_kernels()
    xt = np.ascontiguousarray(x.T)
    _, pri, dua, _, _ = kern.admm_quantile(
        x, xt, y, w, tau, _quantile_eta(problem), beta,
        1e-10, 1e-7, opts.max_iter)
    # exact polish: re-solve on the identified support, grow it until the
    # subgradient KKT conditions certify global optimality
    support = set(np.flatnonzero(
        np.abs(beta) > 1e-7 * max(1.0, np.max(np.abs(beta), initial=0.0))).tolist())
    for _ in range(60):
        full = np.zeros(p)
        if support:
            cols = np.array(sorted(support))
            full[cols] = _lp_weighted_quantile(x[:, cols], y, tau, w[cols])
        res, worst = _quantile_violations(problem, w, full, opts.tol)
        if worst <= opts.tol:
            return Estimate(full)
        grew = False
        for j in np.flatnonzero(res > opts.tol):
            if j not in support:
                support.add(int(j))
                grew = True
        if not grew:
            break
    raise ConvergenceError(
        "weighted-l1 quantile solver could not certify optimality",
        iterate=Estimate(full), residual=(worst, pri, dua), iterations=opts.max_iter)


# ---------------------------------------------------------------------------
# precision (weighted graphical lasso)
# ---------------------------------------------------------------------------

def _recover_theta(s, v, alphas):
    q = s.shape[0]
    theta = np.zeros((q, q))
    for j in range(q):
        idx = np.concatenate([np.arange(j), np.arange(j + 1, q)])
        a = alphas[idx, j]
        schur = s[j, j] - v[idx, j] @ a
        theta[j, j] = 1.0 / schur
        theta[idx, j] = -a * theta[j, j]
    iu, ju = np.triu_indices(q, k=1)
    upper, lower = theta[iu, ju], theta[ju, iu]
    both_zero = (upper == 0.0) & (lower == 0.0)
    merged = np.where(both_zero, 0.0, (upper + lower) / 2.0)
    out = np.diag(np.diag(theta))
    out[iu, ju] = merged
    out[ju, iu] = merged
    return out


def _precision_kkt(s, w, theta):
    try:
        inv = np.linalg.inv(np.linalg.cholesky(theta))
    except np.linalg.LinAlgError:
        return np.inf
    p_inv = inv.T @ inv
    grad = s - (p_inv + p_inv.T) / 2.0
    zero = theta == 0.0
    res = np.where(zero, np.maximum(np.abs(grad) - w, 0.0),
                   np.abs(grad + w * np.sign(theta)))
    return float(np.max(res))


def solve_weighted_l1_precision(sample_cov, weight_matrix, opts=DEFAULT_OPTIONS,
                                start=None):
    """Weighted graphical lasso: block coordinate descent over columns.

    ``weight_matrix`` applies entrywise to off-diagonal entries (ordered
    pairs); the diagonal is never penalized.  Returns a symmetric positive
    definite Estimate whose KKT residual is at most ``opts.tol``.
    """
    s = np.asarray(sample_cov, dtype=float)
    q = s.shape[0]
    prob = Problem.precision(s)
    w = validate_weights(prob, weight_matrix)
    kern = get_kernels()
    v = s.copy()
    alphas = np.zeros((q, q))
    if start is not None:
        sv = start.values if isinstance(start, Estimate) else np.asarray(start, float)
        d = np.diag(sv)
        if np.all(d > 0):
            alphas = -sv / d[None, :]
            np.fill_diagonal(alphas, 0.0)
    idx_all = [np.concatenate([np.arange(j), np.arange(j + 1, q)]) for j in range(q)]
    theta_prev = None
    kkt = np.inf
    for sweep in range(opts.max_iter):
        for j in range(q):
            idx = idx_all[j]
            v11 = np.ascontiguousarray(v[np.ix_(idx, idx)])
            a = alphas[idx, j].copy()
            kern.cd_wl1_gram(v11, s[idx, j].copy(), w[idx, j].copy(), a,
                             opts.newton_inner_tol, opts.max_iter)
            a_old = alphas[idx, j]
            step = 1.0
            while True:
                mix = step * a + (1.0 - step) * a_old
                v12 = v11 @ mix
                if s[j, j] - mix @ v12 > 1e-12 * s[j, j]:
                    break
                step /= 2.0
                if step < 1e-10:
                    raise ConvergenceError(
                        "graphical block update lost positive definiteness",
                        iterate=None, residual=None, iterations=sweep)
            v[idx, j] = v12
            v[j, idx] = v12
            alphas[idx, j] = mix
        theta = _recover_theta(s, v, alphas)
        kkt = _precision_kkt(s, w, theta)
        if theta_prev is not None:
            change = np.max(np.abs(theta - theta_prev))
            if change <= opts.tol * (1.0 + np.max(np.abs(theta))) and kkt <= opts.tol:
                return Estimate(theta)
        theta_prev = theta
    raise ConvergenceError("weighted graphical lasso exhausted its sweep budget",
                           iterate=Estimate(theta_prev), residual=kkt,
                           iterations=opts.max_iter)


# ---------------------------------------------------------------------------
# CLIME initializer
# ---------------------------------------------------------------------------

def clime_columns(sample_cov, lambda_clime, opts=DEFAULT_OPTIONS):
    """Raw per-column solutions of the constrained-l1 problem.

    Column ``j`` exactly solves ``min |t|_1`` subject to
    ``|S t - e_j|_max <= lambda_clime`` (a small linear program); feasibility
    is certified before returning.
    """
    if lambda_clime <= 0:
        raise ValidationError("lambda_clime must be positive")
    s = np.asarray(sample_cov, dtype=float)
    q = s.shape[0]
    cols = np.zeros((q, q))
    a_ub = np.vstack([np.hstack([s, -s]), np.hstack([-s, s])])
    cost = np.ones(2 * q)
    feas_tol = max(opts.tol, 1e-9)
    for j in range(q):
        e = np.zeros(q)
        e[j] = 1.0
        b_ub = np.concatenate([lambda_clime + e, lambda_clime - e])
        res = linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=(0, None), method="highs-ds")
        if not res.success:
            raise ConvergenceError(f"CLIME column {j} failed: {res.message}")
        col = res.x[:q] - res.x[q:]
        slack = np.max(np.abs(s @ col - e))
        if slack > lambda_clime + feas_tol:
            raise ConvergenceError(f"CLIME column {j} infeasible by {slack - lambda_clime:g}")
        cols[:, j] = col
    return cols


def solve_clime(sample_cov, lambda_clime, opts=DEFAULT_OPTIONS):
    """Constrained l1 minimization initializer, symmetrized by keeping, per
    unordered pair, the entry of smaller magnitude.

    The output is symmetric but not necessarily positive definite (it is an
    initializer, not an estimator of record).
    """
    cols = clime_columns(sample_cov, lambda_clime, opts)
    q = cols.shape[0]
    iu, ju = np.triu_indices(q, k=1)
    upper, lower = cols[iu, ju], cols[ju, iu]
    keep = np.where(np.abs(upper) <= np.abs(lower), upper, lower)
    out = np.diag(np.diag(cols))
    out[iu, ju] = keep
    out[ju, iu] = keep
    return Estimate(out)


# ---------------------------------------------------------------------------
# restricted (support-constrained, unpenalized) fits
# ---------------------------------------------------------------------------

def _vector_support(problem, support):
    idx = np.array(sorted(int(j) for j in support), dtype=int)
    if idx.size == 0:
        raise ValidationError("support must be nonempty")
    if idx[0] < 0 or idx[-1] >= problem.p or np.any(np.diff(idx) == 0):
        raise ValidationError("support indices out of range or duplicated")
    return idx


def solve_restricted(problem, support, opts=DEFAULT_OPTIONS):
    """Minimize the bare loss over estimates vanishing off ``support``.

    ``support`` is an index set for vector problems, or a set of off-diagonal
    (j, k) pairs for precision problems (diagonal always free).
    """
    if problem.kind == PRECISION:
        return _restricted_precision(problem, support, opts)
    idx = _vector_support(problem, support)
    x = problem.design[:, idx]
    y = problem.response
    beta = np.zeros(problem.p)
    if problem.kind == LINEAR:
        if np.linalg.matrix_rank(x) < idx.size:
            raise SingularityError("restricted design is rank deficient")
        beta[idx], *_ = np.linalg.lstsq(x, y, rcond=None)
    elif problem.kind == QUANTILE:
        beta[idx] = _lp_weighted_quantile(x, y, problem.tau, np.zeros(idx.size))
    else:
        beta[idx] = _restricted_logistic(x, y, opts)
    return Estimate(beta)


def _restricted_logistic(x, y, opts):
    n, k = x.shape
    if np.linalg.matrix_rank(x) < k:
        raise SingularityError("restricted design is rank deficient")
    b = np.zeros(k)
    for _ in range(200):
        t = x @ b
        mu = logistic_mu(t)
        g = x.T @ (mu - y) / n
        if np.max(np.abs(g)) <= opts.tol:
            return b
        if np.max(np.abs(b)) > 1e4:
            break
        sig = np.maximum(mu * (1.0 - mu), 1e-12)
        h = (x * sig[:, None]).T @ x / n
        try:
            step = np.linalg.solve(h, g)
        except np.linalg.LinAlgError:
            raise SingularityError("restricted logistic Hessian is singular")
        f0 = float(np.sum(np.logaddexp(0.0, t) - y * t)) / n
        tstep = 1.0
        while tstep >= 1e-14:
            cand = b - tstep * step
            tc = x @ cand
            f = float(np.sum(np.logaddexp(0.0, tc) - y * tc)) / n
            if f <= f0 - 0.25 * tstep * float(g @ step):
                b = cand
                break
            tstep /= 2.0
        else:
            break
    raise ConvergenceError("restricted logistic MLE did not converge "
                           "(data may be separable)", iterate=b,
                           residual=float(np.max(np.abs(g))))


def _pair_support(q, support):
    pairs = []
    seen = set()
    for item in support:
        j, k = int(item[0]), int(item[1])
        if j == k or not (0 <= j < q and 0 <= k < q):
            raise ValidationError(f"invalid off-diagonal pair {item!r}")
        key = (min(j, k), max(j, k))
        if key not in seen:
            seen.add(key)
            pairs.append(key)
    if not pairs:
        raise ValidationError("support must be nonempty")
    return sorted(pairs)


def _restricted_precision(problem, support, opts):
    """Constrained Newton for the covariance-selection MLE: free entries are
    the diagonal plus ``support`` pairs; at the optimum the inverse matches
    the sample covariance exactly on the free pattern."""
    s = problem.sample_cov
    q = s.shape[0]
    pairs = _pair_support(q, support)
    rows = np.array([j for j in range(q)] + [a for a, _ in pairs])
    cols = np.array([j for j in range(q)] + [b for _, b in pairs])
    kappa = np.where(rows == cols, 1.0, 2.0)
    theta = np.diag(1.0 / np.diag(s))
    fval = -_logdet(theta) + float(np.sum(s * theta))
    for it in range(100):
        p_inv = np.linalg.inv(theta)
        p_inv = (p_inv + p_inv.T) / 2.0
        resid = (s - p_inv)[rows, cols]
        if np.max(np.abs(resid)) <= opts.tol:
            return Estimate(theta)
        g = kappa * resid
        h = 0.5 * np.outer(kappa, kappa) * (
            p_inv[np.ix_(rows, rows)] * p_inv[np.ix_(cols, cols)]
            + p_inv[np.ix_(rows, cols)] * p_inv[np.ix_(cols, rows)])
        try:
            d = np.linalg.solve(h, -g)
        except np.linalg.LinAlgError:
            raise SingularityError("restricted precision Hessian is singular")
        delta = np.zeros((q, q))
        delta[rows, cols] = d
        delta[cols, rows] = d
        slope = float(g @ d)
        step = 1.0
        while step >= 1e-14:
            cand = theta + step * delta
            ld = _logdet_or_none(cand)
            if ld is not None:
                f = -ld + float(np.sum(s * cand))
                if f <= fval + 0.25 * step * slope:
                    theta, fval = cand, f
                    break
            step /= 2.0
        else:
            raise ConvergenceError("restricted precision fit stalled",
                                   iterate=Estimate(theta),
                                   residual=float(np.max(np.abs(resid))),
                                   iterations=it)
    raise ConvergenceError("restricted precision fit did not converge",
                           iterate=Estimate(theta),
                           residual=float(np.max(np.abs(resid))), iterations=100)


def _logdet(theta):
    return 2.0 * float(np.sum(np.log(np.diag(np.linalg.cholesky(theta)))))


def _logdet_or_none(theta):
    try:
        return _logdet(theta)
    except np.linalg.LinAlgError:
        return None


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def solve_weighted_l1(problem, weights, opts=DEFAULT_OPTIONS, start=None):
    """Route to the solver for this problem kind."""
    if problem.kind == LINEAR:
        return solve_weighted_l1_linear(problem, weights, opts, start)
    if problem.kind == LOGISTIC:
        return solve_weighted_l1_logistic(problem, weights, opts, start)
    if problem.kind == QUANTILE:
        return solve_weighted_l1_quantile(problem, weights, opts, start)
    if problem.kind == PRECISION:
        return solve_weighted_l1_precision(problem.sample_cov, weights, opts, start)
    raise UnsupportedOperationError(f"no solver for kind {problem.kind!r}")
