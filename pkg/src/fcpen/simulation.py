"""Synthetic data generators, validation-error tuning and the replication
runner.

Five generators: AR(1)-correlated Gaussian designs with sparse linear,
logistic (random +-Unif(1,2) signal) and Cauchy-noise quantile responses, and
two sparse precision matrices (exponential-decay Markov covariance with a
tridiagonal inverse; a random ``U'U + I`` pattern).  Desk-scale dimension
defaults keep full runs in the minutes range; paper-scale sizes sit behind
``scale="full"``.

Replication ``r`` of an experiment reads its RNG stream from
``(master_seed, r)``, so runs are reproducible and the replications can be
executed in any order or on any number of workers.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConvergenceError, DomainError, ValidationError
from .lla import (CONVERGED, INIT_CLIME, INIT_DIAG_INVERSE, INIT_LASSO, INIT_ZERO,
                  K_STEP, LlaConfig, MODES, lla_run, make_initializer)
from .model import (LINEAR, LOGISTIC, PRECISION, QUANTILE, Estimate, Problem,
                    loss_value, logistic_mu, sample_covariance, subgradient_interval,
                    zero_estimate)
from .penalty import DEFAULT_A, FAMILIES, SCAD, PenaltySpec
from .solvers import DEFAULT_OPTIONS, solve_weighted_l1

# magnitude below which a fitted coefficient counts as zero in metrics
NONZERO_TOL = 1e-8

MODELS = ("m1", "m2", "m3", "m4", "m5")

_DESK_DIMS = {"m1": (100, 200), "m2": (200, 200), "m3": (100, 200),
              "m4": (100, 40), "m5": (100, 40)}
_FULL_DIMS = {"m1": (100, 1000), "m2": (200, 1000), "m3": (100, 400),
              "m4": (100, 100), "m5": (100, 100)}

L1_METHOD = "l1"
LLA_METHOD = "lla"

INIT_L1_TUNED = "l1-tuned"
INIT_CLIME_TUNED = "clime-tuned"

_DEFAULT_CLIME_GRID = tuple(np.geomspace(0.02, 0.6, 10))


@dataclass(frozen=True)
class MethodSpec:
    """What to fit per replication: a uniform-weight l1 baseline, or the
    reweighting algorithm in a given mode with a given initializer."""

    kind: str = LLA_METHOD
    mode: str = "two-step"
    initializer: str = INIT_L1_TUNED
    k: int = None
    label: str = None

    def __post_init__(self):
        if self.kind not in (L1_METHOD, LLA_METHOD):
            raise ValidationError(f"method kind must be l1 or lla, got {self.kind!r}")
        if self.kind == LLA_METHOD:
            if self.mode not in MODES:
                raise ValidationError(f"unknown mode {self.mode!r}")
            valid = (INIT_ZERO, INIT_L1_TUNED, INIT_CLIME_TUNED, INIT_DIAG_INVERSE)
            if self.initializer not in valid:
                raise ValidationError(f"initializer must be one of {valid}")

    def describe(self, family):
        if self.label:
            return self.label
        if self.kind == L1_METHOD:
            return "l1"
        mode = self.mode if self.mode != K_STEP else f"{self.k}-step"
        return f"{family}-{mode}-{self.initializer}"


@dataclass(frozen=True)
class ExperimentConfig:
    """Generator id, dimensions, penalty, tuning grid and replication plan."""

    model_id: str
    n: int = None
    p: int = None
    tau: float = 0.5
    penalty_family: str = SCAD
    penalty_a: float = None
    lambda_grid: tuple = None
    n_lambdas: int = 50
    lambda_min_ratio: float = 0.01
    init_lambda_grid: tuple = None
    method: MethodSpec = field(default_factory=MethodSpec)
    reps: int = 100
    master_seed: int = 0
    scale: str = "desk"
    signal_scale: float = 1.0

    def __post_init__(self):
        if self.model_id not in MODELS:
            raise ValidationError(f"model_id must be one of {MODELS}")
        if self.scale not in ("desk", "full"):
            raise ValidationError("scale must be 'desk' or 'full'")
        dims = (_DESK_DIMS if self.scale == "desk" else _FULL_DIMS)[self.model_id]
        if self.n is None:
            object.__setattr__(self, "n", dims[0])
        if self.p is None:
            object.__setattr__(self, "p", dims[1])
        if self.n < 2 or self.p < 1:
            raise ValidationError("dimensions must be positive (n >= 2)")
        if not (0.0 < self.tau < 1.0):
            raise ValidationError("tau must lie in (0, 1)")
        if self.penalty_family not in FAMILIES:
            raise ValidationError(f"unknown penalty family {self.penalty_family!r}")
        if self.penalty_a is None:
            object.__setattr__(self, "penalty_a", DEFAULT_A[self.penalty_family])
        if self.lambda_grid is not None:
            grid = tuple(float(v) for v in self.lambda_grid)
            if len(grid) == 0 or any(v <= 0 for v in grid) or list(grid) != sorted(grid):
                raise ValidationError("lambda_grid must be nonempty, positive, ascending")
            object.__setattr__(self, "lambda_grid", grid)
        if self.reps < 1:
            raise ValidationError("reps must be >= 1")
        if self.master_seed < 0 or self.master_seed > 2 ** 64 - 1:
            raise ValidationError("master_seed must fit in 64 bits")

    def penalty(self, lam):
        return PenaltySpec(self.penalty_family, lam, self.penalty_a)


def _rep_rng(master_seed, rep_index):
    return np.random.default_rng(
        np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(rep_index),)))


def _ar_design(rng, n, p):
    # exact draw from the 0.5^|i-j| correlation: first-order recursion
    z = rng.standard_normal((n, p))
    x = np.empty((n, p))
    x[:, 0] = z[:, 0]
    c = math.sqrt(1.0 - 0.25)
    for j in range(1, p):
        x[:, j] = 0.5 * x[:, j - 1] + c * z[:, j]
    return x


def _random_signal(rng, p, nnz=10):
    beta = np.zeros(p)
    positions = np.sort(rng.choice(p, size=nnz, replace=False))
    t = rng.uniform(1.0, 2.0, size=nnz)
    s = np.where(rng.random(nnz) < 0.5, 1.0, -1.0)
    beta[positions] = t * s
    return beta, tuple(int(j) for j in positions)


def _markov_precision(rng, q):
    gaps = rng.uniform(0.5, 1.0, size=q - 1)
    rho = np.exp(-gaps)
    theta = np.zeros((q, q))
    frac = rho ** 2 / (1.0 - rho ** 2)
    theta[0, 0] = 1.0 + frac[0]
    for k in range(1, q - 1):
        theta[k, k] = 1.0 / (1.0 - rho[k - 1] ** 2) + frac[k]
    theta[q - 1, q - 1] = 1.0 / (1.0 - rho[q - 2] ** 2)
    off = -rho / (1.0 - rho ** 2)
    for k in range(q - 1):
        theta[k, k + 1] = theta[k + 1, k] = off[k]
    return theta, rho


def _markov_draw(rng, n, q, rho):
    z = rng.standard_normal((n, q))
    x = np.empty((n, q))
    x[:, 0] = z[:, 0]
    for k in range(1, q):
        x[:, k] = rho[k - 1] * x[:, k - 1] + math.sqrt(1.0 - rho[k - 1] ** 2) * z[:, k]
    return x


def _random_precision(rng, q, nnz=100):
    from scipy.linalg import solve_triangular

    slots = q * (q - 1)
    nnz = min(nnz, slots)
    for _ in range(100):
        flat = rng.choice(slots, size=nnz, replace=False)
        rows, cols = np.divmod(flat, q - 1)
        cols = cols + (cols >= rows)  # skip the diagonal
        u = np.zeros((q, q))
        u[rows, cols] = rng.uniform(1.0, 2.0, nnz) * np.where(
            rng.random(nnz) < 0.5, 1.0, -1.0)
        theta = u.T @ u + np.eye(q)
        if np.linalg.cond(theta) <= 1e12:
            chol = np.linalg.cholesky(theta)

            def draw(n, chol=chol):
                return solve_triangular(chol.T, rng.standard_normal((q, n))).T

            return theta, draw
    raise ConvergenceError("could not draw a well-conditioned random precision matrix")


def generate(config, rep_index):
    """Draw one replication: (train, validation, truth, true_support)."""
    rng = _rep_rng(config.master_seed, rep_index)
    n, p = config.n, config.p
    mid = config.model_id
    if mid in ("m1", "m2", "m3"):
        if mid == "m1":
            beta = np.zeros(p)
            beta[[0, 1, 4]] = np.array([3.0, 1.5, 2.0]) * config.signal_scale
            support = (0, 1, 4)
        else:
            beta, support = _random_signal(rng, p)
            beta = beta * config.signal_scale
        xs, ys = [], []
        for _ in range(2):  # train then validation, n rows each
            x = _ar_design(rng, n, p)
            lin = x @ beta
            if mid == "m1":
                y = lin + rng.standard_normal(n)
            elif mid == "m2":
                y = (rng.random(n) < logistic_mu(lin)).astype(float)
            else:
                y = lin + np.tan(np.pi * (rng.random(n) - 0.5))
            xs.append(x)
            ys.append(y)
        make = {"m1": Problem.linear, "m2": Problem.logistic}.get(mid)
        if make is None:
            make = lambda x, y: Problem.quantile(x, y, config.tau)
        return make(xs[0], ys[0]), make(xs[1], ys[1]), Estimate(beta), support
    q = p
    if mid == "m4":
        theta, rho = _markov_precision(rng, q)
        theta = theta * config.signal_scale
        train = _markov_draw(rng, n, q, rho)
        val = _markov_draw(rng, n, q, rho)
    else:
        theta, draw = _random_precision(rng, q)
        theta = theta * config.signal_scale
        train = draw(n)
        val = draw(n)
    if config.signal_scale != 1.0:
        # keep the data law matched to the scaled truth
        train = train / math.sqrt(config.signal_scale)
        val = val / math.sqrt(config.signal_scale)
    iu, ju = np.triu_indices(q, k=1)
    nz = np.abs(theta[iu, ju]) > 0
    support = tuple(zip(iu[nz].tolist(), ju[nz].tolist()))
    return (Problem.precision(sample_covariance(train)),
            Problem.precision(sample_covariance(val)),
            Estimate(theta), support)


# ---------------------------------------------------------------------------
# validation error and tuning
# ---------------------------------------------------------------------------

def validation_error(validation, est):
    """Sum-form held-out error: squared error, logistic deviance terms or
    check loss summed over validation rows; for precision problems the
    Gaussian quasi-likelihood at the validation sample covariance."""
    if validation.kind == PRECISION:
        return loss_value(validation, est)
    return loss_value(validation, est) * validation.n


def lambda_max(problem):
    """Smallest uniform-l1 level that zeroes the whole fit."""
    if problem.kind == LINEAR:
        v = np.abs(problem.design.T @ problem.response) / problem.n
    elif problem.kind == LOGISTIC:
        v = np.abs(problem.design.T @ (0.5 - problem.response)) / problem.n
    elif problem.kind == QUANTILE:
        lo, hi = subgradient_interval(problem, zero_estimate(problem))
        v = np.maximum(np.abs(lo), np.abs(hi))
    else:
        off = problem.sample_cov.copy()
        np.fill_diagonal(off, 0.0)
        v = np.abs(off)
    return max(float(np.max(v)), 1e-8)


def default_lambda_grid(problem, config):
    if config.lambda_grid is not None:
        return np.asarray(config.lambda_grid)
    top = lambda_max(problem)
    return np.geomspace(top * config.lambda_min_ratio, top, config.n_lambdas)


def _uniform_weights(problem, lam):
    if problem.kind == PRECISION:
        w = np.full((problem.p, problem.p), float(lam))
        np.fill_diagonal(w, 0.0)
        return w
    return np.full(problem.p, float(lam))


def _fit_l1(problem, lam, opts, warm):
    return solve_weighted_l1(problem, _uniform_weights(problem, lam), opts, start=warm)


def resolve_initializer(config, train, validation, opts=DEFAULT_OPTIONS):
    """Compute the method's starting estimate once per replication.

    Tuned initializers run their own validation-error pass: the l1 and
    constrained-l1 starting points are tuned on the same held-out set."""
    method = config.method
    if method.kind != LLA_METHOD or method.initializer == INIT_ZERO:
        return zero_estimate(train)
    if method.initializer == INIT_DIAG_INVERSE:
        return make_initializer(train, INIT_DIAG_INVERSE)
    if method.initializer == INIT_L1_TUNED:
        l1_config = replace(config, method=MethodSpec(kind=L1_METHOD),
                            lambda_grid=(tuple(config.init_lambda_grid)
                                         if config.init_lambda_grid else config.lambda_grid))
        _, est, _ = tune_lambda(l1_config, train, validation, opts=opts)
        return est
    # tuned constrained-l1 precision initializer
    grid = config.init_lambda_grid or _DEFAULT_CLIME_GRID
    best, best_err = None, np.inf
    for lam in grid:  # ascending; ties favor the larger lam
        try:
            cand = make_initializer(train, INIT_CLIME, lam=lam, opts=opts)
            err = validation_error(validation, cand)
        except (ConvergenceError, DomainError):
            continue
        if err <= best_err:
            best, best_err = cand, err
    if best is None:
        raise ConvergenceError("no constrained-l1 initializer level was feasible/PD")
    return best


def fit_method(config, train, lam, opts=DEFAULT_OPTIONS, init=None, warm=None):
    """Fit the configured method on ``train`` at level ``lam``."""
    method = config.method
    if method.kind == L1_METHOD:
        return _fit_l1(train, lam, opts, warm)
    lla_config = LlaConfig(penalty=config.penalty(lam), mode=method.mode,
                           k=method.k, solver_opts=opts)
    est, _ = lla_run(train, lla_config, init)
    return est


def tune_lambda(config, train, validation, opts=DEFAULT_OPTIONS, init=None):
    """Fit every grid level, return ``(best_lambda, best_estimate, errors)``.

    Errors are reported in grid (ascending) order; exact ties break toward
    the larger, sparser level.  Levels whose fit fails are skipped and appear
    as NaN; if all fail, a ConvergenceError aggregates the last failure.
    """
    grid = default_lambda_grid(train, config)
    if config.method.kind == LLA_METHOD and init is None:
        init = resolve_initializer(config, train, validation, opts)
    errors = np.full(grid.size, np.nan)
    fits = [None] * grid.size
    warm = None
    last_failure = None
    for i in range(grid.size - 1, -1, -1):  # descending: warm starts shrink work
        try:
            est = fit_method(config, train, grid[i], opts, init=init, warm=warm)
            errors[i] = validation_error(validation, est)
            fits[i] = est
            warm = est
        except (ConvergenceError, DomainError) as exc:
            last_failure = exc
    if np.all(np.isnan(errors)):
        raise ConvergenceError(
            f"every lambda in the grid failed; last error: {last_failure}")
    best = None
    for i in range(grid.size):  # ascending scan, <= keeps the larger lam on ties
        if not np.isnan(errors[i]) and (best is None or errors[i] <= errors[best]):
            best = i
    return float(grid[best]), fits[best], errors


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricsRow:
    """Per-replication estimation and selection accuracy."""

    rep: int
    chosen_lambda: float
    validation_error: float
    l1_loss: float = None
    l2_loss: float = None
    op_norm_loss: float = None
    frob_loss: float = None
    false_positives: int = 0
    false_negatives: int = 0

    _VECTOR_FIELDS = ("chosen_lambda", "validation_error", "l1_loss", "l2_loss",
                      "false_positives", "false_negatives")
    _MATRIX_FIELDS = ("chosen_lambda", "validation_error", "op_norm_loss",
                      "frob_loss", "false_positives", "false_negatives")

    @property
    def is_matrix(self):
        return self.l1_loss is None

    def fields(self):
        return self._MATRIX_FIELDS if self.is_matrix else self._VECTOR_FIELDS


def compute_metrics(est, truth, true_support, rep=0, chosen_lambda=float("nan"),
                    validation_err=float("nan")):
    """Estimation losses plus false positive/negative counts.

    Coordinates count as nonzero above ``NONZERO_TOL``; matrix support is
    counted over off-diagonal unordered pairs.
    """
    diff = est.values - truth.values
    if est.is_matrix:
        q = est.values.shape[0]
        iu, ju = np.triu_indices(q, k=1)
        sup = set((min(a, b), max(a, b)) for a, b in true_support)
        est_nz = np.abs(est.values[iu, ju]) > NONZERO_TOL
        in_sup = np.array([(i, j) in sup for i, j in zip(iu.tolist(), ju.tolist())])
        fp = int(np.sum(est_nz & ~in_sup))
        fn = int(np.sum(~est_nz & in_sup))
        return MetricsRow(rep=rep, chosen_lambda=chosen_lambda,
                          validation_error=validation_err,
                          op_norm_loss=float(np.linalg.norm(diff, 2)),
                          frob_loss=float(np.linalg.norm(diff, "fro")),
                          false_positives=fp, false_negatives=fn)
    sup = np.zeros(truth.values.size, dtype=bool)
    sup[list(map(int, true_support))] = True
    est_nz = np.abs(est.values) > NONZERO_TOL
    return MetricsRow(rep=rep, chosen_lambda=chosen_lambda,
                      validation_error=validation_err,
                      l1_loss=float(np.sum(np.abs(diff))),
                      l2_loss=float(np.linalg.norm(diff)),
                      false_positives=int(np.sum(est_nz & ~sup)),
                      false_negatives=int(np.sum(~est_nz & sup)))


# ---------------------------------------------------------------------------
# replication runner
# ---------------------------------------------------------------------------

@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list
    failures: list  # (rep_index, message)

    def summary(self):
        """Mean and standard error (sample std / sqrt(reps)) per metric."""
        out = {}
        if not self.rows:
            return out
        for name in self.rows[0].fields():
            vals = np.array([float(getattr(r, name)) for r in self.rows])
            se = float(np.std(vals, ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
            out[name] = (float(np.mean(vals)), se)
        return out

    def write_rows_csv(self, path):
        with open(path, "w") as fh:
            names = self.rows[0].fields() if self.rows else MetricsRow._VECTOR_FIELDS
            fh.write("rep," + ",".join(names) + "\n")
            for row in self.rows:
                cells = [f"{row.rep}"]
                for name in names:
                    v = getattr(row, name)
                    cells.append(f"{v}" if isinstance(v, int) else f"{v:.17g}")
                fh.write(",".join(cells) + "\n")

    def write_summary_csv(self, path):
        with open(path, "w") as fh:
            fh.write("metric,mean,se\n")
            for name, (mean, se) in self.summary().items():
                fh.write(f"{name},{mean:.17g},{se:.17g}\n")


def run_replication(config, rep, opts=DEFAULT_OPTIONS):
    train, validation, truth, support = generate(config, rep)
    best_lam, est, _ = tune_lambda(config, train, validation, opts)
    return compute_metrics(est, truth, support, rep=rep, chosen_lambda=best_lam,
                           validation_err=validation_error(validation, est))


def run_experiment(config, opts=DEFAULT_OPTIONS, threads=1):
    """Run all replications; failures are recorded, not raised.

    Results land in per-replication slots, so the output is independent of
    the worker count and identical across reruns with the same master seed.
    """
    slots = [None] * config.reps
    failures = []

    def work(rep):
        try:
            slots[rep] = run_replication(config, rep, opts)
        except (ConvergenceError, DomainError, np.linalg.LinAlgError) as exc:
            failures.append((rep, str(exc)))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(config.reps)))
    else:
        for rep in range(config.reps):
            work(rep)
    rows = [row for row in slots if row is not None]
    return ExperimentResult(config=config, rows=rows, failures=sorted(failures))
