"""Problem containers and convex losses for the four estimation families.

A :class:`Problem` bundles the data of one loss: least squares, logistic,
quantile (check loss) or Gaussian precision (negative log-quasi-likelihood
of an inverse covariance).  An :class:`Estimate` holds a coefficient vector,
or a symmetric matrix for precision problems.  Everything here is a pure
function of immutable inputs.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (DomainError, InsufficientDataError, UnsupportedOperationError,
                     ValidationError)

LINEAR = "linear"
LOGISTIC = "logistic"
QUANTILE = "quantile"
PRECISION = "precision"

KINDS = (LINEAR, LOGISTIC, QUANTILE, PRECISION)

# relative band below which a quantile residual counts as exactly zero
ZERO_RESIDUAL_RTOL = 1e-10


def _freeze(a):
    a = np.ascontiguousarray(np.asarray(a, dtype=float))
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Problem:
    """One dataset plus the loss it is fit under.

    Use the factory methods (:meth:`linear`, :meth:`logistic`,
    :meth:`quantile`, :meth:`precision`) rather than the raw constructor.
    """

    kind: str
    design: np.ndarray = None
    response: np.ndarray = None
    sample_cov: np.ndarray = None
    tau: float = None

    @classmethod
    def linear(cls, design, response):
        return cls._regression(LINEAR, design, response)

    @classmethod
    def logistic(cls, design, response):
        prob = cls._regression(LOGISTIC, design, response)
        if not np.all((prob.response == 0) | (prob.response == 1)):
            raise ValidationError("logistic response must be 0/1 valued")
        return prob

    @classmethod
    def quantile(cls, design, response, tau):
        if not (0.0 < tau < 1.0):
            raise ValidationError(f"tau must lie in (0, 1), got {tau}")
        prob = cls._regression(QUANTILE, design, response)
        object.__setattr__(prob, "tau", float(tau))
        return prob

    @classmethod
    def precision(cls, sample_cov):
        s = _freeze(sample_cov)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise ValidationError("sample_cov must be a square matrix")
        if not np.all(np.isfinite(s)):
            raise ValidationError("sample_cov contains NaN/Inf")
        if np.max(np.abs(s - s.T)) > 1e-12:
            raise ValidationError("sample_cov must be symmetric within 1e-12")
        if np.any(np.diag(s) <= 0):
            raise ValidationError("sample_cov needs a strictly positive diagonal")
        return cls(kind=PRECISION, sample_cov=s)

    @classmethod
    def _regression(cls, kind, design, response):
        x = _freeze(design)
        y = _freeze(response)
        if x.ndim != 2:
            raise ValidationError("design must be a 2-d matrix")
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise ValidationError("response length must equal the design row count")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValidationError("design/response contain NaN/Inf")
        return cls(kind=kind, design=x, response=y)

    @property
    def n(self):
        return self.sample_cov.shape[0] if self.kind == PRECISION else self.design.shape[0]

    @property
    def p(self):
        """Number of free parameters: columns, or q for precision matrices."""
        return self.sample_cov.shape[0] if self.kind == PRECISION else self.design.shape[1]

    @property
    def is_matrix(self):
        return self.kind == PRECISION


@dataclass(frozen=True, eq=False)
class Estimate:
    """A coefficient vector, or a symmetric matrix for precision problems."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = _freeze(self.values)
        if v.ndim == 2:
            if v.shape[0] != v.shape[1]:
                raise ValidationError("matrix estimate must be square")
            if np.max(np.abs(v - v.T)) > 1e-10 * (1.0 + np.max(np.abs(v))):
                raise ValidationError("matrix estimate must be symmetric")
            v = _freeze((v + v.T) / 2.0)
        elif v.ndim != 1:
            raise ValidationError("estimate must be a vector or a square matrix")
        object.__setattr__(self, "values", v)

    @property
    def is_matrix(self):
        return self.values.ndim == 2

    @property
    def support(self):
        """Indices of exact nonzeros; unordered off-diagonal pairs for matrices.

        Recomputed on access so it can never go stale.
        """
        if self.is_matrix:
            q = self.values.shape[0]
            iu, ju = np.triu_indices(q, k=1)
            nz = self.values[iu, ju] != 0.0
            return tuple(zip(iu[nz].tolist(), ju[nz].tolist()))
        return tuple(np.flatnonzero(self.values).tolist())

    def smallest_eigenvalue(self):
        if not self.is_matrix:
            raise UnsupportedOperationError("eigenvalues only defined for matrix estimates")
        return float(np.linalg.eigvalsh(self.values)[0])


def zero_estimate(problem):
    if problem.is_matrix:
        return Estimate(np.zeros((problem.p, problem.p)))
    return Estimate(np.zeros(problem.p))


def _check_shapes(problem, est):
    if problem.is_matrix != est.is_matrix:
        raise ValidationError("estimate shape does not match problem kind")
    if est.values.shape[0] != problem.p:
        raise ValidationError("estimate dimension does not match problem")


def logistic_psi(t):
    """Overflow-safe log(1 + exp(t))."""
    return np.logaddexp(0.0, t)


def logistic_mu(t):
    """Derivative of :func:`logistic_psi`: the logistic cdf."""
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def check_loss(u, tau):
    """Quantile check loss ``u * (tau - 1{u <= 0})``."""
    return u * (tau - (u <= 0))


def _chol_logdet(theta):
    try:
        chol = np.linalg.cholesky(theta)
    except np.linalg.LinAlgError:
        raise DomainError("precision estimate is not positive definite")
    return 2.0 * np.sum(np.log(np.diag(chol)))


def loss_value(problem, est):
    """The convex loss at ``est`` (penalty excluded)."""
    _check_shapes(problem, est)
    b = est.values
    if problem.kind == LINEAR:
        r = problem.response - problem.design @ b
        return float(r @ r) / (2.0 * problem.n)
    if problem.kind == LOGISTIC:
        t = problem.design @ b
        return float(np.sum(logistic_psi(t) - problem.response * t)) / problem.n
    if problem.kind == QUANTILE:
        r = problem.response - problem.design @ b
        return float(np.sum(check_loss(r, problem.tau))) / problem.n
    return float(np.sum(problem.sample_cov * b)) - _chol_logdet(b)


def loss_gradient(problem, est):
    """Gradient of the loss; quantile problems use :func:`subgradient_interval`."""
    _check_shapes(problem, est)
    b = est.values
    if problem.kind == LINEAR:
        return problem.design.T @ (problem.design @ b - problem.response) / problem.n
    if problem.kind == LOGISTIC:
        mu = logistic_mu(problem.design @ b)
        return problem.design.T @ (mu - problem.response) / problem.n
    if problem.kind == PRECISION:
        try:
            inv = np.linalg.inv(b)
        except np.linalg.LinAlgError:
            raise DomainError("precision estimate is singular")
        return problem.sample_cov - (inv + inv.T) / 2.0
    raise UnsupportedOperationError(
        "quantile loss is not differentiable; use subgradient_interval")


def subgradient_interval(problem, est):
    """Attainable subgradient range per coordinate for the check loss.

    Returns ``(lo, hi)`` arrays.  Observations whose residual sits inside the
    relative band ``1e-10 * (1 + |y_i|)`` contribute the full range of valid
    subgradients of the check loss at zero, widening the interval by
    ``|x_ij| / n`` each.
    """
    if problem.kind != QUANTILE:
        raise UnsupportedOperationError("subgradient_interval requires a quantile problem")
    _check_shapes(problem, est)
    x, y, tau = problem.design, problem.response, problem.tau
    n = problem.n
    r = y - x @ est.values
    at_zero = np.abs(r) <= ZERO_RESIDUAL_RTOL * (1.0 + np.abs(y))
    neg = (r < 0) & ~at_zero
    pos = (r > 0) & ~at_zero
    base = ((1.0 - tau) * x[neg].sum(axis=0) - tau * x[pos].sum(axis=0)) / n
    if np.any(at_zero):
        xz = x[at_zero]
        lo_c = np.minimum(-tau * xz, (1.0 - tau) * xz).sum(axis=0) / n
        hi_c = np.maximum(-tau * xz, (1.0 - tau) * xz).sum(axis=0) / n
        return base + lo_c, base + hi_c
    return base.copy(), base.copy()


def sample_covariance(data):
    """Centered second-moment matrix with divisor ``n`` (plug-in MLE form)."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[0] < 2:
        raise InsufficientDataError("sample covariance needs at least 2 rows")
    centered = data - data.mean(axis=0)
    cov = centered.T @ centered / data.shape[0]
    return (cov + cov.T) / 2.0


def offdiag_pairs(q):
    """Upper off-diagonal index pairs, the vectorization order for matrices."""
    iu, ju = np.triu_indices(q, k=1)
    return iu, ju


# ---------------------------------------------------------------------------
# dataset import/export
# ---------------------------------------------------------------------------

def _kind_token(problem):
    if problem.kind == QUANTILE:
        return f"quantile:{problem.tau:.17g}"
    return problem.kind


def save_problem(problem, path):
    """Write a problem as CSV with a one-line ``# kind=... n=... p=...`` header.

    Regression rows are ``y, x_1, ..., x_p``; a precision problem stores its
    q x q sample covariance row-major.
    """
    with open(path, "w") as fh:
        fh.write(f"# kind={_kind_token(problem)} n={problem.n} p={problem.p}\n")
        if problem.kind == PRECISION:
            for row in problem.sample_cov:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
        else:
            for yi, xi in zip(problem.response, problem.design):
                fh.write(f"{yi:.17g}," + ",".join(f"{v:.17g}" for v in xi) + "\n")


def load_problem(path):
    """Inverse of :func:`save_problem`; raises ValidationError with a
    line/column diagnostic on malformed input."""
    with open(path) as fh:
        header = fh.readline().strip()
        fields = {}
        if not header.startswith("#"):
            raise ValidationError(f"{path}:1: missing '# kind=... n=... p=...' header")
        for tok in header.lstrip("#").split():
            if "=" not in tok:
                raise ValidationError(f"{path}:1: malformed header token {tok!r}")
            k, v = tok.split("=", 1)
            fields[k] = v
        for key in ("kind", "n", "p"):
            if key not in fields:
                raise ValidationError(f"{path}:1: header lacks {key}=")
        kind = fields["kind"]
        tau = None
        if kind.startswith("quantile"):
            try:
                tau = float(kind.split(":", 1)[1])
            except (IndexError, ValueError):
                raise ValidationError(f"{path}:1: quantile kind needs 'quantile:<tau>'")
            kind = QUANTILE
        if kind not in KINDS:
            raise ValidationError(f"{path}:1: unknown kind {fields['kind']!r}")
        try:
            n, p = int(fields["n"]), int(fields["p"])
        except ValueError:
            raise ValidationError(f"{path}:1: n/p must be integers")
        rows = []
        want = p if kind == PRECISION else p + 1
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != want:
                raise ValidationError(
                    f"{path}:{lineno}: expected {want} fields, got {len(parts)}")
            try:
                rows.append([float(v) for v in parts])
            except ValueError as exc:
                col = next(i for i, v in enumerate(parts, start=1)
                           if not _is_float(v))
                raise ValidationError(f"{path}:{lineno}:{col}: not a number") from exc
    data = np.asarray(rows, dtype=float)
    if data.shape[0] != n:
        raise ValidationError(f"{path}: header declares n={n} but found {data.shape[0]} rows")
    if kind == PRECISION:
        return Problem.precision(data)
    if kind == LINEAR:
        return Problem.linear(data[:, 1:], data[:, 0])
    if kind == LOGISTIC:
        return Problem.logistic(data[:, 1:], data[:, 0])
    return Problem.quantile(data[:, 1:], data[:, 0], tau)


def _is_float(s):
    try:
        float(s)
        return True
    except ValueError:
        return False
