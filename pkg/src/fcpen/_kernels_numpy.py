"""Pure-numpy reference implementations of the hot kernels.

Semantically identical to :mod:`fcpen._kernels_numba`; kept as the fallback
backend and as the ground truth the numba versions are tested against.
Coordinate updates are sequential by nature, so this backend pays Python-loop
overhead inside the sweeps.
"""

import numpy as np

NAME = "numpy"


def _soft(v, t):
    a = abs(v) - t
    return np.sign(v) * a if a > 0.0 else 0.0


def _sweep(gram, lin, weights, beta, cache, active_only):
    p = beta.shape[0]
    max_change = 0.0
    for j in range(p):
        bj = beta[j]
        if active_only and bj == 0.0:
            continue
        gjj = gram[j, j]
        if gjj <= 0.0:
            new = 0.0
        else:
            rho = lin[j] - cache[j] + gjj * bj
            new = _soft(rho, weights[j]) / gjj
        d = new - bj
        if d != 0.0:
            beta[j] = new
            cache += gram[j] * d
            if abs(d) > max_change:
                max_change = abs(d)
    return max_change


def _kkt_gram(lin, weights, beta, cache):
    g = cache - lin
    res = 0.0
    for j in range(beta.shape[0]):
        if beta[j] == 0.0:
            v = abs(g[j]) - weights[j]
            if v > res:
                res = v
        else:
            v = abs(g[j] + weights[j] * np.sign(beta[j]))
            if v > res:
                res = v
    return res


def cd_wl1_gram(gram, lin, weights, beta, tol, max_iter):
    """Cyclic coordinate descent for ``0.5 b'Gb - c'b + sum w|b|``.

    Mutates ``beta`` in place.  Returns ``(iterations, kkt_residual,
    converged)``.  One iteration is a full sweep plus active-set refinement;
    the gradient cache is refreshed from scratch each iteration to stop
    float drift.
    """
    kkt = np.inf
    cache = gram @ beta
    for it in range(max_iter):
        full_change = _sweep(gram, lin, weights, beta, cache, False)
        for _ in range(1000):
            ch = _sweep(gram, lin, weights, beta, cache, True)
            if ch <= tol * (1.0 + np.max(np.abs(beta), initial=0.0)):
                break
        cache = gram @ beta
        kkt = _kkt_gram(lin, weights, beta, cache)
        scale = 1.0 + np.max(np.abs(beta), initial=0.0)
        if full_change <= tol * scale and kkt <= tol:
            return it + 1, kkt, True
    return max_iter, kkt, False


def admm_quantile(x, xt, y, weights, tau, eta, beta, tol_abs, tol_rel, max_iter):
    """Linearized ADMM for check-loss regression with per-coordinate l1 weights.

    Minimizes ``(1/n) sum rho_tau(y - x b) + sum w_j |b_j|`` by splitting the
    residual into its own block; ``eta`` must dominate the top eigenvalue of
    ``x'x``.  Mutates ``beta``.  Returns ``(iterations, primal_residual,
    dual_residual, rho, converged)``.
    """
    n, p = x.shape
    rho = 1.0
    xb = x @ beta
    z = y - xb
    u = np.zeros(n)
    z_old = z.copy()
    norm_y = np.linalg.norm(y)
    pri = dua = np.inf
    for it in range(max_iter):
        grad = xt @ (xb + z - y + u)
        step = beta - grad / eta
        thr = weights / (rho * eta)
        beta[:] = np.sign(step) * np.maximum(np.abs(step) - thr, 0.0)
        xb = x @ beta
        v = y - xb - u
        z = v - np.clip(v, (tau - 1.0) / (n * rho), tau / (n * rho))
        r = xb + z - y
        u += r
        pri = np.linalg.norm(r)
        dua = rho * np.linalg.norm(xt @ (z - z_old))
        z_old[:] = z
        eps_pri = np.sqrt(n) * tol_abs + tol_rel * max(
            np.linalg.norm(xb), np.linalg.norm(z), norm_y)
        eps_dua = np.sqrt(p) * tol_abs + tol_rel * rho * np.linalg.norm(xt @ u)
        if pri <= eps_pri and dua <= eps_dua:
            return it + 1, pri, dua, rho, True
        if (it + 1) % 10 == 0:
            if pri > 10.0 * dua:
                rho *= 2.0
                u /= 2.0
            elif dua > 10.0 * pri:
                rho /= 2.0
                u *= 2.0
    return max_iter, pri, dua, rho, False
