"""Numba-compiled hot kernels; see :mod:`fcpen._kernels_numpy` for the
semantics and the reference implementation."""

import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True, nogil=True)
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
            a = abs(rho) - weights[j]
            new = (np.sign(rho) * a / gjj) if a > 0.0 else 0.0
        d = new - bj
        if d != 0.0:
            beta[j] = new
            for k in range(p):
                cache[k] += gram[j, k] * d
            if abs(d) > max_change:
                max_change = abs(d)
    return max_change


@njit(cache=True, nogil=True)
def _kkt_gram(lin, weights, beta, cache):
    res = 0.0
    for j in range(beta.shape[0]):
        g = cache[j] - lin[j]
        if beta[j] == 0.0:
            v = abs(g) - weights[j]
        else:
            v = abs(g + weights[j] * np.sign(beta[j]))
        if v > res:
            res = v
    return res


@njit(cache=True, nogil=True)
def _max_abs(v):
    m = 0.0
    for i in range(v.shape[0]):
        if abs(v[i]) > m:
            m = abs(v[i])
    return m


@njit(cache=True, nogil=True)
def cd_wl1_gram(gram, lin, weights, beta, tol, max_iter):
    kkt = np.inf
    cache = np.dot(gram, beta)
    for it in range(max_iter):
        full_change = _sweep(gram, lin, weights, beta, cache, False)
        for _ in range(1000):
            ch = _sweep(gram, lin, weights, beta, cache, True)
            if ch <= tol * (1.0 + _max_abs(beta)):
                break
        cache = np.dot(gram, beta)
        kkt = _kkt_gram(lin, weights, beta, cache)
        if full_change <= tol * (1.0 + _max_abs(beta)) and kkt <= tol:
            return it + 1, kkt, True
    return max_iter, kkt, False


@njit(cache=True, nogil=True)
def admm_quantile(x, xt, y, weights, tau, eta, beta, tol_abs, tol_rel, max_iter):
    n, p = x.shape
    rho = 1.0
    xb = np.dot(x, beta)
    z = y - xb
    u = np.zeros(n)
    z_old = z.copy()
    norm_y = np.linalg.norm(y)
    pri = np.inf
    dua = np.inf
    for it in range(max_iter):
        v = xb + z - y + u
        grad = np.dot(xt, v)
        for j in range(p):
            step = beta[j] - grad[j] / eta
            thr = weights[j] / (rho * eta)
            a = abs(step) - thr
            beta[j] = np.sign(step) * a if a > 0.0 else 0.0
        xb = np.dot(x, beta)
        lo = (tau - 1.0) / (n * rho)
        hi = tau / (n * rho)
        pri2 = 0.0
        for i in range(n):
            vi = y[i] - xb[i] - u[i]
            c = vi
            if c > hi:
                c = hi
            elif c < lo:
                c = lo
            z[i] = vi - c
            ri = xb[i] + z[i] - y[i]
            u[i] += ri
            pri2 += ri * ri
        pri = np.sqrt(pri2)
        dz = z - z_old
        dua = rho * np.linalg.norm(np.dot(xt, dz))
        for i in range(n):
            z_old[i] = z[i]
        eps_pri = np.sqrt(n) * tol_abs + tol_rel * max(
            np.linalg.norm(xb), max(np.linalg.norm(z), norm_y))
        eps_dua = np.sqrt(p) * tol_abs + tol_rel * rho * np.linalg.norm(np.dot(xt, u))
        if pri <= eps_pri and dua <= eps_dua:
            return it + 1, pri, dua, rho, True
        if (it + 1) % 10 == 0:
            if pri > 10.0 * dua:
                rho *= 2.0
                for i in range(n):
                    u[i] /= 2.0
            elif dua > 10.0 * pri:
                rho /= 2.0
                for i in range(n):
                    u[i] *= 2.0
    return max_iter, pri, dua, rho, False
