"""Independent reference implementations used as test oracles.

Each oracle is written from the definition, trading speed for transparency:
explicit loops, arbitrary precision or exhaustive enumeration.
"""
import itertools
import math

import mpmath
import numpy as np


def softmin_mp(I, t, dps=50):
    """exp(-I_i/t) / sum_j exp(-I_j/t) in arbitrary precision."""
    with mpmath.workdps(dps):
        e = [mpmath.exp(-mpmath.mpf(float(v)) / mpmath.mpf(float(t))) for v in I]
        s = mpmath.fsum(e)
        return np.array([float(x / s) for x in e])


def rbf_loop(x, y, w_f, sigma):
    acc = 0.0
    for j in range(len(x)):
        acc += w_f[j] * (x[j] - y[j]) ** 2
    return math.exp(-acc / (2.0 * sigma * sigma))


def mmd_double_loop(X, Y, w_X, w_Y, w_f, sigma):
    """Weighted MMD by explicit summation over all row pairs."""
    wx = [w / sum(w_X) for w in w_X]
    wy = [w / sum(w_Y) for w in w_Y]
    xx = sum(wx[i] * wx[j] * rbf_loop(X[i], X[j], w_f, sigma) for i in range(len(X)) for j in range(len(X)))
    yy = sum(wy[i] * wy[j] * rbf_loop(Y[i], Y[j], w_f, sigma) for i in range(len(Y)) for j in range(len(Y)))
    xy = sum(wx[i] * wy[j] * rbf_loop(X[i], Y[j], w_f, sigma) for i in range(len(X)) for j in range(len(Y)))
    return math.sqrt(max(xx + yy - 2.0 * xy, 0.0))


def auroc_pairs(pos, neg):
    """Concordant pairs plus half the ties over all pairs."""
    s = 0.0
    for a in pos:
        for b in neg:
            s += 1.0 if a > b else 0.5 if a == b else 0.0
    return s / (len(pos) * len(neg))


def bh_definition(p):
    """Adjusted p_(i) = min over j >= i of m p_(j) / j, clipped at 1."""
    p = list(p)
    m = len(p)
    order = sorted(range(m), key=lambda i: p[i])
    adj = [0.0] * m
    for rank, i in enumerate(order, start=1):
        adj[i] = min(1.0, min(m * p[order[j - 1]] / j for j in range(rank, m + 1)))
    return np.array(adj)


def shapley_coalitions(f, x, background):
    """Exact interventional Shapley values by enumerating all feature coalitions.

    v(S) is the mean over background rows z of f evaluated at x on S and z elsewhere.
    """
    n = len(x)

    def v(S):
        total = 0.0
        for z in background:
            h = np.array(z, dtype=np.float64)
            for j in S:
                h[j] = x[j]
            total += f(h)
        return total / len(background)

    phi = np.zeros(n)
    for j in range(n):
        rest = [i for i in range(n) if i != j]
        for size in range(n):
            wgt = math.factorial(size) * math.factorial(n - size - 1) / math.factorial(n)
            for S in itertools.combinations(rest, size):
                phi[j] += wgt * (v(S + (j,)) - v(S))
    return phi


def irls_logistic(X, y, sw, C, iters=100):
    """Minimise sum_i s_i log-loss_i + ||w||^2 / (2C), intercept unpenalised, by
    iteratively reweighted least squares."""
    Xa = np.hstack([X, np.ones((len(X), 1))])
    beta = np.zeros(Xa.shape[1])
    P = np.eye(Xa.shape[1]) / C
    P[-1, -1] = 0.0
    for _ in range(iters):
        eta = Xa @ beta
        p = 1.0 / (1.0 + np.exp(-eta))
        W = sw * p * (1 - p)
        z = eta + (y - p) / np.maximum(p * (1 - p), 1e-300)
        beta = np.linalg.solve(Xa.T @ (W[:, None] * Xa) + P, Xa.T @ (W * z))
    return beta[:-1], beta[-1]
