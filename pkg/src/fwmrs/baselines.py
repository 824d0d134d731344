"""Sample-weight baselines: kernel mean matching, propensity scores, uniform."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linear import fit_logistic, logistic_proba
from .metrics import sigma_heuristic, weighted_rbf_matrix

KMM = "kmm"
PSA = "psa"
UNIFORM = "uniform"

PROPENSITY_CLAMP = 1e-3


class KMMError(RuntimeError):
    pass


@dataclass(frozen=True)
class BaselineWeights:
    sample_weights: np.ndarray
    method: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.sample_weights, dtype=np.float64)
        if not np.all(np.isfinite(w)) or np.any(w < 0) or not np.any(w > 0):
            raise ValueError("baseline weights must be finite, non-negative and not all zero")
        object.__setattr__(self, "sample_weights", w)


def project_box_sum(v: np.ndarray, upper: float, lo_sum: float, hi_sum: float) -> np.ndarray:
    """Euclidean projection onto ``{b : 0 <= b <= upper, lo_sum <= sum(b) <= hi_sum}``.

    The projection is ``clip(v - lam, 0, upper)`` for the scalar ``lam`` that brings the
    sum into range; ``lam`` is found by bisection.
    """
    b = np.clip(v, 0.0, upper)
    s = b.sum()
    if lo_sum <= s <= hi_sum:
        return b
    target = hi_sum if s > hi_sum else lo_sum
    lo = np.min(v) - upper - 1.0
    hi = np.max(v) + 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.clip(v - mid, 0.0, upper).sum() > target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15 * max(1.0, abs(mid)):
            break
    b = np.clip(v - 0.5 * (lo + hi), 0.0, upper)
    # absorb the residual bisection error on the free coordinates
    free = (b > 0) & (b < upper)
    if np.any(free):
        b[free] += (target - b.sum()) / free.sum()
        b = np.clip(b, 0.0, upper)
    return b


def kmm_weights(N, R, sigma=None, B: float = 1000.0, eps=None, tol: float = 1e-6,
                max_iter: int = 20000) -> BaselineWeights:
    """Kernel mean matching by projected gradient with backtracking.

    Minimises ``0.5 b'Kb - kappa'b`` over ``0 <= b <= B``, ``|sum(b) - m| <= m * eps``,
    starting from the feasible point ``b = 1``. ``sigma`` defaults to the mean pairwise
    distance of the pooled rows; ``eps`` to ``(sqrt(m) - 1) / sqrt(m)``.
    """
    N = np.asarray(N, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    m, r = len(N), len(R)
    if sigma is None:
        sigma = sigma_heuristic(N, R)
    if not sigma > 0 or not B > 0:
        raise ValueError("sigma and B must be positive")
    if eps is None:
        eps = (math.sqrt(m) - 1.0) / math.sqrt(m)
    ones = np.ones(N.shape[1])
    K = weighted_rbf_matrix(N, N, ones, sigma)
    if m > 1 and np.allclose(K, 1.0):
        raise KMMError("kernel matrix is degenerate (all rows identical)")
    kappa = (m / r) * weighted_rbf_matrix(N, R, ones, sigma).sum(axis=1)
    lo_sum, hi_sum = m * (1.0 - eps), m * (1.0 + eps)

    def objective(b):
        return 0.5 * b @ K @ b - kappa @ b

    beta = project_box_sum(np.ones(m), B, lo_sum, hi_sum)
    f = objective(beta)
    f_start = f
    step = 1.0 / max(np.linalg.norm(K, 1), 1e-12)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        grad = K @ beta - kappa
        while True:
            cand = project_box_sum(beta - step * grad, B, lo_sum, hi_sum)
            diff = cand - beta
            f_cand = objective(cand)
            # sufficient decrease for the projected step
            if f_cand <= f + grad @ diff + diff @ diff / (2.0 * step) or step < 1e-16:
                break
            step *= 0.5
        rel = (f - f_cand) / max(abs(f), 1e-12)
        beta, f = cand, f_cand
        step *= 1.5
        if rel <= tol:
            converged = True
            break
    if not converged:
        raise KMMError(f"projected gradient did not converge; objective {f:.6g}")
    diag = {"objective": float(f), "objective_at_uniform": float(f_start), "iterations": it,
            "sigma": float(sigma), "B": float(B), "eps": float(eps)}
    return BaselineWeights(beta, KMM, diag)


def propensity_to_weight(pi) -> np.ndarray:
    pi = np.clip(np.asarray(pi, dtype=np.float64), PROPENSITY_CLAMP, 1.0 - PROPENSITY_CLAMP)
    return (1.0 - pi) / pi


def psa_weights(N, R, C: float = 1.0) -> BaselineWeights:
    """Inverse-propensity weights ``(1 - pi) / pi`` with ``pi = P(row in N)`` from a
    logistic model of N (label 1) against R (label 0)."""
    N = np.asarray(N, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    X = np.vstack([N, R])
    y = np.concatenate([np.ones(len(N)), np.zeros(len(R))])
    model = fit_logistic(X, y, C=C)
    pi = logistic_proba(model, N)
    diag = {"propensity_min": float(pi.min()), "propensity_max": float(pi.max()), "C": float(C)}
    return BaselineWeights(propensity_to_weight(pi), PSA, diag)


def uniform_weights(m: int) -> BaselineWeights:
    if m < 1:
        raise ValueError("m must be >= 1")
    return BaselineWeights(np.ones(m), UNIFORM)
