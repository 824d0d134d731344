"""Linear max-margin and logistic classifiers with per-sample weights.

Feature weights act by column-scaling the inputs before fitting and before every
evaluation; the stored coefficients live in the scaled space.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HINGE = "hinge"
LOGISTIC = "logistic"


class LogisticConvergenceError(RuntimeError):
    def __init__(self, grad_norm: float, n_iter: int):
        super().__init__(f"logistic regression did not converge after {n_iter} Newton steps "
                         f"(gradient norm {grad_norm:.3e})")
        self.grad_norm = grad_norm
        self.n_iter = n_iter


@dataclass(frozen=True)
class TrainedLinear:
    coefficients: np.ndarray
    intercept: float
    kind: str
    C: float
    feature_scaling_applied: np.ndarray
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be positive")
        if not np.all(np.isfinite(self.coefficients)) or not np.isfinite(self.intercept):
            raise ValueError("non-finite coefficients")

    def to_dict(self) -> dict:
        return {
            "format": "fwmrs.linear",
            "version": 1,
            "kind": self.kind,
            "C": self.C,
            "coefficients": self.coefficients.tolist(),
            "intercept": self.intercept,
            "feature_scaling_applied": self.feature_scaling_applied.tolist(),
        }


def scale_features(X: np.ndarray, scaling: np.ndarray) -> np.ndarray:
    return X * scaling[None, :]


def _validate(X, sample_weights):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or not np.all(np.isfinite(X)):
        raise ValueError("X must be a finite matrix")
    sw = np.ones(len(X)) if sample_weights is None else np.asarray(sample_weights, dtype=np.float64)
    if sw.shape != (len(X),) or not np.all(np.isfinite(sw)) or np.any(sw < 0) or sw.sum() <= 0:
        raise ValueError("sample weights must be finite, non-negative, with positive sum")
    return X, sw


def _step_length(v, dv):
    neg = dv < 0
    return 1.0 if not np.any(neg) else min(1.0, float(np.min(-v[neg] / dv[neg])))


def _svm_ipm(X, y, c, tol, max_iter):
    """Mehrotra predictor-corrector interior-point method for

        min 0.5 |w|^2 + c' xi  s.t.  y_i (x_i w + b) + xi_i - t_i = 1,  xi, t >= 0

    with multipliers alpha (for t) and eta (for xi). Every Newton step reduces to an
    (n+1)-dimensional positive definite system, so the cost is O(m n^2) per step.
    """
    m, n = X.shape
    A = np.hstack([X * y[:, None], y[:, None]])
    P = np.ones(n + 1)
    P[-1] = 0.0
    z = np.zeros(n + 1)
    xi = np.ones(m)
    t = np.ones(m)
    alpha = c / 2.0
    eta = c / 2.0
    scale = 1.0 + np.max(c)
    for it in range(1, max_iter + 1):
        r_d = P * z - A.T @ alpha
        r_xi = c - alpha - eta
        r_p = A @ z + xi - t - 1.0
        mu = (alpha @ t + eta @ xi) / (2 * m)
        res = max(np.linalg.norm(r_d, np.inf), np.linalg.norm(r_p, np.inf), np.linalg.norm(r_xi, np.inf))
        if res <= tol * scale and mu <= tol:
            return z[:-1].copy(), float(z[-1]), alpha, it - 1, max(res, mu)
        d_inv = xi / eta + t / alpha
        H = A.T @ (A / d_inv[:, None])
        H[np.diag_indices_from(H)] += P
        H[-1, -1] += 1e-14 * max(1.0, H[-1, -1])
        cho = np.linalg.cholesky(H)

        def solve(r_at, r_ex):
            rhs3 = -r_p + (r_ex + xi * r_xi) / eta - r_at / alpha
            dz = np.linalg.solve(cho.T, np.linalg.solve(cho, -r_d + A.T @ (rhs3 / d_inv)))
            da = (rhs3 - A @ dz) / d_inv
            dt = (-r_at - t * da) / alpha
            de = r_xi - da
            dxi = (-r_ex - xi * de) / eta
            return dz, da, dt, de, dxi

        # predictor
        dz, da, dt, de, dxi = solve(alpha * t, eta * xi)
        a_p = min(_step_length(t, dt), _step_length(xi, dxi))
        a_d = min(_step_length(alpha, da), _step_length(eta, de))
        mu_aff = ((alpha + a_d * da) @ (t + a_p * dt) + (eta + a_d * de) @ (xi + a_p * dxi)) / (2 * m)
        sigma = (mu_aff / mu) ** 3
        # corrector
        dz, da, dt, de, dxi = solve(alpha * t + da * dt - sigma * mu, eta * xi + de * dxi - sigma * mu)
        a_p = 0.99 * min(_step_length(t, dt), _step_length(xi, dxi))
        a_d = 0.99 * min(_step_length(alpha, da), _step_length(eta, de))
        z = z + a_p * dz
        xi = xi + a_p * dxi
        t = t + a_p * dt
        alpha = alpha + a_d * da
        eta = eta + a_d * de
    raise RuntimeError(f"interior-point SVM did not converge in {max_iter} steps (residual {res:.3e})")


def fit_linear_svm(X, y, sample_weights=None, feature_weights=None, C: float = 1.0,
                   tol: float = 1e-9, max_iter: int = 200) -> TrainedLinear:
    """L2-regularised hinge loss with an unpenalised intercept.

    ``y`` is in {-1, +1}. Sample weights multiply the per-row loss (box ``C * s_i``);
    rows of weight zero are left out. The primal QP is solved by a deterministic
    interior-point method to residuals and complementarity below ``tol``.
    """
    if not C > 0:
        raise ValueError("C must be positive")
    X, sw = _validate(X, sample_weights)
    y = np.asarray(y, dtype=np.float64)
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("y must be in {-1, +1}")
    fw = np.ones(X.shape[1]) if feature_weights is None else np.asarray(feature_weights, dtype=np.float64)
    if fw.shape != (X.shape[1],) or not np.all(np.isfinite(fw)) or np.any(fw < 0):
        raise ValueError("feature weights must be finite and non-negative")
    keep = sw > 0
    if len(np.unique(y[keep])) < 2:
        raise ValueError("both classes need positive sample weight")
    Xs = scale_features(X, fw)
    w, b, alpha, iters, res = _svm_ipm(Xs[keep], y[keep], C * sw[keep], tol, max_iter)
    margins = 1.0 - y * (Xs @ w + b)
    primal = 0.5 * w @ w + C * np.sum(sw * np.maximum(margins, 0.0))
    diag = {"iterations": int(iters), "residual": float(res),
            "primal_objective": float(primal), "dual_objective": float(alpha.sum() - 0.5 * w @ w)}
    return TrainedLinear(w, float(b), HINGE, float(C), fw, diag)


def linear_decision(model: TrainedLinear, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(model.coefficients):
        raise ValueError(f"expected {len(model.coefficients)} columns")
    return scale_features(X, model.feature_scaling_applied) @ model.coefficients + model.intercept


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _logistic_parts(Xa, y, sw, beta, lam):
    # objective: mean_s[log(1+exp(-y~ eta))] + lam/2 ||w||^2 (intercept unpenalised)
    eta = Xa @ beta
    ys = 2.0 * y - 1.0
    loss = np.logaddexp(0.0, -ys * eta)
    p = _sigmoid(eta)
    pen = beta.copy()
    pen[-1] = 0.0
    f = sw @ loss + 0.5 * lam * pen @ pen
    grad = Xa.T @ (sw * (p - y)) + lam * pen
    return f, grad, p


def fit_logistic(X, y, sample_weights=None, C: float = 1.0, tol: float = 1e-8,
                 max_iter: int = 200) -> TrainedLinear:
    """Weighted L2-penalised logistic regression by damped Newton steps.

    The objective is normalised by the total sample weight, so the penalty is
    ``||w||^2 / (2 C sum(s))`` and ``tol`` bounds the gradient norm of that objective.
    """
    if not C > 0:
        raise ValueError("C must be positive")
    X, sw = _validate(X, sample_weights)
    y = np.asarray(y, dtype=np.float64)
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise ValueError("y must be in {0, 1}")
    total = sw.sum()
    sw = sw / total
    lam = 1.0 / (C * total)
    n = X.shape[1]
    Xa = np.hstack([X, np.ones((len(X), 1))])
    beta = np.zeros(n + 1)
    reg = np.full(n + 1, lam)
    reg[-1] = 0.0
    f, g, p = _logistic_parts(Xa, y, sw, beta, lam)
    gnorm = float(np.linalg.norm(g))
    it = 0
    while gnorm > tol:
        if it >= max_iter:
            raise LogisticConvergenceError(gnorm, it)
        h = sw * p * (1.0 - p)
        H = (Xa * h[:, None]).T @ Xa + np.diag(reg)
        H[-1, -1] += 1e-12
        step = np.linalg.solve(H, g)
        t = 1.0
        while True:
            cand = beta - t * step
            f_new, g_new, p_new = _logistic_parts(Xa, y, sw, cand, lam)
            if f_new <= f - 1e-4 * t * (g @ step) or t < 1e-10:
                break
            t *= 0.5
        beta, f, g, p = cand, f_new, g_new, p_new
        gnorm = float(np.linalg.norm(g))
        it += 1
    diag = {"newton_steps": it, "grad_norm": gnorm, "objective": float(f)}
    return TrainedLinear(beta[:-1].copy(), float(beta[-1]), LOGISTIC, float(C), np.ones(n), diag)


def logistic_proba(model: TrainedLinear, X) -> np.ndarray:
    return _sigmoid(linear_decision(model, X))
