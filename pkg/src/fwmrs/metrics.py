"""Evaluation mathematics: weighted kernel/MMD, AUROC, 0-1 bias-variance,
corrected repeated-CV t-test and Benjamini-Hochberg adjustment."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.spatial.distance import pdist

SIGMA_EXACT_ROWS = 2000


@dataclass(frozen=True)
class MmdInputs:
    X: np.ndarray
    Y: np.ndarray
    w_X: np.ndarray
    w_Y: np.ndarray
    w_f: np.ndarray
    sigma: float

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        Y = np.atleast_2d(np.asarray(self.Y, dtype=np.float64))
        if X.shape[1] != Y.shape[1]:
            raise ValueError("X and Y must have the same number of columns")
        for name, w, k in (("w_X", self.w_X, len(X)), ("w_Y", self.w_Y, len(Y))):
            w = np.asarray(w, dtype=np.float64)
            if w.shape != (k,) or np.any(w < 0) or w.sum() <= 0:
                raise ValueError(f"{name} must be non-negative with positive sum")
        w_f = np.asarray(self.w_f, dtype=np.float64)
        if w_f.shape != (X.shape[1],) or np.any(w_f < 0):
            raise ValueError("w_f must be non-negative, one entry per column")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    df: int
    corrected: bool


def weighted_rbf(x, y, w_f, sigma: float) -> float:
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    return float(np.exp(-np.sum(np.asarray(w_f) * d * d) / (2.0 * sigma ** 2)))


def weighted_rbf_matrix(A, B, w_f, sigma: float) -> np.ndarray:
    s = np.sqrt(np.asarray(w_f, dtype=np.float64))
    A = np.asarray(A, dtype=np.float64) * s
    B = np.asarray(B, dtype=np.float64) * s
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-sq / (2.0 * sigma ** 2))


def sigma_heuristic(X, Y, seed: int = 0) -> float:
    """Mean Euclidean distance over all pairs of the pooled rows.

    Above 2000 pooled rows the mean is taken over a seeded 2000-row subsample.
    A zero mean distance falls back to 1.0 with a warning.
    """
    Z = np.vstack([np.atleast_2d(X), np.atleast_2d(Y)]).astype(np.float64)
    if len(Z) < 2:
        raise ValueError("need at least two rows")
    if len(Z) > SIGMA_EXACT_ROWS:
        rng = np.random.default_rng(seed)
        Z = Z[rng.choice(len(Z), SIGMA_EXACT_ROWS, replace=False)]
    sigma = float(pdist(Z).mean())
    if sigma <= 0:
        warnings.warn("all rows identical; using sigma = 1", RuntimeWarning, stacklevel=2)
        return 1.0
    return sigma


def weighted_mmd(inputs: MmdInputs) -> float:
    """Square root of the weighted kernel quadratic form, sample weights normalised to
    unit mass per set and a negative round-off clamped to zero."""
    wx = np.asarray(inputs.w_X, dtype=np.float64)
    wy = np.asarray(inputs.w_Y, dtype=np.float64)
    wx = wx / wx.sum()
    wy = wy / wy.sum()
    kxx = weighted_rbf_matrix(inputs.X, inputs.X, inputs.w_f, inputs.sigma)
    kxy = weighted_rbf_matrix(inputs.X, inputs.Y, inputs.w_f, inputs.sigma)
    kyy = weighted_rbf_matrix(inputs.Y, inputs.Y, inputs.w_f, inputs.sigma)
    q = wx @ kxx @ wx - 2.0 * wx @ kxy @ wy + wy @ kyy @ wy
    return float(np.sqrt(max(q, 0.0)))


def auroc(scores_pos, scores_neg) -> float:
    """Mann-Whitney U / (n_pos * n_neg); ties count one half."""
    pos = np.asarray(scores_pos, dtype=np.float64).ravel()
    neg = np.asarray(scores_neg, dtype=np.float64).ravel()
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("both score sets must be non-empty")
    ranks = stats.rankdata(np.concatenate([pos, neg]))
    u = ranks[: len(pos)].sum() - len(pos) * (len(pos) + 1) / 2.0
    return float(u / (len(pos) * len(neg)))


def auroc_labels(y, scores) -> float:
    y = np.asarray(y)
    scores = np.asarray(scores)
    return auroc(scores[y == 1], scores[y == 0])


def bias_variance_01(predictions, truth):
    """Domingos decomposition of 0-1 loss over runs (rows of ``predictions``).

    The main prediction is the per-column mode; ties go to class 1.
    """
    P = np.atleast_2d(np.asarray(predictions))
    truth = np.asarray(truth).ravel()
    if P.shape[1] != len(truth):
        raise ValueError("one prediction column per test row expected")
    main = (P.mean(axis=0) >= 0.5).astype(int)
    bias = float(np.mean(main != truth))
    variance = float(np.mean(P != main[None, :]))
    return bias, variance


def corrected_ttest(diffs, k: int, repeats: int, test_fraction=None) -> TestResult:
    """Repeated k-fold CV t-test with the Nadeau-Bengio variance correction.

    ``t = mean / sqrt((1/(k*r) + rho/(1-rho)) * var)``, ``rho`` the test share
    (default ``1/k``), df ``k*r - 1``. Zero variance gives p = 1 for a zero mean and
    p = 0 otherwise.
    """
    d = np.asarray(diffs, dtype=np.float64).ravel()
    n = k * repeats
    if len(d) != n or n < 2:
        raise ValueError(f"expected {n} >= 2 differences, got {len(d)}")
    rho = 1.0 / k if test_fraction is None else float(test_fraction)
    mean = d.mean()
    var = d.var(ddof=1)
    df = n - 1
    if var == 0:
        return TestResult(0.0 if mean == 0 else float(np.sign(mean) * np.inf),
                          1.0 if mean == 0 else 0.0, df, True)
    t = mean / np.sqrt((1.0 / n + rho / (1.0 - rho)) * var)
    p = 2.0 * stats.t.sf(abs(t), df)
    return TestResult(float(t), float(min(1.0, p)), df, True)


def benjamini_hochberg(p_values, alpha: float = 0.05):
    """Step-up adjusted p-values in input order and the rejection mask."""
    p = np.asarray(p_values, dtype=np.float64).ravel()
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    m = len(p)
    if m == 0:
        return p.copy(), np.zeros(0, dtype=bool)
    order = np.argsort(p, kind="mergesort")
    scaled = p[order] * m / np.arange(1, m + 1)
    adjusted_sorted = np.minimum(np.minimum.accumulate(scaled[::-1])[::-1], 1.0)
    adjusted = np.empty(m)
    adjusted[order] = adjusted_sorted
    # m * p / m can round below p
    np.maximum(adjusted, p, out=adjusted)
    return adjusted, adjusted <= alpha
