"""Seeded synthetic (N, R) pairs with known shift structure."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class SyntheticPair:
    N: np.ndarray
    R: np.ndarray
    N_labels: np.ndarray
    R_labels: np.ndarray
    shifted: tuple


def _labels(X, rng):
    # a noisy linear concept shared by both sets
    score = X[:, : min(3, X.shape[1])].sum(axis=1) + 0.5 * rng.standard_normal(len(X))
    return (score > 0).astype(np.int64)


def iid_halves(seed: int, m: int = 400, n: int = 5) -> SyntheticPair:
    """One Gaussian sample of ``m`` rows split at random into two halves."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((m, n))
    y = _labels(X, rng)
    perm = rng.permutation(m)
    a, b = perm[: m // 2], perm[m // 2:]
    return SyntheticPair(X[a], X[b], y[a], y[b], ())


def one_shifted_feature(seed: int, m_N: int = 200, m_R: int = 200, n: int = 10,
                        shift: float = 2.0, feature: int = 0,
                        noise_shift: Optional[float] = None) -> SyntheticPair:
    """R ~ N(0, I); N has column ``feature`` shifted by ``shift``.

    ``noise_shift`` optionally shifts every other column by a small common amount.
    """
    if not 0 <= feature < n:
        raise ValueError("feature out of range")
    rng = np.random.default_rng(seed)
    R = rng.standard_normal((m_R, n))
    N = rng.standard_normal((m_N, n))
    N[:, feature] += shift
    if noise_shift:
        others = [j for j in range(n) if j != feature]
        N[:, others] += noise_shift
    return SyntheticPair(N, R, _labels(N, rng), _labels(R, rng), (feature,))
