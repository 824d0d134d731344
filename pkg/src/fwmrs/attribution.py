"""Feature attributions for domain classifiers and the temperatured softmin.

Interventional TreeSHAP follows the per-(row, background row) recursion: at a node
where the explained row and the background row go different ways, the explained
row's branch needs the split feature in the coalition and the background row's branch
needs it out. A leaf reached with required-in set A and required-out set B pays
``v * |A-1|! |B|! / (|A|+|B|)!`` to every feature in A and minus
``v * |A|! |B-1|! / (|A|+|B|)!`` to every feature in B.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

from .forest import TrainedForest
from .linear import TrainedLinear, scale_features

TREE_SHAP = "tree_shap_interventional"
LINEAR_SHAP = "linear_shap"

# n_explain * n_background * n_nodes above which exact computation is refused
EXACT_BUDGET = 5e10


class AttributionBudgetError(RuntimeError):
    pass


@dataclass(frozen=True)
class FeatureImportances:
    values: np.ndarray
    method: str
    n_background: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("importances must be finite and non-negative")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class FeatureWeights:
    values: np.ndarray
    temperature: float


def _factorials(n):
    return np.array([math.factorial(i) for i in range(n + 1)], dtype=np.float64)


# recursive jitted functions cannot be cached reliably
@njit
def _shap_recurse(node, base, feature, threshold, left, right, value, x, z,
                  state, path, plen, n_in, n_out, fact, phi):
    f = feature[base + node]
    if f < 0:
        if plen == 0:
            return
        v = value[base + node]
        total = fact[n_in + n_out]
        w_in = 0.0
        w_out = 0.0
        if n_in > 0:
            w_in = fact[n_in - 1] * fact[n_out] / total
        if n_out > 0:
            w_out = fact[n_in] * fact[n_out - 1] / total
        for i in range(plen):
            g = path[i]
            if state[g] == 1:
                phi[g] += v * w_in
            else:
                phi[g] -= v * w_out
        return
    t = threshold[base + node]
    x_left = x[f] <= t
    z_left = z[f] <= t
    if x_left == z_left:
        child = left[base + node] if x_left else right[base + node]
        _shap_recurse(child, base, feature, threshold, left, right, value, x, z,
                      state, path, plen, n_in, n_out, fact, phi)
        return
    x_child = left[base + node] if x_left else right[base + node]
    z_child = right[base + node] if x_left else left[base + node]
    s = state[f]
    if s == 1:
        _shap_recurse(x_child, base, feature, threshold, left, right, value, x, z,
                      state, path, plen, n_in, n_out, fact, phi)
    elif s == 2:
        _shap_recurse(z_child, base, feature, threshold, left, right, value, x, z,
                      state, path, plen, n_in, n_out, fact, phi)
    else:
        path[plen] = f
        state[f] = 1
        _shap_recurse(x_child, base, feature, threshold, left, right, value, x, z,
                      state, path, plen + 1, n_in + 1, n_out, fact, phi)
        state[f] = 2
        _shap_recurse(z_child, base, feature, threshold, left, right, value, x, z,
                      state, path, plen + 1, n_in, n_out + 1, fact, phi)
        state[f] = 0


@njit
def _recursive_tree_shap(feature, threshold, left, right, value, base, X, Z, fact, out):
    n_feat = X.shape[1]
    state = np.zeros(n_feat, dtype=np.int64)
    path = np.zeros(n_feat, dtype=np.int64)
    for i in range(X.shape[0]):
        phi = out[i]
        for b in range(Z.shape[0]):
            _shap_recurse(0, base, feature, threshold, left, right, value,
                          X[i], Z[b], state, path, 0, 0, 0, fact, phi)


@njit(cache=True)
def _max_path_features(feature, left, right, base, n_nodes, n_feat):
    # (largest number of distinct split features on a root-to-leaf path, tree depth)
    best = 0
    deepest = 0
    stack = np.empty(n_nodes, dtype=np.int64)
    depth_of = np.zeros(n_nodes, dtype=np.int64)
    parent = np.full(n_nodes, -1, dtype=np.int64)
    seen = np.zeros(n_feat, dtype=np.int64)
    sp = 0
    stack[sp] = 0
    sp += 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        f = feature[base + node]
        if f < 0:
            seen[:] = 0
            cnt = 0
            q = parent[node]
            while q >= 0:
                g = feature[base + q]
                if seen[g] == 0:
                    seen[g] = 1
                    cnt += 1
                q = parent[q]
            if cnt > best:
                best = cnt
            if depth_of[node] > deepest:
                deepest = depth_of[node]
            continue
        for child in (left[base + node], right[base + node]):
            parent[child] = node
            depth_of[child] = depth_of[node] + 1
            stack[sp] = child
            sp += 1
    return best, deepest


@njit(cache=True)
def _popcount(v):
    c = 0
    while v:
        v &= v - 1
        c += 1
    return c


@njit(cache=True)
def _leaf_pattern_tree_shap(feature, threshold, left, right, value, base, n_nodes, depth, X, Z, fact, out):
    # Along the path to a leaf, a row "satisfies" a path feature when it meets every
    # split constraint on that feature. Bit j of a row's mask records this for the
    # j-th distinct path feature. A (row, background) pair reaches the leaf iff the
    # OR of their masks is full; A = row-only bits, B = background-only bits.
    n_x, n_feat = X.shape
    n_z = Z.shape[0]
    max_depth = depth + 1
    xmask = np.empty((max_depth, n_x), dtype=np.int64)
    zmask = np.empty((max_depth, n_z), dtype=np.int64)
    xmask[0, :] = -1
    zmask[0, :] = -1
    pos_of = np.full(n_feat, -1, dtype=np.int64)
    path_feat = np.empty(64, dtype=np.int64)
    path_added = np.empty(64, dtype=np.int64)
    plen = 0

    st_node = np.empty(n_nodes, dtype=np.int64)
    st_parent = np.empty(n_nodes, dtype=np.int64)
    st_left = np.empty(n_nodes, dtype=np.bool_)
    st_depth = np.empty(n_nodes, dtype=np.int64)
    sp = 0
    st_node[0] = 0
    st_parent[0] = -1
    st_left[0] = True
    st_depth[0] = 0
    sp = 1
    contrib = np.zeros(64, dtype=np.float64)
    while sp > 0:
        sp -= 1
        node = st_node[sp]
        par = st_parent[sp]
        went_left = st_left[sp]
        d = st_depth[sp]
        # unwind path features introduced at depth >= d
        while plen > 0 and path_added[plen - 1] >= d:
            pos_of[path_feat[plen - 1]] = -1
            plen -= 1
        if par >= 0:
            f = feature[base + par]
            t = threshold[base + par]
            p = pos_of[f]
            if p < 0:
                p = plen
                pos_of[f] = p
                path_feat[p] = f
                path_added[p] = d
                plen += 1
            clear = ~(np.int64(1) << p)
            for i in range(n_x):
                m = xmask[d - 1, i]
                if (X[i, f] <= t) != went_left:
                    m &= clear
                xmask[d, i] = m
            for i in range(n_z):
                m = zmask[d - 1, i]
                if (Z[i, f] <= t) != went_left:
                    m &= clear
                zmask[d, i] = m
        f = feature[base + node]
        if f >= 0:
            st_node[sp] = right[base + node]
            st_parent[sp] = node
            st_left[sp] = False
            st_depth[sp] = d + 1
            sp += 1
            st_node[sp] = left[base + node]
            st_parent[sp] = node
            st_left[sp] = True
            st_depth[sp] = d + 1
            sp += 1
            continue
        if plen == 0:
            continue
        v = value[base + node]
        full = (np.int64(1) << plen) - 1
        zm = np.sort(zmask[d] & full)
        # distinct background patterns with multiplicities
        nzp = 0
        zpat = np.empty(n_z, dtype=np.int64)
        zcnt = np.empty(n_z, dtype=np.float64)
        for i in range(n_z):
            if nzp > 0 and zpat[nzp - 1] == zm[i]:
                zcnt[nzp - 1] += 1.0
            else:
                zpat[nzp] = zm[i]
                zcnt[nzp] = 1.0
                nzp += 1
        xm = xmask[d] & full
        order = np.argsort(xm)
        g = 0
        while g < n_x:
            px = xm[order[g]]
            h = g
            while h < n_x and xm[order[h]] == px:
                h += 1
            any_c = False
            for j in range(plen):
                contrib[j] = 0.0
            for q in range(nzp):
                pz = zpat[q]
                if (px | pz) != full:
                    continue
                a = px & ~pz
                b = pz & ~px
                na = _popcount(a)
                nb = _popcount(b)
                if na + nb == 0:
                    continue
                tot = fact[na + nb]
                w_in = fact[na - 1] * fact[nb] / tot if na > 0 else 0.0
                w_out = fact[na] * fact[nb - 1] / tot if nb > 0 else 0.0
                for j in range(plen):
                    bit = np.int64(1) << j
                    if a & bit:
                        contrib[j] += zcnt[q] * w_in
                    elif b & bit:
                        contrib[j] -= zcnt[q] * w_out
                any_c = True
            if any_c:
                for r in range(g, h):
                    i = order[r]
                    for j in range(plen):
                        if contrib[j] != 0.0:
                            out[i, path_feat[j]] += v * contrib[j]
            g = h


def _forest_shap(model, X, Z, fact):
    out = np.zeros(X.shape, dtype=np.float64)
    for t in range(model.n_trees):
        s = model.tree_slice(t)
        n_nodes = s.stop - s.start
        widest, depth = _max_path_features(model.feature, model.left, model.right, s.start, n_nodes,
                                           X.shape[1])
        args = (model.feature, model.threshold, model.left, model.right, model.value, s.start)
        if widest <= 62:
            _leaf_pattern_tree_shap(*args, n_nodes, depth, X, Z, fact, out)
        else:
            _recursive_tree_shap(*args, X, Z, fact, out)
    return out / (model.n_trees * Z.shape[0])


def tree_shap_interventional(model: TrainedForest, X_explain, background) -> np.ndarray:
    """Exact interventional Shapley values of ``forest_predict_proba``.

    Rows of the result sum to ``f(x) - mean_b f(background_b)``.
    """
    X = np.ascontiguousarray(X_explain, dtype=np.float64)
    Z = np.ascontiguousarray(background, dtype=np.float64)
    if Z.ndim != 2 or len(Z) == 0:
        raise ValueError("background must be a non-empty matrix")
    if X.shape[1] != model.n_features or Z.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} columns")
    cost = float(len(X)) * len(Z) * len(model.feature)
    if cost > EXACT_BUDGET:
        raise AttributionBudgetError(
            f"exact interventional SHAP would visit ~{cost:.2g} nodes; "
            "subsample the background or explanation rows"
        )
    fact = _factorials(model.n_features + 1)
    return _forest_shap(model, X, Z, fact)


def linear_shap(model: TrainedLinear, X_explain, background) -> np.ndarray:
    """``coef_j * (x_ij - mean(background_j))`` on feature-scaled inputs."""
    X = scale_features(np.asarray(X_explain, dtype=np.float64), model.feature_scaling_applied)
    Z = scale_features(np.asarray(background, dtype=np.float64), model.feature_scaling_applied)
    if len(Z) == 0:
        raise ValueError("background must be non-empty")
    return model.coefficients[None, :] * (X - Z.mean(axis=0)[None, :])


def global_importance(attributions, method: str = TREE_SHAP, n_background: int = 0) -> FeatureImportances:
    A = np.asarray(attributions, dtype=np.float64)
    if A.ndim != 2 or len(A) == 0:
        raise ValueError("attributions must be a non-empty matrix")
    return FeatureImportances(np.abs(A).mean(axis=0), method, n_background)


def softmin_weights(importances, t: float) -> FeatureWeights:
    """``exp(-I_i / t) / sum_j exp(-I_j / t)``, shifted by ``min(I)`` for stability."""
    if not t > 0:
        raise ValueError("temperature must be positive")
    I = np.asarray(getattr(importances, "values", importances), dtype=np.float64)
    z = -(I - I.min()) / t
    e = np.exp(z)
    return FeatureWeights(e / e.sum(), float(t))


def write_importances_csv(path, feature_names: Sequence[str], importances: FeatureImportances,
                          weights: FeatureWeights) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature_name", "importance", "weight"])
        for name, imp, w in zip(feature_names, importances.values, weights.values):
            writer.writerow([name, repr(float(imp)), repr(float(w))])
