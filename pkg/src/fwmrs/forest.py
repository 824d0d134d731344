"""Random forest with per-sample and per-feature weights.

Sample weights enter through the bootstrap (rows are drawn with probability
proportional to their weight, so weight-0 rows never reach a tree); feature weights
decide which features are offered as split candidates at each node.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

FORMAT_VERSION = 1


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 200
    min_weight_fraction_leaf: float = 0.0
    mtry: Optional[int] = None
    max_depth: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if not 0.0 <= self.min_weight_fraction_leaf < 0.5:
            raise ValueError("min_weight_fraction_leaf must be in [0, 0.5)")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be >= 1")


@dataclass
class TrainedForest:
    """Flat node arrays for all trees; ``offsets[t]`` is the first node of tree ``t``.

    Child indices are local to their tree. Leaves have ``feature == -1``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    leaf_w0: np.ndarray
    leaf_w1: np.ndarray
    offsets: np.ndarray
    n_features: int
    feature_weights_used: np.ndarray
    config: ForestConfig = field(default_factory=ForestConfig)

    @property
    def n_trees(self) -> int:
        return len(self.offsets)

    def tree_slice(self, t: int) -> slice:
        end = self.offsets[t + 1] if t + 1 < len(self.offsets) else len(self.feature)
        return slice(self.offsets[t], end)

    def to_dict(self) -> dict:
        return {
            "format": "fwmrs.forest",
            "version": FORMAT_VERSION,
            "n_features": self.n_features,
            "config": self.config.__dict__,
            "feature_weights_used": self.feature_weights_used.tolist(),
            "offsets": self.offsets.tolist(),
            "nodes": {
                name: getattr(self, name).tolist()
                for name in ("feature", "threshold", "left", "right", "value", "leaf_w0", "leaf_w1")
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainedForest":
        if doc.get("format") != "fwmrs.forest" or doc.get("version") != FORMAT_VERSION:
            raise ValueError("not a version-1 forest document")
        nodes = doc["nodes"]
        ints = {"feature", "left", "right"}
        arrays = {k: np.asarray(v, dtype=np.int64 if k in ints else np.float64) for k, v in nodes.items()}
        return cls(
            offsets=np.asarray(doc["offsets"], dtype=np.int64),
            n_features=int(doc["n_features"]),
            feature_weights_used=np.asarray(doc["feature_weights_used"], dtype=np.float64),
            config=ForestConfig(**doc["config"]),
            **arrays,
        )


@njit(cache=True)
def _sample_features(fw, cum_f, n_cand, chosen, picked):
    """Draw ``n_cand`` distinct indices, each proportional to ``fw`` among those not
    yet drawn; this is the distribution of the Efraimidis-Spirakis top keys.

    A draw first tries rejection against the full cumulative weights; once the try
    budget is spent it scans the remaining indices exactly. ``chosen`` must be all
    False on entry and is restored on exit.
    """
    n = len(fw)
    total = cum_f[-1]
    max_tries = 4 * n_cand + 8
    tries = 0
    n_top = 0
    while n_top < n_cand:
        if tries < max_tries:
            tries += 1
            i = np.searchsorted(cum_f, np.random.random() * total, side="right")
            if i >= n:
                i = n - 1
            if chosen[i]:
                continue
        else:
            rem = 0.0
            for q in range(n):
                if not chosen[q]:
                    rem += fw[q]
            u = np.random.random() * rem
            acc = 0.0
            i = -1
            for q in range(n):
                if not chosen[q]:
                    acc += fw[q]
                    i = q
                    if acc > u:
                        break
        chosen[i] = True
        picked[n_top] = i
        n_top += 1
    for q in range(n_cand):
        chosen[picked[q]] = False


@njit(cache=True)
def sample_features_seeded(fw, n_cand, seed):
    """Standalone entry to the split-candidate sampler (for checking its law)."""
    np.random.seed(seed)
    picked = np.empty(n_cand, dtype=np.int64)
    _sample_features(fw, np.cumsum(fw), n_cand, np.zeros(len(fw), dtype=np.bool_), picked)
    return picked


@njit(cache=True)
def _build_tree(codes_t, uvals, nuniq, y, pos_rows, cum_w, n_draws, fweights, mtry,
                min_leaf_frac, max_depth, seed):
    # codes_t is feature-major: codes_t[f, row] is the rank of row's value in column f
    np.random.seed(seed)
    m = codes_t.shape[1]

    # weighted bootstrap over rows with positive sample weight
    w = np.zeros(m, dtype=np.float64)
    total = cum_w[-1]
    for _ in range(n_draws):
        i = np.searchsorted(cum_w, np.random.random() * total, side="right")
        if i >= len(pos_rows):
            i = len(pos_rows) - 1
        w[pos_rows[i]] += 1.0
    n_unique = 0
    for i in range(len(pos_rows)):
        if w[pos_rows[i]] > 0:
            n_unique += 1
    # order holds data-row indices of the in-bag rows, partitioned node by node
    order = np.empty(n_unique, dtype=np.int64)
    j = 0
    for i in range(len(pos_rows)):
        if w[pos_rows[i]] > 0:
            order[j] = pos_rows[i]
            j += 1
    min_leaf_w = min_leaf_frac * n_draws

    cap = 2 * n_unique + 1
    feat = np.full(cap, -1, dtype=np.int64)
    thr = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    val = np.zeros(cap, dtype=np.float64)
    lw0 = np.zeros(cap, dtype=np.float64)
    lw1 = np.zeros(cap, dtype=np.float64)

    positive_feats = np.flatnonzero(fweights > 0)
    n_pos_feats = len(positive_feats)
    n_cand = min(mtry, n_pos_feats)
    fw_pos = fweights[positive_feats]
    cum_f = np.cumsum(fw_pos)
    chosen = np.zeros(n_pos_feats, dtype=np.bool_)
    picked = np.empty(n_cand, dtype=np.int64)
    cand = np.empty(n_cand, dtype=np.int64)
    maxu = uvals.shape[1]
    h0 = np.zeros(maxu, dtype=np.float64)
    h1 = np.zeros(maxu, dtype=np.float64)
    node_codes = np.empty(n_unique, dtype=np.int64)

    stack_node = np.empty(cap, dtype=np.int64)
    stack_start = np.empty(cap, dtype=np.int64)
    stack_end = np.empty(cap, dtype=np.int64)
    stack_depth = np.empty(cap, dtype=np.int64)
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = n_unique
    stack_depth[0] = 0
    sp = 1
    n_nodes = 1

    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        start = stack_start[sp]
        end = stack_end[sp]
        depth = stack_depth[sp]
        cnt = end - start

        w0 = 0.0
        w1 = 0.0
        for p in range(start, end):
            r = order[p]
            if y[r] == 1:
                w1 += w[r]
            else:
                w0 += w[r]
        wn = w0 + w1
        lw0[node] = w0
        lw1[node] = w1
        val[node] = w1 / wn

        if w0 == 0.0 or w1 == 0.0 or (max_depth >= 0 and depth >= max_depth) or wn < 2.0 * min_leaf_w:
            continue

        if n_cand == n_pos_feats:
            for q in range(n_cand):
                cand[q] = positive_feats[q]
        else:
            _sample_features(fw_pos, cum_f, n_cand, chosen, picked)
            for q in range(n_cand):
                cand[q] = positive_feats[picked[q]]
            cand.sort()

        best_score = np.inf
        best_f = -1
        best_t = 0.0
        for f in cand:
            nu = nuniq[f]
            if nu < 2:
                continue
            if cnt * 8 < nu:
                # few rows: sort their codes
                for p in range(cnt):
                    node_codes[p] = codes_t[f, order[start + p]]
                srt = np.argsort(node_codes[:cnt], kind="mergesort")
                a0 = 0.0
                a1 = 0.0
                for p in range(cnt - 1):
                    r = order[start + srt[p]]
                    if y[r] == 1:
                        a1 += w[r]
                    else:
                        a0 += w[r]
                    c_lo = node_codes[srt[p]]
                    c_hi = node_codes[srt[p + 1]]
                    if c_lo == c_hi:
                        continue
                    wl = a0 + a1
                    wr = wn - wl
                    if wl < min_leaf_w or wr < min_leaf_w:
                        continue
                    b0 = w0 - a0
                    b1 = w1 - a1
                    score = 2.0 * a0 * a1 / wl + 2.0 * b0 * b1 / wr
                    if score < best_score - 1e-12:
                        best_score = score
                        best_f = f
                        best_t = _midpoint(uvals[f, c_lo], uvals[f, c_hi])
            else:
                # class-weight histogram over the feature's distinct values
                for b in range(nu):
                    h0[b] = 0.0
                    h1[b] = 0.0
                for p in range(start, end):
                    r = order[p]
                    c = codes_t[f, r]
                    if y[r] == 1:
                        h1[c] += w[r]
                    else:
                        h0[c] += w[r]
                a0 = 0.0
                a1 = 0.0
                prev = -1
                for b in range(nu):
                    if h0[b] == 0.0 and h1[b] == 0.0:
                        continue
                    if prev >= 0:
                        wl = a0 + a1
                        wr = wn - wl
                        if wl >= min_leaf_w and wr >= min_leaf_w:
                            b0 = w0 - a0
                            b1 = w1 - a1
                            score = 2.0 * a0 * a1 / wl + 2.0 * b0 * b1 / wr
                            if score < best_score - 1e-12:
                                best_score = score
                                best_f = f
                                best_t = _midpoint(uvals[f, prev], uvals[f, b])
                    a0 += h0[b]
                    a1 += h1[b]
                    prev = b
        if best_f < 0:
            continue

        # partition order[start:end] in place: <= threshold goes left
        i = start
        k = end - 1
        while i <= k:
            if uvals[best_f, codes_t[best_f, order[i]]] <= best_t:
                i += 1
            else:
                tmp = order[i]
                order[i] = order[k]
                order[k] = tmp
                k -= 1
        mid = i
        feat[node] = best_f
        thr[node] = best_t
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack_node[sp] = n_nodes + 1
        stack_start[sp] = mid
        stack_end[sp] = end
        stack_depth[sp] = depth + 1
        sp += 1
        stack_node[sp] = n_nodes
        stack_start[sp] = start
        stack_end[sp] = mid
        stack_depth[sp] = depth + 1
        sp += 1
        n_nodes += 2

    return (feat[:n_nodes], thr[:n_nodes], left[:n_nodes], right[:n_nodes],
            val[:n_nodes], lw0[:n_nodes], lw1[:n_nodes])


@njit(cache=True)
def _midpoint(lo, hi):
    t = 0.5 * (lo + hi)
    if t >= hi:
        t = lo
    return t


def encode_columns(X: np.ndarray):
    """Per-column rank codes, sorted distinct values (row-padded) and distinct counts."""
    m, n = X.shape
    codes = np.empty((m, n), dtype=np.int64)
    uniques = []
    for j in range(n):
        u, inv = np.unique(X[:, j], return_inverse=True)
        codes[:, j] = inv
        uniques.append(u)
    nuniq = np.array([len(u) for u in uniques], dtype=np.int64)
    uvals = np.full((n, max(1, nuniq.max(initial=1))), np.inf)
    for j, u in enumerate(uniques):
        uvals[j, : len(u)] = u
    return codes, uvals, nuniq


@njit(cache=True)
def _predict(feature, threshold, left, right, value, offsets, X):
    n_trees = len(offsets)
    out = np.zeros(X.shape[0], dtype=np.float64)
    for i in range(X.shape[0]):
        s = 0.0
        for t in range(n_trees):
            base = offsets[t]
            node = base
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = base + left[node]
                else:
                    node = base + right[node]
            s += value[node]
        out[i] = s / n_trees
    return out


def _check_weights(w, n, what):
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (n,):
        raise ValueError(f"{what} must have length {n}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError(f"{what} must be finite and non-negative")
    if w.sum() <= 0:
        raise ValueError(f"all {what} are zero")
    return w


def tree_seeds(seed: int, n: int) -> np.ndarray:
    return np.random.SeedSequence(seed).generate_state(n, dtype=np.uint32).astype(np.int64)


def fit_forest(X, y, sample_weights=None, feature_weights=None, cfg: ForestConfig = ForestConfig()) -> TrainedForest:
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    m, n = X.shape
    if y.shape != (m,):
        raise ValueError("y must have one entry per row")
    sw = _check_weights(np.ones(m) if sample_weights is None else sample_weights, m, "sample weights")
    fw = _check_weights(np.ones(n) if feature_weights is None else feature_weights, n, "feature weights")
    fw = fw / fw.sum()

    pos_rows = np.flatnonzero(sw > 0)
    cum_w = np.cumsum(sw[pos_rows])
    mtry = cfg.mtry if cfg.mtry is not None else int(math.ceil(math.sqrt(n)))
    max_depth = -1 if cfg.max_depth is None else int(cfg.max_depth)

    codes, uvals, nuniq = encode_columns(X)
    codes_t = np.ascontiguousarray(codes.T)
    parts = []
    for seed in tree_seeds(cfg.seed, cfg.n_trees):
        parts.append(_build_tree(codes_t, uvals, nuniq, y, pos_rows, cum_w, len(pos_rows), fw, mtry,
                                 float(cfg.min_weight_fraction_leaf), max_depth, int(seed)))
    sizes = np.array([len(p[0]) for p in parts], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
    cols = [np.concatenate([p[i] for p in parts]) for i in range(7)]
    return TrainedForest(*cols, offsets=offsets, n_features=n, feature_weights_used=fw, config=cfg)


def forest_predict_proba(model: TrainedForest, X) -> np.ndarray:
    """Mean over trees of the leaf's class-1 weight fraction."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} columns")
    return _predict(model.feature, model.threshold, model.left, model.right, model.value, model.offsets, X)


def tree_predict(model: TrainedForest, t: int, X) -> np.ndarray:
    """Prediction of a single tree (leaf class-1 fraction)."""
    s = model.tree_slice(t)
    X = np.ascontiguousarray(X, dtype=np.float64)
    return _predict(model.feature[s], model.threshold[s], model.left[s], model.right[s],
                    model.value[s], np.zeros(1, dtype=np.int64), X)
