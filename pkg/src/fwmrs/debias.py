"""Maximum representative subsampling with optional feature weights.

The loop repeatedly cross-validates a PU domain classifier (N labelled 1, R labelled
0) on the surviving rows of N, stops once the mean out-of-fold AUROC is at most 0.5,
and otherwise zeroes the weights of the ``d`` surviving N rows scored most N-like.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .attribution import (
    LINEAR_SHAP,
    TREE_SHAP,
    FeatureImportances,
    global_importance,
    linear_shap,
    softmin_weights,
    tree_shap_interventional,
)
from .data import DataError, SplitPlan, TabularDataset, derive_seed, make_folds
from .forest import ForestConfig, fit_forest, forest_predict_proba
from .linear import fit_linear_svm, linear_decision
from .metrics import auroc

FOREST = "forest"
LINEAR = "linear"

AUROC_THRESHOLD = "auroc_threshold"
MAX_ITERATIONS = "max_iterations"
SAMPLE_FLOOR = "sample_floor"


@dataclass(frozen=True)
class DebiasConfig:
    variant: str = FOREST
    d: int = 1
    k: int = 5
    t: float = 0.1
    forest: ForestConfig = field(default_factory=ForestConfig)
    C: float = 1.0
    max_iterations: Optional[int] = None
    min_remaining: Optional[int] = None
    seed: int = 0
    n_background: int = 100
    n_explain: int = 2000

    def __post_init__(self):
        if self.variant not in (FOREST, LINEAR):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if not self.t > 0:
            raise ValueError("temperature must be positive")
        if self.min_remaining is not None and self.min_remaining < 2 * self.k:
            raise ValueError("min_remaining must be >= 2k")

    def floor(self) -> int:
        return self.min_remaining if self.min_remaining is not None else max(2 * self.k, 10)

    def iteration_cap(self, m: int) -> int:
        return self.max_iterations if self.max_iterations is not None else math.ceil(m / self.d)


@dataclass
class DebiasResult:
    sample_weights: np.ndarray
    feature_weights: np.ndarray
    auroc_trace: list
    drop_order: list
    stop_reason: str
    importances: Optional[np.ndarray] = None
    config: Optional[DebiasConfig] = None
    method: str = "fwmrs"

    @property
    def n_dropped(self) -> int:
        return len(self.drop_order)

    def to_dict(self, row_ids=None) -> dict:
        doc = {
            "format": "fwmrs.weights",
            "version": 1,
            "method": self.method,
            "sample_weights": self.sample_weights.tolist(),
            "feature_weights": self.feature_weights.tolist(),
            "auroc_trace": list(self.auroc_trace),
            "drop_order": list(self.drop_order),
            "stop_reason": self.stop_reason,
            "importances": None if self.importances is None else self.importances.tolist(),
        }
        if row_ids is not None:
            doc["dropped_row_ids"] = [int(row_ids[i]) for i in self.drop_order]
        if self.config is not None:
            doc["config"] = asdict(self.config)
            doc["seed"] = self.config.seed
        return doc


def pu_fold_auroc(scores_N, scores_R) -> float:
    """AUROC with N as the positive class."""
    return auroc(scores_N, scores_R)


def _matrices(N, R):
    if isinstance(N, TabularDataset) or isinstance(R, TabularDataset):
        if not (isinstance(N, TabularDataset) and isinstance(R, TabularDataset)):
            raise DataError("N and R must both be datasets or both be matrices")
        if not N.same_schema(R):
            raise DataError("N and R have different encoded columns")
        return N.values, R.values
    N = np.asarray(N, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    if N.ndim != 2 or R.ndim != 2 or N.shape[1] != R.shape[1]:
        raise DataError("N and R must be matrices with the same number of columns")
    return N, R


def compute_importances(N, R, cfg: DebiasConfig) -> FeatureImportances:
    """Attributions of an unweighted domain classifier (N = 1, R = 0) on a capped
    explanation set against a capped background, reduced to mean |SHAP|."""
    XN, XR = _matrices(N, R)
    X = np.vstack([XN, XR])
    y = np.concatenate([np.ones(len(XN), dtype=np.int64), np.zeros(len(XR), dtype=np.int64)])
    rng = np.random.default_rng(derive_seed(cfg.seed, 0))
    explain = X if len(X) <= cfg.n_explain else X[np.sort(rng.choice(len(X), cfg.n_explain, replace=False))]
    background = X if len(X) <= cfg.n_background else X[np.sort(rng.choice(len(X), cfg.n_background, replace=False))]
    if cfg.variant == FOREST:
        fcfg = ForestConfig(cfg.forest.n_trees, cfg.forest.min_weight_fraction_leaf, cfg.forest.mtry,
                            cfg.forest.max_depth, derive_seed(cfg.seed, 0, 1))
        model = fit_forest(X, y, cfg=fcfg)
        phi = tree_shap_interventional(model, explain, background)
        return global_importance(phi, TREE_SHAP, len(background))
    model = fit_linear_svm(X, 2 * y - 1, C=cfg.C)
    phi = linear_shap(model, explain, background)
    return global_importance(phi, LINEAR_SHAP, len(background))


def _fold_scores(XN, XR, w_f, cfg: DebiasConfig, fold_seed: int, n_test_idx, r_train, r_test, n_train):
    X = np.vstack([XN[n_train], XR[r_train]])
    y = np.concatenate([np.ones(len(n_train), dtype=np.int64), np.zeros(len(r_train), dtype=np.int64)])
    if cfg.variant == FOREST:
        fcfg = ForestConfig(cfg.forest.n_trees, cfg.forest.min_weight_fraction_leaf, cfg.forest.mtry,
                            cfg.forest.max_depth, fold_seed)
        model = fit_forest(X, y, feature_weights=w_f, cfg=fcfg)
        return forest_predict_proba(model, XN[n_test_idx]), forest_predict_proba(model, XR[r_test])
    # uniform feature weights leave the inputs unscaled
    scaling = w_f * len(w_f)
    model = fit_linear_svm(X, 2 * y - 1, feature_weights=scaling, C=cfg.C)
    return linear_decision(model, XN[n_test_idx]), linear_decision(model, XR[r_test])


def _subsample_loop(XN, XR, w_f, cfg: DebiasConfig):
    m = len(XN)
    floor = cfg.floor()
    if m < floor:
        raise DataError(f"N has {m} rows, fewer than the floor of {floor}")
    if len(XR) < cfg.k:
        raise DataError(f"R has fewer rows than the {cfg.k} folds")
    w_s = np.ones(m)
    trace, drops = [], []
    cap = cfg.iteration_cap(m)
    reason = MAX_ITERATIONS
    for it in range(cap):
        alive = np.flatnonzero(w_s > 0)
        n_folds = make_folds(len(alive), None, SplitPlan(cfg.k, 1, derive_seed(cfg.seed, 1, it, 0), False))[0]
        r_folds = make_folds(len(XR), None, SplitPlan(cfg.k, 1, derive_seed(cfg.seed, 1, it, 1), False))[0]
        p = np.zeros(m)
        total = 0.0
        for f in range(cfg.k):
            n_train, n_test = alive[n_folds[f][0]], alive[n_folds[f][1]]
            r_train, r_test = r_folds[f]
            sN, sR = _fold_scores(XN, XR, w_f, cfg, derive_seed(cfg.seed, 1, it, 2, f),
                                  n_test, r_train, r_test, n_train)
            p[n_test] = sN
            total += pu_fold_auroc(sN, sR) / cfg.k
        trace.append(float(total))
        if total <= 0.5:
            reason = AUROC_THRESHOLD
            break
        n_drop = min(cfg.d, len(alive) - floor)
        if n_drop <= 0:
            reason = SAMPLE_FLOOR
            break
        # highest score first, lowest row index among ties
        ranked = alive[np.lexsort((alive, -p[alive]))]
        for idx in ranked[:n_drop]:
            w_s[idx] = 0.0
            drops.append(int(idx))
        if len(alive) - n_drop <= floor and n_drop < cfg.d:
            reason = SAMPLE_FLOOR
            break
    return w_s, trace, drops, reason


def run_fw_mrs(N, R, cfg: DebiasConfig = DebiasConfig(), importances: Optional[FeatureImportances] = None) -> DebiasResult:
    """Feature-weighted MRS: softmin(importances / t) feature weights, then the loop.

    ``importances`` may be passed in to reuse one attribution run across temperatures.
    """
    XN, XR = _matrices(N, R)
    if importances is None:
        importances = compute_importances(XN, XR, cfg)
    w_f = softmin_weights(importances, cfg.t).values
    w_s, trace, drops, reason = _subsample_loop(XN, XR, w_f, cfg)
    return DebiasResult(w_s, w_f, trace, drops, reason, importances.values, cfg,
                        method="fwmrs_rf" if cfg.variant == FOREST else "fwmrs_svm")


def run_mrs(N, R, cfg: DebiasConfig = DebiasConfig()) -> DebiasResult:
    """Plain MRS: the same loop with uniform feature weights and no attribution step."""
    XN, XR = _matrices(N, R)
    w_f = np.full(XN.shape[1], 1.0 / XN.shape[1])
    w_s, trace, drops, reason = _subsample_loop(XN, XR, w_f, cfg)
    return DebiasResult(w_s, w_f, trace, drops, reason, None, cfg, method="mrs")
