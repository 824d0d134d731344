"""Experiment protocol: bias injection, repeated CV, debias, model selection on N,
downstream evaluation on the untouched test fold, sweeps and aggregate reports.

Every random choice is seeded from ``ExperimentConfig.seed`` through
:func:`fwmrs.data.derive_seed`, keyed by a stream number and the work-item
coordinates, so results do not depend on execution order or worker count.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .attribution import AttributionBudgetError
from .baselines import KMM, PSA, UNIFORM, KMMError, kmm_weights, psa_weights
from .data import (
    ConfigError,
    DataError,
    Schema,
    SplitPlan,
    TabularDataset,
    concat,
    derive_seed,
    inject_bias,
    load_csv,
    make_folds,
    standardize,
    subsample,
)
from .datasets import BUNDLED
from .debias import FOREST, LINEAR, DebiasConfig, compute_importances, run_fw_mrs, run_mrs
from .forest import ForestConfig, fit_forest, forest_predict_proba
from .linear import LogisticConvergenceError
from .metrics import (
    MmdInputs,
    auroc_labels,
    benjamini_hochberg,
    bias_variance_01,
    corrected_ttest,
    sigma_heuristic,
    weighted_mmd,
)

logger = logging.getLogger(__name__)

MRS = "mrs"
FWMRS_RF = "fwmrs_rf"
FWMRS_SVM = "fwmrs_svm"
CONSTANT = "constant"
METHODS = (UNIFORM, KMM, PSA, MRS, FWMRS_RF, FWMRS_SVM)

TEMPERATURE_GRID = (0.001, 0.0025, 0.005, 0.01, 0.025, 0.05, 0.1, 0.25, 0.5)
LEAF_GRID = (0.025, 0.01, 0.001, 0.0)
C_GRID = (0.01, 0.1, 1.0, 10.0, 100.0)

# seed streams
_FOLDS, _SPLIT, _HALVES, _BIAS, _DEBIAS, _INNER, _DOWNSTREAM, _KMM, _BV, _SWEEP = range(10)

METHOD_FAILURES = (KMMError, LogisticConvergenceError, AttributionBudgetError, DataError,
                   FloatingPointError, np.linalg.LinAlgError, ValueError, RuntimeError)

RECORD_FIELDS = ("dataset", "method", "repeat", "fold", "auroc", "n_dropped", "dropped_fraction",
                 "mmd", "selection_auroc", "hyperparams", "error")


@dataclass(frozen=True)
class ExperimentConfig:
    """Protocol settings. ``d = None`` picks 5 drops per iteration when the dataset
    has more than 3000 rows after capping, else 1. ``selection_trees = None`` uses
    the downstream forest size inside model selection; ``downstream_mtry = None``
    keeps the forest default of ceil(sqrt(n)) split candidates."""

    dataset: str = "breast_cancer"
    label_column: Optional[str] = None
    methods: tuple = METHODS
    temperatures: tuple = TEMPERATURE_GRID
    leaf_grid: tuple = LEAF_GRID
    C_grid: tuple = C_GRID
    cv: SplitPlan = field(default_factory=lambda: SplitPlan(5, 10, 0, True))
    positive_retention: float = 0.1
    subsample_cap: int = 6000
    d: Optional[int] = None
    debias_splits: int = 5
    debias_trees: int = 200
    debias_leaf: float = 0.0
    downstream_trees: int = 500
    downstream_mtry: Optional[int] = None
    selection_trees: Optional[int] = None
    inner_splits: int = 3
    sweep_leaf: float = 0.0
    bv_runs: int = 50
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        for name in ("methods", "temperatures", "leaf_grid", "C_grid"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigError(f"methods: unknown method {unknown[0]!r}")
        if not self.methods:
            raise ConfigError("methods: at least one method is required")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("methods: duplicates")
        if any(m in self.methods for m in (FWMRS_RF, FWMRS_SVM)) and not self.temperatures:
            raise ConfigError("grids.temperatures: must be non-empty for FW-MRS")
        if any(not t > 0 for t in self.temperatures):
            raise ConfigError("grids.temperatures: values must be positive")
        if not self.leaf_grid:
            raise ConfigError("grids.min_weight_fraction_leaf: must be non-empty")
        if any(not 0.0 <= v < 0.5 for v in self.leaf_grid + (self.debias_leaf, self.sweep_leaf)):
            raise ConfigError("grids.min_weight_fraction_leaf: values must be in [0, 0.5)")
        if any(m in self.methods for m in (PSA, FWMRS_SVM)) and not self.C_grid:
            raise ConfigError("grids.C: must be non-empty for PSA and FW-MRS_SVM")
        if any(not c > 0 for c in self.C_grid):
            raise ConfigError("grids.C: values must be positive")
        if not 0.0 < self.positive_retention <= 1.0:
            raise ConfigError("data.positive_retention: must be in (0, 1]")
        if self.subsample_cap < 1:
            raise ConfigError("data.subsample_cap: must be >= 1")
        if self.d is not None and self.d < 1:
            raise ConfigError("debias.d: must be >= 1")
        if self.debias_splits < 2 or self.inner_splits < 2:
            raise ConfigError("cv: fold counts must be >= 2")
        for name in ("debias_trees", "downstream_trees", "bv_runs", "jobs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be >= 1")
        if self.selection_trees is not None and self.selection_trees < 1:
            raise ConfigError("downstream.selection_trees: must be >= 1")
        if self.downstream_mtry is not None and self.downstream_mtry < 1:
            raise ConfigError("downstream.mtry: must be >= 1")

    def drops_per_iteration(self, m: int) -> int:
        if self.d is not None:
            return self.d
        return 5 if m > 3000 else 1


# --------------------------------------------------------------------------- data


def load_dataset(cfg: ExperimentConfig) -> TabularDataset:
    """A bundled dataset by name, or a CSV path (with an optional
    ``<name>.schema.json`` sidecar), capped at ``subsample_cap`` rows."""
    if cfg.dataset in BUNDLED:
        data = BUNDLED[cfg.dataset]()
    else:
        path = Path(cfg.dataset)
        if not path.exists():
            raise ConfigError(f"data.dataset: no bundled dataset or file named {cfg.dataset!r}")
        sidecar = path.with_suffix(".schema.json")
        schema = Schema.from_json(sidecar) if sidecar.exists() else None
        data = load_csv(path, label_column=cfg.label_column, schema=schema)
    if data.labels is None:
        raise ConfigError("data.label_column: the experiment needs a labelled dataset")
    return subsample(data, cfg.subsample_cap, derive_seed(cfg.seed, _SPLIT))


def dataset_name(cfg: ExperimentConfig) -> str:
    return cfg.dataset if cfg.dataset in BUNDLED else Path(cfg.dataset).stem


def outer_folds(data: TabularDataset, cfg: ExperimentConfig) -> list:
    plan = replace(cfg.cv, seed=derive_seed(cfg.seed, _FOLDS, cfg.cv.seed))
    return make_folds(data.m, data.labels, plan)


def split_halves(data: TabularDataset, seed: int):
    """Stratified split into two halves of (almost) equal size."""
    (_, a), (_, b) = make_folds(data.m, data.labels, SplitPlan(2, 1, seed, True))[0]
    return data.take(a), data.take(b)


@dataclass
class FoldContext:
    """Standardized N (labelled), R (unlabelled) and test fold T of one work item.

    R's labels are held privately; only :meth:`reveal_r_labels` returns them, and
    every call is counted so callers can assert that a pipeline never read them.
    """

    N: TabularDataset
    R: TabularDataset
    T: TabularDataset
    d: int
    seed: int
    sigma_NT: float
    sigma_NR: float
    _r_labels: Optional[np.ndarray] = field(default=None, repr=False)
    r_label_reads: int = 0

    def reveal_r_labels(self) -> np.ndarray:
        self.r_label_reads += 1
        return self._r_labels


def _uniform_sigma(A, B) -> float:
    # kernel bandwidth on the scale of simplex feature weights: uniform 1/n
    return sigma_heuristic(A, B) / math.sqrt(A.shape[1])


def build_context(train: TabularDataset, test: TabularDataset, cfg: ExperimentConfig, seed: int,
                  d: int) -> FoldContext:
    N_half, R_half = split_halves(train, derive_seed(seed, _HALVES))
    N = inject_bias(N_half, cfg.positive_retention, derive_seed(seed, _BIAS))
    r_labels = R_half.labels
    R = R_half.without_labels()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        _, stats = standardize(concat(N.without_labels(), R))
    N = standardize(N, stats)[0]
    R = standardize(R, stats)[0]
    T = standardize(test, stats)[0]
    if set(T.row_ids.tolist()) & (set(N.row_ids.tolist()) | set(R.row_ids.tolist())):
        raise AssertionError("test rows leaked into N or R")
    return FoldContext(N, R, T, d, seed, _uniform_sigma(N.values, T.values),
                       _uniform_sigma(N.values, R.values), r_labels)


def prepare_fold(data: TabularDataset, cfg: ExperimentConfig, repeat: int, fold: int,
                 folds: Optional[list] = None) -> FoldContext:
    folds = outer_folds(data, cfg) if folds is None else folds
    train_idx, test_idx = folds[repeat][fold]
    return build_context(data.take(train_idx), data.take(test_idx), cfg,
                         derive_seed(cfg.seed, _SPLIT, repeat, fold), cfg.drops_per_iteration(data.m))


# --------------------------------------------------------------------------- methods


@dataclass
class Candidate:
    params: dict
    sample_weights: np.ndarray
    feature_weights: np.ndarray
    n_dropped: int = 0


def _uniform_fw(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def debias_config(cfg: ExperimentConfig, variant: str, d: int, seed: int, t: float = 0.1,
                  C: float = 1.0) -> DebiasConfig:
    return DebiasConfig(variant=variant, d=d, k=cfg.debias_splits, t=t,
                        forest=ForestConfig(cfg.debias_trees, cfg.debias_leaf),
                        C=C, seed=derive_seed(seed, _DEBIAS))


def method_candidates(method: str, N: np.ndarray, R: np.ndarray, cfg: ExperimentConfig,
                      d: int, seed: int) -> list:
    """All weight candidates of a method over its debiasing grid (no leaf grid)."""
    n = N.shape[1]
    uniform_fw = _uniform_fw(n)
    if method == UNIFORM:
        return [Candidate({}, np.ones(len(N)), uniform_fw)]
    if method == KMM:
        w = kmm_weights(N, R)
        return [Candidate({}, w.sample_weights, uniform_fw)]
    if method == PSA:
        return [Candidate({"C": C}, psa_weights(N, R, C).sample_weights, uniform_fw) for C in cfg.C_grid]
    if method == MRS:
        res = run_mrs(N, R, debias_config(cfg, FOREST, d, seed))
        return [Candidate({}, res.sample_weights, res.feature_weights, res.n_dropped)]
    if method in (FWMRS_RF, FWMRS_SVM):
        variant = FOREST if method == FWMRS_RF else LINEAR
        out = []
        for C in (cfg.C_grid if variant == LINEAR else (None,)):
            base = debias_config(cfg, variant, d, seed, C=1.0 if C is None else C)
            importances = compute_importances(N, R, base)
            for t in cfg.temperatures:
                res = run_fw_mrs(N, R, replace(base, t=t), importances)
                params = {"temperature": t} if C is None else {"C": C, "temperature": t}
                out.append(Candidate(params, res.sample_weights, res.feature_weights, res.n_dropped))
        return out
    raise ConfigError(f"methods: unknown method {method!r}")


def inner_cv_auroc(X, y, sample_weights, feature_weights, leaf: float, n_trees: int,
                   n_splits: int, seed: int, mtry: Optional[int] = None) -> float:
    """Mean validation AUROC of the weighted downstream forest over a stratified
    split of the rows with positive weight. Folds whose training or validation part
    lacks a class are skipped; with no usable fold the score is 0.5."""
    alive = np.flatnonzero(sample_weights > 0)
    y_alive = y[alive]
    if len(alive) < n_splits or len(np.unique(y_alive)) < 2:
        return 0.5
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        folds = make_folds(len(alive), y_alive, SplitPlan(n_splits, 1, seed, True))[0]
    scores = []
    fcfg = ForestConfig(n_trees, leaf, mtry=mtry, seed=derive_seed(seed, 1))
    for tr, va in folds:
        tr_rows, va_rows = alive[tr], alive[va]
        if len(np.unique(y[tr_rows])) < 2 or len(np.unique(y[va_rows])) < 2:
            continue
        model = fit_forest(X[tr_rows], y[tr_rows], sample_weights[tr_rows], feature_weights, fcfg)
        scores.append(auroc_labels(y[va_rows], forest_predict_proba(model, X[va_rows])))
    return float(np.mean(scores)) if scores else 0.5


def select(candidates: list, N: TabularDataset, cfg: ExperimentConfig, seed: int):
    """Grid search over candidates x leaf fractions; first best in grid order wins."""
    n_trees = cfg.selection_trees or cfg.downstream_trees
    inner_seed = derive_seed(seed, _INNER)
    best = None
    for cand in candidates:
        for leaf in cfg.leaf_grid:
            score = inner_cv_auroc(N.values, N.labels, cand.sample_weights, cand.feature_weights,
                                   leaf, n_trees, cfg.inner_splits, inner_seed, cfg.downstream_mtry)
            if best is None or score > best[0]:
                best = (score, cand, leaf)
    return best


def fit_downstream(N: TabularDataset, cand: Candidate, leaf: float, cfg: ExperimentConfig, seed: int):
    fcfg = ForestConfig(cfg.downstream_trees, leaf, mtry=cfg.downstream_mtry,
                        seed=derive_seed(seed, _DOWNSTREAM))
    return fit_forest(N.values, N.labels, cand.sample_weights, cand.feature_weights, fcfg)


def _record(dataset, method, repeat, fold, **kw) -> dict:
    rec = {"dataset": dataset, "method": method, "repeat": repeat, "fold": fold,
           "auroc": math.nan, "n_dropped": 0, "dropped_fraction": math.nan, "mmd": math.nan,
           "selection_auroc": math.nan, "hyperparams": "{}", "error": "", "wall_time": 0.0}
    rec.update(kw)
    return rec


def evaluate_fold(ctx: FoldContext, cfg: ExperimentConfig, dataset: str, repeat: int, fold: int) -> list:
    """One record per method: weights, selection on N, test AUROC and weighted MMD(N, T)."""
    records = []
    for method in cfg.methods:
        start = time.perf_counter()
        try:
            cands = method_candidates(method, ctx.N.values, ctx.R.values, cfg, ctx.d, ctx.seed)
            score, cand, leaf = select(cands, ctx.N, cfg, ctx.seed)
            model = fit_downstream(ctx.N, cand, leaf, cfg, ctx.seed)
            test_auroc = auroc_labels(ctx.T.labels, forest_predict_proba(model, ctx.T.values))
            mmd = weighted_mmd(MmdInputs(ctx.N.values, ctx.T.values, cand.sample_weights,
                                         np.ones(ctx.T.m), cand.feature_weights, ctx.sigma_NT))
            params = dict(cand.params, min_weight_fraction_leaf=leaf)
            records.append(_record(
                dataset, method, repeat, fold, auroc=test_auroc, n_dropped=cand.n_dropped,
                dropped_fraction=cand.n_dropped / ctx.N.m, mmd=mmd, selection_auroc=score,
                hyperparams=json.dumps(params, sort_keys=True),
                wall_time=time.perf_counter() - start))
        except METHOD_FAILURES as exc:
            logger.warning("%s failed on %s repeat %d fold %d: %s", method, dataset, repeat, fold, exc)
            records.append(_record(dataset, method, repeat, fold, error=f"{type(exc).__name__}: {exc}",
                                   wall_time=time.perf_counter() - start))
    return records


def run_split(data: TabularDataset, cfg: ExperimentConfig, repeat: int, fold: int,
              folds: Optional[list] = None) -> list:
    ctx = prepare_fold(data, cfg, repeat, fold, folds)
    return evaluate_fold(ctx, cfg, dataset_name(cfg), repeat, fold)


def _work(args):
    fn, data, cfg, repeat, fold, folds = args
    return fn(data, cfg, repeat, fold, folds)


def _map_items(fn: Callable, data, cfg: ExperimentConfig, progress=None) -> list:
    folds = outer_folds(data, cfg)
    items = [(fn, data, cfg, r, f, folds) for r in range(cfg.cv.n_repeats) for f in range(cfg.cv.n_splits)]
    results = []
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            for out in pool.map(_work, items):
                results.append(out)
                if progress:
                    progress(len(results), len(items))
    else:
        for item in items:
            results.append(_work(item))
            if progress:
                progress(len(results), len(items))
    return [rec for out in results for rec in out]


def run_experiment(cfg: ExperimentConfig, data: Optional[TabularDataset] = None, progress=None) -> list:
    """All (repeat, fold, method) records, ordered by repeat, fold, then method."""
    data = load_dataset(cfg) if data is None else data
    return _map_items(run_split, data, cfg, progress)


# --------------------------------------------------------------------------- sweep


@dataclass(frozen=True)
class SweepInput:
    N: np.ndarray
    N_labels: np.ndarray
    R: np.ndarray
    R_labels: np.ndarray
    seed: int
    d: int = 1


def _sweep_record(dataset, method, t, repeat, fold, res, N, N_labels, R, R_labels, sigma, cfg, seed):
    model = fit_forest(N, N_labels, res.sample_weights, res.feature_weights,
                       ForestConfig(cfg.downstream_trees, cfg.sweep_leaf, mtry=cfg.downstream_mtry,
                                    seed=derive_seed(seed, _DOWNSTREAM)))
    val = auroc_labels(R_labels, forest_predict_proba(model, R))
    mmd = weighted_mmd(MmdInputs(N, R, res.sample_weights, np.ones(len(R)), res.feature_weights, sigma))
    return {"dataset": dataset, "method": method, "temperature": t, "repeat": repeat, "fold": fold,
            "n_dropped": res.n_dropped, "dropped_fraction": res.n_dropped / len(N),
            "validation_auroc": val, "mmd": mmd, "stop_reason": res.stop_reason}


def sweep_pair(inp: SweepInput, cfg: ExperimentConfig, dataset: str = "synthetic", repeat: int = 0,
               fold: int = 0) -> list:
    """MRS once, then FW-MRS_RF at every temperature with one shared importance run.

    The validation AUROC of the downstream forest is measured on R; this is the only
    place R's labels are used.
    """
    if len(np.unique(inp.N_labels)) < 2:
        raise DataError("N needs both classes for the downstream forest")
    sigma = _uniform_sigma(inp.N, inp.R)
    base = debias_config(cfg, FOREST, inp.d, inp.seed)
    common = (inp.N, inp.N_labels, inp.R, inp.R_labels, sigma, cfg, inp.seed)
    out = [_sweep_record(dataset, MRS, math.nan, repeat, fold, run_mrs(inp.N, inp.R, base), *common)]
    importances = compute_importances(inp.N, inp.R, base)
    for t in cfg.temperatures:
        res = run_fw_mrs(inp.N, inp.R, replace(base, t=t), importances)
        out.append(_sweep_record(dataset, FWMRS_RF, t, repeat, fold, res, *common))
    return out


def _sweep_split(data, cfg, repeat, fold, folds):
    ctx = prepare_fold(data, cfg, repeat, fold, folds)
    inp = SweepInput(ctx.N.values, ctx.N.labels, ctx.R.values, ctx.reveal_r_labels(),
                     derive_seed(ctx.seed, _SWEEP), ctx.d)
    return sweep_pair(inp, cfg, dataset_name(cfg), repeat, fold)


def temperature_sweep(cfg: ExperimentConfig, data: Optional[TabularDataset] = None, progress=None) -> list:
    data = load_dataset(cfg) if data is None else data
    return _map_items(_sweep_split, data, cfg, progress)


def summarize_sweep(records: Sequence[dict]) -> list:
    """(mean, std) of dropped count, validation AUROC and MMD per temperature, plus
    one MRS row: the plot data behind a dropped-vs-AUROC chart."""
    keys = []
    for r in records:
        key = (r["dataset"], r["method"], r["temperature"])
        if not any(_same_key(key, k) for k in keys):
            keys.append(key)
    rows = []
    for key in keys:
        sel = [r for r in records if _same_key(key, (r["dataset"], r["method"], r["temperature"]))]
        row = {"dataset": key[0], "method": key[1], "temperature": key[2], "runs": len(sel)}
        for name in ("n_dropped", "dropped_fraction", "validation_auroc", "mmd"):
            vals = np.array([r[name] for r in sel], dtype=np.float64)
            row[f"{name}_mean"] = float(vals.mean())
            row[f"{name}_std"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        rows.append(row)
    return rows


def _same_key(a, b) -> bool:
    return a[:2] == b[:2] and (a[2] == b[2] or (_isnan(a[2]) and _isnan(b[2])))


def _isnan(x) -> bool:
    return isinstance(x, float) and math.isnan(x)


# --------------------------------------------------------------------------- bias-variance


def bias_variance_protocol(cfg: ExperimentConfig, data: Optional[TabularDataset] = None,
                           include_control: bool = True, progress=None):
    """Fixed test half; ``bv_runs`` training sets of half the world's size drawn
    without replacement from the other half, each split into biased N and R.

    Returns ``(records, table)``: per (method, run) error rates, and per method the
    0-1 bias, variance and mean loss. The ``constant`` control always predicts 0.
    """
    data = load_dataset(cfg) if data is None else data
    name = dataset_name(cfg)
    world, test = split_halves(data, derive_seed(cfg.seed, _BV))
    m = world.m // 2
    methods = list(cfg.methods) + ([CONSTANT] if include_control else [])
    preds = {meth: [] for meth in methods}
    records = []
    for run in range(cfg.bv_runs):
        seed = derive_seed(cfg.seed, _BV, run)
        rng = np.random.default_rng(seed)
        train = world.take(np.sort(rng.choice(world.m, m, replace=False)))
        ctx = build_context(train, test, cfg, seed, cfg.drops_per_iteration(data.m))
        for meth in methods:
            start = time.perf_counter()
            err = ""
            if meth == CONSTANT:
                p = np.zeros(ctx.T.m, dtype=np.int64)
            else:
                try:
                    cands = method_candidates(meth, ctx.N.values, ctx.R.values, cfg, ctx.d, seed)
                    _, cand, leaf = select(cands, ctx.N, cfg, seed)
                    model = fit_downstream(ctx.N, cand, leaf, cfg, seed)
                    p = (forest_predict_proba(model, ctx.T.values) >= 0.5).astype(np.int64)
                except METHOD_FAILURES as exc:
                    p = None
                    err = f"{type(exc).__name__}: {exc}"
            if p is not None:
                preds[meth].append(p)
            records.append({"dataset": name, "method": meth, "run": run,
                            "error_rate": math.nan if p is None else float(np.mean(p != ctx.T.labels)),
                            "error": err, "wall_time": time.perf_counter() - start})
        if progress:
            progress(run + 1, cfg.bv_runs)
    table = []
    for meth in methods:
        if not preds[meth]:
            table.append({"dataset": name, "method": meth, "runs": 0, "bias": math.nan,
                          "variance": math.nan, "loss": math.nan})
            continue
        P = np.vstack(preds[meth])
        bias, variance = bias_variance_01(P, test.labels)
        table.append({"dataset": name, "method": meth, "runs": len(P), "bias": bias,
                      "variance": variance, "loss": float(np.mean(P != test.labels[None, :]))})
    return records, table


# --------------------------------------------------------------------------- report


@dataclass
class ExperimentReport:
    summary: list
    ranks: dict
    comparisons: list
    n_records: int
    n_errors: int

    def to_dict(self) -> dict:
        return asdict(self)


def aggregate_report(records: Sequence[dict], alpha: float = 0.05, k: Optional[int] = None,
                     repeats: Optional[int] = None) -> ExperimentReport:
    """Means and standard deviations per (dataset, method), average-rank row over
    datasets, and corrected t-tests of MRS against each FW-MRS variant on matched
    folds, Benjamini-Hochberg adjusted across the whole family."""
    if not records:
        raise DataError("no records to report")
    datasets = sorted({r["dataset"] for r in records})
    methods = [m for m in METHODS if any(r["method"] == m for r in records)]
    summary = []
    means = {}
    for ds in datasets:
        for meth in methods:
            sel = [r for r in records if r["dataset"] == ds and r["method"] == meth]
            if not sel:
                continue
            ok = [r for r in sel if not r["error"]]
            vals = np.array([r["auroc"] for r in ok], dtype=np.float64)
            row = {"dataset": ds, "method": meth, "n": len(ok), "errors": len(sel) - len(ok)}
            for name in ("auroc", "dropped_fraction", "mmd"):
                v = np.array([r[name] for r in ok], dtype=np.float64)
                row[f"{name}_mean"] = float(v.mean()) if len(v) else math.nan
                row[f"{name}_std"] = float(v.std(ddof=1)) if len(v) > 1 else math.nan
            summary.append(row)
            if len(vals):
                means[(ds, meth)] = row["auroc_mean"]
    # rank 1 = best mean AUROC; ties share the average rank
    rank_lists = {meth: [] for meth in methods}
    for ds in datasets:
        present = [meth for meth in methods if (ds, meth) in means]
        if not present:
            continue
        ranks = rankdata([-means[(ds, meth)] for meth in present], method="average")
        for meth, rk in zip(present, ranks):
            rank_lists[meth].append(float(rk))
    mean_ranks = {meth: float(np.mean(v)) for meth, v in rank_lists.items() if v}

    comparisons = []
    for ds in datasets:
        base = {(r["repeat"], r["fold"]): r for r in records
                if r["dataset"] == ds and r["method"] == MRS and not r["error"]}
        for variant in (FWMRS_RF, FWMRS_SVM):
            other = {(r["repeat"], r["fold"]): r for r in records
                     if r["dataset"] == ds and r["method"] == variant and not r["error"]}
            if not base or not other:
                continue
            keys = sorted(set(base) & set(other))
            kk = k if k is not None else len({key[1] for key in keys})
            rr = repeats if repeats is not None else len({key[0] for key in keys})
            entry = {"dataset": ds, "a": MRS, "b": variant, "n_pairs": len(keys),
                     "mean_diff": math.nan, "statistic": math.nan, "p_value": math.nan,
                     "p_adjusted": math.nan, "significant": False, "note": ""}
            if len(keys) != kk * rr or len(keys) < 2 or kk < 2:
                entry["note"] = "incomplete fold grid; test skipped"
            else:
                diffs = np.array([base[key]["auroc"] - other[key]["auroc"] for key in keys])
                res = corrected_ttest(diffs, kk, rr)
                entry.update(mean_diff=float(diffs.mean()), statistic=res.statistic, p_value=res.p_value)
            comparisons.append(entry)
    tested = [c for c in comparisons if not math.isnan(c["p_value"])]
    if tested:
        adjusted, reject = benjamini_hochberg([c["p_value"] for c in tested], alpha)
        for c, pa, rj in zip(tested, adjusted, reject):
            c["p_adjusted"] = float(pa)
            c["significant"] = bool(rj)
    n_errors = sum(1 for r in records if r["error"])
    return ExperimentReport(summary, mean_ranks, comparisons, len(records), n_errors)


def render_table(report: ExperimentReport) -> str:
    """Plain-text table: one column per dataset, mean +- std AUROC per method, and
    the mean-rank column."""
    datasets = sorted({row["dataset"] for row in report.summary})
    methods = [m for m in METHODS if any(row["method"] == m for row in report.summary)]
    cell = {(row["dataset"], row["method"]): row for row in report.summary}
    lines = ["method".ljust(10) + "".join(ds[:18].rjust(20) for ds in datasets) + "mean rank".rjust(12)]
    for meth in methods:
        parts = []
        for ds in datasets:
            row = cell.get((ds, meth))
            parts.append(("-" if row is None else f"{row['auroc_mean']:.3f}+-{row['auroc_std']:.3f}").rjust(20))
        rank = report.ranks.get(meth)
        lines.append(meth.ljust(10) + "".join(parts) + ("-" if rank is None else f"{rank:.2f}").rjust(12))
    return "\n".join(lines)


# --------------------------------------------------------------------------- I/O


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, rows: Sequence[dict], fields: Optional[Sequence[str]] = None) -> None:
    """Deterministic CSV: fixed column order, ``repr`` floats, ``\\n`` line ends."""
    fields = list(fields if fields is not None else (rows[0].keys() if rows else []))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for row in rows:
            w.writerow([_fmt(row.get(f, "")) for f in fields])


def read_records(path) -> list:
    """Inverse of ``write_csv`` for experiment records."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            missing = [f for f in RECORD_FIELDS if f not in row]
            if missing:
                raise DataError(f"{path}: missing column {missing[0]!r}")
            rec = dict(row)
            for name in ("auroc", "dropped_fraction", "mmd", "selection_auroc"):
                rec[name] = float(rec[name])
            for name in ("repeat", "fold", "n_dropped"):
                rec[name] = int(rec[name])
            out.append(rec)
    return out


def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n",
                          encoding="utf-8")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(f"not serializable: {type(o).__name__}")
