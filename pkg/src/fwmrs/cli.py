"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 method failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from .attribution import AttributionBudgetError
from .baselines import KMM, PSA, KMMError, kmm_weights, psa_weights, uniform_weights
from .config import load_config
from .data import ConfigError, DataError, Schema, align_schema, concat, load_csv, standardize
from .debias import FOREST, LINEAR, DebiasConfig, run_fw_mrs, run_mrs
from .forest import ForestConfig
from .harness import (
    FWMRS_RF,
    FWMRS_SVM,
    METHODS,
    MRS,
    RECORD_FIELDS,
    ExperimentConfig,
    aggregate_report,
    bias_variance_protocol,
    read_records,
    render_table,
    run_experiment,
    summarize_sweep,
    temperature_sweep,
    write_csv,
    write_json,
)
from .linear import LogisticConvergenceError
from .metrics import MmdInputs, sigma_heuristic, weighted_mmd

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_METHOD = 0, 1, 2, 3

logger = logging.getLogger("fwmrs")


class MethodFailure(RuntimeError):
    pass


def _header(path: Path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return [h.strip() for h in next(csv.reader(fh), [])]


def _read_table(path: Path, label_column: Optional[str], schema_path: Optional[Path]):
    """Load one side of a debias call. The label column (if any) is excluded from
    the features; a file without it, typically R, is read unlabelled."""
    if not path.exists():
        raise DataError(f"no such file: {path}")
    sidecar = path.with_suffix(".schema.json")
    schema = Schema()
    if schema_path is not None:
        schema = Schema.from_json(schema_path)
    elif sidecar.exists():
        schema = Schema.from_json(sidecar)
    header = _header(path)
    label = label_column or schema.label_column
    if label not in header:
        label = None
    missing = [c for c in schema.categorical + schema.ordinal if c not in header]
    if missing:
        raise DataError(f"{path}: column {missing[0]!r} is missing")
    schema = replace(schema, label_column=label, drop=[c for c in schema.drop if c in header])
    return load_csv(path, schema=schema)


def cmd_debias(args) -> int:
    N = _read_table(args.biased, args.label_column, args.schema)
    R = _read_table(args.representative, args.label_column, args.schema)
    R = align_schema(N, R)
    _, stats = standardize(concat(N.without_labels(), R.without_labels()))
    XN = standardize(N, stats)[0].values
    XR = standardize(R, stats)[0].values
    n = XN.shape[1]
    d = args.drops_per_iter if args.drops_per_iter is not None else (5 if len(XN) > 3000 else 1)
    k = args.cv_splits
    try:
        if args.method in (MRS, FWMRS_RF, FWMRS_SVM):
            variant = LINEAR if args.method == FWMRS_SVM else FOREST
            cfg = DebiasConfig(variant=variant, d=d, k=k, t=args.temperature, C=args.C,
                               forest=ForestConfig(args.trees), seed=args.seed)
            res = run_mrs(XN, XR, cfg) if args.method == MRS else run_fw_mrs(XN, XR, cfg)
            doc = res.to_dict(N.row_ids)
            w_s, w_f = res.sample_weights, res.feature_weights
            dropped = res.n_dropped
            final_auroc = res.auroc_trace[-1] if res.auroc_trace else math.nan
        else:
            if args.method == KMM:
                bw = kmm_weights(XN, XR)
            elif args.method == PSA:
                bw = psa_weights(XN, XR, args.C)
            else:
                bw = uniform_weights(len(XN))
            w_s, w_f = bw.sample_weights, np.full(n, 1.0 / n)
            doc = {"format": "fwmrs.weights", "version": 1, "method": bw.method,
                   "sample_weights": w_s.tolist(), "feature_weights": w_f.tolist(),
                   "diagnostics": bw.diagnostics, "seed": args.seed}
            dropped, final_auroc = 0, math.nan
    except (KMMError, LogisticConvergenceError, AttributionBudgetError, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        raise MethodFailure(f"{args.method} failed: {exc}") from exc
    sigma = sigma_heuristic(XN, XR) / math.sqrt(n)
    before = weighted_mmd(MmdInputs(XN, XR, np.ones(len(XN)), np.ones(len(XR)), np.full(n, 1.0 / n), sigma))
    after = weighted_mmd(MmdInputs(XN, XR, w_s, np.ones(len(XR)), w_f, sigma))
    doc["mmd_before"] = before
    doc["mmd_after"] = after
    doc["feature_names"] = list(N.feature_names)
    out = args.output_dir / "weights.json"
    write_json(out, doc)
    print(f"method={args.method} dropped={dropped}/{len(XN)} final_auroc={final_auroc:.4f} "
          f"mmd_before={before:.4f} mmd_after={after:.4f} -> {out}")
    return EXIT_OK


def _experiment_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.jobs is not None:
        updates["jobs"] = args.jobs
    if getattr(args, "method", None):
        updates["methods"] = tuple(args.method)
    if args.drops_per_iter is not None:
        updates["d"] = args.drops_per_iter
    if args.cv_splits is not None:
        updates["cv"] = replace(cfg.cv, n_splits=args.cv_splits)
    if args.temperature is not None:
        updates["temperatures"] = (args.temperature,)
    try:
        return replace(cfg, **updates)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _progress(label):
    return lambda i, n: logger.info("%s: %d/%d", label, i, n)


def _write_report(records, out: Path, cfg: Optional[ExperimentConfig] = None) -> None:
    k = cfg.cv.n_splits if cfg else None
    repeats = cfg.cv.n_repeats if cfg else None
    report = aggregate_report(records, k=k, repeats=repeats)
    write_csv(out / "summary.csv", report.summary)
    write_json(out / "report.json", report.to_dict())
    print(render_table(report))


def cmd_evaluate(args) -> int:
    cfg = _experiment_config(args)
    records = run_experiment(cfg, progress=_progress("folds"))
    write_csv(args.output_dir / "records.csv", records, RECORD_FIELDS)
    write_csv(args.output_dir / "timings.csv", records, ("dataset", "method", "repeat", "fold", "wall_time"))
    _write_report(records, args.output_dir, cfg)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _experiment_config(args)
    records = temperature_sweep(cfg, progress=_progress("folds"))
    write_csv(args.output_dir / "sweep_records.csv", records)
    rows = summarize_sweep(records)
    write_csv(args.output_dir / "sweep_summary.csv", rows)
    for row in rows:
        print(f"{row['method']:9s} t={row['temperature']!s:7s} dropped={row['n_dropped_mean']:.1f}"
              f"+-{row['n_dropped_std']:.1f} val_auroc={row['validation_auroc_mean']:.3f}"
              f" mmd={row['mmd_mean']:.4f}")
    return EXIT_OK


def cmd_bias_variance(args) -> int:
    cfg = _experiment_config(args)
    records, table = bias_variance_protocol(cfg, progress=_progress("runs"))
    write_csv(args.output_dir / "bv_records.csv", records, ("dataset", "method", "run", "error_rate", "error"))
    write_csv(args.output_dir / "bv_table.csv", table)
    for row in table:
        print(f"{row['method']:9s} bias={row['bias']:.3f} variance={row['variance']:.3f} loss={row['loss']:.3f}")
    return EXIT_OK


def cmd_report(args) -> int:
    records = [r for p in args.records for r in read_records(p)]
    if not records:
        raise ConfigError("report: no records in the given files")
    _write_report(records, args.output_dir)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (all randomness)")
    common.add_argument("--jobs", type=int, default=None, help="worker processes")
    common.add_argument("--output-dir", type=Path, default=Path("."))
    common.add_argument("--config", type=Path, default=None, help="TOML experiment config")
    common.add_argument("--drops-per-iter", type=int, default=None, help="rows dropped per iteration (d)")
    common.add_argument("--cv-splits", type=int, default=None, help="folds")
    common.add_argument("--temperature", type=float, default=None)
    common.add_argument("-v", "--verbose", action="count", default=0)

    ap = argparse.ArgumentParser(prog="fwmrs", description="Feature-weighted maximum representative subsampling")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("debias", parents=[common], help="debias one CSV against another")
    p.add_argument("biased", type=Path)
    p.add_argument("representative", type=Path)
    p.add_argument("--method", choices=METHODS, default=FWMRS_RF)
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--trees", type=int, default=200)
    p.add_argument("--label-column", default=None, help="column excluded from the features")
    p.add_argument("--schema", type=Path, default=None, help="JSON schema sidecar for both CSVs")
    p.set_defaults(func=cmd_debias, seed=None)

    for name, func, hlp in (("evaluate", cmd_evaluate, "repeated-CV downstream evaluation"),
                            ("sweep", cmd_sweep, "temperature sweep"),
                            ("bias-variance", cmd_bias_variance, "0-1 bias-variance protocol")):
        p = sub.add_parser(name, parents=[common], help=hlp)
        p.add_argument("--method", action="append", choices=METHODS, default=None,
                       help="restrict to these methods (repeatable)")
        p.set_defaults(func=func)

    p = sub.add_parser("report", parents=[common], help="aggregate record CSVs")
    p.add_argument("records", type=Path, nargs="*")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    if args.command == "debias":
        if args.seed is None:
            args.seed = 0
        if args.temperature is None:
            args.temperature = 0.1
        if args.cv_splits is None:
            args.cv_splits = 5
    try:
        args.output_dir.mkdir(parents=True, exist_ok=True)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except MethodFailure as exc:
        print(f"method failure: {exc}", file=sys.stderr)
        return EXIT_METHOD
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
