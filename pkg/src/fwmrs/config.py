"""TOML experiment configuration.

Layout (every key optional)::

    seed = 0
    jobs = 1

    [data]
    dataset = "breast_cancer"     # bundled name or CSV path
    label_column = "class"        # CSV only
    positive_retention = 0.1
    subsample_cap = 6000

    [methods]
    run = ["uniform", "kmm", "psa", "mrs", "fwmrs_rf", "fwmrs_svm"]

    [grids]
    temperatures = [0.001, 0.0025, 0.005, 0.01, 0.025, 0.05, 0.1, 0.25, 0.5]
    min_weight_fraction_leaf = [0.025, 0.01, 0.001, 0.0]
    C = [0.01, 0.1, 1.0, 10.0, 100.0]

    [cv]
    n_splits = 5
    n_repeats = 10
    stratified = true
    inner_splits = 3

    [debias]
    d = 1                         # omit for the size-based default
    cv_splits = 5
    trees = 200
    min_weight_fraction_leaf = 0.0

    [downstream]
    trees = 500
    selection_trees = 500
    mtry = 8                      # omit for ceil(sqrt(n))
    sweep_min_weight_fraction_leaf = 0.0

    [bias_variance]
    runs = 50
"""
from __future__ import annotations

import sys
from dataclasses import replace
from pathlib import Path

from .data import ConfigError
from .harness import ExperimentConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

# section -> {toml key: (ExperimentConfig field or cv field, type)}
_SCHEMA = {
    "": {"seed": ("seed", int), "jobs": ("jobs", int)},
    "data": {"dataset": ("dataset", str), "label_column": ("label_column", str),
             "positive_retention": ("positive_retention", float), "subsample_cap": ("subsample_cap", int)},
    "methods": {"run": ("methods", list)},
    "grids": {"temperatures": ("temperatures", list), "min_weight_fraction_leaf": ("leaf_grid", list),
              "C": ("C_grid", list)},
    "cv": {"n_splits": ("cv.n_splits", int), "n_repeats": ("cv.n_repeats", int),
           "stratified": ("cv.stratified", bool), "inner_splits": ("inner_splits", int)},
    "debias": {"d": ("d", int), "cv_splits": ("debias_splits", int), "trees": ("debias_trees", int),
               "min_weight_fraction_leaf": ("debias_leaf", float)},
    "downstream": {"trees": ("downstream_trees", int), "selection_trees": ("selection_trees", int),
                   "mtry": ("downstream_mtry", int),
                   "sweep_min_weight_fraction_leaf": ("sweep_leaf", float)},
    "bias_variance": {"runs": ("bv_runs", int)},
}


def _check_type(path: str, value, typ):
    if typ is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if typ is int and isinstance(value, bool):
        raise ConfigError(f"{path}: expected an integer")
    if typ is list:
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list")
        return value
    if not isinstance(value, typ):
        raise ConfigError(f"{path}: expected {typ.__name__}, got {type(value).__name__}")
    return value


def config_from_dict(doc: dict, base: ExperimentConfig = ExperimentConfig()) -> ExperimentConfig:
    """Overlay a parsed TOML document on ``base``; errors name the offending key path."""
    updates = {}
    cv = {}
    for key, value in doc.items():
        if isinstance(value, dict):
            if key not in _SCHEMA or key == "":
                raise ConfigError(f"{key}: unknown section")
            section, prefix = value, f"{key}."
            spec = _SCHEMA[key]
        else:
            section, prefix, spec = {key: value}, "", _SCHEMA[""]
        for k, v in section.items():
            path = f"{prefix}{k}"
            if k not in spec:
                raise ConfigError(f"{path}: unknown key")
            target, typ = spec[k]
            v = _check_type(path, v, typ)
            if target.startswith("cv."):
                cv[target[3:]] = v
            else:
                updates[target] = v
    for name in ("temperatures", "leaf_grid", "C_grid"):
        if name in updates:
            try:
                updates[name] = tuple(float(x) for x in updates[name])
            except (TypeError, ValueError):
                raise ConfigError(f"grids.{name}: values must be numbers") from None
    if "methods" in updates and not all(isinstance(m, str) for m in updates["methods"]):
        raise ConfigError("methods.run: values must be strings")
    try:
        plan = replace(base.cv, **cv) if cv else base.cv
        return replace(base, cv=plan, **updates)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        with open(Path(path), "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(doc)

