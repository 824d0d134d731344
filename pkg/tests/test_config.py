"""TOML experiment configuration."""
import pytest

from fwmrs.config import config_from_dict, load_config
from fwmrs.data import ConfigError
from fwmrs.harness import ExperimentConfig

FULL = """
seed = 3
jobs = 2

[data]
dataset = "german_credit"
positive_retention = 0.2
subsample_cap = 500

[methods]
run = ["uniform", "mrs", "fwmrs_rf"]

[grids]
temperatures = [0.01, 0.1]
min_weight_fraction_leaf = [0.0]
C = [1, 10]

[cv]
n_splits = 3
n_repeats = 2
stratified = false
inner_splits = 2

[debias]
d = 2
cv_splits = 4
trees = 50
min_weight_fraction_leaf = 0.01

[downstream]
trees = 100
selection_trees = 20
mtry = 4
sweep_min_weight_fraction_leaf = 0.001

[bias_variance]
runs = 7
"""


class TestLoadConfig:
    def test_full_document(self, tmp_path):
        path = tmp_path / "exp.toml"
        path.write_text(FULL)
        cfg = load_config(path)
        assert (cfg.seed, cfg.jobs, cfg.dataset) == (3, 2, "german_credit")
        assert (cfg.positive_retention, cfg.subsample_cap) == (0.2, 500)
        assert cfg.methods == ("uniform", "mrs", "fwmrs_rf")
        assert cfg.temperatures == (0.01, 0.1) and cfg.leaf_grid == (0.0,) and cfg.C_grid == (1.0, 10.0)
        assert (cfg.cv.n_splits, cfg.cv.n_repeats, cfg.cv.stratified, cfg.inner_splits) == (3, 2, False, 2)
        assert (cfg.d, cfg.debias_splits, cfg.debias_trees, cfg.debias_leaf) == (2, 4, 50, 0.01)
        assert (cfg.downstream_trees, cfg.selection_trees, cfg.downstream_mtry, cfg.sweep_leaf) == (100, 20, 4, 0.001)
        assert cfg.bv_runs == 7

    def test_empty_document_gives_defaults(self, tmp_path):
        path = tmp_path / "empty.toml"
        path.write_text("")
        assert load_config(path) == ExperimentConfig()

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "nope.toml")

    def test_syntax_error(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("seed = = 1")
        with pytest.raises(ConfigError):
            load_config(path)


class TestValidation:
    @pytest.mark.parametrize("doc, path", [
        ({"seed": "x"}, "seed"),
        ({"colour": 1}, "colour"),
        ({"data": {"positive_retention": "high"}}, "data.positive_retention"),
        ({"data": {"rows": 3}}, "data.rows"),
        ({"cv": {"n_splits": True}}, "cv.n_splits"),
        ({"grids": {"temperatures": 0.1}}, "grids.temperatures"),
        ({"grids": {"temperatures": ["a"]}}, "grids.temperatures"),
        ({"grids": {"temperatures": [-1.0]}}, "grids.temperatures"),
        ({"methods": {"run": ["mrs", "magic"]}}, "methods"),
        ({"methods": {"run": [1]}}, "methods.run"),
        ({"data": {"positive_retention": 1.5}}, "data.positive_retention"),
        ({"debias": {"d": 0}}, "debias.d"),
        ({"plots": {"x": 1}}, "plots"),
    ])
    def test_error_names_the_key(self, doc, path):
        with pytest.raises(ConfigError, match=path.replace(".", r"\.")):
            config_from_dict(doc)

    def test_integer_accepted_for_float(self):
        assert config_from_dict({"data": {"positive_retention": 1}}).positive_retention == 1.0

    def test_overlay_keeps_base(self):
        base = ExperimentConfig(seed=9, downstream_trees=11)
        cfg = config_from_dict({"cv": {"n_splits": 4}}, base)
        assert (cfg.seed, cfg.downstream_trees, cfg.cv.n_splits) == (9, 11, 4)
        assert cfg.cv.n_repeats == base.cv.n_repeats
