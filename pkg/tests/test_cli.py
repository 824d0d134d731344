"""Command-line interface: commands, artifacts and exit codes."""
import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from fwmrs import cli
from fwmrs.cli import EXIT_CONFIG, EXIT_DATA, EXIT_METHOD, EXIT_OK, main

TINY_TOML = """
seed = 5

[data]
dataset = "breast_cancer"
subsample_cap = 200

[methods]
run = ["uniform", "mrs", "fwmrs_rf"]

[grids]
temperatures = [0.05, 0.5]
min_weight_fraction_leaf = [0.0]

[cv]
n_splits = 2
n_repeats = 2

[debias]
d = 5
trees = 10

[downstream]
trees = 20

[bias_variance]
runs = 2
"""


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


@pytest.fixture
def tables(tmp_path):
    rng = np.random.default_rng(0)
    R = rng.normal(size=(80, 3))
    N = rng.normal(size=(60, 3))
    N[:, 0] += 2.0
    labels = rng.integers(0, 2, 60)
    n_path = _write(tmp_path / "N.csv", ["a", "b", "c", "y"], [list(x) + [l] for x, l in zip(N, labels)])
    r_path = _write(tmp_path / "R.csv", ["a", "b", "c"], R.tolist())
    return n_path, r_path


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "tiny.toml"
    path.write_text(TINY_TOML)
    return path


class TestDebias:
    def test_identical_files(self, tables, tmp_path, capsys):
        _, r_path = tables
        out = tmp_path / "out"
        assert main(["debias", str(r_path), str(r_path), "--method", "mrs", "--output-dir", str(out),
                     "--trees", "20"]) == EXIT_OK
        doc = json.loads((out / "weights.json").read_text())
        assert doc["method"] == "mrs" and len(doc["drop_order"]) <= 0.2 * 80
        assert "dropped=" in capsys.readouterr().out

    def test_fwmrs_document(self, tables, tmp_path, capsys):
        n_path, r_path = tables
        out = tmp_path / "fw"
        code = main(["debias", str(n_path), str(r_path), "--method", "fwmrs_rf", "--temperature", "0.05",
                     "--label-column", "y", "--trees", "20", "--drops-per-iter", "5", "--output-dir", str(out)])
        assert code == EXIT_OK
        doc = json.loads((out / "weights.json").read_text())
        w_f = np.array(doc["feature_weights"])
        assert w_f.sum() == pytest.approx(1.0) and np.all(w_f >= 0)
        assert np.ptp(w_f) > 0.1 and np.argmin(w_f) == 0
        assert doc["feature_names"] == ["a", "b", "c"]
        assert len(doc["sample_weights"]) == 60 and doc["seed"] == 0
        assert doc["mmd_after"] <= doc["mmd_before"]
        line = capsys.readouterr().out
        for key in ("dropped=", "final_auroc=", "mmd_before=", "mmd_after="):
            assert key in line

    @pytest.mark.parametrize("method", ["uniform", "kmm", "psa", "fwmrs_svm"])
    def test_other_methods(self, tables, tmp_path, method):
        n_path, r_path = tables
        out = tmp_path / method
        assert main(["debias", str(n_path), str(r_path), "--method", method, "--label-column", "y",
                     "--drops-per-iter", "5", "--output-dir", str(out)]) == EXIT_OK
        doc = json.loads((out / "weights.json").read_text())
        assert doc["method"] == method and len(doc["sample_weights"]) == 60

    def test_missing_column(self, tables, tmp_path, capsys):
        n_path, _ = tables
        bad = _write(tmp_path / "R_bad.csv", ["a", "c"], [[0.1, 0.2], [0.3, 0.4]] * 10)
        code = main(["debias", str(n_path), str(bad), "--label-column", "y", "--output-dir", str(tmp_path)])
        assert code == EXIT_DATA
        assert "'b'" in capsys.readouterr().err

    def test_missing_file(self, tables, tmp_path):
        n_path, _ = tables
        assert main(["debias", str(n_path), str(tmp_path / "none.csv"), "--output-dir", str(tmp_path)]) == EXIT_DATA

    def test_non_numeric_cell_names_column_and_value(self, tables, tmp_path, capsys):
        n_path, _ = tables
        bad = _write(tmp_path / "R_text.csv", ["a", "b", "c"], [[0.1, 0.2, 0.3]] * 5 + [[0.1, "oops", 0.3]])
        code = main(["debias", str(n_path), str(bad), "--label-column", "y", "--output-dir", str(tmp_path)])
        assert code == EXIT_DATA
        err = capsys.readouterr().err
        assert "'b'" in err and "'oops'" in err

    def test_method_failure(self, tables, tmp_path, monkeypatch, capsys):
        def boom(*args, **kwargs):
            raise cli.KMMError("did not converge")

        monkeypatch.setattr(cli, "kmm_weights", boom)
        n_path, r_path = tables
        code = main(["debias", str(n_path), str(r_path), "--method", "kmm", "--label-column", "y",
                     "--output-dir", str(tmp_path)])
        assert code == EXIT_METHOD
        assert "did not converge" in capsys.readouterr().err


class TestExperimentCommands:
    def test_evaluate_is_byte_deterministic(self, config, tmp_path, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["evaluate", "--config", str(config), "--output-dir", str(out)]) == EXIT_OK
        assert (a / "records.csv").read_bytes() == (b / "records.csv").read_bytes()
        assert (a / "summary.csv").read_bytes() == (b / "summary.csv").read_bytes()
        with open(a / "records.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 3 * 2 * 2 and "wall_time" not in rows[0]
        report = json.loads((a / "report.json").read_text())
        assert report["n_records"] == 12 and len(report["comparisons"]) == 1
        assert "mean rank" in capsys.readouterr().out

    def test_seed_override_changes_records(self, config, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["evaluate", "--config", str(config), "--method", "uniform", "--output-dir", str(a)]) == EXIT_OK
        assert main(["evaluate", "--config", str(config), "--method", "uniform", "--seed", "6",
                     "--output-dir", str(b)]) == EXIT_OK
        assert (a / "records.csv").read_bytes() != (b / "records.csv").read_bytes()

    def test_sweep_rows(self, config, tmp_path):
        out = tmp_path / "sweep"
        text = config.read_text().replace("temperatures = [0.05, 0.5]",
                                          "temperatures = [0.001, 0.0025, 0.005, 0.01, 0.025, 0.05, 0.1, 0.25, 0.5]")
        config.write_text(text.replace("n_repeats = 2", "n_repeats = 1"))
        assert main(["sweep", "--config", str(config), "--output-dir", str(out)]) == EXIT_OK
        with open(out / "sweep_summary.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 10 and sum(r["method"] == "mrs" for r in rows) == 1

    def test_bias_variance(self, config, tmp_path):
        out = tmp_path / "bv"
        assert main(["bias-variance", "--config", str(config), "--method", "uniform",
                     "--output-dir", str(out)]) == EXIT_OK
        with open(out / "bv_table.csv") as fh:
            rows = {r["method"]: r for r in csv.DictReader(fh)}
        assert set(rows) == {"uniform", "constant"} and float(rows["constant"]["variance"]) == 0.0

    def test_report_round_trip(self, config, tmp_path):
        a = tmp_path / "a"
        assert main(["evaluate", "--config", str(config), "--method", "uniform", "--method", "mrs",
                     "--output-dir", str(a)]) == EXIT_OK
        out = tmp_path / "rep"
        assert main(["report", str(a / "records.csv"), "--output-dir", str(out)]) == EXIT_OK
        assert (out / "summary.csv").read_bytes() == (a / "summary.csv").read_bytes()

    def test_report_on_empty_records(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text(",".join(["dataset", "method", "repeat", "fold", "auroc", "n_dropped", "dropped_fraction",
                                  "mmd", "selection_auroc", "hyperparams", "error"]) + "\n")
        assert main(["report", str(path), "--output-dir", str(tmp_path)]) == EXIT_CONFIG
        assert main(["report", "--output-dir", str(tmp_path)]) == EXIT_CONFIG

    def test_invalid_config(self, tmp_path, capsys):
        path = tmp_path / "bad.toml"
        path.write_text("[grids]\ntemperatures = []\n")
        assert main(["evaluate", "--config", str(path), "--output-dir", str(tmp_path)]) == EXIT_CONFIG
        assert "grids.temperatures" in capsys.readouterr().err

    def test_unknown_dataset(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text('[data]\ndataset = "nowhere"\n')
        assert main(["evaluate", "--config", str(path), "--output-dir", str(tmp_path)]) == EXIT_CONFIG

    def test_module_entry_point(self):
        res = subprocess.run([sys.executable, "-m", "fwmrs", "--help"], capture_output=True, text=True)
        assert res.returncode == 0
        for cmd in ("debias", "sweep", "evaluate", "bias-variance", "report"):
            assert cmd in res.stdout
