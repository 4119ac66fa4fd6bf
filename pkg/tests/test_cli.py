"""Command-line surface: exit codes, artifacts, manifests, reproducibility."""

import json

import numpy as np
import pytest

from ccr.benchmarks import f2
from ccr.cli import main
from ccr.data import Dataset, save_dataset


@pytest.fixture()
def f2_csv(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, size=(200, 1))
    path = tmp_path / "f2.csv"
    save_dataset(Dataset(X, f2(X[:, 0])), path)
    return path


@pytest.fixture()
def f2_test_csv(tmp_path):
    rng = np.random.default_rng(1)
    X = rng.uniform(-1, 1, size=(80, 1))
    path = tmp_path / "f2_test.csv"
    save_dataset(Dataset(X, f2(X[:, 0])), path)
    return path


def fit_args(f2_csv, out, extra=()):
    return ["fit", "--data", str(f2_csv), "--out", str(out), "--clusters", "2",
            "--hidden-width", "20", "--max-epochs", "30", "--seed", "0", *extra]


class TestFit:
    def test_writes_model_and_manifest(self, f2_csv, tmp_path):
        out = tmp_path / "run"
        assert main(fit_args(f2_csv, out)) == 0
        assert (out / "model.json").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "fit"
        assert str(f2_csv) in manifest["inputs"]
        assert len(manifest["inputs"][str(f2_csv)]) == 64  # sha256 hex

    def test_elbow_report_when_clusters_unset(self, f2_csv, tmp_path):
        out = tmp_path / "run"
        code = main(["fit", "--data", str(f2_csv), "--out", str(out),
                     "--hidden-width", "20", "--max-epochs", "20", "--seed", "0"])
        assert code == 0
        assert (out / "elbow.csv").exists()
        assert (out / "elbow.png").exists()

    def test_missing_data_flag_usage_error(self, capsys):
        assert main(["fit"]) == 2

    def test_zero_clusters_rejected(self, f2_csv, tmp_path):
        code = main(["fit", "--data", str(f2_csv), "--out", str(tmp_path / "x"),
                     "--clusters", "0"])
        assert code == 2

    def test_missing_file_usage_error(self, tmp_path):
        code = main(["fit", "--data", str(tmp_path / "absent.csv"),
                     "--out", str(tmp_path / "x")])
        assert code == 2

    def test_config_file_overridden_by_flags(self, f2_csv, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"clusters": 3, "seed": 5,
                                        "mlp": {"hidden_width": 10, "max_epochs": 10}}))
        out = tmp_path / "run"
        code = main(["fit", "--data", str(f2_csv), "--out", str(out),
                     "--config", str(cfg_path), "--clusters", "2"])
        assert code == 0
        model = json.loads((out / "model.json").read_text())
        assert model["config"]["num_clusters"] == 2  # flag wins
        assert model["config"]["seed"] == 5  # file fills the gap


class TestEvaluate:
    def test_outputs_and_stdout(self, f2_csv, f2_test_csv, tmp_path, capsys):
        out = tmp_path / "run"
        main(fit_args(f2_csv, out))
        capsys.readouterr()  # drop the fit summary line
        code = main(["evaluate", "--model", str(out / "model.json"),
                     "--data", str(f2_test_csv), "--out", str(out)])
        assert code == 0
        captured = capsys.readouterr().out
        first_line = captured.splitlines()[0]
        metrics = json.loads(first_line)
        assert "l2" in metrics and "r2" in metrics
        assert "L2" in captured  # aligned table follows
        for name in ("metrics.json", "predictions.csv", "residuals.csv",
                     "scatter.png", "residuals.png"):
            assert (out / name).exists(), name

    def test_predictions_row_count(self, f2_csv, f2_test_csv, tmp_path):
        out = tmp_path / "run"
        main(fit_args(f2_csv, out))
        main(["evaluate", "--model", str(out / "model.json"),
              "--data", str(f2_test_csv), "--out", str(out)])
        rows = (out / "predictions.csv").read_text().strip().splitlines()
        assert len(rows) == 80 + 1  # header + one row per test point

    def test_residual_bins(self, f2_csv, f2_test_csv, tmp_path):
        out = tmp_path / "run"
        main(fit_args(f2_csv, out))
        main(["evaluate", "--model", str(out / "model.json"),
              "--data", str(f2_test_csv), "--out", str(out)])
        rows = (out / "residuals.csv").read_text().strip().splitlines()
        assert len(rows) == 50 + 1

    def test_empty_test_file(self, f2_csv, tmp_path):
        out = tmp_path / "run"
        main(fit_args(f2_csv, out))
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        code = main(["evaluate", "--model", str(out / "model.json"),
                     "--data", str(empty), "--out", str(out)])
        assert code == 2

    def test_reproducible_metrics_bytes(self, f2_csv, f2_test_csv, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            main(fit_args(f2_csv, out))
            main(["evaluate", "--model", str(out / "model.json"),
                  "--data", str(f2_test_csv), "--out", str(out), "--no-figures"])
            outs.append(out)
        assert (outs[0] / "metrics.json").read_bytes() == (outs[1] / "metrics.json").read_bytes()
        assert (outs[0] / "predictions.csv").read_bytes() == (outs[1] / "predictions.csv").read_bytes()

    def test_no_figures_flag(self, f2_csv, f2_test_csv, tmp_path):
        out = tmp_path / "run"
        main(fit_args(f2_csv, out))
        main(["evaluate", "--model", str(out / "model.json"),
              "--data", str(f2_test_csv), "--out", str(out), "--no-figures"])
        assert not (out / "scatter.png").exists()


class TestPredict:
    def test_writes_predictions(self, f2_csv, f2_test_csv, tmp_path):
        out = tmp_path / "run"
        main(fit_args(f2_csv, out))
        code = main(["predict", "--model", str(out / "model.json"),
                     "--data", str(f2_test_csv), "--out", str(out)])
        assert code == 0
        assert (out / "predictions.csv").exists()

    def test_missing_model(self, f2_test_csv, tmp_path):
        code = main(["predict", "--model", str(tmp_path / "no.json"),
                     "--data", str(f2_test_csv), "--out", str(tmp_path)])
        assert code == 2


class TestActiveCommand:
    def test_history_jsonl(self, f2_csv, tmp_path):
        out = tmp_path / "run"
        code = main(["active", "--data", str(f2_csv), "--out", str(out),
                     "--strategy", "hull", "--score", "uncertainty",
                     "--budget", "6", "--refit-every", "3",
                     "--oracle-example", "2", "--clusters", "2",
                     "--hidden-width", "20", "--max-epochs", "20", "--seed", "0"])
        assert code == 0
        lines = (out / "history.jsonl").read_text().strip().splitlines()
        entries = [json.loads(line) for line in lines]
        assert len(entries) == 3  # initial + two refits
        assert entries[0]["step"] == 0
        assert (out / "model.json").exists()
        assert (out / "history.png").exists()

    def test_budget_zero_single_entry(self, f2_csv, tmp_path):
        out = tmp_path / "run"
        code = main(["active", "--data", str(f2_csv), "--out", str(out),
                     "--strategy", "hull", "--budget", "0", "--refit-every", "5",
                     "--oracle-example", "2", "--clusters", "2",
                     "--hidden-width", "20", "--max-epochs", "20"])
        assert code == 0
        lines = (out / "history.jsonl").read_text().strip().splitlines()
        assert len(lines) == 1

    def test_unknown_strategy_usage_error(self, f2_csv, tmp_path):
        code = main(["active", "--data", str(f2_csv), "--out", str(tmp_path),
                     "--strategy", "telepathy", "--budget", "5"])
        assert code == 2

    def test_oracle_required(self, f2_csv, tmp_path):
        code = main(["active", "--data", str(f2_csv), "--out", str(tmp_path),
                     "--strategy", "hull", "--budget", "5"])
        assert code == 2


class TestBenchmarkCommand:
    def test_example_flag_required(self, tmp_path):
        assert main(["benchmark", "--out", str(tmp_path)]) == 2

    def test_example_2_row(self, tmp_path, capsys):
        out = tmp_path / "bench"
        code = main(["benchmark", "--example", "2", "--seed", "2", "--out", str(out)])
        assert code == 0
        table = capsys.readouterr().out
        assert "Example 2" in table
        rows = (out / "results.csv").read_text().strip().splitlines()
        assert len(rows) == 2
        assert (out / "example2" / "metrics.json").exists()
        assert (out / "example2" / "scatter.png").exists()

    def test_bad_example_number(self, tmp_path):
        assert main(["benchmark", "--example", "9", "--out", str(tmp_path)]) == 2
