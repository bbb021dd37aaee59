"""Command-line surface: exit codes, artifacts and provenance."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from app import __version__
from app.cli import EXIT_OK, EXIT_VALIDATION, run
from app.models.experiment_models import ExperimentConfig
from app.models.nn_models import EncoderStack
from app.services import create_services
from app.services.bound_harness import REPORTS_PER_INSTANCE


@pytest.fixture
def services(lab_config, logger):
    return create_services(config=lab_config, logger=logger)


@pytest.fixture
def fairness_csv(tmp_path: Path) -> Path:
    y_true = np.array([0, 1, 0, 1, 0, 1, 0, 1])
    g = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    path = tmp_path / "preds.csv"
    pd.DataFrame({"y_true": y_true, "y_pred": np.where(g == 0, y_true, 0), "g": g}).to_csv(
        path, index=False
    )
    return path


@pytest.fixture
def tradeoff_csv(tmp_path: Path) -> Path:
    path = tmp_path / "points.csv"
    pd.DataFrame(
        {"lambda": [0.0, 0.5, 0.9], "V": [0.3, 0.1, 0.4], "U": [0.9, 0.6, 0.5]}
    ).to_csv(path, index=False)
    return path


@pytest.fixture
def experiment_json(tmp_path: Path, tiny_synth, tiny_train) -> Path:
    path = tmp_path / "experiment.json"
    document = ExperimentConfig(synth=tiny_synth, train=tiny_train).model_dump(mode="json")
    path.write_text(json.dumps(document), encoding="utf-8")
    return path


def _read_json(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


class TestParseErrors:
    def test_unknown_subcommand(self, services, capsys):
        assert run(["explode"], services) == EXIT_VALIDATION
        assert len(capsys.readouterr().err.strip().splitlines()) == 1

    def test_missing_subcommand(self, services):
        assert run([], services) == EXIT_VALIDATION

    def test_bad_bandwidth(self, services, tmp_path):
        argv = ["dcor", "--in", str(tmp_path / "x.csv"), "--metric", "hsic", "--bandwidth", "-1"]
        assert run(argv, services) == EXIT_VALIDATION

    def test_version(self, services, capsys):
        assert run(["--version"], services) == EXIT_OK
        assert __version__ in capsys.readouterr().out


class TestVerifyBounds:
    def test_artifacts_and_stdout(self, services, tmp_path, capsys):
        out = tmp_path / "run"
        code = run(["verify-bounds", "--instances", "3", "--seed", "7", "--output-dir", str(out)], services)
        assert code == EXIT_OK
        document = _read_json(out / "bounds.json")
        assert document["tool_version"] == __version__
        assert len(document["config_hash"]) == 64
        assert document["instances"] == 3
        assert document["violations"] == sum(r["slack"] < -1e-9 for r in document["reports"])
        assert len(document["reports"]) == 3 * REPORTS_PER_INSTANCE
        assert capsys.readouterr().out == (out / "bounds.json").read_text(encoding="utf-8")
        assert (out / "bounds.csv").read_text(encoding="utf-8").startswith("# tool_version=")
        assert (out / "run.log").is_file()

    def test_same_seed_gives_identical_bytes(self, services, tmp_path):
        for name in ("a", "b"):
            argv = ["verify-bounds", "--instances", "3", "--seed", "11", "--output-dir", str(tmp_path / name)]
            assert run(argv, services) == EXIT_OK
        for artifact in ("bounds.json", "bounds.csv"):
            assert (tmp_path / "a" / artifact).read_bytes() == (tmp_path / "b" / artifact).read_bytes()

    def test_csv_format_on_stdout(self, services, tmp_path, capsys):
        argv = ["verify-bounds", "--instances", "1", "--format", "csv", "--output-dir", str(tmp_path)]
        assert run(argv, services) == EXIT_OK
        assert capsys.readouterr().out.startswith("# tool_version=")

    def test_zero_instances(self, services, tmp_path, capsys):
        argv = ["verify-bounds", "--instances", "0", "--output-dir", str(tmp_path)]
        assert run(argv, services) == EXIT_VALIDATION
        assert "--instances" in capsys.readouterr().err


class TestFairness:
    def test_biased_predictions(self, services, fairness_csv, tmp_path):
        assert run(["fairness", "--in", str(fairness_csv), "--output-dir", str(tmp_path)], services) == 0
        document = _read_json(tmp_path / "fairness.json")
        assert document["eod"] == pytest.approx(0.5)
        assert document["accuracy"] == pytest.approx(0.75)

    def test_missing_file(self, services, tmp_path, capsys):
        argv = ["fairness", "--in", str(tmp_path / "absent.csv"), "--output-dir", str(tmp_path)]
        assert run(argv, services) == EXIT_VALIDATION
        assert "file not found" in capsys.readouterr().err

    def test_missing_column(self, services, tmp_path):
        path = tmp_path / "bad.csv"
        pd.DataFrame({"y_true": [0, 1], "g": [0, 1]}).to_csv(path, index=False)
        assert run(["fairness", "--in", str(path), "--output-dir", str(tmp_path)], services) == 2


class TestDependence:
    def test_dcor_with_domains(self, services, tmp_path, rng):
        a = rng.normal(size=(24, 2))
        frame = pd.DataFrame(
            {
                "a_0": a[:, 0],
                "a_1": a[:, 1],
                "b_0": a[:, 0] + 0.1 * rng.normal(size=24),
                "y": np.repeat([0, 1], 12),
                "d": np.tile([0, 1], 12),
            }
        )
        path = tmp_path / "reps.csv"
        frame.to_csv(path, index=False)
        assert run(["dcor", "--in", str(path), "--output-dir", str(tmp_path)], services) == EXIT_OK
        document = _read_json(tmp_path / "dependence.json")
        assert 0.0 < document["unconditional"] <= 1.0
        assert document["given_y_d"]["cells_used"] == 4

    def test_hsic_fixed_bandwidth(self, services, tmp_path, rng):
        frame = pd.DataFrame(
            {"a_0": rng.normal(size=10), "b_0": rng.normal(size=10), "y": np.repeat([0, 1], 5)}
        )
        path = tmp_path / "reps.csv"
        frame.to_csv(path, index=False)
        argv = ["dcor", "--in", str(path), "--metric", "hsic", "--bandwidth", "1.5", "--output-dir", str(tmp_path)]
        assert run(argv, services) == EXIT_OK
        document = _read_json(tmp_path / "dependence.json")
        assert document["bandwidth"] == 1.5
        assert "given_y_d" not in document


class TestPareto:
    def test_front_and_selection(self, services, tradeoff_csv, tmp_path):
        assert run(["pareto", "--in", str(tradeoff_csv), "--output-dir", str(tmp_path)], services) == 0
        document = _read_json(tmp_path / "pareto.json")
        assert [p["lambda"] for p in document["front"]] == [0.5, 0.0]
        assert 0.0 <= document["hvi_percent"] <= 100.0
        assert document["selected_index"] in (0, 1)

    def test_reads_sweep_columns(self, services, tmp_path):
        path = tmp_path / "sweep.csv"
        path.write_text(
            "# tool_version=x config_hash=y\nlambda,V_eod,V_eo,U\n0.0,0.4,0.2,0.9\n0.5,0.1,0.3,0.7\n",
            encoding="utf-8",
        )
        argv = ["pareto", "--in", str(path), "--metric", "eo", "--output-dir", str(tmp_path)]
        assert run(argv, services) == EXIT_OK
        document = _read_json(tmp_path / "pareto.json")
        assert document["metric"] == "eo"
        assert [p["V"] for p in document["front"]] == [0.2]


class TestTraining:
    def test_train_writes_checkpoint(self, services, experiment_json, tmp_path):
        out = tmp_path / "train"
        argv = ["train", "--config", str(experiment_json), "--lambda", "0.5", "--output-dir", str(out)]
        assert run(argv, services) == EXIT_OK
        for name in ("train.json", "train.csv", "checkpoint.json", "curve.csv", "target_predictions.csv"):
            assert (out / name).is_file()
        stack = EncoderStack.from_json(_read_json(out / "checkpoint.json"))
        assert stack.domain_frozen and stack.group_frozen
        predictions = pd.read_csv(out / "target_predictions.csv", comment="#")
        assert list(predictions.columns) == ["y_true", "y_pred", "g", "d"]

    def test_lambda_out_of_range(self, services, experiment_json, tmp_path):
        argv = ["train", "--config", str(experiment_json), "--lambda", "1.0", "--output-dir", str(tmp_path)]
        assert run(argv, services) == EXIT_VALIDATION

    def test_invalid_config_value(self, services, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"train": {"lambda_grid": [0.0, 1.0]}}), encoding="utf-8")
        assert run(["sweep", "--config", str(path), "--output-dir", str(tmp_path)], services) == 2

    def test_malformed_config(self, services, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json", encoding="utf-8")
        assert run(["sweep", "--config", str(path), "--output-dir", str(tmp_path)], services) == 2

    def test_sweep_csv(self, services, experiment_json, tmp_path):
        assert run(["sweep", "--config", str(experiment_json), "--output-dir", str(tmp_path)], services) == 0
        lines = (tmp_path / "sweep.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0].startswith("# tool_version=")
        assert lines[1] == "lambda,V_eod,V_eo,U"
        assert len(lines) == 2 + 2
        assert set(_read_json(tmp_path / "sweep.json")["fronts"]) == {"eod", "eo"}

    def test_report_ablation(self, services, experiment_json, tmp_path):
        assert run(["report", "--config", str(experiment_json), "--output-dir", str(tmp_path)], services) == 0
        document = _read_json(tmp_path / "report.json")
        assert [e["name"] for e in document["ablation"]][0] == "ERM"
        assert "trend" not in document
