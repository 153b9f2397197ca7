import json
from pathlib import Path

import numpy as np
import pytest

from groupvae.cli import main


TRAIN_OPTS = [
    "--opt", "max_epochs=3",
    "--opt", "patience=3",
    "--opt", "groups=2",
    "--opt", "latent_dim=3",
    "--opt", "hidden=8",
    "--opt", "dropout=0.0",
    "--opt", "clf_max_epochs=4",
    "--opt", "clf_patience=4",
    "--opt", "clf_seeds=2",
]


@pytest.fixture(scope="module")
def data_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "toy.csv"
    code = main([
        "synth", "--out", str(path), "--n", "60", "--d", "12",
        "--classes", "2", "--latent-true", "3", "--seed", "5",
    ])
    assert code == 0
    return path


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory, data_csv):
    out = tmp_path_factory.mktemp("run") / "models"
    code = main([
        "train", "--data", str(data_csv), "--out", str(out), "--seed", "11",
        *TRAIN_OPTS,
    ])
    assert code == 0
    return out


class TestSynth:
    def test_csv_shape(self, data_csv):
        lines = data_csv.read_text().splitlines()
        assert len(lines) == 61
        assert len(lines[0].split(",")) == 13
        assert lines[0].split(",")[-1] == "label"

    def test_column_count_at_paper_shape(self, tmp_path):
        path = tmp_path / "wide.csv"
        assert main([
            "synth", "--out", str(path), "--n", "10", "--d", "1000",
            "--classes", "4", "--seed", "7",
        ]) == 0
        header = path.read_text().splitlines()[0]
        assert len(header.split(",")) == 1001


class TestTrain:
    def test_emits_all_artifacts(self, trained_dir):
        names = {p.name for p in trained_dir.iterdir()}
        for fold in range(5):
            assert f"fold{fold}.npz" in names
            assert f"fold{fold}_history.csv" in names
        for artifact in ("report.json", "report.csv", "folds.jsonl", "history.png", "timing.json"):
            assert artifact in names

    def test_report_embeds_resolved_config(self, trained_dir):
        payload = json.loads((trained_dir / "report.json").read_text())
        assert payload["config"]["seed"] == 11
        assert payload["config"]["groups"] == 2
        assert payload["config"]["lr"] == 0.001
        assert payload["dataset"]["samples"] == 60

    def test_history_csv_columns(self, trained_dir):
        header = (trained_dir / "fold0_history.csv").read_text().splitlines()[0]
        assert header == "epoch,train_loss,valid_loss,beta"

    def test_beta_override_from_opt(self, tmp_path, data_csv):
        out = tmp_path / "beta"
        assert main([
            "train", "--data", str(data_csv), "--out", str(out),
            "--opt", "beta_max=0.125", *TRAIN_OPTS,
        ]) == 0
        payload = json.loads((out / "report.json").read_text())
        assert payload["config"]["beta_max"] == 0.125

    def test_byte_identical_reports_for_identical_config(self, tmp_path, data_csv):
        outs = [tmp_path / "rep1", tmp_path / "rep2"]
        for out in outs:
            assert main([
                "train", "--data", str(data_csv), "--out", str(out),
                "--seed", "23", *TRAIN_OPTS,
            ]) == 0
        a = (outs[0] / "report.json").read_bytes()
        b = (outs[1] / "report.json").read_bytes()
        assert a == b


class TestEval:
    def test_runs_folds_times_seeds(self, trained_dir, data_csv, tmp_path):
        out = tmp_path / "eval"
        assert main([
            "eval", "--models", str(trained_dir), "--data", str(data_csv),
            "--out", str(out),
        ]) == 0
        payload = json.loads((out / "report.json").read_text())
        assert payload["summary"]["runs"] == 10  # 5 folds x 2 seeds
        assert len(payload["folds"]) == 5
        recomputed = float(np.mean(payload["summary"]["accuracies"]))
        assert recomputed == pytest.approx(payload["summary"]["mean"], abs=1e-12)

    def test_byte_identical_eval_reports(self, trained_dir, data_csv, tmp_path):
        outs = [tmp_path / "e1", tmp_path / "e2"]
        for out in outs:
            assert main([
                "eval", "--models", str(trained_dir), "--data", str(data_csv),
                "--out", str(out),
            ]) == 0
        assert (outs[0] / "report.json").read_bytes() == (outs[1] / "report.json").read_bytes()

    def test_mismatched_dataset_rejected(self, trained_dir, tmp_path, capsys):
        other = tmp_path / "other.csv"
        assert main([
            "synth", "--out", str(other), "--n", "30", "--d", "9",
            "--classes", "2", "--seed", "1",
        ]) == 0
        code = main([
            "eval", "--models", str(trained_dir), "--data", str(other),
            "--out", str(tmp_path / "bad"),
        ])
        assert code == 2


class TestMaskEval:
    def test_rows_and_eval_equivalence(self, trained_dir, data_csv, tmp_path):
        eval_out = tmp_path / "eval"
        mask_out = tmp_path / "mask"
        assert main([
            "eval", "--models", str(trained_dir), "--data", str(data_csv),
            "--out", str(eval_out),
        ]) == 0
        assert main([
            "mask-eval", "--models", str(trained_dir), "--data", str(data_csv),
            "--out", str(mask_out),
        ]) == 0
        eval_payload = json.loads((eval_out / "report.json").read_text())
        mask_payload = json.loads((mask_out / "report.json").read_text())
        assert [r["dropped"] for r in mask_payload["rows"]] == [0, 1]
        # dropping zero groups must reproduce the eval accuracies bit-exactly
        eval_accs = {
            (fold["fold"], s): acc
            for fold in eval_payload["folds"]
            for s, acc in enumerate(fold["accuracies"])
        }
        for run in mask_payload["per_run"]:
            assert run["accuracy_by_drop"][0] == eval_accs[(run["fold"], run["seed"])]


class TestSupervisedTrain:
    def test_supervised_flag_trains_with_head(self, data_csv, tmp_path):
        out = tmp_path / "sup"
        assert main([
            "train", "--data", str(data_csv), "--out", str(out),
            "--supervised", "--seed", "3", *TRAIN_OPTS,
        ]) == 0
        payload = json.loads((out / "report.json").read_text())
        assert payload["config"]["supervised"] is True
        for fold in payload["folds"]:
            assert 0.0 <= fold["head_test_accuracy"] <= 1.0
        assert "head_test_accuracy_mean" in payload["summary"]


class TestMaskReduction:
    def test_mixture_mean_reduction_runs(self, trained_dir, data_csv, tmp_path):
        out = tmp_path / "mask_mm"
        assert main([
            "mask-eval", "--models", str(trained_dir), "--data", str(data_csv),
            "--out", str(out), "--reduction", "mixture_mean",
        ]) == 0
        payload = json.loads((out / "report.json").read_text())
        assert payload["reduction"] == "mixture_mean"
        assert len(payload["rows"]) == 2


class TestTcCommand:
    def test_report_and_clamping(self, trained_dir, data_csv, tmp_path):
        out = tmp_path / "tc"
        assert main([
            "tc", "--models", str(trained_dir), "--data", str(data_csv),
            "--out", str(out),
        ]) == 0
        payload = json.loads((out / "report.json").read_text())
        assert len(payload["folds"]) == 5
        for record in payload["folds"]:
            assert record["tc"] >= 0.0
            assert record["tc"] == pytest.approx(max(record["tc_raw"], 0.0))

    def test_split_filter(self, trained_dir, data_csv, tmp_path):
        out = tmp_path / "tc_train"
        assert main([
            "tc", "--models", str(trained_dir), "--data", str(data_csv),
            "--out", str(out), "--split", "train",
        ]) == 0
        payload = json.loads((out / "report.json").read_text())
        assert payload["split"] == "train"
        assert payload["folds"][0]["rows"] < 60


class TestExportLatents:
    def test_csv_format(self, trained_dir, data_csv, tmp_path):
        out = tmp_path / "latents"
        assert main([
            "export-latents", "--models", str(trained_dir), "--data", str(data_csv),
            "--out", str(out),
        ]) == 0
        files = sorted(Path(out).glob("latents_fold*.csv"))
        assert len(files) == 5
        lines = files[0].read_text().splitlines()
        assert lines[0] == "sample_index,label,z_0,z_1,z_2"
        assert len(lines) == 61


class TestSweep:
    def test_small_sweep(self, data_csv, tmp_path):
        out = tmp_path / "sweep"
        assert main([
            "sweep-experts", "--data", str(data_csv), "--out", str(out),
            "--experts", "2", *TRAIN_OPTS,
        ]) == 0
        payload = json.loads((out / "report.json").read_text())
        assert payload["baseline"]["experts"] == 1
        assert payload["entries"][0]["experts"] == 2
        assert (out / "experts1" / "report.json").exists()
        assert (out / "experts2" / "report.json").exists()
        assert (out / "sweep.png").exists()


class TestExitCodes:
    def test_unknown_flag_is_usage_error(self, capsys):
        assert main(["train", "--bogus"]) == 1

    def test_missing_data_file_is_data_error(self, tmp_path):
        assert main([
            "train", "--data", str(tmp_path / "absent.csv"),
            "--out", str(tmp_path / "o"),
        ]) == 2

    def test_enumeration_conflict_is_config_error(self, data_csv, tmp_path):
        code = main([
            "train", "--data", str(data_csv), "--out", str(tmp_path / "o"),
            "--opt", "groups=9", "--opt", "elbo_mode=full_enumeration",
        ])
        assert code == 1

    def test_unknown_config_key_is_config_error(self, data_csv, tmp_path):
        code = main([
            "train", "--data", str(data_csv), "--out", str(tmp_path / "o"),
            "--opt", "turbo=yes",
        ])
        assert code == 1
