"""End-to-end CLI behavior: artifacts, determinism, exit codes."""

import json

import pytest

from ldssl.cli import RunSpec, main

COMMON = [
    "--generator", "two-moons", "--n", "240", "--noise", "0.1",
    "--m", "0.3", "--k", "3", "--seed", "5", "--epochs", "3",
    "--batch-size", "8", "--reps", "2",
]


def run_cli(args):
    return main([str(a) for a in args])


def stripped_metrics(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    for fold in doc["folds"]:
        fold.pop("encoder_seconds")
        fold.pop("classifier_seconds")
    return json.dumps(doc, sort_keys=True)


class TestTrain:
    def test_writes_all_artifacts(self, tmp_path):
        out = tmp_path / "run"
        assert run_cli(["train", *COMMON, "--out", out]) == 0
        for name in ("spec.json", "manifest.json", "metrics.json",
                     "projection.csv"):
            assert (out / name).exists()
        for rep in range(2):
            assert (out / "checkpoints" / f"encoder_rep{rep}.npz").exists()
            assert (out / "checkpoints" / f"classifier_rep{rep}.npz").exists()
        with open(out / "metrics.json", encoding="utf-8") as fh:
            metrics = json.load(fh)
        assert len(metrics["folds"]) == 2
        assert metrics["k"] == 3 and metrics["seed"] == 5
        with open(out / "projection.csv", encoding="utf-8") as fh:
            header = fh.readline().strip()
            rows = sum(1 for _ in fh)
        assert header == "x,y,true_label,labeled_flag,predicted_label"
        assert rows == 240

    def test_rerun_is_byte_identical_apart_from_timings(self, tmp_path):
        first, second = tmp_path / "a", tmp_path / "b"
        assert run_cli(["train", *COMMON, "--out", first]) == 0
        assert run_cli(["train", *COMMON, "--out", second]) == 0
        assert stripped_metrics(first / "metrics.json") == stripped_metrics(
            second / "metrics.json"
        )

    def test_missing_csv_exits_3_without_outputs(self, tmp_path):
        out = tmp_path / "never"
        code = run_cli([
            "train", "--csv", tmp_path / "absent.csv", "--out", out,
            "--seed", "1",
        ])
        assert code == 3
        assert not out.exists()

    def test_bad_m_exits_2(self, tmp_path):
        code = run_cli(["train", *COMMON[:-4], "--m", "1.7",
                        "--out", tmp_path / "x"])
        assert code == 2

    def test_divergent_config_exits_4(self, tmp_path):
        # the step size must push parameters past float64 overflow; smaller
        # blow-ups are absorbed by the norm layer and train on
        args = [
            "train", "--generator", "two-moons", "--n", "240", "--noise",
            "0.1", "--m", "0.3", "--k", "3", "--seed", "5", "--epochs", "2",
            "--batch-size", "8", "--reps", "1", "--encoder-lr", "1e300",
            "--out", tmp_path / "x",
        ]
        with pytest.warns(RuntimeWarning):
            assert run_cli(args) == 4

    def test_spec_file_round_trip(self, tmp_path):
        out = tmp_path / "run"
        assert run_cli(["train", *COMMON, "--out", out]) == 0
        with open(out / "spec.json", encoding="utf-8") as fh:
            spec = RunSpec.from_dict(json.load(fh))
        assert spec.m_fraction == 0.3
        assert spec.config.k == 3
        assert spec.dataset["generator"] == "two-moons"
        with open(out / "manifest.json", encoding="utf-8") as fh:
            manifest = json.load(fh)
        assert manifest["spec"] == spec.to_dict()

    def test_config_file_with_flag_override(self, tmp_path):
        config_path = tmp_path / "spec.json"
        config_path.write_text(json.dumps({
            "dataset": {"generator": "two-moons", "n": 240, "noise": 0.1},
            "m_fraction": 0.3,
            "n_repetitions": 2,
            "config": {"epochs": 9, "batch_size": 8, "k": 3, "seed": 5},
        }))
        out = tmp_path / "run"
        assert run_cli(["train", "--config", config_path, "--epochs", "2",
                        "--out", out]) == 0
        with open(out / "spec.json", encoding="utf-8") as fh:
            spec = json.load(fh)
        assert spec["config"]["epochs"] == 2       # flag wins
        assert spec["config"]["batch_size"] == 8   # file value survives

    def test_default_out_honors_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("LDSSL_OUT", str(tmp_path / "root"))
        assert run_cli(["train", *COMMON]) == 0
        runs = list((tmp_path / "root").iterdir())
        assert len(runs) == 1 and runs[0].name.startswith("train-")


class TestBaseline:
    def test_entropy_with_all_labels_equals_full(self, tmp_path):
        shared = [
            "--generator", "two-moons", "--n", "240", "--noise", "0.1",
            "--seed", "5", "--epochs", "3", "--batch-size", "8",
            "--reps", "2",
        ]
        a, b = tmp_path / "entropy", tmp_path / "full"
        assert run_cli(["baseline", *shared, "--m", "1.0",
                        "--which", "entropy", "--out", a]) == 0
        assert run_cli(["baseline", *shared, "--which", "full",
                        "--out", b]) == 0
        assert stripped_metrics(a / "metrics.json") == stripped_metrics(
            b / "metrics.json"
        )

    def test_paired_comparison_file(self, tmp_path):
        run = tmp_path / "run"
        assert run_cli(["train", *COMMON, "--out", run]) == 0
        base = tmp_path / "base"
        assert run_cli(["baseline", *COMMON, "--which", "entropy",
                        "--compare-to", run / "manifest.json",
                        "--out", base]) == 0
        lines = (base / "comparison.csv").read_text().strip().splitlines()
        assert lines[0] == "rep,baseline_accuracy,sembc_accuracy,delta"
        assert len(lines) == 3  # header + 2 repetitions
        with open(base / "manifest.json", encoding="utf-8") as fh:
            manifest = json.load(fh)
        assert manifest["method"] == "entropy"


class TestSweeps:
    def test_sweep_m_rows(self, tmp_path):
        out = tmp_path / "sweep"
        assert run_cli(["sweep-m", *COMMON, "--m-list", "0.3,0.5",
                        "--out", out]) == 0
        lines = (out / "sweep_m.csv").read_text().strip().splitlines()
        assert lines[0] == "m_fraction,metric,mean,std"
        assert len(lines) == 1 + 2 * 4  # |m_list| x 4 metrics
        assert (out / "m-0.30" / "metrics.json").exists()
        assert (out / "m-0.50" / "metrics.json").exists()

    def test_sweep_k_columns(self, tmp_path):
        out = tmp_path / "sweep"
        assert run_cli(["sweep-k", *COMMON, "--k-list", "2,4",
                        "--out", out]) == 0
        lines = (out / "sweep_k.csv").read_text().strip().splitlines()
        assert lines[0] == "k,accuracy_mean,accuracy_std,label_generation_seconds"
        assert len(lines) == 3
        for line in lines[1:]:
            cells = line.split(",")
            assert len(cells) == 4
            assert float(cells[3]) > 0.0


class TestEvalAndProject:
    def test_eval_prints_summary(self, tmp_path, capsys):
        out = tmp_path / "run"
        assert run_cli(["train", *COMMON, "--out", out]) == 0
        capsys.readouterr()
        assert run_cli(["eval", "--run-dir", out]) == 0
        printed = capsys.readouterr().out
        assert "accuracy" in printed and "method: sembc" in printed

    def test_eval_missing_dir_exits_3(self, tmp_path):
        assert run_cli(["eval", "--run-dir", tmp_path / "nowhere"]) == 3

    def test_project_writes_csv(self, tmp_path):
        out = tmp_path / "run"
        assert run_cli(["train", *COMMON, "--out", out]) == 0
        assert run_cli(["project", "--run-dir", out, "--rep", "1"]) == 0
        path = out / "projection-rep1.csv"
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "x,y,true_label,labeled_flag,predicted_label"
        assert len(lines) == 241

    def test_jobs_flag_matches_serial(self, tmp_path):
        serial, parallel = tmp_path / "serial", tmp_path / "parallel"
        assert run_cli(["train", *COMMON, "--out", serial]) == 0
        assert run_cli(["train", *COMMON, "--jobs", "2",
                        "--out", parallel]) == 0
        assert stripped_metrics(serial / "metrics.json") == stripped_metrics(
            parallel / "metrics.json"
        )
