"""End-to-end tests of the command-line interface and its exit codes."""

import csv
import hashlib
import json

import numpy as np
import pytest

from rog.cli import METRICS_COLUMNS, main
from rog.data import load_feature_set, load_mask, mask_path


def run(*argv):
    return main(list(argv))


def synth(tmp_path, *extra, seed="0"):
    out = tmp_path / "data"
    code = run(
        "synth", "--out", str(out), "--seed", seed,
        "--classes", "4", "--dim", "3",
        "--n-per-class", "50", "--n-val", "40", "--n-test", "80",
        *extra,
    )
    assert code == 0
    return out


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


class TestSynth:
    def test_outputs_and_shapes(self, tmp_path):
        out = synth(tmp_path)
        train = load_feature_set(out / "train.rogf")
        val = load_feature_set(out / "val.rogf")
        test = load_feature_set(out / "test.rogf")
        assert train.n == 200 and train.dim == 3 and train.num_classes == 4
        assert val.n == 40 and test.n == 80
        mask = load_mask(mask_path(out / "train.rogf"), n=train.n)
        assert mask.shape == (200,)
        assert json.loads((out / "config.json").read_text())["classes"] == 4

    def test_deterministic(self, tmp_path):
        a = synth(tmp_path / "a")
        b = synth(tmp_path / "b")
        for name in ("train.rogf", "val.rogf", "test.rogf"):
            assert digest(a / name) == digest(b / name)
        assert digest(mask_path(a / "train.rogf")) == digest(
            mask_path(b / "train.rogf")
        )

    def test_seed_changes_data(self, tmp_path):
        a = synth(tmp_path / "a", seed="0")
        b = synth(tmp_path / "b", seed="1")
        assert digest(a / "train.rogf") != digest(b / "train.rogf")

    def test_label_noise_marks_mask(self, tmp_path):
        out = synth(tmp_path, "--noise", "flip", "--rate", "0.2")
        train = load_feature_set(out / "train.rogf")
        mask = load_mask(mask_path(out / "train.rogf"), n=train.n)
        assert mask.sum() >= int(0.2 * train.n)

    def test_bad_rate_exits_2(self, tmp_path):
        assert run(
            "synth", "--out", str(tmp_path / "x"), "--delta-out", "1.5"
        ) == 2


class TestFitEval:
    @pytest.fixture()
    def data(self, tmp_path):
        return synth(tmp_path, "--delta-out", "0.15")

    def fit(self, tmp_path, data, estimator, *extra):
        out = tmp_path / f"fit-{estimator}"
        code = run(
            "fit", "--out", str(out), "--estimator", estimator,
            "--layer", str(data / "train.rogf"), "--imax", "5", *extra,
        )
        assert code == 0
        return out

    @pytest.mark.parametrize("estimator", ["sample", "mcd", "tkm", "lts-euclid"])
    def test_fit_and_eval_each_estimator(self, tmp_path, data, estimator):
        fit_dir = self.fit(tmp_path, data, estimator)
        assert (fit_dir / "model" / "ensemble.json").exists()
        out = tmp_path / f"eval-{estimator}"
        code = run(
            "eval", "--out", str(out), "--model", str(fit_dir / "model"),
            "--layer", str(data / "test.rogf"), "--estimator", estimator,
        )
        assert code == 0
        with open(out / "metrics.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert list(rows[0]) == METRICS_COLUMNS
        acc = float(rows[0]["accuracy"])
        assert acc > 0.9  # well-separated default geometry
        assert float(rows[0]["nll"]) > 0.0

    def test_two_layer_ensemble(self, tmp_path, data):
        out = tmp_path / "fit2"
        code = run(
            "fit", "--out", str(out), "--estimator", "mcd",
            "--layer", str(data / "train.rogf"),
            "--layer", str(data / "train.rogf"),
            "--val-layer", str(data / "val.rogf"),
            "--val-layer", str(data / "val.rogf"),
            "--keep", "20", "--imax", "5",
        )
        assert code == 0
        bundle = json.loads((out / "model" / "ensemble.json").read_text())
        assert len(bundle["layers"]) == 2
        weights = np.array(bundle["weights"])
        assert weights.sum() == pytest.approx(1.0)

    def test_eval_missing_model_exits_3(self, tmp_path, data):
        assert run(
            "eval", "--out", str(tmp_path / "x"),
            "--model", str(tmp_path / "nope"),
            "--layer", str(data / "test.rogf"),
        ) == 3

    def test_fit_corrupt_layer_exits_3(self, tmp_path):
        bad = tmp_path / "bad.rogf"
        bad.write_bytes(b"NOPE" + bytes(100))
        assert run(
            "fit", "--out", str(tmp_path / "x"), "--layer", str(bad)
        ) == 3

    def test_unknown_subcommand_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            run("frobnicate")
        assert exc.value.code == 2


class TestConfigFile:
    def test_config_file_supplies_defaults(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"n_per_class": 30, "classes": 3}))
        out = tmp_path / "data"
        assert run(
            "synth", "--out", str(out), "--config", str(cfg), "--dim", "2",
            "--n-val", "10", "--n-test", "10",
        ) == 0
        train = load_feature_set(out / "train.rogf")
        assert train.n == 90 and train.num_classes == 3

    def test_flag_overrides_config_file(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"classes": 3}))
        out = tmp_path / "data"
        assert run(
            "synth", "--out", str(out), "--config", str(cfg),
            "--classes", "5", "--dim", "2", "--n-per-class", "20",
            "--n-val", "10", "--n-test", "10",
        ) == 0
        assert load_feature_set(out / "train.rogf").num_classes == 5

    def test_unknown_key_exits_2(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bogus_knob": 1}))
        assert run("synth", "--out", str(tmp_path / "x"), "--config", str(cfg)) == 2


class TestTheory:
    def test_lemma1_report(self, tmp_path):
        out = tmp_path / "th"
        code = run(
            "theory", "--out", str(out), "--check", "lemma1",
            "--n-per-class", "5000", "--imax", "10",
        )
        assert code == 0
        report = (out / "report.md").read_text()
        assert "mixture" in report.lower()

    def test_breakdown_csv(self, tmp_path):
        out = tmp_path / "bd"
        code = run(
            "theory", "--out", str(out), "--check", "breakdown", "--imax", "5"
        )
        assert code == 0
        with open(out / "breakdown.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert {"estimator", "fraction", "displacement"} <= set(rows[0])

    def test_theorem1_csv(self, tmp_path):
        out = tmp_path / "t1"
        code = run(
            "theory", "--out", str(out), "--check", "theorem1",
            "--n-grid", "500", "1000", "--imax", "5",
        )
        assert code == 0
        with open(out / "theorem1.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [int(r["n"]) for r in rows] == [500, 1000]


class TestBench:
    def test_small_run_structure(self, tmp_path):
        out = tmp_path / "bench"
        code = run(
            "bench", "--out", str(out), "--deltas", "0.0", "0.2",
            "--n-per-class", "60", "--imax", "3",
        )
        assert code == 0
        with open(out / "metrics.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 10  # 5 methods x 2 rates
        assert {r["estimator"] for r in rows} == {
            "robust_ensemble", "robust_single", "sample", "tkm", "logistic"
        }
        assert all(0.0 <= float(r["accuracy"]) <= 1.0 for r in rows)
        assert "| logistic |" in (out / "report.md").read_text()
