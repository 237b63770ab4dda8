import csv
import json

import numpy as np
import pytest

from dpmac import experiments
from dpmac.accountant import MomentsLedger
from dpmac.config import ConfigError, ExperimentConfig
from dpmac.data import DataError


def quick_config(tmp_path, **overrides):
    base = dict(algorithm="mac", task="autoencoder", seed=3,
                output_dir=str(tmp_path / "run"), synth_train=80,
                synth_test=40, synth_dim=6, synth_latent=2,
                hidden_units=(4,), epochs=2, batch_size=40, z_steps=3)
    base.update(overrides)
    return ExperimentConfig(**base)


def read_metrics(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestBuildDatasets:
    def test_synthetic_split_sizes(self, tmp_path):
        cfg = quick_config(tmp_path)
        train, test = experiments.build_datasets(cfg)
        assert train.n == 80 and test.n == 40
        assert train.inputs.shape[1] == 6

    def test_datasets_depend_only_on_seed(self, tmp_path):
        a, _ = experiments.build_datasets(quick_config(tmp_path, seed=5))
        b, _ = experiments.build_datasets(quick_config(tmp_path, seed=5,
                                                       epochs=9))
        np.testing.assert_array_equal(a.inputs, b.inputs)
        c, _ = experiments.build_datasets(quick_config(tmp_path, seed=6))
        assert not np.array_equal(a.inputs, c.inputs)

    def test_classifier_synthetic_targets(self, tmp_path):
        cfg = quick_config(tmp_path, task="classifier", n_classes=3)
        train, _ = experiments.build_datasets(cfg)
        assert train.targets.shape == (80, 3)

    def test_csv_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((10, 4)) * 0.2
        np.savetxt(tmp_path / "x.csv", x, delimiter=",")
        cfg = quick_config(tmp_path, data_format="csv",
                           train_inputs=str(tmp_path / "x.csv"))
        train, test = experiments.build_datasets(cfg)
        assert test is None
        np.testing.assert_allclose(train.inputs, train.targets)


class TestRunExperiment:
    def test_artifacts_written(self, tmp_path):
        cfg = quick_config(tmp_path)
        report, metrics = experiments.run_experiment(cfg)
        outdir = tmp_path / "run"
        rows = read_metrics(outdir / "metrics.csv")
        assert rows[0] == ["epoch", "step", "train_loss", "test_loss",
                           "test_accuracy", "epsilon"]
        assert len(rows) - 1 == cfg.epochs == len(metrics.rows)
        payload = json.loads((outdir / "privacy.json").read_text())
        assert payload["sigma"] == 0.0 and payload["epsilon"] is None
        with np.load(outdir / "weights.npz") as arrays:
            assert set(arrays.files) == {"layer_0", "layer_1"}
            assert arrays["layer_0"].shape == (6, 4)
            assert arrays["layer_1"].shape == (4, 6)

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg = quick_config(tmp_path)
        experiments.run_experiment(cfg)
        outdir = tmp_path / "run"
        first = [(outdir / name).read_bytes()
                 for name in ("metrics.csv", "privacy.json", "weights.npz")]
        experiments.run_experiment(quick_config(tmp_path))
        second = [(outdir / name).read_bytes()
                  for name in ("metrics.csv", "privacy.json", "weights.npz")]
        assert first == second

    def test_private_report_epsilon_recomputable_offline(self, tmp_path):
        cfg = quick_config(tmp_path, algorithm="dpsgd", sigma=1.3,
                           clip_bound=1.0)
        report, _ = experiments.run_experiment(cfg)
        payload = json.loads(
            (tmp_path / "run" / "privacy.json").read_text())
        ledger = MomentsLedger()
        ledger.record(payload["sampling_rate"], payload["sigma"],
                      payload["steps"])
        offline = ledger.epsilon(payload["delta"]).epsilon
        assert payload["epsilon"] == pytest.approx(offline, rel=1e-12)
        assert report.epsilon == pytest.approx(offline, rel=1e-12)

    def test_pca_release_joins_the_accounting(self, tmp_path):
        cfg = quick_config(tmp_path, algorithm="mac", sigma=1.5,
                           grad_clip=1.0, pca_dim=3, pca_sigma=8.0)
        report, _ = experiments.run_experiment(cfg)
        payload = json.loads(
            (tmp_path / "run" / "privacy.json").read_text())
        assert payload["pca_sigma"] == 8.0
        ledger = MomentsLedger()
        ledger.record(1.0, payload["pca_sigma"], 1)
        ledger.record(payload["sampling_rate"], payload["sigma"],
                      payload["steps"])
        assert payload["epsilon"] == pytest.approx(
            ledger.epsilon(payload["delta"]).epsilon, rel=1e-12)
        with np.load(tmp_path / "run" / "weights.npz") as arrays:
            assert arrays["pca_components"].shape == (6, 3)
            assert arrays["layer_0"].shape == (3, 4)

    def test_noiseless_pca_costs_nothing(self, tmp_path):
        cfg = quick_config(tmp_path, pca_dim=2, pca_sigma=0.0)
        report, _ = experiments.run_experiment(cfg)
        payload = json.loads(
            (tmp_path / "run" / "privacy.json").read_text())
        assert report.epsilon is None
        assert payload["pca_sigma"] is None

    def test_invalid_config_rejected_before_running(self, tmp_path):
        cfg = quick_config(tmp_path, algorithm="newton")
        with pytest.raises(ConfigError, match="algorithm"):
            experiments.run_experiment(cfg)


class TestEmitCurves:
    def write_metrics(self, path, rows):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "step", "train_loss", "test_loss",
                             "test_accuracy", "epsilon"])
            writer.writerows(rows)

    def test_mean_and_sample_std(self, tmp_path):
        self.write_metrics(tmp_path / "a.csv",
                           [["0", "1", "2.0", "", "0.5", ""]])
        self.write_metrics(tmp_path / "b.csv",
                           [["0", "1", "4.0", "", "0.7", ""]])
        experiments.emit_curves([tmp_path / "a.csv", tmp_path / "b.csv"],
                                tmp_path / "out.csv")
        rows = read_metrics(tmp_path / "out.csv")
        assert rows[0][:4] == ["epoch", "step", "mean_train_loss",
                               "std_train_loss"]
        out = dict(zip(rows[0], rows[1]))
        assert float(out["mean_train_loss"]) == 3.0
        # sample std of {2, 4}
        assert float(out["std_train_loss"]) == pytest.approx(np.sqrt(2.0))
        assert float(out["mean_test_accuracy"]) == pytest.approx(0.6)
        assert out["mean_test_loss"] == "" and out["std_test_loss"] == ""

    def test_single_run_has_zero_std(self, tmp_path):
        self.write_metrics(tmp_path / "a.csv",
                           [["0", "1", "2.5", "3.5", "", ""]])
        experiments.emit_curves([tmp_path / "a.csv"], tmp_path / "out.csv")
        out = dict(zip(*read_metrics(tmp_path / "out.csv")))
        assert float(out["mean_train_loss"]) == 2.5
        assert float(out["std_train_loss"]) == 0.0

    def test_grid_mismatch_rejected(self, tmp_path):
        self.write_metrics(tmp_path / "a.csv",
                           [["0", "1", "2.0", "", "", ""]])
        self.write_metrics(tmp_path / "b.csv",
                           [["0", "2", "2.0", "", "", ""]])
        with pytest.raises(DataError, match="grid mismatch"):
            experiments.emit_curves([tmp_path / "a.csv", tmp_path / "b.csv"],
                                    tmp_path / "out.csv")

    def test_non_metrics_file_rejected(self, tmp_path):
        (tmp_path / "junk.csv").write_text("a,b\n1,2\n")
        with pytest.raises(DataError, match="not a metrics file"):
            experiments.emit_curves([tmp_path / "junk.csv"],
                                    tmp_path / "out.csv")

    def test_no_inputs_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="at least one"):
            experiments.emit_curves([], tmp_path / "out.csv")

    def test_aggregate_of_real_runs(self, tmp_path):
        for seed in (1, 2):
            cfg = quick_config(tmp_path, seed=seed,
                               output_dir=str(tmp_path / f"run{seed}"))
            experiments.run_experiment(cfg)
        experiments.emit_curves(
            [tmp_path / "run1" / "metrics.csv",
             tmp_path / "run2" / "metrics.csv"],
            tmp_path / "curves.csv")
        rows = read_metrics(tmp_path / "curves.csv")
        assert len(rows) == 3
        a = read_metrics(tmp_path / "run1" / "metrics.csv")
        b = read_metrics(tmp_path / "run2" / "metrics.csv")
        expected = 0.5 * (float(a[1][2]) + float(b[1][2]))
        assert float(dict(zip(rows[0], rows[1]))["mean_train_loss"]) == \
            pytest.approx(expected, rel=1e-12)
