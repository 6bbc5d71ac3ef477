import json
import tempfile
import unittest
from pathlib import Path

import numpy as np
import pandas as pd

from dsboot.bench.harness import (
    BASELINE,
    DEFAULT_VARIANTS,
    BenchConfig,
    fit_fold_state,
    fold_fingerprint,
    run_benchmark,
    sweep_beta_corr,
)
from dsboot.bench.regressors import RegressorSpec
from dsboot.bench.report import write_report
from dsboot.data.synthdata import SynthSpec, make_imbalanced
from dsboot.data.tabular import ColumnKind, ColumnSpec, Dataset, kfold
from dsboot.model.irvae import ArchitectureSettings, TrainConfig
from dsboot.runtime.event_bus import EventBus
from dsboot.runtime.events import EventType
from dsboot.runtime.hashing import derive_seed


def small_config(**overrides) -> BenchConfig:
    settings = dict(
        folds=3,
        rng_seed=7,
        train=TrainConfig(epochs=2, batch_size=32),
        architecture=ArchitectureSettings(encoder_hidden=[8], decoder_hidden=[8]),
        regressors=[RegressorSpec(kind="ridge"), RegressorSpec(kind="knn", knn_k=3)],
    )
    settings.update(overrides)
    return BenchConfig(**settings)


class TestBenchConfig(unittest.TestCase):
    def test_variants_are_canonicalized(self):
        cfg = BenchConfig(variants=["Baseline", "kAE", "SB_AE", "OVAE"])
        self.assertEqual(cfg.variants, ["Baseline", "SB_AE", "OS"])
        self.assertEqual(BenchConfig().variants, DEFAULT_VARIANTS)

    def test_unknown_variant_rejected(self):
        with self.assertRaises(ValueError):
            BenchConfig(variants=["Baseline", "SMOTE"])

    def test_duplicate_regressor_labels_rejected(self):
        with self.assertRaises(ValueError):
            BenchConfig(regressors=[RegressorSpec(kind="knn"), RegressorSpec(kind="knn", knn_k=10)])
        BenchConfig(regressors=[RegressorSpec(kind="knn"), RegressorSpec(kind="knn", knn_k=10, name="knn10")])

    def test_reference_is_always_run(self):
        self.assertEqual(BenchConfig(variants=["DSB"]).variants, [BASELINE, "DSB"])
        self.assertEqual(BenchConfig(variants=["kAE"], reference="OVAE").variants, ["OS", "SB_AE"])
        self.assertEqual(BenchConfig(variants=["DSB", BASELINE]).variants, ["DSB", BASELINE])

    def test_variant_without_reference_still_compared(self):
        ds = make_imbalanced(SynthSpec(n=90, rng_seed=6))
        report = run_benchmark(ds, small_config(folds=2, variants=["OS"]))
        self.assertEqual({c.variant for c in report.cells}, {BASELINE, "OS"})
        self.assertEqual({(c.variant, c.reference) for c in report.comparisons}, {("OS", BASELINE)})
        rmse = {c.regressor for c in report.comparisons if c.metric == "rmse"}
        self.assertEqual(rmse, {"ridge", "knn"})

    def test_models_shared_between_variants(self):
        cfg = BenchConfig(variants=["BVAE", "kBVAE", "DSB", "OS"])
        self.assertEqual([lv.value for lv in cfg.loss_variants], ["plain", "final"])


class TestBaseline(unittest.TestCase):
    def test_linear_toy_is_fitted_exactly(self):
        x = np.linspace(-3, 3, 60)
        ds = Dataset(
            columns=(ColumnSpec("x", ColumnKind.NUMERIC), ColumnSpec("y", ColumnKind.NUMERIC)),
            frame=pd.DataFrame({"x": x, "y": 2 * x + 1}),
            target=1,
        )
        cfg = BenchConfig(variants=[BASELINE], folds=2, regressors=[RegressorSpec(kind="ridge", ridge_lambda=1e-10)])
        report = run_benchmark(ds, cfg)
        self.assertEqual(len(report.cells), 2)
        for cell in report.cells:
            self.assertTrue(cell.ok)
            self.assertLess(cell.metrics.rmse, 1e-6)
            self.assertEqual(cell.synthetic_rows, 0)
        self.assertEqual(report.comparisons, [])

    def test_baseline_does_not_depend_on_other_variants(self):
        ds = make_imbalanced(SynthSpec(n=90, rng_seed=2))
        alone = run_benchmark(ds, small_config(variants=[BASELINE]))
        mixed = run_benchmark(ds, small_config(variants=[BASELINE, "OS", "DSB"]))
        for fold in range(3):
            for label in ("ridge", "knn"):
                self.assertEqual(
                    alone.cell(fold, BASELINE, label).metrics, mixed.cell(fold, BASELINE, label).metrics
                )


class TestBenchmark(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.ds = make_imbalanced(SynthSpec(n=120, p_integer=1, rng_seed=1))
        cls.cfg = small_config()
        cls.report = run_benchmark(cls.ds, cls.cfg, run_config={"note": "unit"})

    def test_every_cell_present(self):
        self.assertEqual(len(self.report.cells), 3 * len(DEFAULT_VARIANTS) * 2)
        self.assertEqual(self.report.failed_cells, [])
        self.assertEqual(len(self.report.summaries), len(DEFAULT_VARIANTS) * 2)
        self.assertEqual(self.report.run_config, {"note": "unit"})

    def test_synthetic_rows_default_to_training_size(self):
        for cell in self.report.cells:
            fold = self.report.folds[cell.fold]
            expected = 0 if cell.variant == BASELINE else fold.train_rows
            self.assertEqual(cell.synthetic_rows, expected)
            self.assertEqual(cell.train_rows, fold.train_rows + expected)

    def test_comparisons_against_baseline(self):
        rmse = [c for c in self.report.comparisons if c.metric == "rmse"]
        self.assertEqual(len(rmse), (len(DEFAULT_VARIANTS) - 1) * 2)
        for c in rmse:
            self.assertEqual(c.reference, BASELINE)
            self.assertEqual(c.n_pairs, 3)
            self.assertTrue(0.0 <= c.p_value <= 1.0)

    def test_fingerprint_can_be_recomputed(self):
        plan = kfold(self.ds.n, 3, derive_seed(self.cfg.rng_seed, "folds"))
        train_idx, _ = plan.split(1)
        state = fit_fold_state(self.ds.take(train_idx), self.cfg, 1)
        self.assertEqual(fold_fingerprint(state), self.report.folds[1].fingerprint)
        self.assertNotEqual(self.report.folds[0].fingerprint, self.report.folds[1].fingerprint)

    def test_report_is_byte_identical_across_runs_and_threads(self):
        again = run_benchmark(self.ds, self.cfg.model_copy(update={"max_concurrency": 3}), run_config={"note": "unit"})
        with tempfile.TemporaryDirectory() as tmp:
            a, b = Path(tmp) / "a.json", Path(tmp) / "b.json"
            write_report(self.report, a, Path(tmp) / "a.csv")
            write_report(again, b, Path(tmp) / "b.csv")
            self.assertEqual(a.read_bytes(), b.read_bytes())
            self.assertEqual((Path(tmp) / "a.csv").read_bytes(), (Path(tmp) / "b.csv").read_bytes())
            self.assertNotIn("run_log", json.loads(a.read_text()))


class TestFailures(unittest.TestCase):
    def test_failed_cells_are_recorded(self):
        ds = make_imbalanced(SynthSpec(n=60, rng_seed=3))
        cfg = small_config(
            variants=[BASELINE, "OS"],
            regressors=[RegressorSpec(kind="ridge"), RegressorSpec(kind="knn", knn_k=1000)],
        )
        bus = EventBus()
        failures = []
        bus.register(EventType.CELL_FAILED, failures.append)
        report = run_benchmark(ds, cfg, bus)

        failed = report.failed_cells
        self.assertEqual(len(failed), 3 * 2)
        self.assertTrue(all(c.regressor == "knn" and c.error_type == "ConfigError" for c in failed))
        self.assertEqual(len(failures), len(failed))
        self.assertFalse(report.all_failed)
        summary = report.summary("OS", "knn")
        self.assertEqual((summary.n_ok, summary.n_failed), (0, 3))
        self.assertIsNone(summary.rmse_mean)
        self.assertEqual(report.summary("OS", "ridge").n_ok, 3)

        frame = report.to_frame()
        self.assertEqual(list(frame["status"]).count("failed"), 6)


class TestSweep(unittest.TestCase):
    def test_one_entry_per_value_and_regressor(self):
        ds = make_imbalanced(SynthSpec(n=90, rng_seed=4))
        report = sweep_beta_corr(ds, [0.0, 1.0], small_config(folds=2))
        self.assertEqual(report.values, [0.0, 1.0])
        self.assertEqual(report.variant, "DSB")
        self.assertEqual(len(report.entries), 4)
        self.assertEqual([s.variant for s in report.baseline], [BASELINE, BASELINE])
        self.assertTrue(all(e.n_ok == 2 for e in report.entries))


if __name__ == "__main__":
    unittest.main()
