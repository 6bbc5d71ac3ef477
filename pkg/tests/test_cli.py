import json
import tempfile
import unittest
from pathlib import Path

from dsboot.cli import main

SMALL_RUN = {
    "dataset": {"synth": {"n": 120, "p_integer": 1, "rng_seed": 1}},
    "train": {"epochs": 2, "batch_size": 32},
    "architecture": {"encoder_hidden": [8], "decoder_hidden": [8]},
    "evaluation": {
        "folds": 2,
        "variants": ["Baseline", "OS", "DSB"],
        "regressors": [{"kind": "ridge"}, {"kind": "knn", "knn_k": 3}],
    },
    "rng_seed": 3,
}


class TestCli(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)
        self.config = self.root / "run.json"
        self.config.write_text(json.dumps(SMALL_RUN))

    def tearDown(self):
        self.tmp.cleanup()

    def run_cli(self, *argv, out="out"):
        return main([*argv, "--config", str(self.config), "--out", str(self.root / out)])

    def test_synth(self):
        self.assertEqual(self.run_cli("synth"), 0)
        out = self.root / "out"
        self.assertEqual(sorted(p.name for p in out.iterdir()), ["dataset.csv", "run_config.json", "schema.json"])
        self.assertEqual(len((out / "dataset.csv").read_text().splitlines()), 121)
        schema = json.loads((out / "schema.json").read_text())
        self.assertEqual(schema["target"], "y")

    def test_fit_is_reproducible(self):
        self.assertEqual(self.run_cli("fit", out="a"), 0)
        self.assertEqual(self.run_cli("fit", out="b"), 0)
        self.assertEqual((self.root / "a" / "model.json").read_bytes(), (self.root / "b" / "model.json").read_bytes())
        trace = json.loads((self.root / "a" / "trace.json").read_text())
        self.assertEqual(len(trace["epochs"]), 2)
        self.assertEqual(trace["loss_variant"], "final")

    def test_seed_changes_the_model(self):
        self.assertEqual(self.run_cli("fit", out="a"), 0)
        self.assertEqual(self.run_cli("fit", "--seed", "99", out="b"), 0)
        self.assertNotEqual((self.root / "a" / "model.json").read_bytes(), (self.root / "b" / "model.json").read_bytes())

    def test_fit_then_generate(self):
        self.assertEqual(self.run_cli("fit", out="model"), 0)
        model = str(self.root / "model" / "model.json")
        self.assertEqual(self.run_cli("generate", "--model", model, "--variant", "DSB", "--m", "15"), 0)
        out = self.root / "out"
        self.assertEqual(len((out / "synthetic.csv").read_text().splitlines()), 16)
        sidecar = json.loads((out / "synthetic.provenance.json").read_text())
        self.assertEqual(sidecar["variant"], "DSB")
        self.assertEqual(len(sidecar["rows"]), 15)

    def test_generate_os_needs_no_model(self):
        self.assertEqual(self.run_cli("generate", "--variant", "OVAE", "--m", "5"), 0)
        sidecar = json.loads((self.root / "out" / "synthetic.provenance.json").read_text())
        self.assertEqual(sidecar["variant"], "OS")

    def test_variant_mismatch_fails_without_outputs(self):
        self.assertEqual(self.run_cli("fit", out="model"), 0)
        model = str(self.root / "model" / "model.json")
        self.assertEqual(self.run_cli("generate", "--model", model, "--variant", "BVAE"), 2)
        self.assertFalse((self.root / "out").exists())

    def test_latent_variant_needs_model(self):
        self.assertEqual(self.run_cli("generate", "--variant", "DSB"), 1)

    def test_benchmark(self):
        self.assertEqual(self.run_cli("benchmark"), 0)
        out = self.root / "out"
        self.assertEqual(
            sorted(p.name for p in out.iterdir()),
            ["report.csv", "report.json", "run_config.json", "run_log.json"],
        )
        report = json.loads((out / "report.json").read_text())
        self.assertEqual(len(report["cells"]), 2 * 3 * 2)
        self.assertEqual(report["run_config"]["rng_seed"], 3)

    def test_benchmark_with_every_cell_failed_keeps_report(self):
        run = dict(SMALL_RUN, evaluation={
            "folds": 2,
            "variants": ["Baseline", "OS"],
            "regressors": [{"kind": "knn", "knn_k": 1000}],
        })
        self.config.write_text(json.dumps(run))
        self.assertEqual(self.run_cli("benchmark"), 2)
        report = json.loads((self.root / "out" / "report.json").read_text())
        self.assertEqual(len(report["cells"]), 2 * 2)
        self.assertTrue(all(c["status"] == "failed" for c in report["cells"]))
        self.assertTrue(all(c["error_type"] == "ConfigError" for c in report["cells"]))
        self.assertTrue((self.root / "out" / "run_log.json").is_file())

    def test_sweep(self):
        self.assertEqual(self.run_cli("sweep", "--values", "0,1"), 0)
        sweep = json.loads((self.root / "out" / "sweep.json").read_text())
        self.assertEqual(sweep["values"], [0.0, 1.0])

    def test_bad_sweep_values(self):
        self.assertEqual(self.run_cli("sweep", "--values", "0,abc"), 1)

    def test_missing_schema_file(self):
        self.config.write_text(json.dumps({
            "dataset": {"csv": str(self.root / "data.csv"), "schema_file": str(self.root / "missing.json")},
        }))
        (self.root / "data.csv").write_text("x,y\n1,2\n3,4\n")
        self.assertEqual(self.run_cli("fit"), 1)
        self.assertFalse((self.root / "out").exists())

    def test_usage_errors(self):
        self.assertEqual(main(["explode"]), 1)
        self.assertEqual(main(["fit", "--no-such-flag"]), 1)
        self.assertEqual(main(["fit", "--config", str(self.root / "absent.json")]), 1)
        self.assertEqual(self.run_cli("fit", "--variant", "OS"), 1)


if __name__ == "__main__":
    unittest.main()
