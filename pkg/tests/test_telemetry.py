import unittest
from unittest.mock import patch

from opentelemetry.sdk.trace import TracerProvider
from opentelemetry.sdk.trace.export import SimpleSpanProcessor
from opentelemetry.sdk.trace.export.in_memory_span_exporter import InMemorySpanExporter

from dsboot.bench.harness import BASELINE, BenchConfig, run_benchmark
from dsboot.bench.regressors import RegressorSpec
from dsboot.data.synthdata import SynthSpec, make_imbalanced
from dsboot.data.tabular import fit_encode
from dsboot.generation.latentgen import GenConfig, generate, selection_weights
from dsboot.model.irvae import TrainConfig, train


class TestTelemetry(unittest.TestCase):
    def setUp(self):
        self.exporter = InMemorySpanExporter()
        self.provider = TracerProvider()
        processor = SimpleSpanProcessor(self.exporter)
        self.provider.add_span_processor(processor)
        self.tracer = self.provider.get_tracer("test_tracer")
        self.ds = make_imbalanced(SynthSpec(n=80, rng_seed=6))

    def test_training_span(self):
        with patch("dsboot.model.irvae.get_tracer") as mock_get_tracer:
            mock_get_tracer.return_value = self.tracer

            train(fit_encode(self.ds), TrainConfig(epochs=1, batch_size=32))

            spans = self.exporter.get_finished_spans()
            self.assertEqual(len(spans), 1)
            self.assertEqual(spans[0].name, "irvae.train")
            self.assertEqual(spans[0].attributes["loss_variant"], "final")
            self.assertEqual(spans[0].attributes["n"], 80)

    def test_generation_span(self):
        with patch("dsboot.generation.latentgen.get_tracer") as mock_get_tracer:
            mock_get_tracer.return_value = self.tracer

            weights = selection_weights(self.ds.target_values(), alpha=1.0)
            generate(self.ds, weights, GenConfig(variant="OS", m=9))

            spans = self.exporter.get_finished_spans()
            self.assertEqual([s.name for s in spans], ["latentgen.generate"])
            self.assertEqual(spans[0].attributes["variant"], "OS")
            self.assertEqual(spans[0].attributes["m"], 9)

    def test_benchmark_spans(self):
        with patch("dsboot.bench.harness.get_tracer") as mock_get_tracer:
            mock_get_tracer.return_value = self.tracer

            cfg = BenchConfig(variants=[BASELINE], folds=2, regressors=[RegressorSpec(kind="ridge")])
            run_benchmark(self.ds, cfg)

            names = sorted(s.name for s in self.exporter.get_finished_spans())
            self.assertEqual(names, ["bench.fold", "bench.fold", "bench.run"])


if __name__ == "__main__":
    unittest.main()
