from dsboot.bench.harness import BenchConfig, run_benchmark, sweep_beta_corr
from dsboot.config import RunConfig
from dsboot.data.synthdata import SynthSpec, make_imbalanced
from dsboot.data.tabular import Dataset, decode, fit_encode, load_csv
from dsboot.generation.latentgen import GenConfig, GenVariant, generate
from dsboot.model.irvae import TrainConfig, train

__all__ = [
    "BenchConfig",
    "Dataset",
    "GenConfig",
    "GenVariant",
    "RunConfig",
    "SynthSpec",
    "TrainConfig",
    "decode",
    "fit_encode",
    "generate",
    "load_csv",
    "make_imbalanced",
    "run_benchmark",
    "sweep_beta_corr",
    "train",
]

__version__ = "0.1.0"
