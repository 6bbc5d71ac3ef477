"""
Run configuration.

One JSON file describes a whole run; command-line flags override it. All
randomness derives from ``rng_seed``: the ``rng_seed`` fields of the
``train`` and ``generation`` sections are replaced by named derivations of
the global seed when a command runs.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from dsboot.bench.harness import BenchConfig, DEFAULT_VARIANTS, default_regressors
from dsboot.bench.regressors import RegressorSpec
from dsboot.data.synthdata import SynthSpec, make_imbalanced
from dsboot.data.tabular import Dataset, load_csv, load_schema
from dsboot.errors import ConfigError
from dsboot.generation.latentgen import GenConfig
from dsboot.model.irvae import ArchitectureSettings, LossVariant, TrainConfig
from dsboot.runtime.hashing import derive_seed

logger = logging.getLogger(__name__)


class DatasetSource(BaseModel):
    """Either a CSV file with its schema file, or a synthetic-table spec."""
    model_config = ConfigDict(frozen=True)

    csv: Optional[str] = None
    schema_file: Optional[str] = None
    synth: Optional[SynthSpec] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.csv is None) == (self.synth is None):
            raise ValueError("dataset needs exactly one of 'csv' or 'synth'")
        if self.csv is not None and self.schema_file is None:
            raise ValueError("a 'csv' dataset needs 'schema_file'")
        return self

    def check_paths(self):
        if self.csv is None:
            return
        for label, path in (("csv", self.csv), ("schema_file", self.schema_file)):
            if not Path(path).is_file():
                raise ConfigError(f"dataset.{label} not found: {path}")

    def load(self) -> Dataset:
        if self.synth is not None:
            return make_imbalanced(self.synth)
        self.check_paths()
        return load_csv(self.csv, load_schema(self.schema_file))


class EvalSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    folds: int = Field(default=10, ge=2)
    variants: List[str] = Field(default_factory=lambda: list(DEFAULT_VARIANTS))
    regressors: List[RegressorSpec] = Field(default_factory=default_regressors)
    rare_quantile: float = Field(default=0.9, gt=0, lt=1)
    reference: str = "Baseline"
    threads: int = Field(default=1, ge=1)


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    dataset: DatasetSource = Field(default_factory=lambda: DatasetSource(synth=SynthSpec()))
    train: TrainConfig = Field(default_factory=TrainConfig)
    architecture: ArchitectureSettings = Field(default_factory=ArchitectureSettings)
    generation: GenConfig = Field(default_factory=GenConfig)
    evaluation: EvalSettings = Field(default_factory=EvalSettings)
    output_dir: str = "dsboot-out"
    rng_seed: int = Field(default=0, ge=0)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"Config file not found: {path}")
        try:
            return cls.model_validate_json(path.read_text(encoding="utf-8"))
        except ValidationError as e:
            raise ConfigError(f"Invalid config file {path}: {e}") from e

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        """
        Apply flag overrides; ``None`` values are ignored.

        Accepted keys: ``seed``, ``out``, ``variant``, ``threads``.
        """
        data = self.model_dump(mode="json")
        if overrides.get("seed") is not None:
            data["rng_seed"] = overrides["seed"]
        if overrides.get("out") is not None:
            data["output_dir"] = str(overrides["out"])
        if overrides.get("threads") is not None:
            data["evaluation"]["threads"] = overrides["threads"]
        if overrides.get("variant") is not None:
            names = [v.strip() for v in str(overrides["variant"]).split(",") if v.strip()]
            data["evaluation"]["variants"] = names
            generating = [v for v in names if v != "Baseline"]
            if generating:
                data["generation"]["variant"] = generating[0]
        try:
            return RunConfig.model_validate(data)
        except ValidationError as e:
            raise ConfigError(f"Invalid override: {e}") from e

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")

    def train_config(self, loss_variant: Optional[LossVariant] = None) -> TrainConfig:
        variant = loss_variant or self.train.loss_variant
        return TrainConfig.model_validate({
            **self.train.model_dump(),
            "loss_variant": variant,
            "rng_seed": derive_seed(self.rng_seed, "fit", variant.value),
        })

    def gen_config(self) -> GenConfig:
        return self.generation.model_copy(update={
            "rng_seed": derive_seed(self.rng_seed, "generate", self.generation.variant.value),
        })

    def bench_config(self) -> BenchConfig:
        ev = self.evaluation
        try:
            return BenchConfig(
                variants=ev.variants,
                regressors=ev.regressors,
                folds=ev.folds,
                rare_quantile=ev.rare_quantile,
                reference=ev.reference,
                rng_seed=self.rng_seed,
                train=self.train,
                architecture=self.architecture,
                generation=self.generation,
                max_concurrency=ev.threads,
            )
        except ValidationError as e:
            raise ConfigError(f"Invalid evaluation settings: {e}") from e
