from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional

import numpy as np

from dsboot.data.tabular import Dataset, apply_encode
from dsboot.errors import VariantMismatchError
from dsboot.model.density import RelevanceWeights
from dsboot.model.irvae import VaeModel


@dataclass(frozen=True)
class GenerationContext:
    """
    Everything a strategy may read: the original training rows, their
    selection weights and, for latent strategies, the trained model with the
    rows already encoded under the model's encoding.
    """
    dataset: Dataset
    weights: RelevanceWeights
    model: Optional[VaeModel] = None
    x: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    hmult: float = 1.0

    @classmethod
    def build(cls, dataset: Dataset, weights: RelevanceWeights, model: Optional[VaeModel] = None,
              hmult: float = 1.0) -> "GenerationContext":
        if model is None:
            return cls(dataset=dataset, weights=weights, hmult=hmult)
        if model.encoding is None:
            raise VariantMismatchError("Model carries no encoding state; cannot encode training rows")
        applied = apply_encode(model.encoding, dataset)
        return cls(dataset=dataset, weights=weights, model=model, x=applied.values, y=applied.target, hmult=hmult)

    def require_model(self, strategy: str) -> VaeModel:
        if self.model is None:
            raise VariantMismatchError(f"Strategy '{strategy}' needs a trained model")
        return self.model


class GenerationStrategy(ABC):

    name: str = ""

    @abstractmethod
    def generate(self, ctx: GenerationContext, seeds: np.ndarray, rng: np.random.Generator) -> Dataset:
        """Produce one row per seed index, in original units and schema."""
        pass
