"""
Model file format.

A model file is a JSON envelope: architecture header (layer sizes and
activations), the training-config snapshot, the fitted encoding state and
the parameters as base64 of little-endian float64 in ParamVector order.
Writing is atomic (temporary file, then rename).
"""

import base64
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, ValidationError

from dsboot.data.tabular import EncodingState
from dsboot.errors import DataError
from dsboot.model.gradcore import Activation
from dsboot.model.irvae import ArchitectureSpec, TrainConfig, VaeModel
from dsboot.runtime.hashing import rng_for

MODEL_FORMAT = "dsboot-model/1"


class LayerHeader(BaseModel):
    group: str
    index: int
    in_dim: int
    out_dim: int
    activation: Activation


class ModelFile(BaseModel):
    format: str = MODEL_FORMAT
    architecture: ArchitectureSpec
    layers: List[LayerHeader]
    train_config: TrainConfig
    encoding: Optional[Dict[str, Any]] = None
    parameter_count: int
    parameters: str
    run_config: Optional[Dict[str, Any]] = None


def encode_parameters(values: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(values, dtype="<f8").tobytes()).decode("ascii")


def decode_parameters(blob: str, count: int) -> np.ndarray:
    values = np.frombuffer(base64.b64decode(blob.encode("ascii")), dtype="<f8")
    if values.size != count:
        raise DataError(f"Model file declares {count} parameters but holds {values.size}")
    return values.astype(np.float64)


def to_model_file(model: VaeModel, run_config: Optional[Dict[str, Any]] = None) -> ModelFile:
    params = model.parameters()
    headers = [
        LayerHeader(group=group, index=i, in_dim=layer.in_dim, out_dim=layer.out_dim, activation=layer.activation)
        for group, layers in model.layer_groups().items()
        for i, layer in enumerate(layers)
    ]
    return ModelFile(
        architecture=model.arch,
        layers=headers,
        train_config=model.train_config,
        encoding=model.encoding.to_dict() if model.encoding is not None else None,
        parameter_count=len(params),
        parameters=encode_parameters(params.values),
        run_config=run_config,
    )


def from_model_file(envelope: ModelFile) -> VaeModel:
    if envelope.format != MODEL_FORMAT:
        raise DataError(f"Unsupported model format {envelope.format!r}")
    encoding = EncodingState.from_dict(envelope.encoding) if envelope.encoding else None
    # build a skeleton with the right shapes, then load the stored values
    skeleton = VaeModel.initialize(envelope.architecture, envelope.train_config, rng_for(0, "skeleton"), encoding)
    declared = [(h.group, h.index, h.in_dim, h.out_dim) for h in envelope.layers]
    actual = [
        (group, i, layer.in_dim, layer.out_dim)
        for group, layers in skeleton.layer_groups().items()
        for i, layer in enumerate(layers)
    ]
    if declared != actual:
        raise DataError("Layer header does not match the architecture")
    params = skeleton.parameters()
    values = decode_parameters(envelope.parameters, envelope.parameter_count)
    if values.size != len(params):
        raise DataError(f"Architecture needs {len(params)} parameters, file holds {values.size}")
    return skeleton.with_parameters(params.with_values(values))


def atomic_write_text(path: Union[str, Path], text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_model(model: VaeModel, path: Union[str, Path], run_config: Optional[Dict[str, Any]] = None):
    atomic_write_text(path, to_model_file(model, run_config).model_dump_json(indent=2))


def load_model(path: Union[str, Path]) -> VaeModel:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"Model file not found: {path}")
    try:
        envelope = ModelFile.model_validate_json(path.read_text(encoding="utf-8"))
    except (ValidationError, ValueError) as e:
        raise DataError(f"Unreadable model file {path}: {e}") from e
    return from_model_file(envelope)
