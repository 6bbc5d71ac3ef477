import hashlib
import json
from typing import Any

import numpy as np


def _canonical(value: Any) -> Any:
    """
    Convert a value into a JSON-stable structure.

    Arrays are reduced to their dtype, shape and a digest of their
    little-endian bytes so that large parameter blocks hash cheaply.
    """
    if isinstance(value, np.ndarray):
        data = np.ascontiguousarray(value)
        if data.dtype.kind == "f":
            data = data.astype("<f8", copy=False)
        elif data.dtype.kind in "iub":
            data = data.astype("<i8", copy=False)
        return {
            "dtype": str(data.dtype),
            "shape": list(data.shape),
            "sha256": hashlib.sha256(data.tobytes()).hexdigest(),
        }
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if hasattr(value, "model_dump"):
        return _canonical(value.model_dump(mode="json"))
    if isinstance(value, dict):
        return {str(k): _canonical(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_canonical(v) for v in value]
    return value


def canonical_json(value: Any) -> str:
    return json.dumps(
        _canonical(value), sort_keys=True, separators=(",", ":"), default=str
    )


def compute_state_hash(value: Any) -> str:
    """
    Compute a deterministic SHA-256 hash of fitted state.

    Args:
        value: Any mix of dicts, lists, scalars, numpy arrays and
            pydantic models.

    Returns:
        SHA-256 hex digest.
    """
    return hashlib.sha256(canonical_json(value).encode("utf-8")).hexdigest()


def derive_seed(seed: int, *names: Any) -> int:
    """
    Derive an independent 64-bit seed for a named consumer.

    All randomness in a run flows from one global seed; each component asks
    for its own stream with ``derive_seed(seed, "component", "purpose", ...)``.
    """
    payload = canonical_json({"seed": int(seed), "names": list(names)})
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(seed: int, *names: Any) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *names))
