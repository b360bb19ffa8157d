"""
Checkpoint container.

Layout of a container file (an uncompressed numpy ``.npz`` archive):

- ``__header__``: UTF-8 JSON as a uint8 array with keys ``format`` (``agd-container/1``),
  ``arrays`` (name -> shape) and ``meta`` (free-form JSON object).
- one entry per named array, stored as little-endian float64 (``<f8``).

Reloading returns bit-identical arrays.
"""
import json
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from src.common.exceptions import ShapeError

FORMAT = "agd-container/1"


def save_container(path: str | Path, arrays: Mapping[str, np.ndarray], meta: Mapping[str, Any] | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {name: np.ascontiguousarray(value, dtype="<f8") for name, value in arrays.items()}
    header = {
        "format": FORMAT,
        "arrays": {name: list(value.shape) for name, value in payload.items()},
        "meta": dict(meta or {}),
    }
    encoded = np.frombuffer(json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    with path.open("wb") as fh:
        np.savez(fh, __header__=encoded, **payload)
    return path


def load_container(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    with np.load(Path(path), allow_pickle=False) as archive:
        if "__header__" not in archive.files:
            raise ShapeError(f"{path} is not a checkpoint container (no header)")
        header = json.loads(archive["__header__"].tobytes().decode("utf-8"))
        if header.get("format") != FORMAT:
            raise ShapeError(f"{path}: unsupported container format {header.get('format')!r}")
        arrays: dict[str, np.ndarray] = {}
        for name, shape in header["arrays"].items():
            value = archive[name]
            if list(value.shape) != shape:
                raise ShapeError(f"{path}: array '{name}' has shape {value.shape}, header says {shape}")
            arrays[name] = value.astype(np.float64)
    return arrays, header["meta"]
