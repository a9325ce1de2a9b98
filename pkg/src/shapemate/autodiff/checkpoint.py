"""Flat tensor checkpoints: ``<stem>.bin`` (little-endian f64) plus ``<stem>.json`` index."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

_DTYPE = np.dtype("<f8")


def save_tensors(path, tensors: dict[str, np.ndarray], extra: dict | None = None) -> None:
    """Write ``tensors`` to ``path.bin`` and an index (name -> shape, offset) to ``path.json``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    index, offset = {}, 0
    chunks = []
    for name in sorted(tensors):
        arr = np.asarray(tensors[name], dtype=_DTYPE, order="C")
        index[name] = {"shape": list(arr.shape), "offset": offset}
        chunks.append(arr.tobytes())
        offset += arr.size
    tmp_bin = path.with_suffix(".bin.tmp")
    tmp_bin.write_bytes(b"".join(chunks))
    tmp_json = path.with_suffix(".json.tmp")
    tmp_json.write_text(json.dumps({"dtype": "<f8", "count": offset, "tensors": index, "extra": extra or {}}, indent=1))
    tmp_bin.replace(path.with_suffix(".bin"))
    tmp_json.replace(path.with_suffix(".json"))


def load_tensors(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    info = json.loads(path.with_suffix(".json").read_text())
    flat = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype=_DTYPE)
    if flat.size != info["count"]:
        raise ValueError(f"{path}: expected {info['count']} values, found {flat.size}")
    out = {}
    for name, spec in info["tensors"].items():
        n = int(np.prod(spec["shape"], dtype=np.int64))
        out[name] = flat[spec["offset"] : spec["offset"] + n].reshape(tuple(spec["shape"])).copy()
    return out, info.get("extra", {})
