# tgmm_lab/numcore/checkpoint.py
"""
Checkpoint format:

    <dir>/manifest.json   [{"name": ..., "shape": [...]}, ...]  (parameter order)
    <dir>/params.bin      little-endian float64 values, concatenated in manifest order
"""

from collections import OrderedDict
from pathlib import Path
from typing import List

import numpy as np

from ..errors import DataError
from ..utils.io import PathLike, ensure_dir, load_json, save_json
from .params import ParameterSet

MANIFEST = "manifest.json"
PARAMS_BIN = "params.bin"


def save_checkpoint(params: ParameterSet, directory: PathLike) -> Path:
    d = ensure_dir(directory)
    manifest = [{"name": name, "shape": list(t.shape)} for name, t in params.items()]
    blob = b"".join(np.ascontiguousarray(t.data, dtype="<f8").tobytes() for t in params.tensors())
    with open(d / PARAMS_BIN, "wb") as f:
        f.write(blob)
    save_json(manifest, d / MANIFEST)
    return d


def load_checkpoint(directory: PathLike) -> "OrderedDict[str, np.ndarray]":
    d = Path(directory)
    manifest = load_json(d / MANIFEST)
    bin_path = d / PARAMS_BIN
    if not bin_path.exists():
        raise DataError(f"file not found: {bin_path}")
    if not isinstance(manifest, list):
        raise DataError(f"corrupt checkpoint manifest: {d / MANIFEST}")
    raw = np.frombuffer(bin_path.read_bytes(), dtype="<f8")
    out: "OrderedDict[str, np.ndarray]" = OrderedDict()
    pos = 0
    for item in manifest:
        try:
            name = item["name"]
            shape = tuple(int(s) for s in item["shape"])
        except (KeyError, TypeError, ValueError):
            raise DataError(f"corrupt checkpoint manifest entry {item!r} in {d / MANIFEST}")
        n = int(np.prod(shape)) if shape else 1
        if pos + n > raw.size:
            raise DataError(f"{bin_path} is truncated: manifest needs more than {raw.size} values")
        out[name] = raw[pos:pos + n].astype(np.float64).reshape(shape)
        pos += n
    if pos != raw.size:
        raise DataError(f"{bin_path} holds {raw.size} values, manifest describes {pos}")
    return out


def load_into(params: ParameterSet, directory: PathLike) -> None:
    """Load a checkpoint into an existing ParameterSet; names and shapes must match."""
    arrays = load_checkpoint(directory)
    expected: List[str] = params.names()
    if list(arrays) != expected:
        extra = sorted(set(arrays) - set(expected))
        missing = sorted(set(expected) - set(arrays))
        raise DataError(f"checkpoint {directory} does not match model: missing={missing[:5]} extra={extra[:5]}")
    for name, t in params.items():
        if arrays[name].shape != t.shape:
            raise DataError(
                f"checkpoint {directory}: {name} has shape {list(arrays[name].shape)}, model expects {list(t.shape)}")
    params.load_arrays(arrays)
