"""CSV/JSON persistence for matrices, vectors and reports.

A matrix ``A.csv`` holds one matrix row per line, comma separated, no header.
Its block layout lives in a sidecar ``A.json``: ``{"m": ..., "n": ..., "p": ...}``.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .block_core import BlockStructure
from .errors import DimensionMismatch


def descriptor_path(path) -> Path:
    return Path(path).with_suffix(".json")


def write_matrix(path, A, n: int) -> None:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    structure = BlockStructure.of(A.shape[1], n)
    path = Path(path)
    np.savetxt(path, A, delimiter=",", fmt="%.17g")
    descriptor = {"m": A.shape[0], "n": structure.n, "p": structure.p}
    descriptor_path(path).write_text(json.dumps(descriptor) + "\n")


def read_matrix(path, n: int | None = None) -> tuple[np.ndarray, int]:
    """Load a matrix and its block length.

    The sidecar descriptor is authoritative; ``n`` is used only when the
    descriptor is missing.
    """
    path = Path(path)
    A = np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float, ndmin=2))
    side = descriptor_path(path)
    if side.exists():
        desc = json.loads(side.read_text())
        if A.shape != (desc["m"], desc["n"] * desc["p"]):
            raise DimensionMismatch(
                f"{path} has shape {A.shape}, descriptor says m={desc['m']}, n={desc['n']}, p={desc['p']}"
            )
        return A, int(desc["n"])
    if n is None:
        raise FileNotFoundError(f"no descriptor {side} and no block length given")
    BlockStructure.of(A.shape[1], n)
    return A, n


def write_vector(path, v) -> None:
    np.savetxt(Path(path), np.asarray(v, dtype=float).reshape(-1, 1), delimiter=",", fmt="%.17g")


def read_vector(path) -> np.ndarray:
    return np.loadtxt(Path(path), delimiter=",", dtype=float, ndmin=1).ravel()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return None
        return x
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def to_json(obj, **kwargs) -> str:
    return json.dumps(_jsonable(obj), **kwargs)


def write_json(path, obj) -> None:
    Path(path).write_text(to_json(obj, indent=2) + "\n")
