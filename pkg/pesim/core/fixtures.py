"""
Fixture documents for tensors.

A fixture is one JSON object:

    {"layout": "CHW", "dims": [3, 5, 5], "dtype": "int8", "seed": 7}
    {"layout": "CiKyKxCo", "dims": [1, 1, 1, 1], "dtype": "fp32", "data": [0.5]}

`data` entries may be numbers or strings with a base prefix ("0x7f",
"-0b101"). Without `data`, the tensor is filled from `seed` with SplitMix64:

    state_i = seed + (i + 1) * 0x9E3779B97F4A7C15   (mod 2^64)
    z       = splitmix64 finaliser(state_i)
    fp32    = (z >> 40) * 2^-23 - 1                 (exact, in [-1, 1))
    int8    = (z >> 56) - 128
"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
from pydantic import ValidationError

from config import FixtureDocument
from core.errors import FixtureError
from core.tensor import FEATURE_LAYOUTS, Layout, Tensor3, Tensor4

logger = logging.getLogger(__name__)

DTYPES = {
    "fp32": np.float32,
    "int8": np.int8,
    "int32": np.int32,
}

_GOLDEN_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX_1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX_2 = np.uint64(0x94D049BB133111EB)

# ============================================================
# DETERMINISTIC FILL
# ============================================================


def splitmix64(seed: int, count: int) -> np.ndarray:
    """First `count` outputs of a SplitMix64 stream, as uint64."""
    if count == 0:
        return np.zeros(0, dtype=np.uint64)
    steps = np.arange(1, count + 1, dtype=np.uint64)
    z = np.uint64(seed % (1 << 64)) + steps * _GOLDEN_GAMMA
    z = (z ^ (z >> np.uint64(30))) * _MIX_1
    z = (z ^ (z >> np.uint64(27))) * _MIX_2
    return z ^ (z >> np.uint64(31))


def deterministic_fill(dtype: str, count: int, seed: int) -> np.ndarray:
    z = splitmix64(seed, count)
    if dtype == "fp32":
        return ((z >> np.uint64(40)).astype(np.float64) * 2.0 ** -23 - 1.0).astype(np.float32)
    if dtype == "int8":
        return ((z >> np.uint64(56)).astype(np.int16) - 128).astype(np.int8)
    raise FixtureError(f"deterministic fill supports fp32 and int8, not {dtype}")


def _wrap(layout: Layout, dims, data: np.ndarray) -> Union[Tensor3, Tensor4]:
    if layout in FEATURE_LAYOUTS:
        return Tensor3(layout, tuple(dims), data)
    return Tensor4(layout, tuple(dims), data)


def random_tensor(layout: Union[str, Layout], dims, dtype: str, seed: int) -> Union[Tensor3, Tensor4]:
    layout = Layout(layout)
    return _wrap(layout, dims, deterministic_fill(dtype, math.prod(dims), seed))


# ============================================================
# LOAD / SAVE
# ============================================================


def _parse_value(value: Any) -> Union[int, float]:
    if isinstance(value, str):
        text = value.strip()
        try:
            return int(text, 0)
        except ValueError:
            try:
                return float(text)
            except ValueError:
                raise FixtureError(f"cannot parse fixture value '{value}'")
    return value


def from_document(doc: FixtureDocument) -> Union[Tensor3, Tensor4]:
    try:
        layout = Layout(doc.layout)
    except ValueError:
        raise FixtureError(f"unknown layout '{doc.layout}'")
    if doc.dtype not in DTYPES:
        raise FixtureError(f"unknown dtype '{doc.dtype}'")

    expected_rank = 3 if layout in FEATURE_LAYOUTS else 4
    if len(doc.dims) != expected_rank:
        raise FixtureError(f"{layout.value} fixture needs {expected_rank} dims, got {doc.dims}")
    count = math.prod(doc.dims)

    if doc.data is not None:
        values = [_parse_value(v) for v in doc.data]
        if len(values) != count:
            raise FixtureError(f"fixture has {len(values)} values, dims {doc.dims} need {count}")
        if doc.dtype != "fp32":
            info = np.iinfo(DTYPES[doc.dtype])
            bad = [v for v in values if not float(v).is_integer() or not info.min <= v <= info.max]
            if bad:
                raise FixtureError(f"values {bad[:3]} do not fit {doc.dtype}")
            values = [int(v) for v in values]
        data = np.array(values, dtype=DTYPES[doc.dtype])
    elif doc.seed is not None:
        data = deterministic_fill(doc.dtype, count, doc.seed)
    else:
        raise FixtureError("fixture needs either 'data' or 'seed'")

    return _wrap(layout, doc.dims, data)


def load_fixture(source: Union[str, Path, Dict[str, Any]]) -> Union[Tensor3, Tensor4]:
    """
    Load a tensor from a fixture file or an already-parsed document.

    Args:
        source: path to a JSON fixture, or the decoded dict

    Returns:
        Tensor3 for feature layouts, Tensor4 for weight layouts
    """
    if isinstance(source, dict):
        raw = source
    else:
        try:
            with open(source, "r", encoding="utf-8") as f:
                raw = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise FixtureError(f"cannot read fixture {source}: {e}")
    try:
        doc = FixtureDocument(**raw)
    except ValidationError as e:
        raise FixtureError(f"invalid fixture document: {e}")
    return from_document(doc)


def to_document(t: Union[Tensor3, Tensor4]) -> Dict[str, Any]:
    dtype = {np.dtype(v): k for k, v in DTYPES.items()}.get(t.dtype)
    if dtype is None:
        raise FixtureError(f"cannot serialise dtype {t.dtype}")
    return {
        "layout": t.layout.value,
        "dims": list(t.dims),
        "dtype": dtype,
        "data": t.data.tolist(),
    }


def save_fixture(t: Union[Tensor3, Tensor4], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(to_document(t), f, indent=2)
    logger.debug(f"Fixture {t!r} written to {path}")
    return path
