"""Versioned binary container for trained models.

Layout (all integers little-endian uint32):

    b"CVIQ" | format version | header length | UTF-8 JSON header | array data

The JSON header holds the model type, its hyperparameters and an ordered list
of array descriptors {name, shape}; the arrays follow back to back as
little-endian float64 in that order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

try:
    from .errors import IoError, VersionMismatch
except ImportError:
    from errors import IoError, VersionMismatch

MAGIC = b"CVIQ"
FORMAT_VERSION = 1


def write_container(path, model_type: str, header: Dict, arrays: Dict[str, np.ndarray]) -> None:
    path = Path(path)
    descriptors = []
    blobs = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        descriptors.append({"name": name, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())

    meta = dict(header)
    meta["model_type"] = model_type
    meta["arrays"] = descriptors
    encoded = json.dumps(meta, sort_keys=True).encode("utf-8")

    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<II", FORMAT_VERSION, len(encoded)))
            f.write(encoded)
            for blob in blobs:
                f.write(blob)
    except OSError as exc:
        raise IoError(f"cannot write model {path}: {exc}") from exc


def read_container(path, expected_type: str = "") -> Tuple[Dict, Dict[str, np.ndarray]]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read model {path}: {exc}") from exc

    if data[:4] != MAGIC:
        raise IoError(f"{path} is not a model file")
    version, header_len = struct.unpack_from("<II", data, 4)
    if version != FORMAT_VERSION:
        raise VersionMismatch(
            f"{path}: model format version {version}, this build reads version {FORMAT_VERSION}"
        )

    offset = 12
    try:
        meta = json.loads(data[offset : offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IoError(f"{path}: corrupt model header") from exc
    offset += header_len

    if expected_type and meta.get("model_type") != expected_type:
        raise IoError(f"{path}: expected a {expected_type} model, found {meta.get('model_type')}")

    arrays: Dict[str, np.ndarray] = {}
    for desc in meta.pop("arrays", []):
        shape = tuple(desc["shape"])
        count = int(np.prod(shape)) if shape else 1
        if offset + 8 * count > len(data):
            raise IoError(f"{path}: truncated array {desc['name']}")
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        arrays[desc["name"]] = arr.reshape(shape).astype(float)
        offset += 8 * count
    return meta, arrays
