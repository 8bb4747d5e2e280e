"""Checkpoint container: JSON manifest plus raw little-endian arrays.

Layout: 4-byte magic, 8-byte little-endian header length, UTF-8 JSON
header, then the concatenated array blobs. The header records name,
dtype, shape, and byte offset per array and carries a free-form ``meta``
dict (model config, schema version). The loader rejects unknown versions
and shape mismatches are the caller's job via ``require_shapes``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MAGIC = b"NBCP"
FORMAT_VERSION = 1


def save_checkpoint(path, arrays, meta=None):
    entries = []
    offset = 0
    blobs = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        blob = le.tobytes()
        entries.append(
            {
                "name": name,
                "dtype": np.dtype(arr.dtype).str.lstrip("<>=|"),
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": len(blob),
            }
        )
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps(
        {"version": FORMAT_VERSION, "meta": meta or {}, "tensors": entries},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    """Returns (arrays: dict[str, ndarray], meta: dict)."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValueError(f"{path} is not a checkpoint file (bad magic {magic!r})")
        header_len = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header["version"] != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header['version']}")
        payload = fh.read()
    arrays = {}
    for entry in header["tensors"]:
        dt = np.dtype("<" + entry["dtype"])
        raw = payload[entry["offset"] : entry["offset"] + entry["nbytes"]]
        arrays[entry["name"]] = np.frombuffer(raw, dtype=dt).reshape(entry["shape"]).copy()
    return arrays, header["meta"]


def require_shapes(arrays, expected):
    """Raise if any expected array is absent or shaped differently."""
    for name, shape in expected.items():
        if name not in arrays:
            raise ValueError(f"checkpoint is missing tensor '{name}'")
        got = tuple(arrays[name].shape)
        if got != tuple(shape):
            raise ValueError(f"checkpoint tensor '{name}' has shape {got}, expected {tuple(shape)}")
