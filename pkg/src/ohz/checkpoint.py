"""Checkpoint container: JSON header followed by float64 array payloads.

Used for probe models and class statistics. Layout, little-endian:

    magic "OHCK" | header_len u32 | header JSON utf-8 | payloads...

The header's "arrays" entry lists name and shape for each payload, in
payload order. Arrays are stored as f64 row-major. Headers are serialized
with sorted keys so identical inputs give byte-identical files.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

_MAGIC = b"OHCK"


def write_checkpoint(path: str | os.PathLike, header: dict, arrays: dict[str, np.ndarray]) -> None:
    header = dict(header)
    header["arrays"] = [
        {"name": name, "shape": list(arr.shape)} for name, arr in arrays.items()
    ]
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")

    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for arr in arrays.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    os.replace(tmp, path)


def read_checkpoint(path: str | os.PathLike) -> tuple[dict, dict[str, np.ndarray]]:
    with open(os.fspath(path), "rb") as fh:
        data = fh.read()
    if data[:4] != _MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack_from("<I", data, 4)
    header = json.loads(data[8 : 8 + hlen].decode("utf-8"))

    arrays: dict[str, np.ndarray] = {}
    offset = 8 + hlen
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        arrays[entry["name"]] = arr.reshape(shape).copy()
        offset += count * 8
    if offset != len(data):
        raise ValueError(f"{path}: {len(data) - offset} trailing bytes")
    return header, arrays
