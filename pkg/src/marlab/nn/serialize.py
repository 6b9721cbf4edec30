"""Binary checkpoint format for named parameter arrays.

A checkpoint is a flat sequence of records, every integer little-endian
64-bit unsigned, every value little-endian float64:

    [u64 name_len][name utf-8][u64 rows][u64 cols][rows*cols f64 values]

A JSON manifest alongside lists the records so checkpoints are inspectable
without parsing binary.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..errors import ContractError
from .tensor import Parameter

FORMAT_NAME = "marlab-params-v1"
_U64 = struct.Struct("<Q")


def write_records(path, records: Iterable[tuple[str, np.ndarray]]):
    with open(path, "wb") as fh:
        for name, arr in records:
            arr = np.asarray(arr, dtype=np.float64)
            if arr.ndim != 2:
                raise ContractError(f"record {name!r} must be 2-D, got ndim {arr.ndim}")
            raw = name.encode("utf-8")
            fh.write(_U64.pack(len(raw)))
            fh.write(raw)
            fh.write(_U64.pack(arr.shape[0]))
            fh.write(_U64.pack(arr.shape[1]))
            fh.write(arr.astype("<f8").tobytes(order="C"))


def read_records(path) -> list[tuple[str, np.ndarray]]:
    out = []
    blob = Path(path).read_bytes()
    pos = 0

    def take_u64():
        nonlocal pos
        (value,) = _U64.unpack_from(blob, pos)
        pos += 8
        return value

    while pos < len(blob):
        name_len = take_u64()
        name = blob[pos : pos + name_len].decode("utf-8")
        pos += name_len
        rows = take_u64()
        cols = take_u64()
        count = rows * cols
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).reshape(rows, cols)
        pos += count * 8
        out.append((name, arr.astype(np.float64)))
    return out


def save_checkpoint(params: Sequence[Parameter], bin_path, manifest_path=None,
                    extra: dict | None = None):
    """Write parameters plus a JSON manifest describing them."""
    bin_path = Path(bin_path)
    write_records(bin_path, ((p.name, p.data) for p in params))
    manifest = {
        "format": FORMAT_NAME,
        "endianness": "little",
        "record_layout": "u64 name_len | name utf-8 | u64 rows | u64 cols | rows*cols f64",
        "params": [
            {"name": p.name, "rows": p.rows, "cols": p.cols, "group": p.group}
            for p in params
        ],
    }
    if extra:
        manifest["extra"] = extra
    if manifest_path is None:
        manifest_path = bin_path.with_suffix(".json")
    Path(manifest_path).write_text(json.dumps(manifest, indent=2))


def load_checkpoint(bin_path, params: Sequence[Parameter]):
    """Fill the given parameters in place from a checkpoint file."""
    stored = dict(read_records(bin_path))
    for p in params:
        if p.name not in stored:
            raise ContractError(f"checkpoint is missing parameter {p.name!r}")
        arr = stored[p.name]
        if arr.shape != p.data.shape:
            raise ContractError(
                f"checkpoint shape {arr.shape} does not match {p.name} {p.data.shape}")
        p.data[...] = arr
