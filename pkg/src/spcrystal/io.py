"""Field snapshot files and atomic writes.

Snapshot layout (little endian): magic ``SPFLD1``, int64 d, three int64 grid
counts, d*3 float64 period components, (3-d) float64 truncation half-lengths,
then the complex128 samples in row-major order.
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .geometry import make_cell
from .spectral import ScalarField

MAGIC = b"SPFLD1"


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path, obj) -> None:
    atomic_write_bytes(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode())


def encode_snapshot(f: ScalarField) -> bytes:
    cell = f.cell
    head = MAGIC + struct.pack("<q", cell.d) + struct.pack("<3q", *cell.grid)
    head += np.asarray(cell.periods, dtype="<f8").tobytes()
    head += np.asarray(cell.trunc, dtype="<f8").tobytes()
    body = np.ascontiguousarray(f.values, dtype="<c16").tobytes()
    return head + body


def write_snapshot(f: ScalarField, path) -> None:
    atomic_write_bytes(path, encode_snapshot(f))


def read_snapshot(path) -> ScalarField:
    raw = Path(path).read_bytes()
    if raw[:6] != MAGIC:
        raise ValidationError(f"{path}: not a field snapshot (bad magic)")
    off = 6
    (d,) = struct.unpack_from("<q", raw, off)
    off += 8
    grid = struct.unpack_from("<3q", raw, off)
    off += 24
    periods = np.frombuffer(raw, "<f8", 3 * d, off).reshape(d, 3)
    off += 24 * d
    trunc = np.frombuffer(raw, "<f8", 3 - d, off)
    off += 8 * (3 - d)
    cell = make_cell(int(d), periods, tuple(trunc), grid)
    n = int(np.prod(grid))
    if len(raw) - off != 16 * n:
        raise ValidationError(f"{path}: expected {n} samples, found {(len(raw) - off) / 16:g}")
    vals = np.frombuffer(raw, "<c16", n, off).reshape(grid).astype(complex)
    return ScalarField(cell, vals)
