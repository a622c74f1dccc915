"""G2FL field snapshots and CSV diagnostics.

A G2FL file holds one named field: the magic bytes b"G2FL", then
little-endian u32 values (format version, k, n, the k active axes,
component count), then the samples as row-major little-endian float64.
A snapshot is a directory with one such file per field; fields of the
reduced 6D flow use names with an "su3:" prefix.
"""

import csv
import math
import os
import struct
from pathlib import Path

import numpy as np

from .grid import Grid

MAGIC = b"G2FL"
VERSION = 1
SU3_PREFIX = "su3:"


def encode_field(values, grid):
    values = np.asarray(values, dtype="<f8")
    ncomp = 1 if values.ndim == grid.k else int(np.prod(values.shape[grid.k:]))
    if values.shape[:grid.k] != grid.shape:
        raise ValueError(f"field shape {values.shape} does not match grid {grid.shape}")
    head = MAGIC + struct.pack(f"<{3 + grid.k + 1}I", VERSION, grid.k, grid.n,
                               *grid.active_axes, ncomp)
    return head + np.ascontiguousarray(values).tobytes(order="C")


def decode_field(blob, dim=7):
    """(values, grid) from G2FL bytes; values have shape grid.shape + (ncomp,)."""
    if blob[:4] != MAGIC:
        raise ValueError("not a G2FL file")
    version, k, n = struct.unpack_from("<3I", blob, 4)
    if version != VERSION:
        raise ValueError(f"unsupported G2FL version {version}")
    off = 16
    axes = struct.unpack_from(f"<{k}I", blob, off)
    off += 4 * k
    (ncomp,) = struct.unpack_from("<I", blob, off)
    off += 4
    grid = Grid(n, axes, dim)
    count = n ** k * ncomp
    data = np.frombuffer(blob, dtype="<f8", count=count, offset=off)
    if off + 8 * count != len(blob):
        raise ValueError("G2FL payload size mismatch")
    return data.reshape(grid.shape + (ncomp,)).astype(float), grid


def _filename(name):
    return name + ".g2fl"


def write_field(path, values, grid):
    Path(path).write_bytes(encode_field(values, grid))


def read_field(path, dim=7):
    return decode_field(Path(path).read_bytes(), dim)


def write_snapshot(directory, fields, grid):
    """Write {name: array} into ``directory`` (created if needed)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, values in fields.items():
        g = grid.sub(6) if name.startswith(SU3_PREFIX) else grid
        write_field(directory / _filename(name), values, g)
    return directory


def read_snapshot(directory):
    out = {}
    for path in sorted(Path(directory).glob("*.g2fl")):
        name = path.stem
        out[name] = read_field(path, 6 if name.startswith(SU3_PREFIX) else 7)
    return out


def snapshot_dir(root, step):
    return Path(root) / f"snapshot_{step:06d}"


def _fmt(x):
    if isinstance(x, str):
        return x
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x))


class CsvWriter:
    """Row-at-a-time CSV writer; flushes each row so aborts keep the data."""

    def __init__(self, path, columns):
        self.columns = tuple(columns)
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._w = csv.writer(self._fh)
        self._w.writerow(self.columns)
        self._fh.flush()

    def write(self, row):
        self._w.writerow([_fmt(row.get(c)) for c in self.columns])
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_csv(path, rows, columns):
    with CsvWriter(path, columns) as w:
        for r in rows:
            w.write(r)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: _parse(v) for k, v in r.items()} for r in rows]


def _parse(v):
    if v == "":
        return float("nan")
    try:
        return float(v)
    except ValueError:
        return v
