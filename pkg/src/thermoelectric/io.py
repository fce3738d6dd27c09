"""Artifact writers: RFC-4180 CSV, legacy VTK, raw little-endian dumps.

Every file is written to a temporary sibling and moved into place with
``os.replace``, so readers never observe a partial artifact. Floats are
written with ``repr`` (shortest round-trip form), which keeps outputs
byte-identical across repeated runs.
"""
from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .mesh import Grid

__all__ = [
    "atomic_write",
    "format_value",
    "write_csv",
    "read_csv",
    "write_vtk",
    "write_raw",
    "read_raw",
]


def atomic_write(path, data: str | bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        kw = {} if mode == "wb" else {"encoding": "utf-8", "newline": ""}
        with os.fdopen(fd, mode, **kw) as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def write_csv(path, header, rows) -> Path:
    """CRLF-terminated CSV with a fixed header; fields quoted only when needed."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
    w.writerow(header)
    for row in rows:
        if isinstance(row, dict):
            row = [row.get(k) for k in header]
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
        w.writerow([format_value(v) for v in row])
    return atomic_write(path, buf.getvalue())


def read_csv(path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_vtk(path, grid: Grid, scalars: dict | None = None, vectors: dict | None = None,
              title: str = "thermoelectric fields") -> Path:
    """Legacy ASCII STRUCTURED_POINTS file with node data, x index fastest.

    ``scalars`` maps names to node-shaped arrays; ``vectors`` maps names to
    arrays of shape ``(3, *node_shape)``.
    """
    nx, ny, nz = grid.node_shape
    h = grid.h
    out = [
        "# vtk DataFile Version 3.0",
        title.replace("\n", " ")[:255],
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {nx} {ny} {nz}",
        "ORIGIN 0 0 0",
        f"SPACING {format_value(h[0])} {format_value(h[1])} {format_value(h[2])}",
        f"POINT_DATA {nx * ny * nz}",
    ]
    for name, arr in (scalars or {}).items():
        arr = np.asarray(arr, dtype=float)
        if arr.shape != grid.node_shape:
            raise ValueError(f"scalar {name!r} has shape {arr.shape}, expected {grid.node_shape}")
        out.append(f"SCALARS {name} double 1")
        out.append("LOOKUP_TABLE default")
        out.extend(format_value(v) for v in arr.ravel(order="F"))
    for name, arr in (vectors or {}).items():
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (3,) + grid.node_shape:
            raise ValueError(f"vector {name!r} has shape {arr.shape}, expected {(3,) + grid.node_shape}")
        out.append(f"VECTORS {name} double")
        flat = [arr[d].ravel(order="F") for d in range(3)]
        out.extend(" ".join(format_value(c[i]) for c in flat) for i in range(flat[0].size))
    return atomic_write(path, "\n".join(out) + "\n")


def write_raw(path, arrays: dict) -> tuple[Path, Path]:
    """Concatenate arrays (C order, ``<f8``) into ``path``; describe them in ``path.txt``.

    Sidecar lines: ``name offset count shape`` with offset and count in
    values and shape as comma-separated extents.
    """
    path = Path(path)
    lines = ["# raw little-endian float64, C order", "# name offset count shape"]
    chunks = []
    offset = 0
    for name, arr in arrays.items():
        if any(ch.isspace() for ch in name) or not name:
            raise ValueError(f"invalid array name {name!r}")
        a = np.ascontiguousarray(arr, dtype="<f8")
        lines.append(f"{name} {offset} {a.size} {','.join(str(s) for s in a.shape)}")
        chunks.append(a.tobytes(order="C"))
        offset += a.size
    data = atomic_write(path, b"".join(chunks))
    side = atomic_write(path.with_name(path.name + ".txt"), "\n".join(lines) + "\n")
    return data, side


def read_raw(path) -> dict[str, np.ndarray]:
    path = Path(path)
    flat = np.fromfile(path, dtype="<f8")
    out = {}
    for line in path.with_name(path.name + ".txt").read_text(encoding="utf-8").splitlines():
        if not line or line.startswith("#"):
            continue
        name, off, count, shape = line.split()
        off, count = int(off), int(count)
        out[name] = flat[off:off + count].reshape(tuple(int(s) for s in shape.split(",")))
    return out
