"""Deterministic JSON, CSV and OBJ writers/readers."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import ShapeError

SCHEMA_VERSION = "1.0"


def _fmt_float(x):
    x = float(x)
    if not math.isfinite(x):
        return "null"
    s = format(x, ".17g")
    if not any(ch in s for ch in ".en"):
        s += ".0"
    return s


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, tuple):
        return list(obj)
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    return obj


def _encode(obj, indent, level):
    obj = _plain(obj)
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _fmt_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {_encode(v, indent, level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(isinstance(_plain(v), (int, float, bool)) or v is None for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent=2):
    """JSON text with 17 significant digits for floats and null for non-finite values."""
    return _encode(obj, indent, 0) + "\n"


def with_schema(obj, kind):
    return {"schema_version": SCHEMA_VERSION, "kind": kind, **obj}


def write_json(path, obj, kind):
    path = Path(path)
    path.write_text(dumps(with_schema(obj, kind)), encoding="utf-8")
    return path


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# CSV


def write_csv(path, columns):
    """Write equal-length columns (dict name -> 1-D array) with a header row."""
    names = list(columns)
    cols = [np.asarray(columns[k]).ravel() for k in names]
    n = {len(c) for c in cols}
    if len(n) > 1:
        raise ShapeError("CSV columns must have equal lengths")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([str(int(v)) if np.issubdtype(type(v), np.integer) else _fmt_float(v)
                        .replace("null", "nan") for v in row])
    return Path(path)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [[float(x) for x in row] for row in r if row]
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    return {k: data[:, i] for i, k in enumerate(header)}


# ---------------------------------------------------------------------------
# OBJ


def quad_faces(grid):
    """1-based quad faces by grid connectivity, wrapping across periodic directions."""
    nx, ny = grid.shape
    idx = np.arange(nx * ny).reshape(nx, ny) + 1
    imax = nx if grid.periodic1 else nx - 1
    jmax = ny if grid.periodic2 else ny - 1
    faces = []
    for i in range(imax):
        for j in range(jmax):
            i1, j1 = (i + 1) % nx, (j + 1) % ny
            faces.append((idx[i, j], idx[i1, j], idx[i1, j1], idx[i, j1]))
    return faces


def write_obj(path, psi, grid):
    psi = np.asarray(psi, dtype=float)
    if psi.shape != grid.shape + (3,):
        raise ShapeError(f"psi shape {psi.shape} does not match grid {grid.shape}")
    lines = [f"v {_fmt_float(x)} {_fmt_float(y)} {_fmt_float(z)}" for x, y, z in psi.reshape(-1, 3)]
    lines += ["f " + " ".join(str(k) for k in f) for f in quad_faces(grid)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return Path(path)


def read_obj(path):
    """(vertices (N, 3), faces list of 1-based index tuples)."""
    verts, faces = [], []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(p) for p in parts[1:4]])
        elif parts[0] == "f":
            faces.append(tuple(int(p.split("/")[0]) for p in parts[1:]))
    return np.array(verts, dtype=float).reshape(-1, 3), faces
