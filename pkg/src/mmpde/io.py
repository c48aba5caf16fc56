"""Mesh files (legacy VTK, OBJ subset, node/ele text) and the per-step CSV log.

node_ele format: ``<base>.node`` holds ``n d`` on its first line and then one
vertex per line (``index x_1 .. x_d``, zero-based); ``<base>.ele`` holds
``n_elements k`` and then ``index v_0 .. v_{k-1}``.  Lines starting with ``#``
and blank lines are ignored.
"""

from __future__ import annotations

import csv
import os
from pathlib import Path

import numpy as np

from .mesh import MeshError, SimplicialMesh

LOG_FIELDS = ("step", "t", "energy", "min_K", "min_aKM", "max_vel", "grad_residual")
_FMT = "{:.17g}"


class MeshFormatError(MeshError):
    """Malformed mesh file; the message names the file and line."""

    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


def _fmt_row(values) -> str:
    return " ".join(_FMT.format(float(v)) for v in values)


def write_vtk(mesh: SimplicialMesh, path, curvature=None, velocity=None) -> None:
    """Write a legacy ASCII VTK file; coordinates keep 17 significant digits."""
    if mesh is None or mesh.n_vertices == 0 or mesh.n_elements == 0:
        raise MeshError("refusing to write an empty mesh")
    n = mesh.n_vertices
    pts = mesh.vertices
    if mesh.d < 3:
        pts = np.hstack([pts, np.zeros((n, 3 - mesh.d))])
    lines = ["# vtk DataFile Version 3.0", "moving mesh", "ASCII"]
    k = mesh.m + 1
    conn = [f"{k} " + " ".join(str(int(i)) for i in el) for el in mesh.elements]
    if mesh.m == 3:
        lines.append("DATASET UNSTRUCTURED_GRID")
        lines.append(f"POINTS {n} double")
        lines += [_fmt_row(p) for p in pts]
        lines.append(f"CELLS {mesh.n_elements} {mesh.n_elements * (k + 1)}")
        lines += conn
        lines.append(f"CELL_TYPES {mesh.n_elements}")
        lines += ["10"] * mesh.n_elements
    else:
        lines.append("DATASET POLYDATA")
        lines.append(f"POINTS {n} double")
        lines += [_fmt_row(p) for p in pts]
        tag = "LINES" if mesh.m == 1 else "POLYGONS"
        lines.append(f"{tag} {mesh.n_elements} {mesh.n_elements * (k + 1)}")
        lines += conn
    if curvature is not None or velocity is not None:
        lines.append(f"POINT_DATA {n}")
        if curvature is not None:
            c = np.asarray(curvature, dtype=float).reshape(-1)
            if len(c) != n:
                raise ValueError("curvature must have one value per vertex")
            lines += ["SCALARS curvature double 1", "LOOKUP_TABLE default"]
            lines += [_FMT.format(v) for v in c]
        if velocity is not None:
            v = np.asarray(velocity, dtype=float).reshape(n, -1)
            if v.shape[1] < 3:
                v = np.hstack([v, np.zeros((n, 3 - v.shape[1]))])
            lines.append("VECTORS velocity double")
            lines += [_fmt_row(r) for r in v]
    Path(path).write_text("\n".join(lines) + "\n")


def _tokens(path):
    """Non-empty, non-comment lines as (line_number, tokens)."""
    with open(path) as fh:
        for i, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield i, line.split()


def _floats(path, line, toks):
    try:
        return [float(t) for t in toks]
    except ValueError:
        raise MeshFormatError(path, line, f"expected numbers, got {' '.join(toks)!r}") from None


def _ints(path, line, toks):
    try:
        return [int(t) for t in toks]
    except ValueError:
        raise MeshFormatError(path, line, f"expected integers, got {' '.join(toks)!r}") from None


def _trim_dimension(v: np.ndarray) -> np.ndarray:
    # VTK and OBJ always store 3 coordinates; drop trailing all-zero ones (d >= 2 kept)
    d = v.shape[1]
    while d > 2 and np.all(v[:, d - 1] == 0):
        d -= 1
    return v[:, :d]


def _build(path, vertices, elements, element_lines, min_d=None):
    if not vertices:
        raise MeshFormatError(path, 0, "no vertices")
    if not elements:
        raise MeshFormatError(path, 0, "no elements")
    arity = len(elements[0])
    for el, ln in zip(elements, element_lines):
        if len(el) != arity:
            raise MeshFormatError(path, ln, f"mixed element arities ({arity} and {len(el)})")
    v = np.array(vertices, dtype=float)
    if min_d is None:
        v = _trim_dimension(v)
        if v.shape[1] < arity - 1:
            v = np.array(vertices, dtype=float)[:, :arity - 1]
    e = np.array(elements, dtype=np.int64)
    if e.min() < 0 or e.max() >= len(v):
        bad = int(np.flatnonzero((e < 0).any(axis=1) | (e >= len(v)).any(axis=1))[0])
        raise MeshFormatError(path, element_lines[bad], "vertex index out of range")
    return SimplicialMesh(v, e)


def _read_vtk(path) -> SimplicialMesh:
    with open(path) as fh:
        n_lines = sum(1 for _ in fh)
    it = iter(_tokens(path))
    vertices, elements, lines = [], [], []

    def take(what):
        try:
            return next(it)
        except StopIteration:
            raise MeshFormatError(path, n_lines + 1, f"file ended while reading {what}") from None

    with open(path) as fh:
        first = fh.readline()
    if not first.startswith("# vtk DataFile"):
        raise MeshFormatError(path, 1, "missing '# vtk DataFile' header")
    # the header line starts with '#', so _tokens already skips it
    ln, toks = take("title")
    ln, toks = take("format")
    if toks[0].upper() != "ASCII":
        raise MeshFormatError(path, ln, "only ASCII VTK is supported")
    for ln, toks in it:
        key = toks[0].upper()
        if key == "DATASET":
            continue
        if key == "POINTS":
            n = _ints(path, ln, toks[1:2])[0]
            vals = []
            while len(vals) < 3 * n:
                ln2, t2 = take("POINTS")
                vals += _floats(path, ln2, t2)
            if len(vals) != 3 * n:
                raise MeshFormatError(path, ln2, "wrong number of point coordinates")
            vertices = [vals[3 * i:3 * i + 3] for i in range(n)]
        elif key in ("LINES", "POLYGONS", "CELLS"):
            n = _ints(path, ln, toks[1:2])[0]
            for _ in range(n):
                ln2, t2 = take(key)
                row = _ints(path, ln2, t2)
                if row[0] != len(row) - 1:
                    raise MeshFormatError(path, ln2, "cell size does not match its vertex count")
                elements.append(row[1:])
                lines.append(ln2)
        elif key == "CELL_TYPES":
            n = _ints(path, ln, toks[1:2])[0]
            for _ in range(n):
                take("CELL_TYPES")
        elif key == "POINT_DATA" or key == "CELL_DATA":
            break
        else:
            raise MeshFormatError(path, ln, f"unexpected keyword {toks[0]!r}")
    return _build(path, vertices, elements, lines)


def _read_obj(path) -> SimplicialMesh:
    vertices, elements, lines = [], [], []
    for ln, toks in _tokens(path):
        key = toks[0]
        if key == "v":
            vals = _floats(path, ln, toks[1:])
            if not 2 <= len(vals) <= 4:
                raise MeshFormatError(path, ln, "vertex needs 2 or 3 coordinates")
            vertices.append((vals + [0.0])[:3])
        elif key in ("l", "f"):
            # face entries may look like v/vt/vn; keep the vertex index only
            idx = _ints(path, ln, [t.split("/")[0] for t in toks[1:]])
            n = len(vertices)
            idx = [i - 1 if i > 0 else n + i for i in idx]
            if key == "l" and len(idx) != 2:
                raise MeshFormatError(path, ln, "line records must have exactly 2 vertices")
            if key == "f" and len(idx) != 3:
                raise MeshFormatError(path, ln, "face records must be triangles")
            elements.append(idx)
            lines.append(ln)
        elif key in ("vn", "vt", "o", "g", "s", "usemtl", "mtllib"):
            continue
        else:
            raise MeshFormatError(path, ln, f"unsupported record {key!r}")
    return _build(path, vertices, elements, lines)


def _read_node_ele(path) -> SimplicialMesh:
    base = str(path)
    for ext in (".node", ".ele"):
        if base.endswith(ext):
            base = base[: -len(ext)]
    node_path, ele_path = base + ".node", base + ".ele"
    rows = list(_tokens(node_path))
    if not rows:
        raise MeshFormatError(node_path, 1, "empty node file")
    ln, head = rows[0]
    n, d = _ints(node_path, ln, head[:2])
    if len(rows) - 1 != n:
        raise MeshFormatError(node_path, rows[-1][0], f"expected {n} vertices, found {len(rows) - 1}")
    vertices = []
    for ln, toks in rows[1:]:
        if len(toks) != d + 1:
            raise MeshFormatError(node_path, ln, f"expected index and {d} coordinates")
        vertices.append(_floats(node_path, ln, toks[1:]))
    rows = list(_tokens(ele_path))
    if not rows:
        raise MeshFormatError(ele_path, 1, "empty element file")
    ln, head = rows[0]
    ne, k = _ints(ele_path, ln, head[:2])
    if len(rows) - 1 != ne:
        raise MeshFormatError(ele_path, rows[-1][0], f"expected {ne} elements, found {len(rows) - 1}")
    elements, lines = [], []
    for ln, toks in rows[1:]:
        idx = _ints(ele_path, ln, toks[1:])
        if len(idx) != k:
            raise MeshFormatError(ele_path, ln, f"mixed element arities ({k} and {len(idx)})")
        elements.append(idx)
        lines.append(ln)
    return _build(ele_path, vertices, elements, lines, min_d=d)


_READERS = {"vtk": _read_vtk, "obj": _read_obj, "node_ele": _read_node_ele}


def read_mesh(path, format: str | None = None) -> SimplicialMesh:
    """Read a mesh; ``format`` defaults to the file extension."""
    if format is None:
        ext = os.path.splitext(str(path))[1].lower()
        format = {".vtk": "vtk", ".obj": "obj", ".node": "node_ele", ".ele": "node_ele"}.get(ext)
        if format is None:
            raise ValueError(f"cannot infer mesh format from {path!r}")
    if format not in _READERS:
        raise ValueError(f"unknown mesh format {format!r}; choose from {', '.join(_READERS)}")
    return _READERS[format](path)


def write_node_ele(mesh: SimplicialMesh, base) -> None:
    base = str(base)
    with open(base + ".node", "w") as fh:
        fh.write(f"{mesh.n_vertices} {mesh.d}\n")
        for i, p in enumerate(mesh.vertices):
            fh.write(f"{i} {_fmt_row(p)}\n")
    with open(base + ".ele", "w") as fh:
        fh.write(f"{mesh.n_elements} {mesh.m + 1}\n")
        for i, el in enumerate(mesh.elements):
            fh.write(f"{i} " + " ".join(str(int(v)) for v in el) + "\n")


class CsvLog:
    """Per-step CSV log with the fixed column set of :data:`LOG_FIELDS`."""

    def __init__(self, path):
        self._fh = open(path, "w", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(LOG_FIELDS)

    def write(self, record) -> None:
        self._writer.writerow([record.step] + [_FMT.format(float(getattr(record, f))) for f in LOG_FIELDS[1:]])

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_log(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != LOG_FIELDS:
            raise ValueError(f"{path}: unexpected log header {reader.fieldnames}")
        return [{k: (int(v) if k == "step" else float(v)) for k, v in row.items()} for row in reader]
