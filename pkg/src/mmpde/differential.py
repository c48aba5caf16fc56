"""Vertex tangents, normals and mean curvature computed from the mesh alone."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import MeshError, SimplicialMesh


@dataclass(frozen=True)
class VertexFrames:
    """Unit tangents (curves) or normals (surfaces) plus curvature magnitude.

    ``kind`` is "tangent" or "normal".  ``curvature`` is filled by
    :func:`discrete_curvature`; ``extrapolated`` flags vertices whose value
    was copied from a neighbour.
    """

    vectors: np.ndarray
    kind: str
    curvature: np.ndarray | None = None
    extrapolated: np.ndarray | None = field(default=None, repr=False)


def _normalize(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise MeshError("zero-length frame vector (coincident vertices)")
    return v / n


def curve_neighbors(mesh: SimplicialMesh) -> tuple[np.ndarray, np.ndarray]:
    """Previous/next vertex of every vertex along a polyline (-1 at open ends).

    Orientation follows the element vertex order; connectivity only, so
    branches passing through the same point stay distinct.
    """
    if mesh.m != 1:
        raise MeshError("curve operations need a 1-simplicial mesh")
    n = mesh.n_vertices
    prev = np.full(n, -1, dtype=np.int64)
    nxt = np.full(n, -1, dtype=np.int64)
    valence = np.bincount(mesh.elements.ravel(), minlength=n)
    if valence.max() > 2:
        raise MeshError(f"vertex {int(np.argmax(valence))} has valence {int(valence.max())} > 2")
    for a, b in mesh.elements:
        # tolerate inconsistently oriented segments by filling whichever slot is free
        if nxt[a] < 0:
            nxt[a] = b
        else:
            prev[a] = b
        if prev[b] < 0:
            prev[b] = a
        else:
            nxt[b] = a
    return prev, nxt


def curve_tangents(mesh: SimplicialMesh) -> VertexFrames:
    prev, nxt = curve_neighbors(mesh)
    x = mesh.vertices
    if np.any((prev < 0) & (nxt < 0)):
        raise MeshError("isolated vertex in curve mesh")
    ahead = np.where(nxt >= 0, nxt, np.arange(mesh.n_vertices))
    behind = np.where(prev >= 0, prev, np.arange(mesh.n_vertices))
    return VertexFrames(_normalize(x[ahead] - x[behind]), "tangent")


def face_angles(mesh: SimplicialMesh) -> np.ndarray:
    """Interior angle at each corner of a triangle mesh, shape (n_faces, 3)."""
    return mesh.memo("_face_angles", lambda: _face_angles(mesh.vertices, mesh.elements))


def _face_angles(x: np.ndarray, tri: np.ndarray) -> np.ndarray:
    p = x[tri]
    ang = np.empty(tri.shape)
    for c in range(3):
        u = p[:, (c + 1) % 3] - p[:, c]
        v = p[:, (c + 2) % 3] - p[:, c]
        cross = np.linalg.norm(np.cross(u, v), axis=1)
        ang[:, c] = np.arctan2(cross, np.einsum("ij,ij->i", u, v))
    return ang


def check_orientation(mesh: SimplicialMesh) -> None:
    """Raise if two triangles traverse a shared edge in the same direction."""
    if mesh.m != 2:
        raise MeshError("orientation check needs a triangle mesh")
    if not mesh.consistently_oriented:
        raise MeshError("inconsistent triangle orientation")


def surface_normals(mesh: SimplicialMesh) -> VertexFrames:
    """Angle-weighted vertex normals of a consistently oriented triangle mesh in R^3."""
    if mesh.m != 2 or mesh.d != 3:
        raise MeshError("surface normals need a triangle mesh in R^3")
    check_orientation(mesh)
    x, tri = mesh.vertices, mesh.elements
    fn = np.cross(x[tri[:, 1]] - x[tri[:, 0]], x[tri[:, 2]] - x[tri[:, 0]])
    fn = _normalize(fn)
    w = face_angles(mesh)
    acc = np.zeros_like(x)
    for c in range(3):
        for k in range(3):
            acc[:, k] += np.bincount(tri[:, c], weights=w[:, c] * fn[:, k], minlength=mesh.n_vertices)
    return VertexFrames(_normalize(acc), "normal")


def vertex_frames(mesh: SimplicialMesh) -> VertexFrames | None:
    """Tangents for curves, normals for surfaces, ``None`` for bulk meshes."""
    if mesh.m == mesh.d:
        return None
    if mesh.m == 1:
        return mesh.memo("_vertex_frames", lambda: curve_tangents(mesh))
    return mesh.memo("_vertex_frames", lambda: surface_normals(mesh))


def _fill_from_neighbors(mesh: SimplicialMesh, values: np.ndarray, missing: np.ndarray) -> np.ndarray:
    # copy from the closest neighbour that has a value; repeat for chains of missing vertices
    values = values.copy()
    missing = missing.copy()
    x = mesh.vertices
    while missing.any():
        progressed = False
        for i in np.flatnonzero(missing):
            nb = mesh.neighbors[i]
            nb = nb[~missing[nb]]
            if len(nb):
                j = nb[np.argmin(np.linalg.norm(x[nb] - x[i], axis=1))]
                values[i] = values[j]
                missing[i] = False
                progressed = True
        if not progressed:
            raise MeshError("no vertex with a curvature estimate in this component")
    return values


def _curve_curvature(mesh: SimplicialMesh):
    prev, nxt = curve_neighbors(mesh)
    inner = (prev >= 0) & (nxt >= 0)
    k = np.zeros(mesh.n_vertices)
    x = mesh.vertices
    a = x[prev[inner]] - x[inner]
    b = x[nxt[inner]] - x[inner]
    c = x[nxt[inner]] - x[prev[inner]]
    la, lb, lc = (np.linalg.norm(v, axis=1) for v in (a, b, c))
    if a.shape[1] == 2:
        cross = np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
    else:
        cross = np.linalg.norm(np.cross(a, b), axis=1)
    # 1/R = 2 sin(angle) / opposite side = 2 |a x b| / (|a| |b| |c|)
    with np.errstate(divide="ignore", invalid="ignore"):
        kin = np.where(cross > 0, 2.0 * cross / (la * lb * lc), 0.0)
    k[inner] = kin
    missing = ~inner
    if missing.any():
        k = _fill_from_neighbors(mesh, k, missing)
    return k, missing


def mixed_areas(mesh: SimplicialMesh) -> np.ndarray:
    """Mixed Voronoi/barycentric vertex areas of a triangle mesh."""
    x, tri = mesh.vertices, mesh.elements
    p = x[tri]
    ang = face_angles(mesh)
    area = 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
    obtuse = ang > np.pi / 2
    any_obtuse = obtuse.any(axis=1)
    out = np.zeros(mesh.n_vertices)
    with np.errstate(divide="ignore"):
        cot = 1.0 / np.tan(ang)
    for c in range(3):
        c1, c2 = (c + 1) % 3, (c + 2) % 3
        # Voronoi share of corner c: edges to c1 and c2 weighted by opposite cotangents
        l1 = np.sum((p[:, c1] - p[:, c]) ** 2, axis=1)
        l2 = np.sum((p[:, c2] - p[:, c]) ** 2, axis=1)
        vor = (l1 * cot[:, c2] + l2 * cot[:, c1]) / 8.0
        share = np.where(any_obtuse, np.where(obtuse[:, c], area / 2, area / 4), vor)
        out += np.bincount(tri[:, c], weights=share, minlength=mesh.n_vertices)
    return out


def _surface_curvature(mesh: SimplicialMesh):
    x, tri = mesh.vertices, mesh.elements
    ang = face_angles(mesh)
    cot = 1.0 / np.tan(ang)
    lap = np.zeros_like(x)
    for c in range(3):
        i, j = tri[:, (c + 1) % 3], tri[:, (c + 2) % 3]
        # edge (i, j) is opposite corner c
        w = 0.5 * cot[:, c]
        diff = x[j] - x[i]
        for k in range(3):
            lap[:, k] += np.bincount(i, weights=w * diff[:, k], minlength=mesh.n_vertices)
            lap[:, k] -= np.bincount(j, weights=w * diff[:, k], minlength=mesh.n_vertices)
    area = mixed_areas(mesh)
    if np.any(area <= 0):
        raise MeshError(f"zero mixed area at vertex {int(np.argmin(area))}")
    k = np.linalg.norm(lap, axis=1) / (2.0 * area)
    rim = mesh.boundary_vertices
    if rim.any():
        k = _fill_from_neighbors(mesh, k, rim)
    return k, rim


def discrete_curvature(mesh: SimplicialMesh, frames: VertexFrames | None = None) -> VertexFrames:
    """Mean-curvature magnitude per vertex; curves use the circumradius of
    (x_prev, x_i, x_next), surfaces the cotangent Laplacian over the mixed area.

    End/rim vertices take the value of their nearest neighbour with a
    one-ring estimate and are flagged in ``extrapolated``.
    """
    if frames is None:
        frames = vertex_frames(mesh)
    if frames is None:
        raise MeshError("curvature is defined for curve and surface meshes only")
    if mesh.m == 1:
        k, flagged = _curve_curvature(mesh)
    else:
        k, flagged = _surface_curvature(mesh)
    return VertexFrames(frames.vectors, frames.kind, curvature=k, extrapolated=flagged)
