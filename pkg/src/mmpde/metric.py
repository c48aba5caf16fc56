"""Riemannian metric tensor fields given by nodal values on a mesh."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import pseudo_inverse
from .mesh import SimplicialMesh


@dataclass(frozen=True)
class MetricField:
    """Per-vertex symmetric positive definite tensors, shape (n_vertices, d, d)."""

    nodal_tensors: np.ndarray
    kind: str = "user"
    floor_eps: float = 0.0

    def __post_init__(self):
        T = np.array(self.nodal_tensors, dtype=float)
        if T.ndim != 3 or T.shape[1] != T.shape[2]:
            raise ValueError("nodal tensors must have shape (n_vertices, d, d)")
        if not np.allclose(T, np.swapaxes(T, 1, 2), rtol=0, atol=1e-14 * max(1.0, np.abs(T).max())):
            raise ValueError("nodal tensors must be symmetric")
        T = 0.5 * (T + np.swapaxes(T, 1, 2))
        lo = np.linalg.eigvalsh(T)[:, 0]
        if np.any(lo <= 0):
            raise ValueError(f"metric is not positive definite at vertex {int(np.argmin(lo))}")
        T.setflags(write=False)
        object.__setattr__(self, "nodal_tensors", T)

    @property
    def d(self) -> int:
        return self.nodal_tensors.shape[1]

    def __len__(self):
        return len(self.nodal_tensors)

    def scaled(self, c: float) -> "MetricField":
        return MetricField(c * self.nodal_tensors, kind=self.kind, floor_eps=c * self.floor_eps)


def build_identity_metric(mesh: SimplicialMesh) -> MetricField:
    T = np.broadcast_to(np.eye(mesh.d), (mesh.n_vertices, mesh.d, mesh.d))
    return MetricField(T, kind="identity")


def smooth_vertex_values(mesh: SimplicialMesh, values, passes: int) -> np.ndarray:
    """Replace each value by the mean over the vertex and its one-ring, ``passes`` times."""
    v = np.asarray(values, dtype=float).copy()
    if passes <= 0:
        return v
    e = mesh.edges
    deg = np.bincount(e.ravel(), minlength=mesh.n_vertices) + 1.0
    for _ in range(passes):
        acc = v.copy()
        acc += np.bincount(e[:, 0], weights=v[e[:, 1]], minlength=mesh.n_vertices)
        acc += np.bincount(e[:, 1], weights=v[e[:, 0]], minlength=mesh.n_vertices)
        v = acc / deg
    return v


def build_curvature_metric(mesh: SimplicialMesh, curvatures, floor_eps: float | None = None,
                           n_smooth: int = 0) -> MetricField:
    """M_i = max(k_i, floor_eps) I from nonnegative vertex curvatures.

    ``floor_eps`` defaults to 1e-3 times the largest curvature (after smoothing).
    """
    k = np.asarray(curvatures, dtype=float)
    if k.shape != (mesh.n_vertices,):
        raise ValueError("need one curvature value per vertex")
    if np.any(k < 0) or not np.all(np.isfinite(k)):
        raise ValueError("curvature must be finite and nonnegative")
    k = smooth_vertex_values(mesh, k, n_smooth)
    if floor_eps is None:
        floor_eps = 1e-3 * k.max() if k.max() > 0 else 1e-3
    if not floor_eps > 0:
        raise ValueError("floor_eps must be positive")
    scale = np.maximum(k, floor_eps)
    T = scale[:, None, None] * np.eye(mesh.d)
    return MetricField(T, kind="curvature", floor_eps=float(floor_eps))


def element_average_metric(field: MetricField, element) -> np.ndarray:
    """Arithmetic mean of the nodal tensors of one element."""
    return field.nodal_tensors[np.asarray(element)].mean(axis=0)


def element_metrics(field: MetricField, elements: np.ndarray) -> np.ndarray:
    """Vertex-averaged tensor for every element, shape (n_elements, d, d)."""
    return field.nodal_tensors[elements].mean(axis=1)


def frozen_element_metrics(field: MetricField, elements: np.ndarray, anchor: np.ndarray,
                           vertices: np.ndarray) -> np.ndarray:
    """Element tensors when the metric is the piecewise-linear field of ``anchor``.

    Each element's field is the affine interpolant of its nodal tensors over
    the anchor position of the element, evaluated at the barycenter of the
    element at ``vertices``.  With ``vertices is anchor`` this reduces to the
    vertex average.
    """
    xa = anchor[elements]
    xb = vertices[elements].mean(axis=1)
    E = np.swapaxes(xa[:, 1:, :] - xa[:, :1, :], 1, 2)
    P = pseudo_inverse(E)  # rows: grad phi_1..phi_m
    phi_rest = np.einsum("kjd,kd->kj", P, xb - xa[:, 0, :])
    phi = np.concatenate([1.0 - phi_rest.sum(axis=1, keepdims=True), phi_rest], axis=1)
    return np.einsum("kj,kjab->kab", phi, field.nodal_tensors[elements])


def metric_bounds(field: MetricField) -> tuple[float, float]:
    """(min smallest eigenvalue, max largest eigenvalue) over the vertices."""
    w = np.linalg.eigvalsh(field.nodal_tensors)
    return float(w[:, 0].min()), float(w[:, -1].max())
