"""Equidistribution/alignment mesh energy and its analytic vertex gradient."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np

from .geometry import (DegenerateSimplexError, ReferenceElement, is_degenerate, reference_element, small_det,
                       small_inv)
from .mesh import SimplicialMesh
from .metric import MetricField, element_metrics, frozen_element_metrics


@dataclass(frozen=True)
class EnergyParams:
    """Energy exponent ``p`` > 1 and alignment weight ``theta`` in (0, 1]."""

    p: float = 1.5
    theta: float = 1.0 / 3.0

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if not 0 < self.theta <= 1:
            raise ValueError(f"theta must lie in (0, 1], got {self.theta}")

    @property
    def coercive(self) -> bool:
        # coercivity with alpha = theta, beta = 0 holds for theta <= 1/2
        return self.theta <= 0.5

    def q(self, m: int) -> float:
        return m * self.p / 2.0

    def reference(self, m: int, n_elements: int) -> ReferenceElement:
        return reference_element(m, 1.0 / n_elements)


def element_jacobian(E, Ehat, M):
    """J = Ehat (E^T M E)^{-1} Ehat^T and det(J) = det(Ehat)^2 / det(E^T M E)."""
    E = np.asarray(E, dtype=float)
    Et = np.swapaxes(E, -1, -2)
    EtME = Et @ np.asarray(M, dtype=float) @ E
    det_EtME = small_det(EtME)
    if np.any(det_EtME <= 0):
        raise DegenerateSimplexError()
    A = small_inv(EtME)
    J = Ehat @ A @ Ehat.T
    detJ = np.linalg.det(Ehat) ** 2 / det_EtME
    return J, detJ


def _trace(A):
    return np.trace(A, axis1=-2, axis2=-1)


def g_function(J, detJ, params: EnergyParams, m: int):
    """theta det(J)^{-1/2} tr(J)^{mp/2} + (1 - 2 theta) m^{mp/2} det(J)^{(p-1)/2}."""
    detJ = np.asarray(detJ, dtype=float)
    if np.any(detJ <= 0):
        raise ValueError("det(J) must be positive")
    p, th = params.p, params.theta
    mp2 = m * p / 2.0
    return th * detJ ** -0.5 * _trace(J) ** mp2 + (1 - 2 * th) * m ** mp2 * detJ ** ((p - 1) / 2)


def g_derivatives(J, detJ, params: EnergyParams, m: int):
    """(dG/dJ, dG/ddet(J)) with J and det(J) treated as independent variables."""
    detJ = np.asarray(detJ, dtype=float)
    if np.any(detJ <= 0):
        raise ValueError("det(J) must be positive")
    p, th = params.p, params.theta
    mp2 = m * p / 2.0
    tr = _trace(J)
    c = th * mp2 * detJ ** -0.5 * tr ** (mp2 - 1.0)
    dG_dJ = np.asarray(c)[..., None, None] * np.eye(m)
    dG_ddet = -0.5 * th * detJ ** -1.5 * tr ** mp2 \
        + 0.5 * (p - 1) * (1 - 2 * th) * m ** mp2 * detJ ** ((p - 3) / 2)
    return dG_dJ, dG_ddet


@dataclass
class ElementTerms:
    """Per-element quantities from one energy evaluation (batched)."""

    J: np.ndarray
    detJ: np.ndarray
    G: np.ndarray
    dG_dJ: np.ndarray
    dG_ddetJ: np.ndarray
    grad_vertices: np.ndarray  # (n, m+1, d)
    dG_dM: np.ndarray


def element_vertex_gradient(E, Ehat, nodal_tensors, params: EnergyParams,
                            M_K=None) -> ElementTerms:
    """G_K and dG_K/d[x_0..x_m] for a stack of elements.

    ``nodal_tensors`` has shape (..., m+1, d, d).  The element metric is their
    average unless ``M_K`` is supplied.  The metric part of the gradient treats
    the metric as the linear interpolant of the nodal tensors over the element,
    held fixed in space.
    """
    E = np.asarray(E, dtype=float)
    Mj = np.asarray(nodal_tensors, dtype=float)
    m = E.shape[-1]
    if M_K is None:
        M_K = Mj.mean(axis=-3)
    Et = np.swapaxes(E, -1, -2)
    EtM = Et @ M_K
    EtME = EtM @ E
    det_EtME = small_det(EtME)
    if np.any(det_EtME <= 0):
        raise DegenerateSimplexError()
    A = small_inv(EtME)
    J = Ehat @ A @ Ehat.T
    detJ = np.linalg.det(Ehat) ** 2 / det_EtME
    G = g_function(J, detJ, params, m)
    dG_dJ, dG_ddet = g_derivatives(J, detJ, params, m)
    c = dG_dJ[..., 0, 0]
    B = A @ (Ehat.T @ Ehat) @ A
    W = A @ EtM
    s = (detJ * dG_ddet)[..., None, None]
    dG_dE = -2.0 * c[..., None, None] * (B @ EtM) - 2.0 * s * W      # (m, d)
    dG_dM = -c[..., None, None] * (E @ B @ Et) - s * (E @ A @ Et)     # (d, d)
    grad = np.concatenate([-dG_dE.sum(axis=-2, keepdims=True), dG_dE], axis=-2)
    # metric part: (1/(m+1)) sum_j tr(dG/dM_K M_j) grad(phi_j), same for every vertex
    P = small_inv(Et @ E) @ Et
    q = np.concatenate([-P.sum(axis=-2, keepdims=True), P], axis=-2)
    t = np.einsum("...ab,...jba->...j", dG_dM, Mj)
    grad = grad + (np.einsum("...j,...jd->...d", t, q) / (m + 1))[..., None, :]
    return ElementTerms(J=J, detJ=detJ, G=G, dG_dJ=dG_dJ, dG_ddetJ=dG_ddet,
                        grad_vertices=grad, dG_dM=dG_dM)


@dataclass
class EnergyReport:
    energy: float
    sigma_h: float
    reference: ReferenceElement
    element_G: np.ndarray
    gradient: np.ndarray
    terms: ElementTerms | None = field(default=None, repr=False)


def check_elements(E: np.ndarray):
    """Raise DegenerateSimplexError naming the first degenerate element."""
    bad = np.flatnonzero(is_degenerate(E))
    if len(bad):
        raise DegenerateSimplexError(index=int(bad[0]))


def element_metric_measures(mesh: SimplicialMesh, M_K: np.ndarray) -> np.ndarray:
    E = mesh.edge_matrices()
    G = np.swapaxes(E, 1, 2) @ M_K @ E
    return np.sqrt(np.clip(small_det(G), 0.0, None)) / factorial(mesh.m)


def energy_value(mesh: SimplicialMesh, field: MetricField, params: EnergyParams,
                 anchor: np.ndarray | None = None) -> float:
    """I_h alone; with ``anchor`` the metric is frozen on the anchor mesh."""
    E = mesh.edge_matrices()
    check_elements(E)
    if anchor is None:
        M_K = element_metrics(field, mesh.elements)
    else:
        M_K = frozen_element_metrics(field, mesh.elements, anchor, mesh.vertices)
        if np.any(np.linalg.eigvalsh(M_K)[:, 0] <= 0):
            return np.inf
    ref = params.reference(mesh.m, mesh.n_elements)
    J, detJ = element_jacobian(E, ref.edge_matrix, M_K)
    G = g_function(J, detJ, params, mesh.m)
    return float(ref.measure * G.sum())


def total_energy(mesh: SimplicialMesh, field: MetricField, params: EnergyParams,
                 keep_terms: bool = False) -> EnergyReport:
    """Energy, total metric measure and assembled gradient dI_h/dx (n_vertices, d)."""
    if len(field) != mesh.n_vertices or field.d != mesh.d:
        raise ValueError("metric field does not match the mesh")
    E = mesh.edge_matrices()
    check_elements(E)
    ref = params.reference(mesh.m, mesh.n_elements)
    Mj = field.nodal_tensors[mesh.elements]
    terms = element_vertex_gradient(E, ref.edge_matrix, Mj, params)
    g = ref.measure * terms.grad_vertices
    n, d = mesh.n_vertices, mesh.d
    idx = mesh.elements.ravel()
    flat = g.reshape(-1, d)
    gradient = np.stack([np.bincount(idx, weights=flat[:, c], minlength=n) for c in range(d)], axis=1)
    sigma = ref.measure * float(np.sum(terms.detJ ** -0.5))
    return EnergyReport(energy=float(ref.measure * terms.G.sum()), sigma_h=sigma, reference=ref,
                        element_G=terms.G, gradient=gradient,
                        terms=terms if keep_terms else None)
