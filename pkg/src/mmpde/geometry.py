"""Linear-algebra kernels for m-simplices embedded in R^d.

Every function accepts a single edge matrix of shape (d, m) or a stack of
shape (..., d, m); metric tensors broadcast the same way with shape
(..., d, d).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial, sqrt

import numpy as np

DEGENERACY_RTOL = 1e-13


class DegenerateSimplexError(ArithmeticError):
    """A simplex (or a metric) is singular."""

    def __init__(self, message="degenerate simplex", index=None):
        if index is not None:
            message = f"{message} (element {index})"
        super().__init__(message)
        self.index = index


def edge_matrix(vertices) -> np.ndarray:
    """Edge matrix [x_1 - x_0, ..., x_m - x_0] from (..., m+1, d) vertices."""
    x = np.asarray(vertices, dtype=float)
    if x.shape[-2] - 1 > x.shape[-1]:
        raise ValueError("an m-simplex needs m <= d")
    return np.swapaxes(x[..., 1:, :] - x[..., :1, :], -1, -2)


def small_det(A: np.ndarray) -> np.ndarray:
    """Determinant of a stack of 1x1, 2x2 or 3x3 matrices in closed form."""
    n = A.shape[-1]
    if n == 1:
        return A[..., 0, 0]
    if n == 2:
        return A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
    if n == 3:
        return (A[..., 0, 0] * (A[..., 1, 1] * A[..., 2, 2] - A[..., 1, 2] * A[..., 2, 1])
                - A[..., 0, 1] * (A[..., 1, 0] * A[..., 2, 2] - A[..., 1, 2] * A[..., 2, 0])
                + A[..., 0, 2] * (A[..., 1, 0] * A[..., 2, 1] - A[..., 1, 1] * A[..., 2, 0]))
    return np.linalg.det(A)


def small_inv(A: np.ndarray) -> np.ndarray:
    """Inverse of a stack of 1x1, 2x2 or 3x3 matrices via the adjugate."""
    n = A.shape[-1]
    if n == 1:
        return 1.0 / A
    if n == 2:
        adj = np.stack([np.stack([A[..., 1, 1], -A[..., 0, 1]], axis=-1),
                        np.stack([-A[..., 1, 0], A[..., 0, 0]], axis=-1)], axis=-2)
        return adj / small_det(A)[..., None, None]
    if n == 3:
        # rows of the inverse are cross products of the columns
        c0, c1, c2 = A[..., :, 0], A[..., :, 1], A[..., :, 2]
        adj = np.stack([np.cross(c1, c2), np.cross(c2, c0), np.cross(c0, c1)], axis=-2)
        return adj / small_det(A)[..., None, None]
    return np.linalg.inv(A)


def is_degenerate(E) -> np.ndarray:
    """Volume below ``DEGENERACY_RTOL`` times the product of the edge lengths.

    The ratio sqrt(det(E^T E)) / prod |e_j| lies in [0, 1] and is 1 exactly
    for mutually orthogonal edges (Hadamard's inequality).
    """
    E = np.asarray(E, dtype=float)
    gram = np.swapaxes(E, -1, -2) @ E
    lengths = np.prod(np.diagonal(gram, axis1=-2, axis2=-1), axis=-1)
    det = small_det(gram)
    return ~(det > DEGENERACY_RTOL ** 2 * lengths)


def _sqrt_det_gram(G: np.ndarray) -> np.ndarray:
    return np.sqrt(np.clip(small_det(G), 0.0, None))


def simplex_measure(E) -> np.ndarray | float:
    """m-dimensional measure (1/m!) sqrt(det(E^T E)); 0 for degenerate input."""
    E = np.asarray(E, dtype=float)
    m = E.shape[-1]
    vol = _sqrt_det_gram(np.swapaxes(E, -1, -2) @ E) / factorial(m)
    vol = np.where(is_degenerate(E), 0.0, vol)
    return vol if vol.ndim else float(vol)


def _check_spd(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if not np.allclose(M, np.swapaxes(M, -1, -2), rtol=1e-12, atol=1e-14 * np.abs(M).max()):
        raise ValueError("metric tensor is not symmetric")
    if np.any(np.linalg.eigvalsh(M)[..., 0] <= 0):
        raise ValueError("metric tensor is not positive definite")
    return M


def sym_power(M, power: float) -> np.ndarray:
    """M**power for symmetric positive definite M via eigen-decomposition."""
    w, V = np.linalg.eigh(np.asarray(M, dtype=float))
    return (V * w[..., None, :] ** power) @ np.swapaxes(V, -1, -2)


def metric_measure(E, M) -> np.ndarray | float:
    """Measure in the metric M: (1/m!) sqrt(det(E^T M E))."""
    E = np.asarray(E, dtype=float)
    M = _check_spd(M)
    m = E.shape[-1]
    Et = np.swapaxes(E, -1, -2)
    vol = _sqrt_det_gram(Et @ M @ E) / factorial(m)
    vol = np.where(is_degenerate(E), 0.0, vol)
    return vol if vol.ndim else float(vol)


@dataclass(frozen=True)
class QVectors:
    """Basis-function gradients q_0..q_m (shape (..., m+1, d)) and heights."""

    q: np.ndarray
    heights: np.ndarray

    @property
    def min_height(self):
        return self.heights.min(axis=-1)


def pseudo_inverse(E) -> np.ndarray:
    """Moore-Penrose pseudo-inverse (E^T E)^{-1} E^T of a full-rank edge matrix."""
    E = np.asarray(E, dtype=float)
    if np.any(is_degenerate(E)):
        raise DegenerateSimplexError()
    Et = np.swapaxes(E, -1, -2)
    return small_inv(Et @ E) @ Et


def _q_from_pinv(P: np.ndarray) -> QVectors:
    q_rest = P  # rows are q_1..q_m
    q0 = -q_rest.sum(axis=-2, keepdims=True)
    q = np.concatenate([q0, q_rest], axis=-2)
    return QVectors(q=q, heights=1.0 / np.linalg.norm(q, axis=-1))


def pseudo_inverse_q_vectors(E) -> QVectors:
    """q-vectors (basis-function gradients) and heights a_j = 1/|q_j|."""
    return _q_from_pinv(pseudo_inverse(E))


def metric_heights(E, M) -> QVectors:
    """q-vectors and heights of the simplex M^{1/2} K.

    The q-vectors come from the pseudo-inverse of M^{1/2} E; for m = d (or
    a scalar metric) they coincide with M^{-1/2} q_j.
    """
    M = _check_spd(M)
    return _q_from_pinv(pseudo_inverse(sym_power(M, 0.5) @ np.asarray(E, dtype=float)))


def metric_height_values(E, M) -> np.ndarray:
    """Heights of M^{1/2} K, shape (..., m+1), without forming M^{1/2}.

    Row j of pinv(M^{1/2} E) has squared norm [(E^T M E)^{-1}]_jj and
    q_0 = -sum_j q_j, so every height follows from the inverse metric Gram
    matrix.  ``M`` is assumed SPD (element averages of a validated field).
    """
    E = np.asarray(E, dtype=float)
    if np.any(is_degenerate(E)):
        raise DegenerateSimplexError()
    Et = np.swapaxes(E, -1, -2)
    G_inv = small_inv(Et @ M @ E)
    sq = np.concatenate([G_inv.sum(axis=(-2, -1))[..., None], np.diagonal(G_inv, axis1=-2, axis2=-1)], axis=-1)
    return 1.0 / np.sqrt(sq)


@dataclass(frozen=True)
class ReferenceElement:
    edge_matrix: np.ndarray
    measure: float
    a_hat: float
    h_hat: float

    @property
    def m(self) -> int:
        return self.edge_matrix.shape[0]

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.edge_matrix))


def height_coefficient(m: int) -> float:
    """Minimum height of the regular m-simplex of unit measure."""
    return sqrt(m + 1) * factorial(m) ** (1.0 / m) / (sqrt(m) * (m + 1) ** (1.0 / (2 * m)))


def reference_element(m: int, target_measure: float = 1.0) -> ReferenceElement:
    """Regular m-simplex in R^m with upper-triangular edge matrix and given measure."""
    if m not in (1, 2, 3):
        raise ValueError(f"reference element dimension must be 1, 2 or 3, got {m}")
    if not target_measure > 0:
        raise ValueError("target measure must be positive")
    # Gram matrix of unit-edge regular simplex: 1 on the diagonal, 1/2 off it
    gram = 0.5 * (np.eye(m) + np.ones((m, m)))
    Ehat = np.linalg.cholesky(gram).T
    unit_measure = sqrt(np.linalg.det(gram)) / factorial(m)
    edge = (target_measure / unit_measure) ** (1.0 / m)
    Ehat = edge * Ehat
    a_hat = edge * sqrt((m + 1) / (2.0 * m))
    return ReferenceElement(edge_matrix=Ehat, measure=float(target_measure), a_hat=a_hat, h_hat=edge)


def similarity_residuals(E, Ehat, M):
    """AM-GM gaps of T = F'^T M F' and of T^{-1}, with F' = E Ehat^{-1}.

    Both vanish exactly when M^{1/2} K is similar to the reference simplex.
    """
    E = np.asarray(E, dtype=float)
    M = _check_spd(M)
    m = E.shape[-1]
    if np.any(is_degenerate(E)):
        raise DegenerateSimplexError()
    F = E @ np.linalg.inv(Ehat)
    T = np.swapaxes(F, -1, -2) @ M @ F
    Tinv = np.linalg.inv(T)

    def gap(A):
        return np.trace(A, axis1=-2, axis2=-1) / m - np.linalg.det(A) ** (1.0 / m)

    return gap(T), gap(Tinv)
