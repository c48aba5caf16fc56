"""Equidistribution and alignment measures of a mesh in a metric."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energy import EnergyParams, check_elements, element_metric_measures, energy_value
from .flow import nonsingularity_bound
from .geometry import metric_height_values
from .mesh import SimplicialMesh
from .metric import MetricField, element_metrics


@dataclass(frozen=True)
class QualityReport:
    """Per-element quality measures; both ideal values are 1."""

    eq_values: np.ndarray
    ali_values: np.ndarray
    bound_margin: float
    bound: float
    min_aKM: float
    edge_ratio: float
    energy: float

    @property
    def eq_max(self) -> float:
        return float(self.eq_values.max())

    @property
    def eq_min(self) -> float:
        return float(self.eq_values.min())

    @property
    def eq_cov(self) -> float:
        return float(np.std(self.eq_values) / np.mean(self.eq_values))

    @property
    def ali_max(self) -> float:
        return float(self.ali_values.max())

    @property
    def ali_mean_excess(self) -> float:
        return float(np.mean(self.ali_values - 1.0))

    def summary(self) -> dict:
        return {
            "energy": self.energy,
            "eq_max": self.eq_max,
            "eq_min": self.eq_min,
            "eq_cov": self.eq_cov,
            "ali_max": self.ali_max,
            "ali_mean_excess": self.ali_mean_excess,
            "min_aKM": self.min_aKM,
            "bound": self.bound,
            "bound_margin": self.bound_margin,
            "edge_ratio": self.edge_ratio,
        }

    def format(self) -> str:
        return "\n".join(f"{k:16s} {v:.10g}" for k, v in self.summary().items()) + "\n"


def alignment_values(E: np.ndarray, Ehat: np.ndarray, M_K: np.ndarray) -> np.ndarray:
    """((1/m) tr T) / det(T)^(1/m) with T = F'^T M F' and F' = E Ehat^{-1}."""
    m = E.shape[-1]
    F = E @ np.linalg.inv(Ehat)
    T = np.swapaxes(F, -1, -2) @ M_K @ F
    tr = np.trace(T, axis1=-2, axis2=-1)
    return (tr / m) / np.linalg.det(T) ** (1.0 / m)


def quality_report(mesh: SimplicialMesh, field: MetricField, params: EnergyParams | None = None,
                   energy_ref: float | None = None) -> QualityReport:
    """Quality of ``mesh`` in ``field``.

    The nonsingularity bound uses ``energy_ref`` (the energy of the initial
    mesh of a trajectory) and falls back to the energy of ``mesh`` itself.
    """
    params = params or EnergyParams()
    E = mesh.edge_matrices()
    check_elements(E)
    M_K = element_metrics(field, mesh.elements)
    vol_M = element_metric_measures(mesh, M_K)
    eq = mesh.n_elements * vol_M / vol_M.sum()
    ref = params.reference(mesh.m, mesh.n_elements)
    ali = alignment_values(E, ref.edge_matrix, M_K)
    energy = energy_value(mesh, field, params)
    I_ref = energy if energy_ref is None else energy_ref
    bound = nonsingularity_bound(I_ref, mesh.n_elements, mesh.m, params)
    a_min = float(metric_height_values(E, M_K).min())
    L = mesh.edge_lengths()
    return QualityReport(eq, ali, a_min - bound, bound, a_min, float(L.max() / L.min()), float(energy))
