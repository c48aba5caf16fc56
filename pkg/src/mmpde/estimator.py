"""scikit-learn style wrapper: ``fit`` runs the mesh flow, ``transform`` returns adapted vertices."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .energy import EnergyParams, energy_value
from .flow import CurvatureMetric, FlowConfig, run_to_convergence
from .generate import GeneratedMesh
from .mesh import SimplicialMesh
from .metric import MetricField, build_identity_metric

METRICS = ("identity", "curvature")


def check_mesh_input(X, elements=None) -> GeneratedMesh:
    """Accept a GeneratedMesh, a SimplicialMesh, or a vertex array plus ``elements``."""
    if isinstance(X, GeneratedMesh):
        return X
    if isinstance(X, SimplicialMesh):
        return GeneratedMesh(X)
    if elements is None:
        raise TypeError("a raw vertex array needs the element connectivity (pass elements=...)")
    vertices = check_array(X, dtype=np.float64, ensure_min_samples=2)
    elements = check_array(elements, dtype=np.int64)
    return GeneratedMesh(SimplicialMesh(vertices, elements))


def check_metric_option(metric):
    if isinstance(metric, MetricField) or callable(metric):
        return metric
    if not isinstance(metric, str) or metric not in METRICS:
        raise ValueError(f"metric must be one of {', '.join(METRICS)}, a MetricField or a builder")
    return metric


class MovingMeshAdapter(TransformerMixin, BaseEstimator, auto_wrap_output_keys=None):
    """Redistribute a mesh by the projected energy gradient flow.

    Parameters mirror :class:`EnergyParams` and :class:`FlowConfig`.  ``metric``
    is "identity", "curvature" (recomputed from the current mesh every step),
    a fixed :class:`MetricField`, or a callable ``mesh -> MetricField``.

    Fitted attributes: ``mesh_``, ``state_``, ``n_iter_``, ``converged_``,
    ``energy_history_``, ``grad_residual_``.
    """

    def __init__(self, metric="identity", p=1.5, theta=1.0 / 3.0, tau=1.0, max_steps=5000,
                 tol=1e-6, reproject=True, boundary_policy="auto", floor_eps=None, n_smooth=None):
        self.metric = metric
        self.p = p
        self.theta = theta
        self.tau = tau
        self.max_steps = max_steps
        self.tol = tol
        self.reproject = reproject
        self.boundary_policy = boundary_policy
        self.floor_eps = floor_eps
        self.n_smooth = n_smooth

    def _params(self) -> EnergyParams:
        return EnergyParams(p=self.p, theta=self.theta)

    def _metric_for(self, mesh: SimplicialMesh):
        metric = check_metric_option(self.metric)
        if isinstance(metric, str):
            if metric == "identity":
                return build_identity_metric(mesh)
            return CurvatureMetric(self.floor_eps, self.n_smooth)
        return metric

    def fit(self, X, y=None, elements=None):
        gen = check_mesh_input(X, elements)
        config = FlowConfig(tau=self.tau, max_steps=self.max_steps, tol_velocity=self.tol,
                            reproject=self.reproject, boundary_policy=self.boundary_policy)
        state = run_to_convergence(gen, self._metric_for(gen.mesh), self._params(), config)
        self.state_ = state
        self.mesh_ = state.mesh
        self.n_iter_ = state.step
        self.converged_ = state.converged
        self.energy_history_ = np.array(state.energy_history).reshape(-1, 2)
        self.grad_residual_ = state.grad_residual
        return self

    def transform(self, X=None, elements=None):
        """Adapted vertex coordinates of the fitted mesh.

        ``X`` must be the mesh that was fitted (or None); adapting a new mesh
        requires ``fit``.
        """
        check_is_fitted(self, "mesh_")
        if X is not None:
            gen = check_mesh_input(X, elements)
            if gen.mesh.vertices.shape != self.mesh_.vertices.shape or not np.array_equal(
                    gen.mesh.elements, self.mesh_.elements):
                raise ValueError("transform expects the fitted mesh; call fit on a new mesh first")
        return self.mesh_.vertices.copy()

    def score(self, X=None, y=None, elements=None) -> float:
        """Negative energy of the fitted mesh (or of ``X``) in the configured metric."""
        if X is None:
            check_is_fitted(self, "mesh_")
            mesh = self.mesh_
        else:
            mesh = check_mesh_input(X, elements).mesh
        field = self._metric_for(mesh)
        if callable(field) and not isinstance(field, MetricField):
            field = field(mesh)
        return -energy_value(mesh, field, self._params())
