"""Moving-mesh redistribution of simplicial meshes of curves, surfaces and domains.

The mesh is moved by the projected gradient flow of an energy that combines
equidistribution and alignment with respect to a metric tensor field.
"""

__version__ = "0.1.0"

from .energy import EnergyParams, EnergyReport, total_energy
from .flow import CurvatureMetric, FlowConfig, FlowState, advance_step, run_to_convergence
from .generate import GeometrySpec, generate_mesh
from .mesh import MeshError, SimplicialMesh
from .metric import MetricField, build_curvature_metric, build_identity_metric
from .quality import QualityReport, quality_report

__all__ = [
    "CurvatureMetric", "EnergyParams", "EnergyReport", "FlowConfig", "FlowState", "GeometrySpec",
    "MeshError", "MetricField", "QualityReport", "SimplicialMesh", "advance_step",
    "build_curvature_metric", "build_identity_metric", "generate_mesh", "quality_report",
    "run_to_convergence", "total_energy",
]
