"""Projected gradient-flow integration of the mesh energy."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from math import factorial
from typing import Callable, Union

import numpy as np

from .differential import VertexFrames, discrete_curvature, vertex_frames
from .energy import EnergyParams, EnergyReport, energy_value, total_energy
from .geometry import height_coefficient, is_degenerate, metric_height_values, simplex_measure, small_det
from .mesh import MeshError, SimplicialMesh
from .metric import MetricField, build_curvature_metric, element_metrics

log = logging.getLogger(__name__)

FREE, FIXED, SLIDE = 0, 1, 2
_POLICY_CODES = {"free": FREE, "fixed": FIXED, "slide": SLIDE}

MetricSource = Union[MetricField, Callable[[SimplicialMesh], MetricField]]


class StepRejectedError(RuntimeError):
    """No step size between dt and dt / 2**max_halvings decreased the energy."""


@dataclass
class FlowConfig:
    tau: float = 1.0
    dt_init: float | None = None
    dt_max_displacement_fraction: float = 0.2
    max_steps: int = 5000
    tol_velocity: float = 1e-6
    reproject: bool = True
    boundary_policy: str | np.ndarray = "auto"
    dt_growth: float = 1.1
    max_halvings: int = 20
    check_bounds: bool = True

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not 0 < self.dt_max_displacement_fraction < 1:
            raise ValueError("dt_max_displacement_fraction must lie in (0, 1)")
        if self.dt_init is not None and not self.dt_init > 0:
            raise ValueError("dt_init must be positive")
        if self.max_steps < 0 or self.tol_velocity < 0:
            raise ValueError("max_steps and tol_velocity must be nonnegative")


class CurvatureMetric:
    """Metric builder M = max(k, floor) I from the discrete curvature of the current mesh."""

    def __init__(self, floor_eps: float | None = None, n_smooth: int | None = None):
        self.floor_eps = floor_eps
        self.n_smooth = n_smooth

    def __call__(self, mesh: SimplicialMesh) -> MetricField:
        k = discrete_curvature(mesh).curvature
        n_smooth = self.n_smooth if self.n_smooth is not None else (0 if mesh.m == 1 else 2)
        return build_curvature_metric(mesh, k, self.floor_eps, n_smooth)

    def __repr__(self):
        return f"CurvatureMetric(floor_eps={self.floor_eps}, n_smooth={self.n_smooth})"


def balance_factor(M, m: int, d: int, p: float):
    """det(M)^{m(p-1)/(2d)}; makes the flow invariant under M -> cM."""
    return np.linalg.det(np.asarray(M, dtype=float)) ** (m * (p - 1) / (2.0 * d))


def nodal_velocity(report: EnergyReport, field: MetricField, m: int, p: float, tau: float) -> np.ndarray:
    """Raw velocities v_i = -(P_i / tau) dI_h/dx_i."""
    P = balance_factor(field.nodal_tensors, m, field.d, p)
    return -(P / tau)[:, None] * report.gradient


def _check_unit(vectors, what):
    n = np.linalg.norm(vectors, axis=-1)
    if np.any(np.abs(n - 1) > 1e-8):
        raise ValueError(f"{what} vectors must have unit length")


def project_velocity(v, kind: str = "bulk", vectors=None) -> np.ndarray:
    """Keep velocities on the geometry: identity (bulk), drop the normal
    component (surface), or keep the tangential component (curve)."""
    v = np.asarray(v, dtype=float)
    if kind == "bulk":
        return v.copy()
    w = np.asarray(vectors, dtype=float)
    if kind == "surface":
        _check_unit(w, "normal")
        return v - np.sum(v * w, axis=-1, keepdims=True) * w
    if kind == "curve":
        _check_unit(w, "tangent")
        return np.sum(v * w, axis=-1, keepdims=True) * w
    raise ValueError(f"unknown projection kind {kind!r}")


def _project_frames(v: np.ndarray, mesh: SimplicialMesh, frames: VertexFrames | None) -> np.ndarray:
    if frames is None:
        return project_velocity(v, "bulk")
    return project_velocity(v, "curve" if frames.kind == "tangent" else "surface", frames.vectors)


def _parametric_system(par, params, fixed):
    J = par.jacobian(params)
    free = np.ones(params.shape, dtype=bool) if fixed is None else ~np.asarray(fixed, dtype=bool)
    J = J * free[:, None, :]
    JtJ = np.einsum("ndi,ndj->nij", J, J)
    JtJ = JtJ + np.eye(par.k) * (~free)[:, None, :]
    return J, JtJ, free


def _least_squares(JtJ, Jtv, k):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.linalg.solve(JtJ, Jtv[..., None])[..., 0] if k > 2 else _solve_2x2(JtJ, Jtv)


def parameter_velocity(v: np.ndarray, par, params: np.ndarray, fixed=None) -> np.ndarray:
    """Least-squares parameter rates c with dX/dparams c closest to v (0 for fixed or singular rows)."""
    J, JtJ, free = _parametric_system(par, params, fixed)
    coef = _least_squares(JtJ, np.einsum("ndi,nd->ni", J, v), par.k) * free
    coef[~np.isfinite(coef).all(axis=1)] = 0.0
    return coef


def project_to_parametric_tangent(v: np.ndarray, par, params: np.ndarray, fixed=None) -> np.ndarray:
    """Orthogonal projection of v onto the span of dX/dparams over the free parameters.

    This is the tangent line/plane of the analytic geometry, or the tangent of
    the rim curve for vertices whose boundary parameter is held fixed.  Rows
    where the parametrization is singular (all free columns vanish) return NaN.
    """
    J, JtJ, free = _parametric_system(par, params, fixed)
    coef = _least_squares(JtJ, np.einsum("ndi,nd->ni", J, v), par.k)
    u = np.einsum("ndi,ni->nd", J, coef * free)
    scale = np.einsum("nii->n", JtJ - np.eye(par.k) * (~free)[:, None, :])
    u[scale <= 1e-24 * max(1.0, float(scale.max()))] = np.nan
    return u


def _solve_2x2(A, b):
    if A.shape[-1] == 1:
        return b / A[:, 0, :]
    det = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
    return np.stack([(A[:, 1, 1] * b[:, 0] - A[:, 0, 1] * b[:, 1]) / det,
                     (A[:, 0, 0] * b[:, 1] - A[:, 1, 0] * b[:, 0]) / det], axis=1)


FRAME_AGREEMENT = 0.9
# projected gradient this small relative to the raw gradient counts as zero
CRITICAL_RTOL = 1e-10
# boundary vertices whose boundary turns by more than this are corners
FEATURE_ANGLE = np.deg2rad(30.0)


def _analytic_directions(par, params):
    # unit tangent (curves) or unit normal (surfaces) of the parametrization
    J = par.jacobian(params)
    vec = J[:, :, 0] if par.k == 1 else np.cross(J[:, :, 0], J[:, :, 1])
    norm = np.linalg.norm(vec, axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        return vec / norm


def projected_field(vec: np.ndarray, mesh: SimplicialMesh, codes, bframes=None, frames=None,
                    par=None, params=None, fixed=None) -> np.ndarray:
    """Project nodal vectors onto the admissible motions: geometry tangents, then boundary policy.

    With a registered parametrization the analytic tangent spaces are used, so
    the projected motion is the first-order motion the reprojection produces.
    Vertices where the analytic and mesh directions disagree (|cos| below
    ``FRAME_AGREEMENT``, e.g. at a cusp where the parametrization is singular)
    fall back to the mesh-based frames and boundary handling.
    """
    if frames is None and mesh.m < mesh.d:
        frames = vertex_frames(mesh)
    mesh_u = None
    if par is None or frames is None:
        if bframes is None and np.any(codes == SLIDE):
            bframes = boundary_frames(mesh)
        return apply_boundary_policy(_project_frames(vec, mesh, frames), codes, mesh, bframes)
    u = project_to_parametric_tangent(vec, par, params, fixed)
    agree = np.abs(np.einsum("nd,nd->n", _analytic_directions(par, params), frames.vectors))
    bad = np.isnan(u).any(axis=1) | ~(agree >= FRAME_AGREEMENT)
    if bad.any():
        if bframes is None and np.any(codes == SLIDE):
            bframes = boundary_frames(mesh)
        mesh_u = apply_boundary_policy(_project_frames(vec, mesh, frames), codes, mesh, bframes)
        u[bad] = mesh_u[bad]
    # rims already slide through their fixed boundary parameter; zero the fixed vertices
    u[codes == FIXED] = 0.0
    return u


def resolve_boundary_policy(mesh: SimplicialMesh, policy) -> np.ndarray:
    """Per-vertex policy codes (FREE / FIXED / SLIDE).

    "auto" fixes curve end points and lets boundary vertices of surfaces and
    bulk meshes slide.  A string applies to boundary vertices only; an array
    gives the code (or name) of every vertex.
    """
    if isinstance(policy, str):
        if policy == "auto":
            policy = "fixed" if mesh.m == 1 else "slide"
        if policy not in _POLICY_CODES:
            raise ValueError(f"unknown boundary policy {policy!r}")
        codes = np.zeros(mesh.n_vertices, dtype=np.int8)
        codes[mesh.boundary_vertices] = _POLICY_CODES[policy]
        return codes
    arr = np.asarray(policy)
    if arr.shape != (mesh.n_vertices,):
        raise ValueError("per-vertex boundary policy needs one entry per vertex")
    if arr.dtype.kind in "US":
        return np.array([_POLICY_CODES[str(a)] for a in arr], dtype=np.int8)
    return arr.astype(np.int8)


def boundary_frames(mesh: SimplicialMesh) -> tuple[np.ndarray, np.ndarray]:
    """Sliding directions along the boundary.

    Returns ``(kind, vectors)`` per vertex, kind 1 = tangent of a boundary
    polyline, 2 = normal of a boundary surface, 0 = cannot slide (curve end
    points, and corners where the boundary turns by more than ``FEATURE_ANGLE``).
    """
    n, x = mesh.n_vertices, mesh.vertices
    kind = np.zeros(n, dtype=np.int8)
    vec = np.zeros_like(x)
    facets = mesh.boundary_facets
    if mesh.m == 2:
        bmesh_nb = [[] for _ in range(n)]
        for a, b in facets:
            bmesh_nb[a].append(b)
            bmesh_nb[b].append(a)
        cos_max = np.cos(FEATURE_ANGLE)
        for i, nb in enumerate(bmesh_nb):
            if len(nb) == 2:
                a, b = x[i] - x[nb[0]], x[nb[1]] - x[i]
                if a @ b < cos_max * np.linalg.norm(a) * np.linalg.norm(b):
                    continue  # corner
                t = x[nb[1]] - x[nb[0]]
                vec[i] = t / np.linalg.norm(t)
                kind[i] = 1
    elif mesh.m == 3:
        fn = np.cross(x[facets[:, 1]] - x[facets[:, 0]], x[facets[:, 2]] - x[facets[:, 0]])
        # orient every facet normal away from its element
        inward = x[mesh.boundary_opposite] - x[facets[:, 0]]
        fn *= -np.sign(np.sum(fn * inward, axis=1))[:, None]
        acc = np.zeros_like(x)
        for c in range(3):
            for k in range(3):
                acc[:, k] += np.bincount(facets[:, c], weights=fn[:, k], minlength=n)
        norm = np.linalg.norm(acc, axis=1)
        ok = norm > 0
        vec[ok] = acc[ok] / norm[ok, None]
        # edges and corners of the boundary surface cannot slide along one plane
        unit = fn / np.linalg.norm(fn, axis=1, keepdims=True)
        worst = np.ones(n)
        for c in range(3):
            np.minimum.at(worst, facets[:, c], np.sum(unit * vec[facets[:, c]], axis=1))
        ok &= worst >= np.cos(FEATURE_ANGLE)
        kind[ok & mesh.boundary_vertices] = 2
    return kind, vec


def apply_boundary_policy(u, policy_codes, mesh: SimplicialMesh, bframes=None) -> np.ndarray:
    """Zero velocities of fixed vertices and remove the off-boundary part of sliding ones."""
    u = np.array(u, dtype=float)
    codes = np.asarray(policy_codes)
    u[codes == FIXED] = 0.0
    slide = codes == SLIDE
    if slide.any():
        if bframes is None:
            bframes = boundary_frames(mesh)
        kind, vec = bframes
        if np.any(slide & ~mesh.boundary_vertices):
            raise MeshError("slide requested for a vertex that is not on the boundary")
        tan = slide & (kind == 1)
        nrm = slide & (kind == 2)
        u[tan] = np.sum(u[tan] * vec[tan], axis=1, keepdims=True) * vec[tan]
        u[nrm] = u[nrm] - np.sum(u[nrm] * vec[nrm], axis=1, keepdims=True) * vec[nrm]
        u[slide & (kind == 0)] = 0.0
    return u


def nonsingularity_bound(energy: float, n_elements: int, m: int, params: EnergyParams) -> float:
    """Lower bound for the minimum metric height with beta = 0, alpha = theta, q = mp/2."""
    q = params.q(m)
    lam = height_coefficient(m)
    C1 = (params.theta * lam ** (2 * q) / (m ** (m / 2.0) * factorial(m))) ** (m / (2 * q - m))
    return C1 * energy ** (-1.0 / (2 * q - m)) * n_elements ** (-2 * q / (m * (2 * q - m)))


@dataclass
class StepRecord:
    step: int
    t: float
    dt: float
    energy: float
    energy_after: float
    min_K: float
    min_aKM: float
    max_vel: float
    grad_residual: float
    bound: float
    halvings: int


@dataclass
class FlowState:
    """Current mesh and time plus per-step histories.

    :func:`advance_step` updates the state in place and returns it.
    """

    mesh: SimplicialMesh
    t: float = 0.0
    velocities: np.ndarray | None = None
    params: np.ndarray | None = None
    fixed_params: np.ndarray | None = None
    parametrization: object = None
    dt: float | None = None
    step: int = 0
    converged: bool = False
    energy_ref: float = 0.0
    grad_residual: float = np.inf
    final_energy: float | None = None
    reproject: bool = True
    records: list = field(default_factory=list)

    @property
    def energy_history(self):
        return [(r.t, r.energy) for r in self.records]

    @property
    def quality_history(self):
        return [(r.t, r.min_K, r.min_aKM) for r in self.records]


def element_quality(mesh: SimplicialMesh, field: MetricField) -> tuple[float, float]:
    """(min Euclidean measure, min metric height) over the elements."""
    E = mesh.edge_matrices()
    vol = simplex_measure(E)
    if np.min(vol) <= 0:
        return 0.0, 0.0
    M_K = element_metrics(field, mesh.elements)
    return float(np.min(vol)), float(np.min(metric_height_values(E, M_K)))


def _metric(source: MetricSource, mesh: SimplicialMesh) -> MetricField:
    return source(mesh) if callable(source) else source


def _orientation_kept(E_old: np.ndarray, E_new: np.ndarray) -> bool:
    if np.any(is_degenerate(E_new)):
        return False
    return bool(np.all(small_det(np.swapaxes(E_old, 1, 2) @ E_new) > 0))


def parameter_trust_region(mesh: SimplicialMesh, params: np.ndarray, par) -> np.ndarray:
    """Half the parameter distance from each vertex to its nearest mesh neighbour.

    Reprojection may not move a vertex further than this in parameter space,
    which keeps it on its own branch near cusps and self-crossings.
    """
    a, b = mesh.edges[:, 0], mesh.edges[:, 1]
    diff = params[b] - params[a]
    for j, ((lo, hi), per) in enumerate(zip(par.bounds, par.periodic)):
        if per:
            span = hi - lo
            diff[:, j] -= span * np.round(diff[:, j] / span)
    dist = np.linalg.norm(diff, axis=1)
    near = np.full(mesh.n_vertices, np.inf)
    np.minimum.at(near, a, dist)
    np.minimum.at(near, b, dist)
    return np.repeat(0.5 * near[:, None], params.shape[1], axis=1)


def start_state(initial, reproject: bool = True) -> FlowState:
    """FlowState from a mesh or a generated mesh with a registered parametrization.

    The parametrization supplies the tangent spaces either way; ``reproject``
    decides whether moved vertices are pulled back onto the geometry or only
    their parameters are advanced to first order.
    """
    if isinstance(initial, SimplicialMesh):
        return FlowState(mesh=initial)
    state = FlowState(mesh=initial.mesh, reproject=reproject)
    if initial.parametrization is not None:
        state.parametrization = initial.parametrization
        state.params = np.array(initial.params, dtype=float)
        state.fixed_params = initial.fixed_params
    return state


def advance_step(state: FlowState, metric: MetricSource, params: EnergyParams,
                 config: FlowConfig, dt: float | None = None) -> FlowState:
    """One explicit Euler step x <- x + dt u with displacement cap and backtracking.

    ``dt`` forces a fixed step (no cap, no backtracking); used for drift studies.
    """
    mesh = state.mesh
    field_ = _metric(metric, mesh)
    report = total_energy(mesh, field_, params)
    I0 = report.energy
    state.energy_ref = max(state.energy_ref, I0)

    codes = resolve_boundary_policy(mesh, config.boundary_policy)
    par = state.parametrization
    frames = vertex_frames(mesh)
    bframes = None
    P = balance_factor(field_.nodal_tensors, mesh.m, field_.d, params.p)
    v = -(P / config.tau)[:, None] * report.gradient
    u = projected_field(v, mesh, codes, bframes, frames, par, state.params, state.fixed_params)
    # the projection acts row by row, so the projected gradient is a rescaled u
    g = -(config.tau / P)[:, None] * u
    residual = float(np.max(np.linalg.norm(g, axis=1)))
    speed = np.linalg.norm(u, axis=1)
    max_vel = float(speed.max())
    min_K, min_aKM = element_quality(mesh, field_)
    bound = nonsingularity_bound(state.energy_ref, mesh.n_elements, mesh.m, params)
    if config.check_bounds and params.coercive and min_aKM < bound:
        log.warning("minimum metric height %.3e below the nonsingularity bound %.3e", min_aKM, bound)

    mean_edge = float(np.mean(mesh.edge_lengths()))
    ell = mesh.local_edge_length()
    moving = speed > 0
    scale = float(np.max(np.linalg.norm(report.gradient, axis=1)))
    if not moving.any() or residual <= CRITICAL_RTOL * scale:
        # at a critical point up to rounding: the projected gradient is noise
        step_dt = state.dt if state.dt else (config.dt_init or 1.0)
        state.t += step_dt
        state.velocities = np.zeros_like(u)
        state.converged = True
        state.grad_residual = residual
        state.records.append(StepRecord(state.step, state.t - step_dt, 0.0, I0, I0, min_K, min_aKM,
                                        0.0, residual, bound, 0))
        state.step += 1
        return state

    fixed_dt = dt is not None
    if not fixed_dt:
        cap = config.dt_max_displacement_fraction * float(np.min(ell[moving] / speed[moving]))
        dt = config.dt_init if state.dt is None else state.dt * config.dt_growth
        dt = cap if dt is None else min(dt, cap)

    E_old = mesh.edge_matrices()
    x = mesh.vertices
    trust = rates = None
    if state.parametrization is not None:
        if state.reproject:
            trust = parameter_trust_region(mesh, state.params, state.parametrization)
        else:
            rates = parameter_velocity(u, state.parametrization, state.params, state.fixed_params)
    halvings = 0
    while True:
        X = x + dt * u
        new_params = state.params
        if trust is not None:
            new_params, X = state.parametrization.project(X, state.params, state.fixed_params, trust)
        elif rates is not None:
            new_params = state.parametrization.wrap(state.params + dt * rates)
        trial = mesh.with_vertices(X)
        ok = _orientation_kept(E_old, trial.edge_matrices())
        I1 = energy_value(trial, field_, params, anchor=x) if ok else np.inf
        if fixed_dt or I1 <= I0 + 1e-12 * abs(I0):
            break
        if halvings == config.max_halvings:
            if dt * max_vel <= config.tol_velocity * mean_edge:
                # no admissible move left at the resolution of the tolerance
                state.converged = True
                state.grad_residual = residual
                state.velocities = u
                return state
            raise StepRejectedError(f"step rejected after {halvings} halvings at t = {state.t:.6g}")
        dt *= 0.5
        halvings += 1

    state.records.append(StepRecord(state.step, state.t, dt, I0, I1, min_K, min_aKM, max_vel,
                                    residual, bound, halvings))
    state.mesh = trial
    state.params = new_params
    state.velocities = u
    state.t += dt
    state.dt = dt
    state.step += 1
    state.grad_residual = residual
    state.converged = halvings == 0 and dt * max_vel <= config.tol_velocity * mean_edge
    return state


def run_to_convergence(initial, metric: MetricSource, params: EnergyParams | None = None,
                       config: FlowConfig | None = None, callback=None) -> FlowState:
    """Advance until the largest step displacement drops below ``tol_velocity``
    times the mean edge length, or ``max_steps`` is reached.

    ``metric`` is a fixed :class:`MetricField` or a callable rebuilding the
    metric from the current mesh before every step.  ``callback(state)`` runs
    after every step.
    """
    params = params or EnergyParams()
    config = config or FlowConfig()
    state = start_state(initial, config.reproject)
    if isinstance(metric, MetricField) and len(metric) != state.mesh.n_vertices:
        raise ValueError("metric field does not match the mesh")
    while state.step < config.max_steps and not state.converged:
        advance_step(state, metric, params, config)
        if callback is not None:
            callback(state)
    # residual and quality of the final mesh
    field_ = _metric(metric, state.mesh)
    report = total_energy(state.mesh, field_, params)
    codes = resolve_boundary_policy(state.mesh, config.boundary_policy)
    g = projected_field(report.gradient, state.mesh, codes, par=state.parametrization,
                        params=state.params, fixed=state.fixed_params)
    state.grad_residual = float(np.max(np.linalg.norm(g, axis=1)))
    state.final_energy = report.energy
    return state

