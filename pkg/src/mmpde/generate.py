"""Perturbed initial meshes of the example curves and surfaces."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import SimplicialMesh
from .parametric import Parametrization, make_parametrization
from .rng import SplitMix64

CURVES = ("circle", "ellipse", "lemniscate", "cardioid", "rose", "mexican_cap", "torus_curve")
SURFACES = ("hyperboloid", "cavatappi")
GEOMETRIES = CURVES + SURFACES + ("external",)

# element counts of the paper's figures
DEFAULT_N = {
    "circle": 100, "ellipse": 120, "lemniscate": 100, "cardioid": 70, "rose": 100,
    "mexican_cap": 300, "torus_curve": 180,
}
DEFAULT_GRID = {"hyperboloid": (44, 44), "cavatappi": (70, 150)}
DEFAULT_R = {"circle": 1.0, "ellipse": 6.0}


@dataclass
class GeometrySpec:
    name: str
    r: float | None = None
    c: float | None = None
    N: int | None = None
    N_s: int | None = None
    N_zeta: int | None = None
    seed: int = 0
    perturb_amplitude: float = 0.3
    path: str | None = None
    format: str | None = None

    def __post_init__(self):
        if self.name not in GEOMETRIES:
            raise ValueError(f"unknown geometry {self.name!r}; choose from {', '.join(GEOMETRIES)}")
        if not 0 <= self.perturb_amplitude < 0.45:
            raise ValueError("perturb_amplitude must lie in [0, 0.45)")
        if self.name in CURVES:
            if self.N is None:
                self.N = DEFAULT_N[self.name]
            if self.N < 3:
                raise ValueError("curves need N >= 3")
        if self.name in SURFACES:
            ns, nz = DEFAULT_GRID[self.name]
            self.N_s = ns if self.N_s is None else self.N_s
            self.N_zeta = nz if self.N_zeta is None else self.N_zeta
            if self.N_s < 3 or self.N_zeta < 1:
                raise ValueError("surface grids need N_s >= 3 and N_zeta >= 1")
        if self.r is None and self.name in DEFAULT_R:
            self.r = DEFAULT_R[self.name]
        if self.name == "external" and not self.path:
            raise ValueError("external geometry needs a mesh path")


@dataclass
class GeneratedMesh:
    """A mesh plus, for analytic geometries, the parameters of every vertex."""

    mesh: SimplicialMesh
    parametrization: Parametrization | None = None
    params: np.ndarray | None = None
    fixed_params: np.ndarray | None = field(default=None, repr=False)


def _perturbed_grid(lo, hi, n_intervals, periodic, amplitude, rng):
    """Grid values with interior points jittered by +-amplitude * spacing."""
    h = (hi - lo) / n_intervals
    if periodic:
        base = lo + h * np.arange(n_intervals)
        return base + rng.uniform(-amplitude * h, amplitude * h, n_intervals)
    base = lo + h * np.arange(n_intervals + 1)
    base[1:-1] += rng.uniform(-amplitude * h, amplitude * h, n_intervals - 1)
    base[-1] = hi
    return base


def _curve(spec: GeometrySpec, par: Parametrization, rng: SplitMix64) -> GeneratedMesh:
    (lo, hi), = par.bounds
    closed = par.periodic[0]
    s = _perturbed_grid(lo, hi, spec.N, closed, spec.perturb_amplitude, rng)
    n = len(s)
    idx = np.arange(n)
    if closed:
        elements = np.stack([idx, (idx + 1) % n], axis=1)
    else:
        elements = np.stack([idx[:-1], idx[1:]], axis=1)
    fixed = np.zeros((n, 1), dtype=bool)
    if not closed:
        fixed[[0, -1]] = True
    params = s[:, None]
    return GeneratedMesh(SimplicialMesh(par.point(params), elements), par, params, fixed)


def _surface(spec: GeometrySpec, par: Parametrization, rng: SplitMix64) -> GeneratedMesh:
    (s_lo, s_hi), (z_lo, z_hi) = par.bounds
    ns, nz = spec.N_s, spec.N_zeta
    a = spec.perturb_amplitude
    # one zeta offset per row keeps every row a straight line in parameter space,
    # so rows stay ordered and no triangle can fold
    zeta = _perturbed_grid(z_lo, z_hi, nz, False, a, rng)
    rows = [_perturbed_grid(s_lo, s_hi, ns, True, a, rng) for _ in range(nz + 1)]
    S = np.stack(rows)
    Z = np.repeat(zeta[:, None], ns, axis=1)
    params = np.stack([S.ravel(), Z.ravel()], axis=1)
    vid = np.arange((nz + 1) * ns).reshape(nz + 1, ns)
    tris = []
    for i in range(nz):
        for j in range(ns):
            p, q = vid[i, j], vid[i, (j + 1) % ns]
            u, v = vid[i + 1, j], vid[i + 1, (j + 1) % ns]
            tris.append((p, q, v))
            tris.append((p, v, u))
    fixed = np.zeros_like(params, dtype=bool)
    fixed[vid[0], 1] = True
    fixed[vid[-1], 1] = True
    return GeneratedMesh(SimplicialMesh(par.point(params), np.array(tris)), par, params, fixed)


def generate_mesh(spec: GeometrySpec) -> GeneratedMesh:
    """Initial mesh of ``spec`` with parameters jittered by the seeded SplitMix64 stream."""
    if spec.name == "external":
        from .io import read_mesh
        return GeneratedMesh(read_mesh(spec.path, spec.format))
    par = make_parametrization(spec.name, spec.r, spec.c)
    rng = SplitMix64(spec.seed)
    if spec.name in CURVES:
        return _curve(spec, par, rng)
    return _surface(spec, par, rng)


def box_mesh(n: int, d: int, jitter: float = 0.0, seed: int = 0) -> SimplicialMesh:
    """Structured simplicial mesh of [0,1]^d (d = 1, 2, 3), optionally jittered inside."""
    rng = np.random.default_rng(seed)
    axes = [np.linspace(0.0, 1.0, n + 1)] * d
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    interior = np.all((grid > 0) & (grid < 1), axis=1)
    grid[interior] += rng.uniform(-jitter, jitter, (interior.sum(), d)) / n
    shape = (n + 1,) * d
    vid = np.arange(grid.shape[0]).reshape(shape)
    elems = []
    if d == 1:
        elems = [(i, i + 1) for i in range(n)]
    elif d == 2:
        for i in range(n):
            for j in range(n):
                a, b, c, e = vid[i, j], vid[i + 1, j], vid[i, j + 1], vid[i + 1, j + 1]
                elems += [(a, b, e), (a, e, c)]
    else:
        from itertools import permutations
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    # Kuhn subdivision: one tetrahedron per axis ordering
                    for perm in permutations(range(3)):
                        corner = np.array([i, j, k])
                        path = [tuple(corner)]
                        for ax in perm:
                            corner = corner.copy()
                            corner[ax] += 1
                            path.append(tuple(corner))
                        tet = [vid[p] for p in path]
                        x = grid[tet]
                        if np.linalg.det((x[1:] - x[0]).T) < 0:
                            tet[1], tet[2] = tet[2], tet[1]
                        elems.append(tet)
    return SimplicialMesh(grid, np.array(elems))
