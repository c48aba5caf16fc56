"""Parametric curves and surfaces used as test geometries, with closest-point reprojection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

COMPLEX_STEP = 1e-30


@dataclass(frozen=True)
class Parametrization:
    """Map from a box of parameters (n_params, k) to points in R^d.

    ``func`` must be written with numpy ufuncs only so it accepts complex
    input; derivatives are taken by complex-step differentiation.
    """

    name: str
    func: Callable[[np.ndarray], np.ndarray]
    bounds: tuple[tuple[float, float], ...]
    periodic: tuple[bool, ...]
    d: int

    @property
    def k(self) -> int:
        return len(self.bounds)

    def point(self, params) -> np.ndarray:
        params = np.asarray(params, dtype=float).reshape(-1, self.k)
        return np.real(self.func(params))

    def jacobian(self, params) -> np.ndarray:
        """dX/dparams, shape (n, d, k)."""
        params = np.asarray(params, dtype=float).reshape(-1, self.k)
        cols = []
        for j in range(self.k):
            z = params.astype(complex)
            z[:, j] += 1j * COMPLEX_STEP
            cols.append(np.imag(self.func(z)) / COMPLEX_STEP)
        return np.stack(cols, axis=2)

    def wrap(self, params: np.ndarray) -> np.ndarray:
        params = np.array(params, dtype=float)
        for j, ((lo, hi), per) in enumerate(zip(self.bounds, self.periodic)):
            if not per:
                params[:, j] = np.clip(params[:, j], lo, hi)
        return params

    def project(self, points, guess, fixed=None, max_step=None, max_iter: int = 50):
        """Closest points on the geometry by safeguarded Gauss-Newton from ``guess``.

        ``fixed`` is an (n, k) boolean mask of parameters that must not change
        (e.g. the boundary coordinate of rim vertices).  ``max_step`` bounds the
        total parameter change per vertex, shape (n, k); it keeps vertices on
        their own branch near cusps and self-intersections.  Returns
        ``(params, points_on_geometry)``.
        """
        y = np.asarray(points, dtype=float)
        s0 = np.array(guess, dtype=float).reshape(-1, self.k)
        s = s0.copy()
        free = np.ones_like(s, dtype=bool) if fixed is None else ~np.asarray(fixed, dtype=bool)
        span = np.array([hi - lo for lo, hi in self.bounds])
        limit = np.broadcast_to(span, s.shape) if max_step is None else np.asarray(max_step, dtype=float)
        eye = np.eye(self.k)
        res = np.sum((self.point(s) - y) ** 2, axis=1)
        scale = np.sum(y ** 2, axis=1) + 1.0
        live = np.ones(len(s), dtype=bool)
        for _ in range(max_iter):
            idx = np.flatnonzero(live)
            if not len(idx):
                break
            si, fi = s[idx], free[idx]
            r = self.point(si) - y[idx]
            Jc = self.jacobian(si) * fi[:, None, :]
            JtJ = np.einsum("ndi,ndj->nij", Jc, Jc)
            Jtr = np.einsum("ndi,nd->ni", Jc, r)
            damp = 1e-14 * np.trace(JtJ, axis1=1, axis2=2)[:, None, None] + 1e-300
            JtJ = JtJ + damp * eye + eye * (~fi)[:, None, :]
            step = -_solve_small(JtJ, Jtr) * fi
            # stay inside the trust region around the starting parameters
            step = self.wrap(np.clip(si + step, s0[idx] - limit[idx], s0[idx] + limit[idx])) - si
            # ambient length of the linearized move; once it is negligible next to the
            # distance to the geometry (or to round-off) the vertex is done
            move = np.linalg.norm(np.einsum("ndi,ni->nd", Jc, step), axis=1)
            done = move <= 1e-14 * np.sqrt(scale[idx]) + 1e-4 * np.sqrt(res[idx])
            trial = self.wrap(si + step)
            new_res = np.sum((self.point(trial) - y[idx]) ** 2, axis=1)
            for _ in range(30):
                worse = (new_res > res[idx]) & ~done
                if not worse.any():
                    break
                step[worse] *= 0.5
                trial[worse] = self.wrap(si[worse] + step[worse])
                new_res[worse] = np.sum((self.point(trial[worse]) - y[idx][worse]) ** 2, axis=1)
            better = new_res <= res[idx]
            s[idx[better]] = trial[better]
            improved = new_res < res[idx]
            res[idx[better]] = new_res[better]
            live[idx] = improved & ~done
        return s, self.point(s)


def _solve_small(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    # batched solve for the 1x1 / 2x2 normal equations of Gauss-Newton
    k = A.shape[-1]
    if k == 1:
        return b / A[:, 0, :]
    if k == 2:
        det = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
        x0 = (A[:, 1, 1] * b[:, 0] - A[:, 0, 1] * b[:, 1]) / det
        x1 = (A[:, 0, 0] * b[:, 1] - A[:, 1, 0] * b[:, 0]) / det
        return np.stack([x0, x1], axis=1)
    return np.linalg.solve(A, b[..., None])[..., 0]


def _circle(r):
    def f(t):
        s = t[:, 0]
        return np.stack([r * np.cos(s), np.sin(s)], axis=1)
    return f


def _lemniscate(t):
    s = t[:, 0]
    den = 1 + np.sin(s) ** 2
    return np.stack([2 * np.cos(s) / den, np.sin(s) * np.cos(s) / den], axis=1)


def _cardioid(t):
    s = t[:, 0]
    w = 1 - np.cos(s)
    return np.stack([2 * np.cos(s) * w, 2 * np.sin(s) * w], axis=1)


def _rose(r):
    def f(t):
        s = t[:, 0]
        return np.stack([np.cos(r * s) * np.cos(s), np.cos(r * s) * np.sin(s)], axis=1)
    return f


def _mexican_cap(t):
    s = t[:, 0]
    e = np.exp(0.1 * s)
    return np.stack([e * np.cos(10 * s), e * np.sin(10 * s), s], axis=1)


def _torus_curve(t):
    s = t[:, 0]
    w = np.cos(np.sqrt(2.0) * s)
    return np.stack([(3 + w) * np.cos(s), w, (3 + w) * np.sin(s)], axis=1)


def _hyperboloid(t):
    s, z = t[:, 0], t[:, 1]
    rho = np.sqrt(1 + z ** 2)
    return np.stack([rho * np.cos(s), rho * np.sin(s), z], axis=1)


def _cavatappi(t):
    s, z = t[:, 0], t[:, 1]
    a = 3 + 2 * np.cos(np.pi / 35 * s)
    b = 0.1 * np.cos(2 * np.pi / 7 * s)
    x = a + b * np.cos(np.pi / 30 * z)
    y = a + b * np.sin(np.pi / 30 * z)
    zz = 3 + 2 * np.sin(np.pi / 35 * s) + 0.1 * np.sin(2 * np.pi / 7 * s) + z / 6
    return np.stack([x, y, zz], axis=1)


def _closed(func, lo, hi) -> bool:
    ends = np.real(func(np.array([[lo], [hi]], dtype=float)))
    return bool(np.linalg.norm(ends[0] - ends[1]) <= 1e-12 * max(1.0, np.abs(ends).max()))


def make_parametrization(name: str, r: float | None = None, c: float | None = None) -> Parametrization:
    two_pi = 2 * np.pi
    if name in ("circle", "ellipse"):
        r = 1.0 if r is None else r
        if r < 1:
            raise ValueError("ellipse semi-axis r must be >= 1")
        return Parametrization(name, _circle(r), ((0.0, two_pi),), (True,), 2)
    if name == "lemniscate":
        return Parametrization(name, _lemniscate, ((0.0, two_pi),), (True,), 2)
    if name == "cardioid":
        return Parametrization(name, _cardioid, ((0.0, two_pi),), (True,), 2)
    if name == "rose":
        r = 1.0 / 6.0 if r is None else r
        c = 3.0 if c is None else c
        if c <= 0:
            raise ValueError("rose parameter c must be positive")
        f = _rose(r)
        hi = c * np.pi
        return Parametrization(name, f, ((0.0, hi),), (_closed(f, 0.0, hi),), 2)
    if name == "mexican_cap":
        return Parametrization(name, _mexican_cap, ((-12.0, 12.0),), (False,), 3)
    if name == "torus_curve":
        hi = 40 * np.pi
        return Parametrization(name, _torus_curve, ((0.0, hi),), (_closed(_torus_curve, 0.0, hi),), 3)
    if name == "hyperboloid":
        return Parametrization(name, _hyperboloid, ((0.0, two_pi), (-2.0, 2.0)), (True, False), 3)
    if name == "cavatappi":
        return Parametrization(name, _cavatappi, ((0.0, 70.0), (0.0, 150.0)), (True, False), 3)
    raise ValueError(f"unknown geometry {name!r}")
