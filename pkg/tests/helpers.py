"""Shared mesh and metric builders for the tests."""

import numpy as np

from mmpde.generate import box_mesh
from mmpde.mesh import SimplicialMesh
from mmpde.metric import MetricField

CONFIGS = [(1, 2), (1, 3), (2, 2), (2, 3), (3, 3)]


def random_spd(rng, d, n=None, cond=4.0):
    """Random SPD tensors with eigenvalues in [1, cond]."""
    shape = (d, d) if n is None else (n, d, d)
    A = rng.standard_normal(shape)
    Q, _ = np.linalg.qr(A)
    w = rng.uniform(1.0, cond, shape[:-1])
    return (Q * w[..., None, :]) @ np.swapaxes(Q, -1, -2)


def random_simplex(rng, m, d):
    """Edge matrix (d, m) of a reasonably shaped random simplex."""
    while True:
        E = rng.standard_normal((d, m))
        sv = np.linalg.svd(E, compute_uv=False)
        if sv[-1] > 0.2 * sv[0]:
            return E


def random_mesh(rng, m, d, size=None):
    """Small jittered mesh for each supported (m, d), at most 50 elements."""
    if size is None:
        size = 2 if d == 3 and m == 3 else 3
    if m == d:
        return box_mesh(size, d, jitter=0.25, seed=int(rng.integers(1 << 30)))
    if m == 1:
        # open polyline bent out of the line
        n = 8
        t = np.sort(rng.uniform(0, 2.5, n))
        t += np.arange(n) * 0.3
        pts = np.stack([np.cos(t), np.sin(t)] + ([0.3 * t] if d == 3 else []), axis=1)
        return SimplicialMesh(pts, np.stack([np.arange(n - 1), np.arange(1, n)], axis=1))
    # triangulated square lifted onto a curved height field
    flat = box_mesh(size, 2, jitter=0.25, seed=int(rng.integers(1 << 30)))
    x, y = flat.vertices.T
    z = 0.3 * np.sin(2 * x) * np.cos(1.5 * y) + 0.2 * x * y
    return SimplicialMesh(np.stack([x, y, z], axis=1), flat.elements)


def random_field(rng, mesh, kind):
    if kind == "identity":
        return MetricField(np.broadcast_to(np.eye(mesh.d), (mesh.n_vertices, mesh.d, mesh.d)))
    return MetricField(random_spd(rng, mesh.d, mesh.n_vertices))


def regular_polygon(n, r=1.0, phase=0.0):
    s = phase + 2 * np.pi * np.arange(n) / n
    pts = np.stack([r * np.cos(s), r * np.sin(s)], axis=1)
    return SimplicialMesh(pts, np.stack([np.arange(n), (np.arange(n) + 1) % n], axis=1))


def sphere_mesh(level=4):
    """Subdivided icosahedron projected to the unit sphere, outward winding."""
    t = (1 + 5 ** 0.5) / 2
    v = np.array([[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0], [0, -1, t], [0, 1, t],
                  [0, -1, -t], [0, 1, -t], [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]], float)
    f = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11], [1, 5, 9], [5, 11, 4],
         [11, 10, 2], [10, 7, 6], [7, 1, 8], [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8],
         [3, 8, 9], [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    verts = list(v / np.linalg.norm(v, axis=1, keepdims=True))
    faces = f
    for _ in range(level):
        cache, new = {}, []

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                p = verts[a] + verts[b]
                verts.append(p / np.linalg.norm(p))
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new
    return SimplicialMesh(np.array(verts), np.array(faces))


def fd_gradient(mesh, field, params, rel_step=1e-6):
    """Central differences of the energy with the metric frozen on ``mesh``.

    The step for each vertex is ``rel_step`` times its shortest incident edge.
    """
    from mmpde.energy import energy_value

    x0 = mesh.vertices
    h = rel_step * mesh.local_edge_length()
    g = np.zeros_like(x0)
    for i in range(mesh.n_vertices):
        for c in range(mesh.d):
            xp = x0.copy()
            xm = x0.copy()
            xp[i, c] += h[i]
            xm[i, c] -= h[i]
            fp = energy_value(mesh.with_vertices(xp), field, params, anchor=x0)
            fm = energy_value(mesh.with_vertices(xm), field, params, anchor=x0)
            g[i, c] = (fp - fm) / (2 * h[i])
    return g


def gradient_error(g, fd):
    return float(np.abs(g - fd).max() / np.abs(fd).max())
