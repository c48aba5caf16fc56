import numpy as np
import pytest

from mmpde.differential import (check_orientation, curve_tangents, discrete_curvature, mixed_areas,
                                surface_normals, vertex_frames)
from mmpde.generate import GeometrySpec, box_mesh, generate_mesh
from mmpde.mesh import MeshError, SimplicialMesh

from helpers import regular_polygon, sphere_mesh


def chain(points):
    n = len(points)
    return SimplicialMesh(np.asarray(points, float), np.stack([np.arange(n - 1), np.arange(1, n)], axis=1))


@pytest.fixture(scope="module")
def sphere():
    return sphere_mesh(4)


# curves

def test_circle_tangents_perpendicular_to_radius():
    mesh = regular_polygon(100, phase=0.1)
    t = curve_tangents(mesh).vectors
    np.testing.assert_allclose(np.linalg.norm(t, axis=1), 1.0, atol=1e-12)
    assert np.abs(np.sum(t * mesh.vertices, axis=1)).max() <= 1e-2


def test_collinear_chain_tangents_exact():
    d = np.array([3.0, 4.0, 0.0]) / 5.0
    pts = np.array([0.0, 0.4, 1.1, 1.5, 3.0])[:, None] * d
    t = curve_tangents(chain(pts)).vectors
    np.testing.assert_allclose(t, np.broadcast_to(d, t.shape), atol=1e-15)
    assert discrete_curvature(chain(pts)).curvature.max() <= 1e-14
    axis = np.array([0.0, 0.4, 1.1, 1.5, 3.0])[:, None] * np.array([1.0, 0.0])
    np.testing.assert_array_equal(discrete_curvature(chain(axis)).curvature, 0.0)


def test_lemniscate_branches_keep_distinct_tangents():
    gen = generate_mesh(GeometrySpec("lemniscate", N=100, perturb_amplitude=0.0))
    mesh, par = gen.mesh, gen.parametrization
    x = mesh.vertices
    t = curve_tangents(mesh).vectors
    analytic = par.jacobian(gen.params)[:, :, 0]
    analytic /= np.linalg.norm(analytic, axis=1, keepdims=True)
    near = np.flatnonzero(np.linalg.norm(x, axis=1) < 0.15)
    assert len(near) >= 4
    # mesh tangents follow the analytic derivative of their own branch
    assert np.all(np.abs(np.sum(t[near] * analytic[near], axis=1)) > 0.99)
    # and the two branches through the crossing point are not parallel
    cos = np.abs(t[near] @ t[near].T)
    assert cos.min() < 0.7


def test_curve_valence_error():
    mesh = SimplicialMesh(np.array([[0.0, 0], [1, 0], [0, 1], [-1, 0]]), np.array([[0, 1], [0, 2], [0, 3]]))
    with pytest.raises(MeshError, match="valence"):
        curve_tangents(mesh)


def test_open_curve_end_tangents():
    pts = np.array([[0.0, 0], [1, 0], [2, 1]])
    t = curve_tangents(chain(pts)).vectors
    np.testing.assert_allclose(t[0], [1, 0])
    np.testing.assert_allclose(t[2], np.array([1, 1]) / np.sqrt(2))


@pytest.mark.parametrize("r", [0.5, 1.0, 3.0])
def test_circle_curvature_exact(r):
    k = discrete_curvature(regular_polygon(37, r)).curvature
    np.testing.assert_allclose(k, 1 / r, rtol=1e-12)


def test_curve_curvature_on_nonuniform_circle(rng):
    s = np.sort(rng.uniform(0, 2 * np.pi, 50))
    pts = np.stack([2 * np.cos(s), 2 * np.sin(s)], axis=1)
    mesh = SimplicialMesh(pts, regular_polygon(50).elements)
    np.testing.assert_allclose(discrete_curvature(mesh).curvature, 0.5, rtol=1e-10)


def test_open_curve_end_curvature_extrapolated():
    s = np.linspace(0, 1, 8)
    mesh = chain(np.stack([np.cos(s), np.sin(s)], axis=1))
    fr = discrete_curvature(mesh)
    assert fr.extrapolated[0] and fr.extrapolated[-1] and not fr.extrapolated[3]
    np.testing.assert_allclose(fr.curvature, 1.0, rtol=1e-12)


def test_turning_number():
    for name, winding in (("circle", 1), ("cardioid", 1), ("lemniscate", 0)):
        mesh = generate_mesh(GeometrySpec(name, seed=2)).mesh
        t = curve_tangents(mesh).vectors
        t_next = np.roll(t, -1, axis=0)
        ang = np.arctan2(t[:, 0] * t_next[:, 1] - t[:, 1] * t_next[:, 0], np.sum(t * t_next, axis=1))
        assert abs(abs(ang.sum()) - 2 * np.pi * winding) < 0.2, name


# surfaces

def test_flat_square_normals():
    flat = box_mesh(4, 2, jitter=0.2, seed=1)
    mesh = SimplicialMesh(np.column_stack([flat.vertices, np.zeros(flat.n_vertices)]), flat.elements)
    n = surface_normals(mesh).vectors
    sign = np.sign(n[0, 2])
    np.testing.assert_allclose(n, np.broadcast_to([0, 0, sign], n.shape), atol=1e-14)


def test_sphere_normals_and_curvature(sphere):
    x = sphere.vertices
    n = surface_normals(sphere).vectors
    assert np.min(np.sum(n * x, axis=1) / np.linalg.norm(x, axis=1)) >= 0.999
    k = discrete_curvature(sphere).curvature
    assert np.abs(k - 1.0).max() <= 0.05


@pytest.mark.parametrize("amplitude", [0.0, 0.2])
def test_hyperboloid_normals_orthogonal_to_parametric_tangents(amplitude):
    # the one-ring normal error grows with the jitter; 0.2 keeps it below 5e-2
    gen = generate_mesh(GeometrySpec("hyperboloid", seed=4, perturb_amplitude=amplitude))
    assert gen.mesh.n_elements == 3872
    n = surface_normals(gen.mesh).vectors
    J = gen.parametrization.jacobian(gen.params)
    J /= np.linalg.norm(J, axis=1, keepdims=True)
    assert np.abs(np.einsum("id,idk->ik", n, J)).max() <= 5e-2


def test_inconsistent_orientation_detected():
    mesh = SimplicialMesh(np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]]),
                          np.array([[0, 1, 2], [1, 2, 3]]))
    with pytest.raises(MeshError, match="orientation"):
        check_orientation(mesh)
    with pytest.raises(MeshError):
        surface_normals(mesh)


def test_bulk_mesh_has_no_frames():
    mesh = box_mesh(2, 2)
    assert vertex_frames(mesh) is None
    with pytest.raises(MeshError):
        discrete_curvature(mesh)


def test_mixed_areas_partition_total_area(sphere):
    x, tri = sphere.vertices, sphere.elements
    area = 0.5 * np.linalg.norm(np.cross(x[tri[:, 1]] - x[tri[:, 0]], x[tri[:, 2]] - x[tri[:, 0]]), axis=1)
    assert mixed_areas(sphere).sum() == pytest.approx(area.sum(), rel=1e-12)


def test_rim_curvature_flagged():
    gen = generate_mesh(GeometrySpec("hyperboloid", seed=1))
    fr = discrete_curvature(gen.mesh)
    assert np.array_equal(fr.extrapolated, gen.mesh.boundary_vertices)
    assert np.all(fr.curvature > 0)


# invariances

def _rigid(rng, d):
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return Q, rng.standard_normal(d)


def test_rigid_motion_invariance(rng, sphere):
    gen = generate_mesh(GeometrySpec("torus_curve", seed=5))
    for mesh in (gen.mesh, sphere):
        Q, b = _rigid(rng, 3)
        moved = mesh.with_vertices(mesh.vertices @ Q.T + b)
        a, c = discrete_curvature(mesh), discrete_curvature(moved)
        np.testing.assert_allclose(c.curvature, a.curvature, rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(c.vectors, a.vectors @ Q.T, atol=1e-10)


def test_scaling_law(sphere):
    gen = generate_mesh(GeometrySpec("cardioid", seed=5))
    for mesh in (gen.mesh, sphere):
        s = 3.5
        a = discrete_curvature(mesh).curvature
        b = discrete_curvature(mesh.with_vertices(s * mesh.vertices)).curvature
        np.testing.assert_allclose(b, a / s, rtol=1e-10)
