from math import factorial, sqrt

import numpy as np
import pytest

from mmpde.geometry import (DegenerateSimplexError, edge_matrix, height_coefficient, is_degenerate,
                            metric_height_values, metric_heights, metric_measure, pseudo_inverse,
                            pseudo_inverse_q_vectors, reference_element, similarity_residuals, simplex_measure,
                            sym_power)

from helpers import CONFIGS, random_simplex, random_spd


def random_rotation(rng, d):
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    return Q * np.sign(np.diag(R))


def dist_to_affine_hull(x, pts):
    """Distance from x to the affine hull of the rows of pts (least squares)."""
    base = pts[0]
    if len(pts) == 1:
        return np.linalg.norm(x - base)
    A = (pts[1:] - base).T
    c, *_ = np.linalg.lstsq(A, x - base, rcond=None)
    return np.linalg.norm(x - base - A @ c)


# edge matrices

def test_edge_matrix_identity_legs():
    E = edge_matrix([[0, 0], [1, 0], [0, 1]])
    np.testing.assert_array_equal(E, np.eye(2))


def test_edge_matrix_single_edge():
    E = edge_matrix([[0, 0, 0], [3, 4, 0]])
    np.testing.assert_array_equal(E, [[3], [4], [0]])


def test_edge_matrix_matches_subtraction(rng):
    X = rng.standard_normal((50, 4, 3))
    E = edge_matrix(X)
    for k in range(50):
        for j in range(3):
            np.testing.assert_array_equal(E[k][:, j], X[k, j + 1] - X[k, 0])


def test_edge_matrix_rejects_too_many_vertices():
    with pytest.raises(ValueError):
        edge_matrix(np.zeros((4, 2)))


# measures

def test_measure_segment_345():
    assert simplex_measure(edge_matrix([[0, 0, 0], [3, 4, 0]])) == pytest.approx(5.0, rel=1e-15)


def test_measure_right_triangle_in_3d():
    E = np.array([[1.0, 0], [0, 1], [0, 0]])
    assert simplex_measure(E) == pytest.approx(0.5, rel=1e-15)


def test_measure_triangles_cross_product_oracle(rng):
    X = rng.standard_normal((1000, 3, 3))
    oracle = 0.5 * np.linalg.norm(np.cross(X[:, 1] - X[:, 0], X[:, 2] - X[:, 0]), axis=1)
    got = simplex_measure(edge_matrix(X))
    np.testing.assert_allclose(got, oracle, rtol=1e-12)


def test_measure_full_dimension_equals_abs_det(rng):
    for m in (1, 2, 3):
        E = np.stack([random_simplex(rng, m, m) for _ in range(200)])
        np.testing.assert_allclose(simplex_measure(E), np.abs(np.linalg.det(E)) / factorial(m), rtol=1e-12)


@pytest.mark.parametrize("m,d", CONFIGS)
def test_measure_rotation_invariant(rng, m, d):
    E = np.stack([random_simplex(rng, m, d) for _ in range(20)])
    Q = random_rotation(rng, d)
    np.testing.assert_allclose(simplex_measure(Q @ E), simplex_measure(E), rtol=1e-12)


def test_measure_degenerate_is_zero():
    E = np.array([[1.0, 2.0], [1.0, 2.0], [0.0, 0.0]])
    assert is_degenerate(E)
    assert simplex_measure(E) == 0.0


def test_degeneracy_is_scale_free(rng):
    E = random_simplex(rng, 2, 3)
    assert not is_degenerate(1e-60 * E)
    assert not is_degenerate(1e60 * E)


# q-vectors and heights

def test_q_vectors_segment():
    L = 2.5
    qv = pseudo_inverse_q_vectors(np.array([[L], [0.0]]))
    np.testing.assert_allclose(qv.q, [[-1 / L, 0], [1 / L, 0]], rtol=1e-15)
    np.testing.assert_allclose(qv.heights, [L, L], rtol=1e-15)


def test_q_vectors_unit_triangle():
    qv = pseudo_inverse_q_vectors(np.eye(2))
    np.testing.assert_allclose(qv.q, [[-1, -1], [1, 0], [0, 1]], atol=1e-15)
    np.testing.assert_allclose(qv.heights, [1 / sqrt(2), 1, 1], rtol=1e-15)
    # point-to-facet oracle for the unit triangle
    X = np.array([[0.0, 0], [1, 0], [0, 1]])
    for j in range(3):
        assert qv.heights[j] == pytest.approx(dist_to_affine_hull(X[j], np.delete(X, j, 0)), rel=1e-14)


@pytest.mark.parametrize("m,d", CONFIGS)
def test_heights_equal_point_facet_distance(rng, m, d):
    for _ in range(30):
        X = rng.standard_normal((m + 1, d))
        qv = pseudo_inverse_q_vectors(edge_matrix(X))
        for j in range(m + 1):
            facet = np.delete(X, j, 0)
            assert qv.heights[j] == pytest.approx(dist_to_affine_hull(X[j], facet), abs=1e-10)


@pytest.mark.parametrize("m,d", CONFIGS)
def test_q_vector_invariants(rng, m, d):
    X = rng.standard_normal((m + 1, d))
    qv = pseudo_inverse_q_vectors(edge_matrix(X))
    np.testing.assert_array_equal(qv.q[0], -qv.q[1:].sum(axis=0))
    scale = np.abs(X).max()
    for j in range(m + 1):
        facet = np.delete(X, j, 0)
        for a in range(len(facet)):
            for b in range(a + 1, len(facet)):
                assert abs(qv.q[j] @ (facet[b] - facet[a])) <= 1e-10 * scale
        assert qv.q[j] @ (X[j] - facet.mean(axis=0)) > 0


@pytest.mark.parametrize("m,d", CONFIGS)
def test_q_vectors_are_basis_gradients(rng, m, d):
    """phi_j(x_i) = delta_ij for the affine functions with gradients q_j."""
    X = rng.standard_normal((m + 1, d))
    q = pseudo_inverse_q_vectors(edge_matrix(X)).q
    vals = (X - X[0]) @ q.T
    vals[:, 0] += 1.0
    np.testing.assert_allclose(vals, np.eye(m + 1), atol=1e-12)


@pytest.mark.parametrize("m,d", CONFIGS)
def test_pseudo_inverse_left_identity(rng, m, d):
    E = random_simplex(rng, m, d)
    np.testing.assert_allclose(pseudo_inverse(E) @ E, np.eye(m), atol=1e-12)


@pytest.mark.parametrize("m,d", CONFIGS)
def test_gram_norm_height_bounds(rng, m, d):
    for _ in range(50):
        X = rng.standard_normal((m + 1, d))
        E = edge_matrix(X)
        diffs = X[:, None, :] - X[None, :, :]
        h = np.linalg.norm(diffs, axis=-1).max()
        a = pseudo_inverse_q_vectors(E).min_height
        G = E.T @ E
        n2 = np.linalg.norm(G, 2)
        ni = np.linalg.norm(np.linalg.inv(G), 2)
        assert h ** 2 / m <= n2 * (1 + 1e-12) and n2 <= m * h ** 2 * (1 + 1e-12)
        assert 1 / (m ** 2 * a ** 2) <= ni * (1 + 1e-12) and ni <= m / a ** 2 * (1 + 1e-12)


def test_pseudo_inverse_degenerate_raises():
    with pytest.raises(DegenerateSimplexError, match="degenerate simplex"):
        pseudo_inverse_q_vectors(np.array([[1.0, 2.0], [0.0, 0.0], [0.0, 0.0]]))


# metric versions

def test_metric_measure_identity_and_scaling(rng):
    for m, d in CONFIGS:
        E = random_simplex(rng, m, d)
        assert metric_measure(E, np.eye(d)) == pytest.approx(simplex_measure(E), rel=1e-13)
        assert metric_measure(E, 3.7 * np.eye(d)) == pytest.approx(3.7 ** (m / 2) * simplex_measure(E), rel=1e-13)


@pytest.mark.parametrize("m,d", CONFIGS)
def test_metric_measure_sqrt_oracle(rng, m, d):
    for _ in range(20):
        E = random_simplex(rng, m, d)
        M = random_spd(rng, d, cond=10)
        w, V = np.linalg.eigh(M)
        root = V @ np.diag(np.sqrt(w)) @ V.T
        assert metric_measure(E, M) == pytest.approx(simplex_measure(root @ E), rel=1e-12)


def test_metric_measure_permutation_invariant(rng):
    X = rng.standard_normal((4, 3))
    Ms = random_spd(rng, 3, 4)
    M_K = Ms.mean(axis=0)
    ref = metric_measure(edge_matrix(X), M_K)
    for perm in ([1, 0, 2, 3], [3, 2, 1, 0], [2, 3, 0, 1]):
        M_p = Ms[perm].mean(axis=0)
        assert metric_measure(edge_matrix(X[perm]), M_p) == pytest.approx(ref, rel=1e-12)


def test_metric_measure_rejects_non_spd():
    with pytest.raises(ValueError):
        metric_measure(np.eye(2), np.diag([1.0, -1.0]))
    with pytest.raises(ValueError):
        metric_measure(np.eye(2), np.array([[1.0, 0.5], [0.0, 1.0]]))


@pytest.mark.parametrize("m,d", CONFIGS)
def test_metric_heights_identity_and_scaling(rng, m, d):
    E = random_simplex(rng, m, d)
    euclid = pseudo_inverse_q_vectors(E)
    np.testing.assert_allclose(metric_heights(E, np.eye(d)).q, euclid.q, atol=1e-13)
    np.testing.assert_allclose(metric_heights(E, 4.0 * np.eye(d)).heights, 2.0 * euclid.heights, rtol=1e-13)


def test_metric_heights_full_dimension_match_transformed_q(rng):
    for d in (2, 3):
        E = random_simplex(rng, d, d)
        M = random_spd(rng, d)
        expect = pseudo_inverse_q_vectors(E).q @ sym_power(M, -0.5)
        np.testing.assert_allclose(metric_heights(E, M).q, expect, atol=1e-12)


@pytest.mark.parametrize("m,d", CONFIGS)
def test_gram_heights_match_pseudo_inverse_heights(rng, m, d):
    E = np.stack([random_simplex(rng, m, d) for _ in range(50)])
    M = random_spd(rng, d, 50, cond=30)
    np.testing.assert_allclose(metric_height_values(E, M), metric_heights(E, M).heights, rtol=1e-10)


@pytest.mark.parametrize("m,d", CONFIGS)
def test_metric_measure_height_lower_bound(rng, m, d):
    for _ in range(1000 // len(CONFIGS)):
        E = rng.standard_normal((d, m))
        M = random_spd(rng, d, cond=20)
        a = metric_heights(E, M).min_height
        vol = metric_measure(E, M)
        assert vol >= a ** m / (m ** (m / 2) * factorial(m)) * (1 - 1e-12)
        if m == 2:
            assert vol >= a ** 2 / 4 * (1 - 1e-12)


# reference element

def test_reference_segment():
    ref = reference_element(1, 1.0)
    np.testing.assert_allclose(ref.edge_matrix, [[1.0]])
    assert ref.a_hat == pytest.approx(1.0)


def test_reference_triangle_height_coefficient():
    N = 100
    lam = sqrt(3) * 2 ** 0.5 / (sqrt(2) * 3 ** 0.25)
    assert height_coefficient(2) == pytest.approx(lam, rel=1e-14)
    ref = reference_element(2, 1.0 / N)
    assert ref.a_hat == pytest.approx(lam * N ** -0.5, rel=1e-13)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_reference_element_properties(m):
    N = 37
    ref = reference_element(m, 1.0 / N)
    Ehat = ref.edge_matrix
    np.testing.assert_array_equal(Ehat, np.triu(Ehat))
    assert simplex_measure(Ehat) == pytest.approx(1.0 / N, rel=1e-12)
    assert abs(np.linalg.det(Ehat)) / factorial(m) == pytest.approx(ref.measure, rel=1e-12)
    X = np.vstack([np.zeros(m), Ehat.T])
    L = [np.linalg.norm(X[i] - X[j]) for i in range(m + 1) for j in range(i)]
    np.testing.assert_allclose(L, L[0], rtol=1e-12)
    assert pseudo_inverse_q_vectors(Ehat).min_height == pytest.approx(ref.a_hat, rel=1e-12)
    assert ref.a_hat == pytest.approx(height_coefficient(m) * N ** (-1.0 / m), rel=1e-12)


def test_reference_unit_tetrahedron_roundtrip():
    assert simplex_measure(reference_element(3, 1.0).edge_matrix) == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("m,target", [(0, 1.0), (4, 1.0), (2, 0.0), (2, -1.0)])
def test_reference_element_rejects(m, target):
    with pytest.raises(ValueError):
        reference_element(m, target)


# similarity

@pytest.mark.parametrize("m,d", CONFIGS)
def test_similarity_zero_for_congruent_and_scaled(rng, m, d):
    Ehat = reference_element(m, 0.3).edge_matrix
    Q = random_rotation(rng, d)[:, :m]
    R = random_rotation(rng, m)
    for c in (1.0, 0.37, 5.0):
        E = c * Q @ R @ Ehat
        r1, r2 = similarity_residuals(E, Ehat, np.eye(d))
        assert abs(r1) <= 1e-12 * c ** 2 and abs(r2) <= 1e-12 / c ** 2


@pytest.mark.parametrize("m,d", CONFIGS)
def test_similarity_zero_in_metric(rng, m, d):
    """K = M^{-1/2} (c Q R Ehat) is similar to Ehat in the metric M."""
    Ehat = reference_element(m, 1.0).edge_matrix
    M = random_spd(rng, d)
    Q = random_rotation(rng, d)[:, :m]
    E = sym_power(M, -0.5) @ (0.8 * Q @ random_rotation(rng, m) @ Ehat)
    r1, r2 = similarity_residuals(E, Ehat, M)
    assert abs(r1) <= 1e-12 and abs(r2) <= 1e-12


@pytest.mark.parametrize("m,d", [(2, 2), (2, 3), (3, 3)])
def test_similarity_eigen_oracle(rng, m, d):
    Ehat = reference_element(m, 1.0).edge_matrix
    for _ in range(20):
        E = random_simplex(rng, m, d)
        M = random_spd(rng, d)
        F = E @ np.linalg.inv(Ehat)
        lam = np.linalg.eigvalsh(F.T @ M @ F)
        r1, r2 = similarity_residuals(E, Ehat, M)
        assert r1 == pytest.approx(lam.mean() - np.prod(lam) ** (1 / m), rel=1e-10)
        assert r2 == pytest.approx((1 / lam).mean() - np.prod(1 / lam) ** (1 / m), rel=1e-10)
        assert r1 > 0 and r2 > 0


def test_similarity_degenerate_raises():
    with pytest.raises(DegenerateSimplexError):
        similarity_residuals(np.array([[1.0, 1.0], [0.0, 0.0]]), np.eye(2), np.eye(2))
