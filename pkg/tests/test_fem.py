import numpy as np
import pytest

from mfdlift.fem import (
    DegenerateSimplexError,
    affine_coeffs,
    logmap_frame,
    nodal_basis_eval,
    simplex_frame,
    simplex_gradient,
    simplex_operators,
)
from mfdlift.geometry import FlatBox, Triangulation, build_circle, build_flat_box, build_sphere2


def edge_tri():
    """The single edge (1, 0) - (0, 1) in the plane."""
    return Triangulation(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1]]), FlatBox([0, 0], [1, 1]))


def test_frame_of_diagonal_edge():
    P = simplex_frame(edge_tri(), 0).P
    np.testing.assert_allclose(np.abs(P), [[1 / np.sqrt(2)] * 2], atol=1e-15)
    assert P[0, 0] * P[0, 1] < 0


@pytest.mark.parametrize("tri", [build_circle(5), build_sphere2(1)])
def test_frames_orthonormal_and_isometric(tri):
    for T in range(tri.n_simplices):
        P = simplex_frame(tri, T).P
        np.testing.assert_allclose(P @ P.T, np.eye(tri.dim), atol=1e-12)
        E = tri.simplex_points[T][1:] - tri.simplex_points[T][0]
        np.testing.assert_allclose(np.linalg.norm(E @ P.T, axis=1), np.linalg.norm(E, axis=1), atol=1e-12)
        normal = tri.simplex_points[T].mean(0)
        if tri.dim == 2:
            normal = np.cross(E[0], E[1])
            np.testing.assert_allclose(P @ normal, 0.0, atol=1e-12)


def test_degenerate_simplex_raises():
    tri = Triangulation(np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]), np.array([[0, 1, 2]]),
                        FlatBox([0, 0], [2, 2]))
    with pytest.raises(DegenerateSimplexError):
        simplex_frame(tri, 0)


def test_logmap_frame_circle_alpha():
    tri = build_circle(4)
    alphas = [logmap_frame(tri, T).alpha for T in range(4)]
    np.testing.assert_allclose(alphas, (np.pi / 2) / np.sqrt(2), atol=1e-12)
    for L in (3, 7, 16):
        tri = build_circle(L)
        a = [logmap_frame(tri, T).alpha for T in range(L)]
        np.testing.assert_allclose(a, a[0], atol=1e-12)


def test_logmap_frame_flat_is_orthonormal_frame():
    tri = build_flat_box([0, 0], [1, 1], [3, 3])
    for T in range(tri.n_simplices):
        np.testing.assert_array_equal(logmap_frame(tri, T).P, simplex_frame(tri, T).P)


def test_logmap_gradient_scales_by_alpha_on_circle():
    tri = build_circle(6)
    rng = np.random.default_rng(0)
    ortho = simplex_operators(tri, "ortho")
    lm = simplex_operators(tri, "logmap")
    f = rng.standard_normal(6)
    for T in range(6):
        alpha = logmap_frame(tri, T).alpha
        g0 = ortho.Dreg[T] @ f[tri.simplices[T]]
        g1 = lm.Dreg[T] @ f[tri.simplices[T]]
        # the log-map coordinate is geodesic, so slopes shrink by alpha
        np.testing.assert_allclose(np.abs(g1), np.abs(g0) / alpha, atol=1e-10)


def test_gradient_of_edge_matches_closed_form():
    tri = edge_tri()
    np.testing.assert_allclose(simplex_gradient(tri, 0, [1.0, 0.0])[:, 0], [0.5, -0.5], atol=1e-14)
    np.testing.assert_allclose(simplex_gradient(tri, 0, [3.0, 3.0]), 0.0, atol=1e-14)


def test_gradient_matches_finite_differences_on_triangle():
    tri = build_sphere2(0)
    rng = np.random.default_rng(2)
    pts = tri.simplex_points[3]
    f = rng.standard_normal(12)
    G = simplex_gradient(tri, 3, f)[:, 0]
    vals = f[tri.simplices[3]]
    # directional derivative along each edge equals the nodal difference
    for i in range(3):
        for j in range(3):
            np.testing.assert_allclose(G @ (pts[j] - pts[i]), vals[j] - vals[i], atol=1e-8)


def test_gradient_is_linear():
    tri = build_sphere2(1)
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal((2, tri.n_labels))
    for T in range(0, tri.n_simplices, 7):
        lhs = simplex_gradient(tri, T, 2 * a - 3 * b)
        rhs = 2 * simplex_gradient(tri, T, a) - 3 * simplex_gradient(tri, T, b)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_affine_coeffs_examples():
    tri = edge_tri()
    q1, q2 = affine_coeffs(tri, 0, [2.5, 2.5])
    np.testing.assert_allclose(q1, 0.0, atol=1e-14)
    assert q2 == pytest.approx(2.5)
    q1, q2 = affine_coeffs(tri, 0, [1.0, 0.0])
    np.testing.assert_allclose(q1, [0.5, -0.5], atol=1e-14)
    assert q2 == pytest.approx(0.5)


def test_affine_coeffs_reconstruct_and_match_gradient():
    tri = build_sphere2(1)
    rng = np.random.default_rng(5)
    for T in range(0, tri.n_simplices, 5):
        f = rng.standard_normal(tri.n_labels)
        q1, q2 = affine_coeffs(tri, T, f)
        np.testing.assert_allclose(tri.simplex_points[T] @ q1 + q2, f[tri.simplices[T]], atol=1e-10)
        P = simplex_frame(tri, T).P
        np.testing.assert_allclose(P.T @ (P @ q1), q1, atol=1e-10)
        np.testing.assert_allclose(q1, simplex_gradient(tri, T, f)[:, 0], atol=1e-10)


def test_nodal_basis():
    tri = build_sphere2(0)
    for k in range(12):
        assert nodal_basis_eval(tri, k, tri.vertices[k]) == pytest.approx(1.0)
        assert nodal_basis_eval(tri, (k + 1) % 12, tri.vertices[k]) == pytest.approx(0.0)
    a, b = tri.simplices[0][:2]
    mid = 0.5 * (tri.vertices[a] + tri.vertices[b])
    assert nodal_basis_eval(tri, a, mid) == pytest.approx(0.5)
    assert nodal_basis_eval(tri, b, mid) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        nodal_basis_eval(tri, 0, 3 * tri.vertices[0])


def test_partition_of_unity():
    tri = build_sphere2(1)
    rng = np.random.default_rng(0)
    for _ in range(1000):
        T = rng.integers(tri.n_simplices)
        w = rng.dirichlet(np.ones(3))
        z = w @ tri.simplex_points[T]
        total = sum(nodal_basis_eval(tri, k, z) for k in tri.simplices[T])
        assert abs(total - 1) < 1e-12


def test_operators_reproduce_affine_interpolant():
    tri = build_sphere2(0)
    ops = simplex_operators(tri)
    rng = np.random.default_rng(1)
    f = rng.standard_normal(12)
    coef = np.einsum("tik,tk->ti", ops.Minv, f[ops.idx])
    # [g; c] evaluated at the local vertex coordinates gives back the nodal values
    recon = np.einsum("tks,ts->tk", ops.W, coef[:, :2]) + coef[:, 2:]
    np.testing.assert_allclose(recon, f[ops.idx], atol=1e-12)
    np.testing.assert_allclose(coef[:, 2], f[ops.idx].mean(1), atol=1e-12)
