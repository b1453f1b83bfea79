import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfdlift.dataterm import (
    INPAINT_CAP,
    DataTermSpec,
    convexify,
    convexify_all,
    lellmann_mode_data,
    project_rho_conj_epi,
    sample_data_term,
    sample_values,
    subgrid_barycentric,
)
from mfdlift.fem import simplex_operators
from mfdlift.geometry import Circle, build_circle, build_flat_box, build_sphere2


def circle_spec(angles, k=4, **kw):
    return DataTermSpec("quadratic_distance", Circle.from_angle(np.asarray(angles, float)), subgrid_level=k, **kw)


# -- sampling ----------------------------------------------------------------


def test_subgrid_sizes():
    from math import comb

    for s in (1, 2, 3):
        for k in (1, 2, 4):
            assert subgrid_barycentric(s, k).shape == (comb(k + s, s), s + 1)
    np.testing.assert_array_equal(subgrid_barycentric(2, 1), np.eye(3))


def test_level_one_samples_are_vertices():
    tri = build_sphere2(0)
    spec = DataTermSpec("quadratic_distance", tri.vertices[[3]], subgrid_level=1)
    ops = simplex_operators(tri)
    for T in range(tri.n_simplices):
        w, vals = sample_data_term(spec, tri, 0, T)
        np.testing.assert_allclose(w, ops.W[T], atol=1e-14)
        k = list(tri.simplices[T]).index(3) if 3 in tri.simplices[T] else None
        if k is not None:
            assert vals[k] == pytest.approx(0.0, abs=1e-20)


def test_circle_sample_at_antipode():
    tri = build_circle(4)
    bary, rho = sample_values(circle_spec([0.0]), tri)
    # sample at angle pi: a vertex of the 4-label circle
    pts = tri.iota(np.arange(tri.n_simplices)[:, None], bary[None])
    ang = Circle.to_angle(pts) % (2 * np.pi)
    hit = np.isclose(ang, np.pi)
    assert hit.any()
    np.testing.assert_allclose(rho[0][hit], np.pi**2, rtol=1e-12)


def test_inpainting_samples():
    tri = build_circle(6)
    obs = Circle.from_angle(np.array([0.3, 2.0]))
    spec = DataTermSpec("inpainting_indicator", obs, mask=np.array([False, True]), subgrid_level=4)
    _, rho = sample_values(spec, tri)
    assert np.all(rho[1] == 0)
    assert np.sum(rho[0] == 0) >= 1
    assert set(np.unique(rho[0])) == {0.0, INPAINT_CAP}


def test_spec_validation():
    with pytest.raises(ValueError):
        DataTermSpec("l1", np.zeros((1, 2)))
    with pytest.raises(ValueError):
        DataTermSpec("quadratic_distance", np.zeros((1, 2)), subgrid_level=0)
    with pytest.raises(ValueError):
        DataTermSpec("inpainting_indicator", np.zeros((2, 2)))


# -- convexification ----------------------------------------------------------


def test_convex_sequence_keeps_all_points():
    x = np.linspace(0, 1, 6)[:, None]
    e = convexify(x, (x[:, 0] - 0.4) ** 2)
    assert e.points.shape[0] == 6


def test_point_above_chord_is_dropped():
    e = convexify(np.array([[0.0], [0.5], [1.0]]), np.array([0.0, 1.0, 0.0]))
    np.testing.assert_allclose(np.sort(e.points[:, 0]), [0.0, 1.0])
    assert e(np.array([[0.5]]))[0] == pytest.approx(0.0)


def test_degenerate_samples_rejected():
    with pytest.raises(ValueError):
        convexify(np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]), np.zeros(3))
    with pytest.raises(ValueError):
        convexify(np.array([[0.0]]), np.zeros(1))


def _brute_force_envelope(w, h):
    """All planes through sample triples lying below every sample; envelope = their max."""
    planes = []
    for i, j, k in itertools.combinations(range(len(h)), 3):
        X = np.c_[w[[i, j, k]], np.ones(3)]
        if abs(np.linalg.det(X)) < 1e-12:
            continue
        coef = np.linalg.solve(X, h[[i, j, k]])
        if np.all(np.c_[w, np.ones(len(h))] @ coef <= h + 1e-9):
            planes.append(coef)
    planes = np.array(planes)
    return lambda pts: np.max(np.c_[pts, np.ones(len(pts))] @ planes.T, axis=1)


@pytest.mark.parametrize("seed", range(5))
def test_random_2d_hull_against_brute_force(seed):
    rng = np.random.default_rng(seed)
    bary = subgrid_barycentric(2, 4)
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.3, 0.9]])
    w = bary @ corners
    h = rng.normal(size=len(w))
    e = convexify(w, h)
    env = _brute_force_envelope(w, h)
    np.testing.assert_allclose(e(w), env(w), atol=1e-9)
    assert np.all(e(w) <= h + 1e-9)
    touched = np.isclose(e(w), h, atol=1e-9)
    assert touched.sum() >= 3
    # hull vertices are samples
    for p, ht in zip(e.points, e.heights):
        j = np.argmin(np.sum((w - p) ** 2, axis=1))
        assert ht == pytest.approx(h[j])


def test_affine_data_reproduced_exactly():
    tri = build_flat_box([0.0, 0.0], [1.0, 1.0], [3, 3])
    ops = simplex_operators(tri)
    bary = subgrid_barycentric(2, 4)
    w = bary @ ops.W[0]
    h = 0.3 * w[:, 0] - 1.2 * w[:, 1] + 0.7
    e = convexify(w, h)
    np.testing.assert_allclose(e(w), h, atol=1e-12)
    assert e.slopes.shape[0] == 1


def test_minorant_on_all_fixture_entries():
    tri = build_sphere2(0)
    rng = np.random.default_rng(0)
    obs = rng.standard_normal((4, 3))
    obs /= np.linalg.norm(obs, axis=1, keepdims=True)
    cdt = convexify_all(DataTermSpec("quadratic_distance", obs, subgrid_level=4), tri)
    for x in range(4):
        for T in range(tri.n_simplices):
            e = cdt.entry(x, T)
            assert np.all(e(cdt.local[T]) <= cdt.rho[x, T] + 1e-9)
            assert np.all(e.heights <= cdt.rho[x, T].max() + 1e-9)


def test_monotone_refinement_on_circle():
    tri = build_circle(5)
    obs = [0.4, 2.9, -1.7]
    fine = sample_values(circle_spec(obs, 8), tri)
    fine_w = np.einsum("jk,tks->tjs", fine[0], simplex_operators(tri).W)
    prev = np.inf
    for k in (1, 2, 4, 8):
        cdt = convexify_all(circle_spec(obs, k), tri)
        worst = 0.0
        for x in range(len(obs)):
            for T in range(tri.n_simplices):
                worst = max(worst, np.max(fine[1][x, T] - cdt.entry(x, T)(fine_w[T])))
        assert worst <= prev + 1e-12
        prev = worst


def test_batched_1d_hulls_match_single():
    tri = build_circle(7)
    rng = np.random.default_rng(3)
    spec = circle_spec(rng.uniform(-np.pi, np.pi, 6), 8)
    cdt = convexify_all(spec, tri)
    for x in range(6):
        for T in range(tri.n_simplices):
            single = convexify(cdt.local[T], cdt.rho[x, T])
            np.testing.assert_allclose(np.sort(cdt.entry(x, T).points[:, 0]), np.sort(single.points[:, 0]))


def test_perspective_scales_the_hull():
    tri = build_circle(6)
    cdt = convexify_all(circle_spec([0.5], 8), tri)
    T, w, m = 2, 0.1, 0.3
    e = cdt.entry(0, T)
    first = np.zeros((1, tri.n_simplices, 1))
    mass = np.zeros((1, tri.n_simplices))
    first[0, T, 0], mass[0, T] = m * w, m
    val = cdt.perspective(first, mass)
    assert val[0, T] == pytest.approx(m * e(np.array([[w]]))[0])
    assert val[0, 0] == 0.0


# -- projection onto the conjugate epigraph ------------------------------------


def test_projection_feasible_point_unchanged():
    tri = build_circle(6)
    e = convexify_all(circle_spec([1.0], 4), tri).entry(0, 1)
    g0 = np.array([0.2])
    b0 = e.conj(g0) + 0.5
    g, b = project_rho_conj_epi(e, g0, b0)
    np.testing.assert_allclose(g, g0)
    assert b == pytest.approx(b0)


def test_projection_single_sample():
    e = convexify(np.array([[0.0], [1.0]]), np.array([0.0, 0.0]))
    single = type(e)(np.zeros((1, 1)), np.zeros(1), e.slopes, e.intercepts)
    g, b = project_rho_conj_epi(single, np.array([0.7]), -1.0)
    np.testing.assert_allclose(g, [0.7])
    assert b == pytest.approx(0.0)


def _polygon_projection_oracle(A, h, x0):
    """Closest point of {A y <= h} in R^2 by enumerating active sets of size 0, 1, 2."""
    cands = [x0]
    for j in range(len(h)):
        a = A[j]
        cands.append(x0 - (a @ x0 - h[j]) / (a @ a) * a)
    for i, j in itertools.combinations(range(len(h)), 2):
        M = A[[i, j]]
        if abs(np.linalg.det(M)) > 1e-12:
            cands.append(np.linalg.solve(M, h[[i, j]]))
    cands = np.array(cands)
    ok = np.all(cands @ A.T <= h + 1e-10, axis=1)
    c = cands[ok]
    return c[np.argmin(np.sum((c - x0) ** 2, axis=1))]


def test_projection_matches_qp_oracle():
    tri = build_circle(8)
    cdt = convexify_all(circle_spec([0.9], 8), tri)
    rng = np.random.default_rng(0)
    for _ in range(100):
        T = rng.integers(tri.n_simplices)
        e = cdt.entry(0, T)
        H = e.halfspaces
        x0 = rng.normal(0, 3, 2)
        g, b = project_rho_conj_epi(e, x0[:1], x0[1])
        ref = _polygon_projection_oracle(H.normals, H.offsets, x0)
        np.testing.assert_allclose([g[0], b], ref, atol=1e-7)


@settings(max_examples=50, deadline=None)
@given(st.floats(-np.pi, np.pi), st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 4))
def test_projection_lands_in_epigraph(angle, g0, b0, T):
    tri = build_circle(5)
    e = convexify_all(circle_spec([angle], 4), tri).entry(0, T)
    g, b = project_rho_conj_epi(e, np.array([g0]), b0)
    assert e.conj(g) <= b + 1e-9


# -- label-resolution data -----------------------------------------------------


def test_lellmann_vector_on_circle():
    tri = build_circle(4)
    vec = lellmann_mode_data(circle_spec([0.0]), tri, 0)
    np.testing.assert_allclose(vec, [0, (np.pi / 2) ** 2, np.pi**2, (np.pi / 2) ** 2], atol=1e-12)


def test_lellmann_vector_zero_at_label():
    tri = build_sphere2(0)
    spec = DataTermSpec("quadratic_distance", tri.vertices[[7]])
    assert lellmann_mode_data(spec, tri, 0)[7] == pytest.approx(0.0, abs=1e-20)


def test_lellmann_vector_flat_is_squared_euclidean():
    tri = build_flat_box([0.0, 0.0], [1.0, 1.0], [3, 3])
    y = np.array([[0.2, 0.7]])
    vec = lellmann_mode_data(DataTermSpec("quadratic_distance", y), tri, 0)
    np.testing.assert_allclose(vec, np.sum((tri.vertices - y) ** 2, axis=1), atol=1e-12)
