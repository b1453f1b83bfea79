import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfdlift.dataterm import DataTermSpec
from mfdlift.geometry import Circle, build_circle, build_flat_box, build_sphere2
from mfdlift.regularizer import RegularizerSpec
from mfdlift.solver import (
    LiftedProblem,
    SaddleState,
    _inner,
    _zeros_dual,
    _zeros_primal,
    apply_K,
    apply_KT,
    assemble,
    div_x,
    dual_energy,
    grad_x,
    operator_norm,
    pdhg_step,
    primal_energy,
    relative_gap,
    solve,
    solve_lellmann_tv,
)
from mfdlift.unlift import unlift_field


def circle_problem(angles, L=6, k=4, reg=None, mode="sublabel", frame="ortho"):
    tri = build_circle(L)
    spec = DataTermSpec("quadratic_distance", Circle.from_angle(np.asarray(angles, float)), subgrid_level=k)
    reg = reg or RegularizerSpec("tv", 0.5)
    return LiftedProblem.build(tri, spec, reg, (len(angles),), mode=mode, frame=frame)


def sphere_problem(n=3, reg=None):
    rng = np.random.default_rng(0)
    obs = rng.standard_normal((n * n, 3))
    obs /= np.linalg.norm(obs, axis=1, keepdims=True)
    spec = DataTermSpec("quadratic_distance", obs, subgrid_level=2)
    return LiftedProblem.build(build_sphere2(0), spec, reg or RegularizerSpec("huber", 0.75, 0.1), (n, n))


def flat_problem(values, n_labels=5, k=8, reg=None):
    tri = build_flat_box([0.0], [1.0], [n_labels])
    spec = DataTermSpec("quadratic_distance", np.asarray(values, float)[:, None], subgrid_level=k)
    return LiftedProblem.build(tri, spec, reg or RegularizerSpec("tv", 0.1), (len(values),))


# -- finite differences ---------------------------------------------------------


def test_grad_examples():
    np.testing.assert_array_equal(grad_x(np.full((6, 2), 3.0), (2, 3)), 0.0)
    np.testing.assert_array_equal(grad_x(np.array([0.0, 1.0]), (2,))[:, 0], [1.0, 0.0])


@pytest.mark.parametrize("shape", [(7,), (4, 5), (1, 6)])
def test_grad_div_adjoint(shape):
    rng = np.random.default_rng(0)
    P = int(np.prod(shape))
    u = rng.standard_normal((P, 3))
    p = rng.standard_normal((P, 3, len(shape)))
    lhs = np.vdot(grad_x(u, shape), p)
    rhs = -np.vdot(u, div_x(p, shape))
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


# -- the assembled operator -----------------------------------------------------


PROBLEMS = {
    "circle": lambda: circle_problem([0.1, 2.0, -2.5]),
    "circle_logmap": lambda: circle_problem([0.1, 2.0, -2.5], frame="logmap"),
    "circle_lellmann": lambda: circle_problem([0.1, 2.0, -2.5], mode="lellmann"),
    "sphere": sphere_problem,
    "flat": lambda: flat_problem([0.2, 0.5, 0.9]),
}


@pytest.mark.parametrize("name", sorted(PROBLEMS))
def test_operator_adjointness(name):
    prob = PROBLEMS[name]()
    rng = np.random.default_rng(1)
    for _ in range(3):
        x = {k: rng.standard_normal(v.shape) for k, v in _zeros_primal(prob).items()}
        y = {k: rng.standard_normal(v.shape) for k, v in _zeros_dual(prob).items()}
        a = _inner(apply_K(prob, x), y)
        b = _inner(x, apply_KT(prob, y))
        assert abs(a - b) <= 1e-10 * max(1.0, abs(a))


def _dense_K(prob):
    x0 = _zeros_primal(prob)
    keys = list(x0)
    sizes = [x0[k].size for k in keys]
    cols = []
    for i in range(sum(sizes)):
        e = np.zeros(sum(sizes))
        e[i] = 1.0
        parts = np.split(e, np.cumsum(sizes)[:-1])
        x = {k: part.reshape(x0[k].shape) for k, part in zip(keys, parts)}
        Kx = apply_K(prob, x)
        cols.append(np.concatenate([Kx[k].ravel() for k in sorted(Kx)]))
    return np.array(cols).T


def test_power_iteration_matches_dense_norm():
    prob = circle_problem([0.3, 1.0], L=4, k=2)
    exact = np.linalg.norm(_dense_K(prob), 2)
    assert operator_norm(prob, iters=200) == pytest.approx(exact, rel=1e-6)


def test_lellmann_mode_requires_tv():
    with pytest.raises(ValueError):
        circle_problem([0.0], reg=RegularizerSpec("huber", 1.0, 0.1), mode="lellmann")
    with pytest.raises(ValueError):
        solve_lellmann_tv(build_circle(4), DataTermSpec("quadratic_distance", Circle.from_angle(np.zeros(1))),
                          RegularizerSpec("quadratic", 1.0), (1,))


def test_shape_mismatch_rejected():
    prob = circle_problem([0.0, 1.0])
    with pytest.raises(ValueError):
        LiftedProblem((3,), prob.tri, prob.reg, data=prob.data)


# -- iteration invariants --------------------------------------------------------


def test_iterates_stay_in_simplex():
    prob = sphere_problem()
    state = assemble(prob, "diag")
    for _ in range(50):
        pdhg_step(prob, state)
        assert np.all(state.v >= -1e-12)
        np.testing.assert_allclose(state.v.sum(axis=1), 1.0, atol=1e-9)


def _random_state(prob, rng):
    x = {k: rng.standard_normal(v.shape) for k, v in _zeros_primal(prob).items()}
    y = {k: rng.standard_normal(v.shape) for k, v in _zeros_dual(prob).items()}
    x["v"] = rng.dirichlet(np.ones(prob.tri.n_labels), prob.n_pixels)
    return SaddleState(**x, **y)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["circle", "sphere", "flat", "circle_lellmann"]))
def test_weak_duality_at_random_states(seed, name):
    prob = PROBLEMS[name]()
    state = _random_state(prob, np.random.default_rng(seed))
    assert dual_energy(prob, state) <= primal_energy(prob, state) + 1e-8


def test_weak_duality_along_iterates():
    prob = circle_problem(np.linspace(-3, 3, 8), reg=RegularizerSpec("quadratic", 0.5))
    state = assemble(prob, "diag")
    for it in range(300):
        pdhg_step(prob, state)
        if it % 20 == 0:
            gap, pe, de = relative_gap(prob, state)
            assert gap >= -1e-9


# -- convergence ----------------------------------------------------------------


def test_single_pixel_reaches_hull_minimum():
    # labels 0, 0.25, ..., 1 with subgrid 8 sample z on a 1/32 grid; the hull of
    # the samples bottoms out at the sample closest to 0.37, namely 0.375
    prob = flat_problem([0.37])
    v, diag, _ = solve(prob, gap_tol=1e-10, max_iter=20000)
    assert diag.converged
    best = (0.375 - 0.37) ** 2
    assert diag.primal == pytest.approx(best, abs=1e-8)
    assert diag.dual == pytest.approx(best, abs=1e-8)
    u, _ = unlift_field(v, prob.tri)
    assert u[0, 0] == pytest.approx(0.375, abs=1e-6)


def test_fixed_point_after_convergence():
    prob = flat_problem([0.37, 0.8])
    _, diag, state = solve(prob, gap_tol=1e-13, max_iter=20000)
    before = {k: val.copy() for k, val in state.primal().items()}
    pdhg_step(prob, state)
    change = max(np.abs(state.primal()[k] - before[k]).max() for k in before)
    assert change < 1e-10


def test_unpreconditioned_steps_are_safe():
    prob = circle_problem(np.linspace(-3, 3, 6))
    state = assemble(prob, "off")
    nK = state.norm_K
    assert state.sigma["p"] * state.tau["v"] * nK**2 <= 1.0
    _, diag, _ = solve(prob, max_iter=2000, check_every=100, state=state)
    gaps = np.array([t[3] for t in diag.trace])
    assert np.all(np.isfinite(gaps))
    assert gaps.max() <= gaps[0] + 1e-12


@pytest.mark.parametrize("precond", ["off", "diag"])
def test_circle_signal_certifies(precond):
    rng = np.random.default_rng(0)
    truth = np.where(np.arange(20) < 10, 0.5, 2.5)
    obs = truth + 0.3 * rng.standard_normal(20)
    prob = circle_problem(obs, L=8, reg=RegularizerSpec("tv", 0.5))
    v, diag, _ = solve(prob, precond=precond)
    assert diag.converged and diag.gap < 1e-5
    assert diag.iterations <= 20000


def test_lellmann_solve_certifies():
    tri = build_circle(8)
    obs = Circle.from_angle(np.linspace(0, 3, 12))
    v, diag, _ = solve_lellmann_tv(tri, DataTermSpec("quadratic_distance", obs), RegularizerSpec("tv", 0.3), (12,))
    assert diag.converged
    np.testing.assert_allclose(v.sum(axis=1), 1.0, atol=1e-9)


def test_invalid_precond():
    with pytest.raises(ValueError):
        assemble(flat_problem([0.5]), "jacobi")
