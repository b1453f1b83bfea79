"""Projection of lifted fields back to the manifold.

A lifted field assigns each pixel weights over the labels Z^1..Z^L.  The
un-lifted value is the weighted Riemannian center of mass, computed by the
fixed-point iteration

    V^k = log_z(Z^k),  v = sum_k lambda_k V^k,  z <- exp_z(v)

started at the label of largest weight.  A step is halved while it would
increase the weighted energy, so the energy never increases.  On round
spheres a Riemannian Newton step replaces the plain step whenever it gives
lower energy, which matters when the weights are spread out and the energy
is nearly flat.

On the Klein bottle log is a chart difference, so the same iteration is the
chart mean of the nearest deck representatives.  There the monitored energy
is the matching chart energy sum_k lambda_k |rep_k - p|^2, and each step is
exact for fixed representatives.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .dataterm import convexify_samples, subgrid_barycentric
from .fem import simplex_operators
from .regularizer import RegularizerSpec

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MeanProblem:
    """Weights (L,) on anchor points (L, N) of a manifold geometry."""

    weights: np.ndarray
    anchors: np.ndarray
    geometry: object

    def __post_init__(self):
        w = np.asarray(self.weights, float)
        if w.ndim != 1 or w.shape[0] != np.shape(self.anchors)[0]:
            raise ValueError("need one weight per anchor")
        if np.any(w < -1e-9) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must lie in the unit simplex")


@dataclass
class MeanResult:
    point: np.ndarray
    iterations: int
    grad_norm: float
    flagged: bool
    energies: list = field(default_factory=list)


def weighted_energy(geom, z, anchors, weights):
    """sum_k lambda_k d(z, Z^k)^2 for z (..., N), weights (..., L)."""
    z = np.asarray(z, float)
    d = geom.dist(z[..., None, :], anchors)
    return np.sum(weights * d**2, axis=-1)


def _mean_direction(geom, z, anchors, weights):
    """Weighted mean of log_z(Z^k), skipping anchors on the cut locus of z."""
    Z = np.broadcast_to(z[:, None, :], (z.shape[0],) + anchors.shape)
    Y = np.broadcast_to(anchors, Z.shape)
    cut = geom.at_cut_locus(Z, Y) & (weights > 0)
    w = np.where(cut, 0.0, weights)
    tot = w.sum(axis=1, keepdims=True)
    w = w / np.where(tot > 0, tot, 1.0)
    V = geom.log(Z, Y)
    return np.einsum("pk,pkn->pn", w, V), cut.any(axis=1), V, w


def _newton_direction(z, V, weights, v):
    """Solve H d = v with the Riemannian Hessian of E/2 on round spheres.

    Returns d and a mask of rows where H is safely positive definite.
    """
    theta = np.linalg.norm(V, axis=-1)
    u = V / np.where(theta > 1e-300, theta, 1.0)[..., None]
    tc = np.where(theta > 1e-8, theta / np.tan(np.where(theta > 1e-8, theta, 1.0)), 1.0)
    N = z.shape[1]
    Pz = np.eye(N) - z[:, :, None] * z[:, None, :]
    uu = u[..., :, None] * u[..., None, :]
    Hk = uu + tc[..., None, None] * (Pz[:, None] - uu)
    H = np.einsum("pk,pkij->pij", weights, Hk)
    # make the normal direction harmless
    H = H + z[:, :, None] * z[:, None, :]
    ev = np.linalg.eigvalsh(H)
    ok = ev[:, 0] > 1e-6
    d = np.zeros_like(v)
    if np.any(ok):
        d[ok] = np.linalg.solve(H[ok], v[ok][..., None])[..., 0]
        d[ok] = np.einsum("pij,pj->pi", Pz[ok], d[ok])
    return d, ok


def klein_chart_mean(geom, params, weights, tol=1e-10, max_iter=200, track=False):
    """Chart mean on the Klein bottle from exact anchor parameters (L, 2).

    Same return layout as karcher_mean_batch, but the points are canonical
    chart parameters (P, 2).  Embedded points on the self-crossing circle of
    the immersion do not determine their parameters, these do.
    """
    W = np.asarray(weights, float)
    params = np.asarray(params, float)
    P = W.shape[0]
    p = params[np.argmax(W, axis=1)].copy()
    iters = np.zeros(P, dtype=int)
    trace = [] if track else None
    stack = np.broadcast_to(params, (P,) + params.shape)
    for it in range(max_iter + 1):
        reps = geom.nearest_rep(stack, p[:, None, :])
        # anchors with two equally near copies sit on the cut locus and are skipped
        cut = (W > 0) & (geom.rep_margin(stack, p[:, None, :]) < 1e-9)
        w = np.where(cut, 0.0, W)
        w = w / np.maximum(w.sum(axis=1, keepdims=True), 1e-300)
        step = np.einsum("pk,pkj->pj", w, reps - p[:, None, :])
        if track:
            trace.append(np.sum(W * np.sum((reps - p[:, None, :]) ** 2, axis=-1), axis=1))
        gnorm = np.linalg.norm(np.einsum("pij,pj->pi", geom.jacobian(p), step), axis=1)
        active = gnorm >= tol
        if not np.any(active) or it == max_iter:
            break
        p[active] = geom.canonical_params(p[active] + step[active])
        iters[active] += 1
    flagged = cut.any(axis=1)
    return p, iters, gnorm, flagged, trace


def karcher_mean_batch(geom, anchors, weights, tol=1e-10, max_iter=200, track=False, newton=True,
                       anchor_params=None):
    """Centers of mass for many weight vectors at once.

    anchors (L, N), weights (P, L).  Returns (points (P, N), iterations (P,),
    grad_norm (P,), flagged (P,), energies list of (P,) arrays if ``track``).
    ``anchor_params`` gives exact chart parameters of the anchors on the
    Klein bottle; without them they are located from the embedded points.
    """
    if geom.kind == "klein":
        params = geom.to_params(anchors) if anchor_params is None else np.asarray(anchor_params, float)
        p, iters, gnorm, flagged, trace = klein_chart_mean(geom, params, weights, tol, max_iter, track)
        return geom.embed(p), iters, gnorm, flagged, trace
    anchors = np.asarray(anchors, float)
    W = np.asarray(weights, float)
    P = W.shape[0]
    z = anchors[np.argmax(W, axis=1)].copy()
    iters = np.zeros(P, dtype=int)
    gnorm = np.full(P, np.inf)
    flagged = np.zeros(P, dtype=bool)
    active = np.ones(P, dtype=bool)
    E = weighted_energy(geom, z, anchors, W)
    trace = [E.copy()] if track else None
    for _ in range(max_iter + 1):
        ia = np.flatnonzero(active)
        if ia.size == 0:
            break
        v, cut, V, w = _mean_direction(geom, z[ia], anchors, W[ia])
        # only skips that affect the current point matter for the result
        flagged[ia] = cut
        nv = np.linalg.norm(v, axis=1)
        gnorm[ia] = nv
        done = nv < tol
        active[ia[done]] = False
        ia, v, V, w = ia[~done], v[~done], V[~done], w[~done]
        if ia.size == 0 or iters.max() >= max_iter:
            break
        t = np.ones(ia.size)
        znew = geom.exp(z[ia], v)
        Enew = weighted_energy(geom, znew, anchors, W[ia])
        if newton and geom.kind in ("circle", "sphere2", "so3"):
            d, ok = _newton_direction(z[ia], V, w, v)
            if np.any(ok):
                zn = geom.exp(z[ia[ok]], d[ok])
                En = weighted_energy(geom, zn, anchors, W[ia[ok]])
                better = En < Enew[ok]
                rows = np.flatnonzero(ok)[better]
                znew[rows], Enew[rows] = zn[better], En[better]
                v[rows] = d[rows]
        for _half in range(40):
            worse = Enew > E[ia] + 1e-13 * np.maximum(1.0, E[ia])
            if not np.any(worse):
                break
            t[worse] *= 0.5
            znew[worse] = geom.exp(z[ia[worse]], t[worse, None] * v[worse])
            Enew[worse] = weighted_energy(geom, znew[worse], anchors, W[ia[worse]])
        stuck = Enew > E[ia] + 1e-13 * np.maximum(1.0, E[ia])
        # a step that cannot decrease the energy means we are at numerical precision
        keep = ~stuck
        z[ia[keep]] = znew[keep]
        E[ia[keep]] = Enew[keep]
        iters[ia] += 1
        active[ia[stuck]] = False
        if track:
            trace.append(E.copy())
    if np.any(active):
        log.debug("%d means did not reach tol %.1e", int(active.sum()), tol)
    return z, iters, gnorm, flagged, trace


def karcher_mean(problem, tol=1e-10, max_iter=200):
    """Riemannian center of mass of a single MeanProblem."""
    W = np.asarray(problem.weights, float)[None]
    z, it, g, fl, trace = karcher_mean_batch(problem.geometry, problem.anchors, W, tol, max_iter, track=True)
    return MeanResult(z[0], int(it[0]), float(g[0]), bool(fl[0]), [float(e[0]) for e in trace])


def unlift_field(v, tri, tol=1e-10, max_iter=200):
    """Per-pixel center of mass of a lifted field v (P, L): returns (points, flagged)."""
    v = np.asarray(v, float)
    v = np.maximum(v, 0.0)
    v = v / v.sum(axis=1, keepdims=True)
    if tri.geometry.kind == "flat_box":
        return v @ tri.vertices, np.zeros(v.shape[0], dtype=bool)
    z, _, _, flagged, _ = karcher_mean_batch(tri.geometry, tri.vertices, v, tol, max_iter,
                                             anchor_params=tri.vertex_params)
    return z, flagged


def gradient_descent_mean(geom, points, weights, start, step=0.5, tol=1e-10, max_iter=10_000):
    """Riemannian gradient descent on E(z) = sum_i lambda_i d(x_i, z)^2 from ``start``."""
    points = np.asarray(points, float)
    weights = np.asarray(weights, float)
    z = np.asarray(start, float).copy()
    for it in range(max_iter):
        grad = -2.0 * np.einsum("i,in->n", weights, geom.log(np.broadcast_to(z, points.shape), points))
        g = np.linalg.norm(grad)
        if g < tol:
            return MeanResult(z, it, g, False)
        z = geom.exp(z, -step * grad)
    return MeanResult(z, max_iter, g, True)


def grid_mean_oracle(points, weights, n=100_000):
    """Global minimizer of the circle energy by dense angular search: (angle, energy)."""
    from .geometry import Circle

    theta = 2 * np.pi * np.arange(n) / n
    ang = Circle.to_angle(np.asarray(points, float))
    diff = np.abs((theta[:, None] - ang[None, :] + np.pi) % (2 * np.pi) - np.pi)
    E = (diff**2) @ np.asarray(weights, float)
    i = int(np.argmin(E))
    return theta[i], float(E[i])


def lifted_mean_demo(points, weights, n_labels=16, subgrid=8, max_iter=20000, gap_tol=1e-9):
    """Global weighted mean on the circle by a single-pixel lifted problem.

    The data term is rho(z) = sum_i lambda_i d(x_i, z)^2; there is no
    regularization since the domain has one pixel.
    """
    from .geometry import build_circle
    from .solver import LiftedProblem, solve

    points = np.asarray(points, float)
    weights = np.asarray(weights, float)
    tri = build_circle(n_labels)
    ops = simplex_operators(tri)
    bary = subgrid_barycentric(1, subgrid)
    samples = tri.iota(np.arange(tri.n_simplices)[:, None], bary[None])
    rho = weighted_energy(tri.geometry, samples, points, weights)[None]
    data = convexify_samples(tri, bary, rho, ops)
    # any regularizer works: a single pixel has no spatial differences
    prob = LiftedProblem((1,), tri, RegularizerSpec("tv", 1.0), data=data, ops=ops)
    v, diag, _ = solve(prob, max_iter=max_iter, gap_tol=gap_tol, check_every=100)
    z, _ = unlift_field(v, tri)
    return z[0], diag
