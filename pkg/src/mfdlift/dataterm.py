"""Sublabel-accurate data terms.

For each pixel x and simplex T the data term z -> rho(x, iota(z)) is sampled
on a barycentric subgrid of T, replaced by the lower convex hull of the
samples, and its conjugate is represented by the hull vertices (w_j, h_j):

    rho_hat_T^*(g) = max_j <w_j, g> - h_j,

so that rho_hat_T^*(g) <= b is the polyhedron <w_j, g> - b <= h_j.
Local coordinates w are taken in the orthonormal simplex frame relative to
the simplex centroid (see :func:`mfdlift.fem.simplex_operators`).
"""

import itertools
from dataclasses import dataclass

import numba
import numpy as np
from scipy.spatial import ConvexHull, QhullError

from . import proxkit
from .fem import simplex_operators

# finite stand-in for the hard constraint of known inpainting pixels
INPAINT_CAP = 1e4


@dataclass(frozen=True)
class DataTermSpec:
    """kind: "quadratic_distance" or "inpainting_indicator".

    ``observed`` holds one point of M per pixel (pixels flattened).  For
    inpainting, ``mask`` is True where the value is unknown (rho = 0 there).
    """

    kind: str
    observed: np.ndarray
    mask: np.ndarray = None
    subgrid_level: int = 4

    def __post_init__(self):
        if self.kind not in ("quadratic_distance", "inpainting_indicator"):
            raise ValueError(f"unknown data term {self.kind!r}")
        if int(self.subgrid_level) != self.subgrid_level or self.subgrid_level < 1:
            raise ValueError("subgrid_level must be an integer >= 1")
        if self.kind == "inpainting_indicator" and self.mask is None:
            raise ValueError("inpainting needs a mask")
        if self.mask is not None and np.shape(self.mask) != np.shape(self.observed)[:1]:
            raise ValueError("mask must have one entry per pixel")

    @property
    def n_pixels(self):
        return np.shape(self.observed)[0]


def subgrid_barycentric(s, k):
    """All barycentric points with denominators k on an s-simplex, (C(k+s, s), s+1)."""
    pts = [c for c in itertools.product(range(k + 1), repeat=s + 1) if sum(c) == k]
    pts.sort(key=lambda c: tuple(-ci for ci in c))
    return np.array(pts, dtype=float) / k


def _sample_points(tri, k):
    bary = subgrid_barycentric(tri.dim, k)
    T = np.arange(tri.n_simplices)[:, None]
    return bary, tri.iota(T, bary[None, :, :])


def _distances(tri, observed, samples, bary):
    """d(observed[x], samples[T, j]) as an array (P, nT, J)."""
    geom = tri.geometry
    obs = np.asarray(observed, float)
    if geom.kind == "klein":
        # sample parameters are known exactly; observations are located by search
        po = geom.to_params(obs)
        ps = tri.iota_params(np.arange(tri.n_simplices)[:, None], bary[None]).reshape(-1, 2)
        d = geom.dist_params(po[:, None, :], ps[None, :, :])
        return d.reshape(obs.shape[0], *samples.shape[:2])
    return geom.dist(obs[:, None, None, :], samples[None, :, :, :])


def sample_values(spec, tri):
    """rho at every subgrid sample: returns (bary (J, s+1), rho (P, nT, J))."""
    bary, samples = _sample_points(tri, spec.subgrid_level)
    d = _distances(tri, spec.observed, samples, bary)
    if spec.kind == "quadratic_distance":
        return bary, d**2
    rho = np.full(d.shape, INPAINT_CAP)
    dmin = d.reshape(d.shape[0], -1).min(axis=1)
    rho[d <= dmin[:, None, None] + 1e-9] = 0.0
    rho[np.asarray(spec.mask, bool)] = 0.0
    return bary, rho


def sample_data_term(spec, tri, x, T):
    """Samples of rho(x, iota(.)) on simplex T: (local coords (J, s), values (J,))."""
    ops = simplex_operators(tri)
    bary, rho = sample_values(spec, tri)
    return bary @ ops.W[T], rho[x, T]


@dataclass(frozen=True)
class HullEntry:
    """Lower convex hull of samples on one simplex.

    points/heights: hull vertices (w_j, h_j); slopes/intercepts: affine pieces
    whose maximum is the convex envelope on the simplex.
    """

    points: np.ndarray
    heights: np.ndarray
    slopes: np.ndarray
    intercepts: np.ndarray

    @property
    def halfspaces(self):
        m = self.points.shape[0]
        normals = np.concatenate([self.points, -np.ones((m, 1))], axis=1)
        return proxkit.HalfspaceSet(normals, self.heights.copy())

    def conj(self, g):
        return np.max(self.points @ np.asarray(g, float) - self.heights)

    def __call__(self, w):
        w = np.asarray(w, float)
        return np.max(w @ self.slopes.T + self.intercepts, axis=-1)


def _lower_hull_1d(x, h):
    order = np.argsort(x, kind="stable")
    keep = []
    for i in order:
        while len(keep) >= 2:
            a, b = keep[-2], keep[-1]
            cross = (x[b] - x[a]) * (h[i] - h[a]) - (h[b] - h[a]) * (x[i] - x[a])
            if cross <= 0:
                keep.pop()
            else:
                break
        keep.append(i)
    return np.array(keep)


def convexify(points, values):
    """Lower convex hull of samples (points (J, s), values (J,)) as a HullEntry."""
    w = np.asarray(points, float)
    h = np.asarray(values, float)
    J, s = w.shape
    if J < s + 1:
        raise ValueError("need at least s + 1 samples")
    X = np.concatenate([w, np.ones((J, 1))], axis=1)
    if np.linalg.matrix_rank(X) < s + 1:
        raise ValueError("sample locations are affinely degenerate")
    if s == 1:
        keep = _lower_hull_1d(w[:, 0], h)
        xs, hs = w[keep, 0], h[keep]
        slopes = np.diff(hs) / np.diff(xs)
        return HullEntry(w[keep], hs.copy(), slopes[:, None], hs[:-1] - slopes * xs[:-1])
    coef, *_ = np.linalg.lstsq(X, h, rcond=None)
    scale = 1.0 + np.ptp(h)
    if np.max(np.abs(X @ coef - h)) <= 1e-10 * scale:
        # affine data: the hull is one facet spanned by the simplex corners
        corners = _corner_indices(w)
        return HullEntry(w[corners], h[corners], coef[None, :s], coef[s:])
    try:
        hull = ConvexHull(np.concatenate([w, h[:, None]], axis=1))
    except QhullError:
        jitter = 1e-12 * scale * np.cos(np.arange(J) * 12.9898)
        hull = ConvexHull(np.concatenate([w, (h + jitter)[:, None]], axis=1), qhull_options="QJ")
    eq = hull.equations
    lower = eq[:, s] < -1e-12
    verts = np.unique(hull.simplices[lower])
    nh = eq[lower, s]
    return HullEntry(w[verts], h[verts], -eq[lower, :s] / nh[:, None], -eq[lower, s + 1] / nh)


def _corner_indices(w):
    J, s = w.shape
    # extreme points of the sample cloud are the simplex corners
    hull = ConvexHull(w) if s >= 2 else None
    return np.unique(hull.vertices) if hull is not None else np.array([np.argmin(w[:, 0]), np.argmax(w[:, 0])])


@numba.njit(cache=True)
def _lower_hull_1d_batch(x, H, keep):
    """x: (nT, J) sorted coordinates, H: (P, nT, J); marks lower-hull points in keep."""
    P, nT, J = H.shape
    stack = np.empty(J, dtype=np.int64)
    for p in range(P):
        for t in range(nT):
            top = 0
            for i in range(J):
                while top >= 2:
                    a = stack[top - 2]
                    b = stack[top - 1]
                    cross = (x[t, b] - x[t, a]) * (H[p, t, i] - H[p, t, a]) - (H[p, t, b] - H[p, t, a]) * (
                        x[t, i] - x[t, a]
                    )
                    if cross <= 0:
                        top -= 1
                    else:
                        break
                stack[top] = i
                top += 1
            for i in range(top):
                keep[p, t, stack[i]] = True


@dataclass(frozen=True)
class ConvexifiedDataTerm:
    """Padded per-(pixel, simplex) hull data.

    hull_w (P, nT, K, s), hull_h (P, nT, K) with +inf padding and hull_count
    valid rows; facet_a (P, nT, F, s), facet_b (P, nT, F) with -inf padding.
    """

    local: np.ndarray
    rho: np.ndarray
    hull_w: np.ndarray
    hull_h: np.ndarray
    hull_count: np.ndarray
    facet_a: np.ndarray
    facet_b: np.ndarray

    @property
    def shape(self):
        return self.hull_h.shape[:2]

    def entry(self, x, T):
        n = self.hull_count[x, T]
        fa = self.facet_a[x, T]
        fb = self.facet_b[x, T]
        ok = np.isfinite(fb)
        return HullEntry(self.hull_w[x, T, :n], self.hull_h[x, T, :n], fa[ok], fb[ok])

    def conj(self, g):
        """rho_hat^*(g) for g of shape (P, nT, s)."""
        return np.max(np.einsum("xtks,xts->xtk", self.hull_w, g) - self.hull_h, axis=-1)

    def perspective(self, first_moment, mass):
        """mass * rho_hat(first_moment / mass); both args are per (P, nT)."""
        ok = np.isfinite(self.facet_b)
        b = np.where(ok, self.facet_b, 0.0)
        vals = np.einsum("xtfs,xts->xtf", self.facet_a, first_moment) + b * mass[..., None]
        vals = np.where(ok, vals, -np.inf)
        return np.where(mass > 0, vals.max(axis=-1), 0.0)


def convexify_all(spec, tri, ops=None):
    """Sample and convexify the data term for every (pixel, simplex)."""
    bary, rho = sample_values(spec, tri)
    return convexify_samples(tri, bary, rho, ops)


def convexify_samples(tri, bary, rho, ops=None):
    """Convexify precomputed samples rho (P, nT, J) taken at barycentric points bary (J, s+1)."""
    if ops is None:
        ops = simplex_operators(tri)
    local = np.einsum("jk,tks->tjs", bary, ops.W)
    P, nT, J = rho.shape
    s = tri.dim
    if s == 1:
        order = np.argsort(local[:, :, 0], axis=1)
        xs = np.take_along_axis(local[:, :, 0], order, axis=1)
        Hs = np.take_along_axis(rho, np.broadcast_to(order, rho.shape), axis=2)
        keep = np.zeros(rho.shape, dtype=bool)
        _lower_hull_1d_batch(np.ascontiguousarray(xs), np.ascontiguousarray(Hs), keep)
        K = int(keep.sum(-1).max())
        rank = np.cumsum(keep, axis=-1) - 1
        hull_w = np.zeros((P, nT, K, 1))
        hull_h = np.full((P, nT, K), np.inf)
        pi, ti, ji = np.nonzero(keep)
        hull_w[pi, ti, rank[pi, ti, ji], 0] = xs[ti, ji]
        hull_h[pi, ti, rank[pi, ti, ji]] = Hs[pi, ti, ji]
        count = keep.sum(-1)
        facet_a = np.zeros((P, nT, K - 1, 1)) if K > 1 else np.zeros((P, nT, 1, 1))
        facet_b = np.full(facet_a.shape[:3], -np.inf)
        F = facet_a.shape[2]
        for f in range(min(F, K - 1)):
            ok = count > f + 1
            x0, x1 = hull_w[..., f, 0], hull_w[..., f + 1, 0]
            h0, h1 = hull_h[..., f], hull_h[..., f + 1]
            with np.errstate(invalid="ignore", divide="ignore"):
                slope = (h1 - h0) / (x1 - x0)
            facet_a[..., f, 0] = np.where(ok, slope, 0.0)
            facet_b[..., f] = np.where(ok, h0 - slope * x0, -np.inf)
        return ConvexifiedDataTerm(local, rho, hull_w, hull_h, count, facet_a, facet_b)

    entries = [[convexify(local[t], rho[p, t]) for t in range(nT)] for p in range(P)]
    K = max(e.points.shape[0] for row in entries for e in row)
    F = max(e.slopes.shape[0] for row in entries for e in row)
    hull_w = np.zeros((P, nT, K, s))
    hull_h = np.full((P, nT, K), np.inf)
    count = np.zeros((P, nT), dtype=np.int64)
    facet_a = np.zeros((P, nT, F, s))
    facet_b = np.full((P, nT, F), -np.inf)
    for p, row in enumerate(entries):
        for t, e in enumerate(row):
            n = e.points.shape[0]
            hull_w[p, t, :n] = e.points
            hull_h[p, t, :n] = e.heights
            count[p, t] = n
            f = e.slopes.shape[0]
            facet_a[p, t, :f] = e.slopes
            facet_b[p, t, :f] = e.intercepts
    return ConvexifiedDataTerm(local, rho, hull_w, hull_h, count, facet_a, facet_b)


def project_rho_conj_epi(entry, g0, b0):
    """Projection of (g0, b0) onto {(g, b): rho_hat^*(g) <= b}."""
    x = proxkit.project_halfspace_intersection(np.append(np.asarray(g0, float), b0), entry.halfspaces)
    return x[:-1], x[-1]


def lellmann_mode_data(spec, tri, x=None):
    """rho(x, Z^k) for all labels k; all pixels when x is None."""
    obs = np.asarray(spec.observed, float)
    sel = obs if x is None else obs[[x]]
    geom = tri.geometry
    if geom.kind == "klein":
        d = geom.dist_params(geom.to_params(sel)[:, None, :], tri.vertex_params[None])
    else:
        d = geom.dist(sel[:, None, :], tri.vertices[None, :, :])
    if spec.kind == "quadratic_distance":
        out = d**2
    else:
        out = np.where(d <= d.min(axis=1, keepdims=True) + 1e-9, 0.0, INPAINT_CAP)
        mask = np.asarray(spec.mask, bool) if x is None else np.asarray(spec.mask, bool)[[x]]
        out[mask] = 0.0
    return out if x is None else out[0]
