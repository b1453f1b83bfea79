"""First-order finite elements on a triangulated range M_h."""

from dataclasses import dataclass

import numpy as np

from .geometry import barycentric_locate


class DegenerateSimplexError(ValueError):
    pass


@dataclass(frozen=True)
class SimplexFrame:
    """Linear map P (s x N) from R^N to s coordinates on one simplex.

    ``variant`` is "orthonormal" (rows span the simplex directions) or
    "logmap" (coordinates of the tangent space at ``base_point`` in which the
    log-mapped vertices ``mapped`` carry the nodal values).
    """

    P: np.ndarray
    variant: str = "orthonormal"
    base_point: np.ndarray = None
    mapped: np.ndarray = None
    alpha: float = None


def _edge_matrix(tri, T):
    pts = tri.simplex_points[T]
    return pts, pts[1:] - pts[0]


def simplex_frame(tri, T):
    pts, E = _edge_matrix(tri, T)
    Q, R = np.linalg.qr(E.T)
    scale = max(np.abs(E).max(), 1.0)
    diag = np.diag(R)
    if np.any(np.abs(diag) <= 1e-12 * scale):
        raise DegenerateSimplexError(f"simplex {T} has rank < {tri.dim}")
    # fix signs so each row has positive overlap with its edge
    Q = Q * np.sign(diag)
    return SimplexFrame(P=Q.T.copy())


def logmap_frame(tri, T):
    """Frame built from the log-mapped vertices around the simplex midpoint."""
    ortho = simplex_frame(tri, T)
    geom = tri.geometry
    if geom.kind == "flat_box":
        return SimplexFrame(P=ortho.P, variant="logmap", base_point=tri.simplex_points[T].mean(0),
                            mapped=tri.simplex_points[T] - tri.simplex_points[T].mean(0), alpha=1.0)
    s = tri.dim
    pts = tri.simplex_points[T]
    y = tri.iota(T, np.full(s + 1, 1.0 / (s + 1)))
    if np.any(geom.at_cut_locus(y, pts)):
        raise ValueError(f"simplex {T} leaves the injectivity radius of its midpoint")
    v = geom.log(y, pts)
    B = np.einsum("ij,kj->ki", geom.tangent_projector(y), ortho.P)
    Q, R = np.linalg.qr(B.T)
    Q = Q * np.sign(np.diag(R))
    c = v @ Q
    w = pts @ ortho.P.T
    dc = c[1:] - c[0]
    dw = w[1:] - w[0]
    A = np.linalg.solve(dc, dw)
    alpha = None
    if s == 1:
        alpha = float(geom.dist(pts[0], pts[1]) / np.linalg.norm(pts[0] - pts[1]))
    return SimplexFrame(P=A @ ortho.P, variant="logmap", base_point=y, mapped=v, alpha=alpha)


def _nodal_values(tri, T, nodal):
    nodal = np.asarray(nodal, float)
    vals = nodal[tri.simplices[T]]
    return vals if vals.ndim == 2 else vals[:, None]


def simplex_gradient(tri, T, nodal):
    """Extrinsic gradient (N x d) of the affine interpolant of ``nodal`` on T."""
    P = simplex_frame(tri, T).P
    pts = tri.simplex_points[T]
    f = _nodal_values(tri, T, nodal)
    dw = (pts[1:] - pts[0]) @ P.T
    G = np.linalg.solve(dw, f[1:] - f[0])
    return P.T @ G


def affine_coeffs(tri, T, nodal):
    """(q1, q2) with <q1, Z_T^k> + q2 = nodal value, q1 in the simplex direction space."""
    q1 = simplex_gradient(tri, T, np.asarray(nodal, float))[:, 0]
    pts = tri.simplex_points[T]
    f = _nodal_values(tri, T, nodal)[:, 0]
    q2 = float(np.mean(f - pts @ q1))
    return q1, q2


def nodal_basis_eval(tri, k, z, tol=1e-8):
    """Hat function chi_k at a point z of M_h."""
    z = np.asarray(z, float)
    T, w = barycentric_locate(tri, z)
    pts = tri.simplex_points[T]
    res = min(np.linalg.norm(w @ pts - z), np.linalg.norm(w @ pts + z)) if tri.geometry.kind == "so3" \
        else np.linalg.norm(w @ pts - z)
    if res > tol:
        raise ValueError(f"point is {res:.2e} away from the mesh")
    hit = np.flatnonzero(tri.simplices[T] == k)
    return float(w[hit[0]]) if hit.size else 0.0


@dataclass(frozen=True)
class SimplexOperators:
    """Stacked per-simplex linear maps used by the solver.

    Local coordinates are taken relative to each simplex centroid, so for a
    nodal vector f on T the affine interpolant is <g, w> + c with
    [g; c] = Minv @ f and c the mean of f.

    idx:    (nT, s+1) vertex indices
    P:      (nT, s, N) orthonormal frames
    W:      (nT, s+1, s) local vertex coordinates
    Minv:   (nT, s+1, s+1)
    Dreg:   (nT, s, s+1) nodal values -> regularizer gradient coordinates
    """

    idx: np.ndarray
    P: np.ndarray
    W: np.ndarray
    Minv: np.ndarray
    Dreg: np.ndarray
    centroid: np.ndarray
    frame: str

    @property
    def loc(self):
        s = self.P.shape[1]
        return self.Minv[:, :s, :]

    @property
    def off(self):
        s = self.P.shape[1]
        return self.Minv[:, s, :]


def simplex_operators(tri, frame="ortho"):
    if frame not in ("ortho", "logmap"):
        raise ValueError(f"unknown frame {frame!r}")
    s = tri.dim
    nT = tri.n_simplices
    P = np.stack([simplex_frame(tri, T).P for T in range(nT)])
    pts = tri.simplex_points
    centroid = pts.mean(axis=1)
    W = np.einsum("tin,tkn->tki", P, pts - centroid[:, None, :])
    M = np.concatenate([W, np.ones((nT, s + 1, 1))], axis=2)
    Minv = np.linalg.inv(M)
    Dreg = Minv[:, :s, :].copy()
    if frame == "logmap":
        for T in range(nT):
            A = logmap_frame(tri, T).P @ P[T].T
            Dreg[T] = A @ Dreg[T]
    return SimplexOperators(tri.simplices.copy(), P, W, Minv, Dreg, centroid, frame)
