"""Exact low-dimensional Euclidean projections.

All functions are batched: the trailing axis (or the trailing two axes for
spectral-norm balls) is one instance, leading axes are independent.
"""

from dataclasses import dataclass

import numba
import numpy as np


class InfeasibleError(ValueError):
    pass


def project_simplex(v):
    """Projection onto {x >= 0, sum x = 1} along the last axis (sort and threshold)."""
    v = np.asarray(v, float)
    n = v.shape[-1]
    u = -np.sort(-v, axis=-1)
    css = np.cumsum(u, axis=-1) - 1.0
    ind = np.arange(1, n + 1)
    cond = u - css / ind > 0
    rho = n - 1 - np.argmax(cond[..., ::-1], axis=-1)
    theta = np.take_along_axis(css, rho[..., None], axis=-1) / (rho[..., None] + 1.0)
    return np.maximum(v - theta, 0.0)


def project_ball(zeta, radius, norm="frobenius"):
    """Projection onto the radius ball of the Frobenius (vector) or spectral norm."""
    zeta = np.asarray(zeta, float)
    if norm == "frobenius":
        nrm = np.linalg.norm(zeta, axis=-1, keepdims=True)
        return zeta * np.minimum(1.0, radius / np.maximum(nrm, 1e-300))
    if norm == "spectral":
        U, S, Vt = np.linalg.svd(zeta, full_matrices=False)
        S = np.minimum(S, radius)
        return np.einsum("...ik,...k,...kj->...ij", U, S, Vt)
    raise ValueError(f"unknown norm {norm!r}")


@numba.vectorize(["float64(float64, float64, float64)"], cache=True)
def _parabola_radius_scalar(r0, t0, c):
    a3 = 0.5 * c * c
    a1 = 1.0 - c * t0
    lo, hi = 0.0, r0
    r = r0
    tol = 1e-13 * max(1.0, r0)
    for _ in range(200):
        f = a3 * r * r * r + a1 * r - r0
        if abs(f) <= tol:
            break
        if f > 0:
            hi = r
        else:
            lo = r
        fp = 3.0 * a3 * r * r + a1
        newton = r - f / fp if fp > 0 else lo - 1.0
        r = newton if lo < newton < hi else 0.5 * (lo + hi)
        if hi - lo <= 1e-16 * max(1.0, r0):
            break
    return r


def _parabola_radius(r0, t0, c):
    """Unique root in [0, r0] of (c^2/2) r^3 + (1 - c t0) r - r0 (Newton from r0, bisection guard)."""
    return _parabola_radius_scalar(np.asarray(r0, float), np.asarray(t0, float), np.asarray(c, float))


def project_parabola_epi(zeta, t, c):
    """Projection of (zeta, t) onto {(z, t): c |z|^2 / 2 <= t}."""
    zeta = np.asarray(zeta, float)
    t = np.asarray(t, float)
    c = np.broadcast_to(np.asarray(c, float), t.shape)
    r0 = np.linalg.norm(zeta, axis=-1)
    feas = 0.5 * c * r0**2 <= t
    r = _parabola_radius(r0, t, c)
    r = np.where(feas, r0, r)
    tz = np.where(feas, t, 0.5 * c * r**2)
    scale = np.where(r0 > 0, r / np.where(r0 > 0, r0, 1.0), 0.0)
    return zeta * scale[..., None], tz


def project_truncated_parabola_epi(zeta, t, c, radius):
    """Projection onto {(z, t): c |z|^2 / 2 <= t, |z| <= radius}."""
    zeta = np.asarray(zeta, float)
    t = np.asarray(t, float)
    c = np.broadcast_to(np.asarray(c, float), t.shape)
    R = np.broadcast_to(np.asarray(radius, float), t.shape)
    r0 = np.linalg.norm(zeta, axis=-1)
    feas = (0.5 * c * r0**2 <= t) & (r0 <= R)
    # candidate on the parabola arc
    ra = np.where(0.5 * c * r0**2 <= t, r0, _parabola_radius(r0, t, c))
    ta = np.where(0.5 * c * r0**2 <= t, t, 0.5 * c * ra**2)
    da = np.where(ra <= R, (ra - r0) ** 2 + (ta - t) ** 2, np.inf)
    # candidate on the vertical wall (includes the rim corner)
    tw = np.maximum(t, 0.5 * c * R**2)
    dw = (R - r0) ** 2 + (tw - t) ** 2
    use_arc = da <= dw
    r = np.where(feas, r0, np.where(use_arc, ra, R))
    tz = np.where(feas, t, np.where(use_arc, ta, tw))
    scale = np.where(r0 > 0, r / np.where(r0 > 0, r0, 1.0), 0.0)
    return zeta * scale[..., None], tz


@dataclass(frozen=True)
class HalfspaceSet:
    """Constraints <normals[j], x> <= offsets[j]."""

    normals: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        if np.any(np.linalg.norm(self.normals, axis=-1) == 0):
            raise ValueError("halfspace normals must be nonzero")

    def violation(self, x):
        return np.max(self.normals @ x - self.offsets)


@numba.njit(cache=True)
def _small_solve(G, rhs, n, out, M):
    """Gaussian elimination with partial pivoting on the leading n x n block; M is scratch."""
    for i in range(n):
        for j in range(n):
            M[i, j] = G[i, j]
        M[i, n] = rhs[i]
    for k in range(n):
        piv = k
        for i in range(k + 1, n):
            if abs(M[i, k]) > abs(M[piv, k]):
                piv = i
        if piv != k:
            for j in range(n + 1):
                M[k, j], M[piv, j] = M[piv, j], M[k, j]
        for i in range(k + 1, n):
            f = M[i, k] / M[k, k]
            for j in range(k, n + 1):
                M[i, j] -= f * M[k, j]
    for i in range(n - 1, -1, -1):
        acc = M[i, n]
        for j in range(i + 1, n):
            acc -= M[i, j] * out[j]
        out[i] = acc / M[i, i]


@numba.njit(cache=True)
def _gi_project(x0, A, b, J, tol, out, active, u, r, z, G, rhs, M):
    """Dual active-set (Goldfarb-Idnani) projection of x0 onto {A x <= b}.

    The trailing arguments are scratch space; ``active`` holds the final active
    set on return. Returns (status, n_active) with status 0 on success, 1 if
    infeasible, 2 if the iteration cap is hit.
    """
    m = x0.shape[0]
    x = out
    for i in range(m):
        x[i] = x0[i]
    na = 0
    for _outer in range(10 * J + 10):
        p = -1
        worst = tol
        for j in range(J):
            s = -b[j]
            for i in range(m):
                s += A[j, i] * x[i]
            if s > worst:
                worst = s
                p = j
        if p < 0:
            return 0, na
        up = 0.0
        nap = 0.0
        for i in range(m):
            nap += A[p, i] * A[p, i]
        for _inner in range(10 * J + 10):
            if na > 0:
                for i in range(na):
                    rhs[i] = 0.0
                    for k in range(m):
                        rhs[i] += A[active[i], k] * A[p, k]
                    for j in range(na):
                        g = 0.0
                        for k in range(m):
                            g += A[active[i], k] * A[active[j], k]
                        G[i, j] = g
                _small_solve(G, rhs, na, r, M)
            for k in range(m):
                z[k] = A[p, k]
                for i in range(na):
                    z[k] -= r[i] * A[active[i], k]
            zz = 0.0
            sp = -b[p]
            for k in range(m):
                zz += z[k] * z[k]
                sp += A[p, k] * x[k]
            t2 = np.inf
            if zz > 1e-14 * nap:
                t2 = max(sp, 0.0) / zz
            t1 = np.inf
            block = -1
            for i in range(na):
                if r[i] > 1e-14:
                    ratio = u[i] / r[i]
                    if ratio < t1:
                        t1 = ratio
                        block = i
            t = min(t1, t2)
            if t == np.inf:
                return 1, na
            for i in range(na):
                u[i] -= t * r[i]
            up += t
            if t2 < np.inf:
                for k in range(m):
                    x[k] -= t * z[k]
            if t2 <= t1:
                active[na] = p
                u[na] = up
                na += 1
                break
            # drop the blocking constraint
            for i in range(block, na - 1):
                active[i] = active[i + 1]
                u[i] = u[i + 1]
            na -= 1
        else:
            return 2, na
    return 2, na


@numba.njit(cache=True)
def _try_active_set(x0, A, b, J, S, ns, tol, out, lam, G, rhs, M):
    """Project onto {A_S x = b_S}; True if the result satisfies the full KKT conditions."""
    m = x0.shape[0]
    for i in range(ns):
        rhs[i] = -b[S[i]]
        for k in range(m):
            rhs[i] += A[S[i], k] * x0[k]
        for j in range(ns):
            g = 0.0
            for k in range(m):
                g += A[S[i], k] * A[S[j], k]
            G[i, j] = g
    if ns > 0:
        _small_solve(G, rhs, ns, lam, M)
    for i in range(ns):
        if not lam[i] >= -tol:
            return False
    for k in range(m):
        out[k] = x0[k]
        for i in range(ns):
            out[k] -= lam[i] * A[S[i], k]
    for j in range(J):
        s = -b[j]
        for k in range(m):
            s += A[j, k] * out[k]
        if s > tol:
            return False
    return True


@numba.njit(cache=True)
def _gi_project_batch(X0, A, B, counts, tol, out, status, hint, n_hint):
    m = X0.shape[1]
    active = np.empty(m + 1, dtype=np.int64)
    u = np.zeros(m + 1)
    r = np.zeros(m + 1)
    z = np.zeros(m)
    G = np.zeros((m + 1, m + 1))
    rhs = np.zeros(m + 1)
    M = np.zeros((m + 1, m + 2))
    for n in range(X0.shape[0]):
        if n_hint[n] >= 0 and _try_active_set(X0[n], A[n], B[n], counts[n], hint[n], n_hint[n], tol,
                                              out[n], r, G, rhs, M):
            status[n] = 0
            continue
        st, na = _gi_project(X0[n], A[n], B[n], counts[n], tol, out[n], active, u, r, z, G, rhs, M)
        status[n] = st
        if na <= m:
            n_hint[n] = na
            for i in range(na):
                hint[n, i] = active[i]
        else:
            n_hint[n] = -1


def project_halfspaces_batch(X0, A, B, counts=None, tol=1e-12, warm=None):
    """Batched projection: X0 (n, m), A (n, J, m), B (n, J), counts (n,) valid rows.

    ``warm`` is an optional (active, n_active) pair of int arrays of shapes
    (n, m) and (n,); it seeds each solve with the previous active set and is
    updated in place. Warm starts only skip work, the result is unchanged.
    """
    X0 = np.ascontiguousarray(X0, dtype=float)
    A = np.ascontiguousarray(A, dtype=float)
    B = np.ascontiguousarray(B, dtype=float)
    n, m = X0.shape
    if counts is None:
        counts = np.full(n, A.shape[1], dtype=np.int64)
    counts = np.ascontiguousarray(counts, dtype=np.int64)
    if warm is None:
        warm = (np.zeros((n, m), dtype=np.int64), np.full(n, -1, dtype=np.int64))
    out = np.empty_like(X0)
    status = np.zeros(n, dtype=np.int64)
    _gi_project_batch(X0, A, B, counts, tol, out, status, warm[0], warm[1])
    if np.any(status == 1):
        raise InfeasibleError("halfspace intersection is empty")
    if np.any(status == 2):
        raise RuntimeError("active-set projection hit its iteration cap")
    return out


def project_halfspace_intersection(x0, H):
    """Euclidean projection of x0 onto the intersection of the halfspaces in H."""
    x0 = np.asarray(x0, float)
    A = np.asarray(H.normals, float)
    out = project_halfspaces_batch(x0[None], A[None], np.asarray(H.offsets, float)[None])
    return out[0]
