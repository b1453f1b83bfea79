"""Embedded manifolds and their simplicial approximations.

Every manifold here is realized inside some R^N; points are arrays whose last
axis has length N and all maps broadcast over leading axes.
"""

import itertools

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

GOLDEN = (1.0 + np.sqrt(5.0)) / 2.0

# below this tangent norm two sphere points count as equal or antipodal
_CUT_TOL = 1e-12


def _norm(x, keepdims=False):
    return np.linalg.norm(x, axis=-1, keepdims=keepdims)


def _dot(x, y, keepdims=False):
    return np.sum(x * y, axis=-1, keepdims=keepdims)


def _lexmin_tangent(z):
    """Unit tangent direction t at z making -t lexicographically smallest."""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    done = np.zeros(z.shape[:-1], dtype=bool)
    for i in range(z.shape[-1]):
        e = np.zeros(z.shape[-1])
        e[i] = 1.0
        t = e - z[..., i : i + 1] * z
        nt = _norm(t, keepdims=True)
        ok = (nt[..., 0] > 1e-8) & ~done
        out[ok] = t[ok] / nt[ok]
        done |= ok
    return out


def _sphere_log(z, y):
    z, y = np.broadcast_arrays(np.asarray(z, float), np.asarray(y, float))
    c = _dot(z, y, keepdims=True)
    u = y - c * z
    nu = _norm(u, keepdims=True)
    theta = np.arctan2(nu, c)
    scale = np.where(nu > _CUT_TOL, theta / np.where(nu > _CUT_TOL, nu, 1.0), 1.0)
    out = scale * u
    cut = (nu[..., 0] <= _CUT_TOL) & (c[..., 0] < 0)
    if np.any(cut):
        # deterministic tie-break: lexicographically smallest vector of length pi
        out = np.array(out)
        out[cut] = -np.pi * _lexmin_tangent(z[cut])
    return out


def _sphere_exp(z, v):
    z = np.asarray(z, float)
    v = np.asarray(v, float)
    theta = _norm(v, keepdims=True)
    sinc = np.where(theta > 1e-300, np.sin(theta) / np.where(theta > 1e-300, theta, 1.0), 1.0)
    y = np.cos(theta) * z + sinc * v
    return y / _norm(y, keepdims=True)


def _sphere_dist(z, y):
    c = _dot(z, y, keepdims=True)
    u = y - c * z
    return np.arctan2(_norm(u), c[..., 0])


class ManifoldGeometry:
    """Base class: an s-dimensional manifold inside R^N.

    Subclasses provide closed-form (or documented approximate) exponential,
    logarithm and distance maps plus a closest-point map onto the manifold.
    """

    kind = None
    intrinsic_dim = None
    embed_dim = None

    def exp(self, z, v):
        raise NotImplementedError

    def log(self, z, y):
        raise NotImplementedError

    def dist(self, z, y):
        raise NotImplementedError

    def project_to_manifold(self, y):
        raise NotImplementedError

    def tangent_projector(self, z):
        """Orthogonal projector onto T_z M, shape (..., N, N)."""
        raise NotImplementedError

    def at_cut_locus(self, z, y):
        """True where log_z(y) is not uniquely defined."""
        z, y = np.broadcast_arrays(np.asarray(z, float), np.asarray(y, float))
        return np.zeros(z.shape[:-1], dtype=bool)

    def off_manifold_distance(self, y):
        y = np.asarray(y, float)
        return _norm(y - self.project_to_manifold(y))

    def __repr__(self):
        return f"{type(self).__name__}(s={self.intrinsic_dim}, N={self.embed_dim})"


class _RoundSphere(ManifoldGeometry):
    def exp(self, z, v):
        return _sphere_exp(z, v)

    def log(self, z, y):
        return _sphere_log(z, y)

    def dist(self, z, y):
        return _sphere_dist(z, y)

    def project_to_manifold(self, y):
        y = np.asarray(y, float)
        return y / _norm(y, keepdims=True)

    def tangent_projector(self, z):
        z = np.asarray(z, float)
        return np.eye(z.shape[-1]) - z[..., :, None] * z[..., None, :]

    def at_cut_locus(self, z, y):
        z, y = np.broadcast_arrays(np.asarray(z, float), np.asarray(y, float))
        c = _dot(z, y)
        return (_norm(y - c[..., None] * z) <= _CUT_TOL) & (c < 0)


class Circle(_RoundSphere):
    """The unit circle in R^2."""

    kind = "circle"
    intrinsic_dim = 1
    embed_dim = 2

    @staticmethod
    def from_angle(theta):
        theta = np.asarray(theta, float)
        return np.stack([np.cos(theta), np.sin(theta)], axis=-1)

    @staticmethod
    def to_angle(z):
        z = np.asarray(z, float)
        return np.arctan2(z[..., 1], z[..., 0])


class Sphere2(_RoundSphere):
    """The unit sphere in R^3."""

    kind = "sphere2"
    intrinsic_dim = 2
    embed_dim = 3


def canonical_quaternion(q):
    """Flip sign so the first coordinate with |q_i| > 1e-12 is positive."""
    q = np.array(q, dtype=float)
    nz = np.abs(q) > 1e-12
    first = np.argmax(nz, axis=-1)
    lead = np.take_along_axis(q, first[..., None], axis=-1)
    return np.where(lead < 0, -q, q)


class SO3(ManifoldGeometry):
    """Rotations as unit quaternions modulo sign.

    Distances are angles on S^3 after choosing the closer of +-y, i.e.
    arccos |<z, y>|, which is half the rotation angle between z and y.
    Results of exp and project_to_manifold are sign-canonicalized.
    """

    kind = "so3"
    intrinsic_dim = 3
    embed_dim = 4

    @staticmethod
    def _align(z, y):
        s = np.where(_dot(z, y, keepdims=True) < 0, -1.0, 1.0)
        return s * y

    def exp(self, z, v):
        return canonical_quaternion(_sphere_exp(z, v))

    def log(self, z, y):
        z, y = np.broadcast_arrays(np.asarray(z, float), np.asarray(y, float))
        c = _dot(z, y)
        cut = np.abs(c) <= _CUT_TOL
        out = _sphere_log(z, self._align(z, y))
        if np.any(cut):
            # +y and -y are equally close; keep the lexicographically smaller log
            alt = _sphere_log(z, -self._align(z, y))
            swap = cut & _lex_less(alt, out)
            out = np.where(swap[..., None], alt, out)
        return out

    def dist(self, z, y):
        z, y = np.broadcast_arrays(np.asarray(z, float), np.asarray(y, float))
        return _sphere_dist(z, self._align(z, y))

    def project_to_manifold(self, y):
        y = np.asarray(y, float)
        return canonical_quaternion(y / _norm(y, keepdims=True))

    def off_manifold_distance(self, y):
        # distance to the nearer of the two quaternion representatives
        y = np.asarray(y, float)
        p = y / _norm(y, keepdims=True)
        return np.minimum(_norm(y - p), _norm(y + p))

    def tangent_projector(self, z):
        z = np.asarray(z, float)
        return np.eye(4) - z[..., :, None] * z[..., None, :]

    def at_cut_locus(self, z, y):
        z, y = np.broadcast_arrays(np.asarray(z, float), np.asarray(y, float))
        return np.abs(_dot(z, y)) <= _CUT_TOL

    @staticmethod
    def to_matrix(q):
        """Rotation matrices for (..., 4) unit quaternions (w, x, y, z)."""
        q = np.asarray(q, float)
        w, x, y, z = np.moveaxis(q, -1, 0)
        return np.stack(
            [
                np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)], -1),
                np.stack([2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)], -1),
                np.stack([2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)], -1),
            ],
            -2,
        )


def _lex_less(a, b):
    """Elementwise lexicographic a < b over the last axis."""
    less = np.zeros(a.shape[:-1], dtype=bool)
    decided = np.zeros(a.shape[:-1], dtype=bool)
    for i in range(a.shape[-1]):
        lt = a[..., i] < b[..., i] - 1e-15
        gt = a[..., i] > b[..., i] + 1e-15
        less |= lt & ~decided
        decided |= lt | gt
    return less


class FlatBox(ManifoldGeometry):
    """The box [low, high] in R^s with Euclidean geometry."""

    kind = "flat_box"

    def __init__(self, low, high):
        self.low = np.atleast_1d(np.asarray(low, float))
        self.high = np.atleast_1d(np.asarray(high, float))
        if self.low.shape != self.high.shape or np.any(self.low >= self.high):
            raise ValueError(f"degenerate box: low={self.low}, high={self.high}")
        self.intrinsic_dim = self.embed_dim = self.low.size

    def exp(self, z, v):
        return np.asarray(z, float) + np.asarray(v, float)

    def log(self, z, y):
        z, y = np.broadcast_arrays(np.asarray(z, float), np.asarray(y, float))
        return y - z

    def dist(self, z, y):
        return _norm(np.asarray(y, float) - np.asarray(z, float))

    def project_to_manifold(self, y):
        return np.clip(np.asarray(y, float), self.low, self.high)

    def tangent_projector(self, z):
        z = np.asarray(z, float)
        return np.broadcast_to(np.eye(self.embed_dim), z.shape[:-1] + (self.embed_dim,) * 2).copy()


class KleinBottle(ManifoldGeometry):
    """Figure-8 immersion of the Klein bottle in R^3.

    Parameters (u, v) in [0, 2pi)^2 with (u, v) ~ (u, v + 2pi) ~ (u + 2pi, -v).
    exp and log act in the parameter chart: log_z(y) = J(z) (y - z) using the
    deck representative of y closest to z, and exp inverts that map, so
    exp(z, log(z, y)) = y holds exactly.  Distances are graph geodesics on a
    fine auxiliary grid, replaced by the straight chart segment (midpoint rule)
    for nearby pairs.  Neither is an exact geodesic.
    """

    kind = "klein"
    intrinsic_dim = 2
    embed_dim = 3

    def __init__(self, radius=1.5, tube=0.5, seed_grid=256, aux_grid=128):
        self.radius = radius
        self.tube = tube
        self.seed_grid = seed_grid
        self.aux_grid = aux_grid
        self._tree = None
        self._graph = None
        self._rows = {}
        self.near_cells = 4

    # -- parametrization ------------------------------------------------
    def embed(self, uv):
        uv = np.asarray(uv, float)
        u, v = uv[..., 0], uv[..., 1]
        c, s = np.cos(u / 2), np.sin(u / 2)
        rad = self.radius + self.tube * (c * np.sin(v) - s * np.sin(2 * v))
        h = self.tube * (s * np.sin(v) + c * np.sin(2 * v))
        return np.stack([rad * np.cos(u), rad * np.sin(u), h], axis=-1)

    def jacobian(self, uv):
        uv = np.asarray(uv, float)
        u, v = uv[..., 0], uv[..., 1]
        c, s = np.cos(u / 2), np.sin(u / 2)
        a = self.tube
        rad = self.radius + a * (c * np.sin(v) - s * np.sin(2 * v))
        drad_u = a * (-0.5 * s * np.sin(v) - 0.5 * c * np.sin(2 * v))
        drad_v = a * (c * np.cos(v) - 2 * s * np.cos(2 * v))
        dh_u = a * (0.5 * c * np.sin(v) - 0.5 * s * np.sin(2 * v))
        dh_v = a * (s * np.cos(v) + 2 * c * np.cos(2 * v))
        cu, su = np.cos(u), np.sin(u)
        col_u = np.stack([drad_u * cu - rad * su, drad_u * su + rad * cu, dh_u], axis=-1)
        col_v = np.stack([drad_v * cu, drad_v * su, dh_v], axis=-1)
        return np.stack([col_u, col_v], axis=-1)

    @staticmethod
    def canonical_params(uv):
        uv = np.asarray(uv, float)
        u, v = uv[..., 0], uv[..., 1]
        k = np.floor(u / (2 * np.pi))
        u = u - 2 * np.pi * k
        v = np.where(np.mod(k, 2) == 1, -v, v)
        return np.stack([u, np.mod(v, 2 * np.pi)], axis=-1)

    def _seed_tree(self):
        if self._tree is None:
            t = np.linspace(0, 2 * np.pi, self.seed_grid, endpoint=False)
            uu, vv = np.meshgrid(t, t, indexing="ij")
            self._seed_uv = np.stack([uu.ravel(), vv.ravel()], -1)
            self._tree = cKDTree(self.embed(self._seed_uv))
        return self._tree

    def to_params(self, y, iters=30):
        """Closest-point parameters by damped Gauss-Newton from a grid seed."""
        y = np.asarray(y, float)
        shape = y.shape[:-1]
        yf = y.reshape(-1, 3)
        _, idx = self._seed_tree().query(yf)
        uv = self._seed_uv[idx].copy()
        mu = 1e-9
        for _ in range(iters):
            r = self.embed(uv) - yf
            J = self.jacobian(uv)
            JtJ = np.einsum("nki,nkj->nij", J, J) + mu * np.eye(2)
            step = np.linalg.solve(JtJ, np.einsum("nki,nk->ni", J, r)[..., None])[..., 0]
            uv_new = uv - step
            better = _norm(self.embed(uv_new) - yf) <= _norm(r) + 1e-15
            uv = np.where(better[:, None], uv_new, uv)
            if np.max(np.abs(step)) < 1e-15:
                break
        return self.canonical_params(uv).reshape(shape + (2,))

    def project_to_manifold(self, y):
        return self.embed(self.to_params(y))

    def tangent_projector(self, z):
        J = self.jacobian(self.to_params(z))
        Q, _ = np.linalg.qr(J)
        return np.einsum("...ik,...jk->...ij", Q, Q)

    # -- chart exp / log ------------------------------------------------
    @staticmethod
    def _deck_copies(uv):
        """The 12 deck-transformed copies of uv that can be nearest to a chart point."""
        uv = np.asarray(uv, float)
        return [
            np.stack([uv[..., 0] + 2 * np.pi * k, (-1) ** k * uv[..., 1] + 2 * np.pi * m], -1)
            for k in (-1, 0, 1)
            for m in (-1, 0, 1, 2)
        ]

    @classmethod
    def nearest_rep(cls, uv, ref):
        """Deck-transformed copy of uv closest (in the chart) to ref."""
        uv, ref = np.broadcast_arrays(np.asarray(uv, float), np.asarray(ref, float))
        best = uv.copy()
        bestd = np.full(uv.shape[:-1], np.inf)
        for cand in cls._deck_copies(uv):
            d = _norm(cand - ref)
            take = d < bestd
            best = np.where(take[..., None], cand, best)
            bestd = np.where(take, d, bestd)
        return best

    @classmethod
    def rep_margin(cls, uv, ref):
        """Chart distance from ref to the second-nearest copy of uv minus the nearest."""
        uv, ref = np.broadcast_arrays(np.asarray(uv, float), np.asarray(ref, float))
        d = np.sort(np.stack([_norm(c - ref) for c in cls._deck_copies(uv)], -1), axis=-1)
        return d[..., 1] - d[..., 0]

    def log(self, z, y):
        z, y = np.broadcast_arrays(np.asarray(z, float), np.asarray(y, float))
        pz = self.to_params(z)
        py = self.nearest_rep(self.to_params(y), pz)
        return np.einsum("...ij,...j->...i", self.jacobian(pz), py - pz)

    def exp(self, z, v):
        z, v = np.broadcast_arrays(np.asarray(z, float), np.asarray(v, float))
        pz = self.to_params(z)
        J = self.jacobian(pz)
        JtJ = np.einsum("...ki,...kj->...ij", J, J)
        d = np.linalg.solve(JtJ, np.einsum("...ki,...k->...i", J, v)[..., None])[..., 0]
        return self.embed(pz + d)

    # -- distances --------------------------------------------------------
    def _aux_graph(self):
        if self._graph is None:
            n = self.aux_grid
            t = 2 * np.pi * np.arange(n) / n
            uu, vv = np.meshgrid(t, t, indexing="ij")
            self._aux_uv = np.stack([uu, vv], -1)
            rows, cols, wts = [], [], []
            I, Jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
            for di, dj in [(1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (1, 2), (2, -1), (1, -2)]:
                i2 = I + di
                j2 = Jj + dj
                wrap = i2 >= n
                i2 = np.where(wrap, i2 - n, i2)
                j2 = np.where(wrap, -j2, j2) % n
                src_uv = self._aux_uv
                dst_uv = np.stack([2 * np.pi * (I + di) / n, 2 * np.pi * (Jj + dj) / n], -1)
                w = _norm(self.embed(src_uv) - self.embed(dst_uv))
                rows.append((I * n + Jj).ravel())
                cols.append((i2 * n + j2).ravel())
                wts.append(w.ravel())
            r, c, w = (np.concatenate(a) for a in (rows, cols, wts))
            self._graph = coo_matrix((w, (r, c)), shape=(n * n, n * n)).tocsr()
        return self._graph

    def _node_of(self, uv):
        n = self.aux_grid
        ij = np.rint(np.asarray(uv) / (2 * np.pi) * n).astype(int)
        i, j = ij[..., 0], ij[..., 1]
        wrap = i >= n
        i = np.where(wrap, i - n, i)
        j = np.where(wrap, -j, j) % n
        return i * n + j

    def _graph_rows(self, nodes):
        g = self._aux_graph()
        missing = [int(k) for k in np.unique(nodes) if int(k) not in self._rows]
        if missing:
            D = dijkstra(g, directed=False, indices=missing)
            for k, row in zip(missing, D):
                self._rows[k] = row.astype(np.float32)
        return self._rows

    def _chart_length(self, pz, py_rep):
        mid = 0.5 * (pz + py_rep)
        return _norm(np.einsum("...ij,...j->...i", self.jacobian(mid), py_rep - pz))

    def dist_params(self, pz, py):
        """Distance between points given by canonical parameters."""
        pz, py = np.broadcast_arrays(np.asarray(pz, float), np.asarray(py, float))
        shape = pz.shape[:-1]
        pz = pz.reshape(-1, 2)
        py = py.reshape(-1, 2)
        rep = self.nearest_rep(py, pz)
        out = self._chart_length(pz, rep)
        far = _norm(rep - pz) > self.near_cells * 2 * np.pi / self.aux_grid
        if np.any(far):
            self._aux_graph()
            nz = self._node_of(pz[far])
            ny = self._node_of(py[far])
            if np.unique(nz).size > np.unique(ny).size:
                nz, ny = ny, nz
            rows = self._graph_rows(nz)
            gd = np.array([rows[int(a)][int(b)] for a, b in zip(nz, ny)], dtype=float)
            # straighten the snapping offsets at both ends
            auv = self._aux_uv.reshape(-1, 2)
            oz = self._chart_length(pz[far], self.nearest_rep(auv[self._node_of(pz[far])], pz[far]))
            oy = self._chart_length(py[far], self.nearest_rep(auv[self._node_of(py[far])], py[far]))
            out[far] = gd + oz + oy
        return out.reshape(shape)

    def dist(self, z, y):
        z, y = np.broadcast_arrays(np.asarray(z, float), np.asarray(y, float))
        return self.dist_params(self.to_params(z), self.to_params(y))


class Triangulation:
    """Simplicial approximation M_h of a manifold.

    ``vertices`` are the labels Z^1..Z^L, ``simplices`` index (s+1)-tuples of
    them.  ``simplex_points`` holds the coordinates used for each simplex;
    these differ from ``vertices[simplices]`` only for SO(3), where each
    tetrahedron needs sign-consistent quaternion representatives.  Charted
    manifolds (the Klein bottle) also carry exact chart parameters of the
    labels and of every simplex corner.
    """

    def __init__(self, vertices, simplices, geometry, simplex_points=None, simplex_params=None,
                 vertex_params=None):
        self.vertices = np.asarray(vertices, float)
        self.simplices = np.asarray(simplices, dtype=np.intp)
        self.geometry = geometry
        if simplex_points is None:
            simplex_points = self.vertices[self.simplices]
        self.simplex_points = np.asarray(simplex_points, float)
        self.simplex_params = simplex_params
        self.vertex_params = vertex_params
        for a in (self.vertices, self.simplices, self.simplex_points):
            a.setflags(write=False)

    @property
    def n_labels(self):
        return self.vertices.shape[0]

    @property
    def n_simplices(self):
        return self.simplices.shape[0]

    @property
    def dim(self):
        return self.simplices.shape[1] - 1

    @property
    def embed_dim(self):
        return self.vertices.shape[1]

    def iota_params(self, T, bary):
        """Canonical chart parameters of barycentric points (charted manifolds only)."""
        uv = np.einsum("...k,...kj->...j", np.asarray(bary, float), self.simplex_params[np.asarray(T)])
        return self.geometry.canonical_params(uv)

    def iota(self, T, bary):
        """Map barycentric points of simplices T onto the manifold."""
        T = np.asarray(T)
        bary = np.asarray(bary, float)
        if self.simplex_params is not None:
            return self.geometry.embed(self.iota_params(T, bary))
        pts = np.einsum("...k,...kj->...j", bary, self.simplex_points[T])
        return self.geometry.project_to_manifold(pts)

    def faces(self, k):
        """All k-element vertex subsets of simplices, with multiplicity."""
        out = []
        for simplex in self.simplices:
            for f in itertools.combinations(sorted(simplex), k):
                out.append(f)
        return out

    def edge_lengths(self):
        pts = self.simplex_points
        lengths = [
            _norm(pts[:, i] - pts[:, j])
            for i, j in itertools.combinations(range(self.dim + 1), 2)
        ]
        return np.concatenate(lengths)

    def __repr__(self):
        return (
            f"Triangulation({self.geometry.kind}, L={self.n_labels}, "
            f"simplices={self.n_simplices}, s={self.dim})"
        )


# ---------------------------------------------------------------------------
# builders


def build_circle(L):
    if int(L) != L or L < 3:
        raise ValueError(f"circle needs at least 3 labels, got {L}")
    L = int(L)
    theta = 2 * np.pi * np.arange(L) / L
    verts = Circle.from_angle(theta)
    simplices = np.stack([np.arange(L), (np.arange(L) + 1) % L], axis=1)
    return Triangulation(verts, simplices, Circle())


def _cliques(adj, k):
    """All k-cliques (sorted tuples) in a boolean adjacency matrix."""
    n = adj.shape[0]
    nbrs = [set(np.flatnonzero(adj[i])) for i in range(n)]
    out = []

    def grow(clique, cand):
        if len(clique) == k:
            out.append(tuple(clique))
            return
        for j in sorted(cand):
            if j > clique[-1]:
                grow(clique + [j], cand & nbrs[j])

    for i in range(n):
        grow([i], nbrs[i])
    return out


def _icosahedron():
    base = []
    for a, b in itertools.product((-1.0, 1.0), repeat=2):
        base.append((0.0, a, b * GOLDEN))
    for a, b in itertools.product((-1.0, 1.0), repeat=2):
        base.append((a, b * GOLDEN, 0.0))
    for a, b in itertools.product((-1.0, 1.0), repeat=2):
        base.append((a * GOLDEN, 0.0, b))
    verts = np.array(base)
    verts /= _norm(verts, keepdims=True)
    G = verts @ verts.T
    adj = np.isclose(G, 1 / np.sqrt(5.0)) & ~np.eye(12, dtype=bool)
    faces = np.array(_cliques(adj, 3))
    return verts, _orient_outward(verts, faces)


def _orient_outward(verts, faces):
    faces = faces.copy()
    a, b, c = (verts[faces[:, i]] for i in range(3))
    n = np.cross(b - a, c - a)
    flip = _dot(n, a + b + c) < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    return faces


def build_sphere2(refine=0):
    """Icosahedron, refined ``refine`` times by 1-to-4 splits and reprojection."""
    if int(refine) != refine or refine < 0:
        raise ValueError(f"refine must be a nonnegative integer, got {refine}")
    verts, faces = _icosahedron()
    verts = list(verts)
    for _ in range(int(refine)):
        mid = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in mid:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                mid[key] = len(verts) - 1
            return mid[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = np.array(new)
    return Triangulation(np.array(verts), faces, Sphere2())


def hexacosichoron():
    """The 120 vertices (unit quaternions) and 600 tetrahedra of the 600-cell."""
    verts = []
    for i in range(4):
        for sgn in (1.0, -1.0):
            e = np.zeros(4)
            e[i] = sgn
            verts.append(e)
    for signs in itertools.product((-0.5, 0.5), repeat=4):
        verts.append(np.array(signs))
    even = [p for p in itertools.permutations(range(4)) if _perm_parity(p) == 0]
    base = (GOLDEN / 2, 0.5, 1 / (2 * GOLDEN), 0.0)
    for perm in even:
        for signs in itertools.product((-1.0, 1.0), repeat=3):
            vals = np.array([signs[0] * base[0], signs[1] * base[1], signs[2] * base[2], 0.0])
            q = np.zeros(4)
            q[list(perm)] = vals
            verts.append(q)
    verts = np.array(verts)
    G = verts @ verts.T
    adj = np.isclose(G, GOLDEN / 2)
    cells = np.array(_cliques(adj, 4))
    return verts, cells


def _perm_parity(p):
    p = list(p)
    parity = 0
    for i in range(len(p)):
        for j in range(i + 1, len(p)):
            if p[i] > p[j]:
                parity ^= 1
    return parity


def build_so3():
    """600-cell with antipodal vertices identified: 60 labels, 300 tetrahedra."""
    verts, cells = hexacosichoron()
    canon = canonical_quaternion(verts)
    keys = [tuple(np.round(q, 12)) for q in canon]
    uniq = {}
    for k in keys:
        uniq.setdefault(k, len(uniq))
    labels = np.array([np.array(k) for k in uniq])
    vmap = np.array([uniq[k] for k in keys])
    seen = {}
    simplices, points = [], []
    for cell in cells:
        key = tuple(sorted(vmap[cell]))
        if key in seen:
            continue
        seen[key] = len(simplices)
        simplices.append(vmap[cell])
        points.append(verts[cell])
    return Triangulation(labels, np.array(simplices), SO3(), simplex_points=np.array(points))


def build_klein(m, n, geometry=None):
    """m x n grid on the Klein bottle parameter domain, 2mn triangles."""
    if int(m) != m or int(n) != n or m < 3 or n < 3:
        raise ValueError(f"Klein grid needs m, n >= 3, got {m} x {n}")
    m, n = int(m), int(n)
    geom = geometry if geometry is not None else KleinBottle()
    du, dv = 2 * np.pi / m, 2 * np.pi / n
    uv = np.array([(i * du, j * dv) for i in range(m) for j in range(n)])
    verts = geom.embed(uv)

    def vid(i, j):
        if i == m:
            i, j = 0, -j
        return i * n + (j % n)

    simplices, params = [], []
    for i in range(m):
        for j in range(n):
            A = (vid(i, j), (i * du, j * dv))
            B = (vid(i + 1, j), ((i + 1) * du, j * dv))
            C = (vid(i, j + 1), (i * du, (j + 1) * dv))
            D = (vid(i + 1, j + 1), ((i + 1) * du, (j + 1) * dv))
            for tri in ((A, B, D), (A, D, C)):
                simplices.append([t[0] for t in tri])
                params.append([t[1] for t in tri])
    params = np.array(params)
    tri = Triangulation(
        verts, np.array(simplices), geom, simplex_points=geom.embed(params), simplex_params=params,
        vertex_params=uv,
    )
    return tri


def build_flat_box(low, high, counts):
    """Regular label grid on [low, high] in R^s, Kuhn-triangulated."""
    low = np.atleast_1d(np.asarray(low, float))
    high = np.atleast_1d(np.asarray(high, float))
    counts = np.atleast_1d(np.asarray(counts, dtype=int))
    geom = FlatBox(low, high)
    s = low.size
    if counts.size != s or np.any(counts < 2):
        raise ValueError(f"need {s} counts >= 2, got {counts}")
    axes = [np.linspace(low[i], high[i], counts[i]) for i in range(s)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, s)
    strides = np.array([int(np.prod(counts[i + 1 :])) for i in range(s)])
    simplices = []
    for cell in itertools.product(*[range(c - 1) for c in counts]):
        cell = np.array(cell)
        for perm in itertools.permutations(range(s)):
            cur = cell.copy()
            simplex = [int(cur @ strides)]
            for axis in perm:
                cur[axis] += 1
                simplex.append(int(cur @ strides))
            simplices.append(simplex)
    return Triangulation(grid, np.array(simplices), geom)


# ---------------------------------------------------------------------------
# point location


def _closest_in_simplices(points, y):
    """Closest point of each simplex (points: (T, k, N)) to y: weights and distances."""
    nT, k, N = points.shape
    best_w = np.zeros((nT, k))
    best_d = np.full(nT, np.inf)
    for r in range(1, k + 1):
        for sub in itertools.combinations(range(k), r):
            sub = list(sub)
            p0 = points[:, sub[0]]
            if r == 1:
                w = np.ones((nT, 1))
            else:
                E = points[:, sub[1:]] - p0[:, None, :]
                M = np.einsum("tin,tjn->tij", E, E)
                rhs = np.einsum("tin,tn->ti", E, y - p0)
                c = np.linalg.solve(M, rhs[..., None])[..., 0]
                w = np.concatenate([1 - c.sum(-1, keepdims=True), c], axis=1)
            proj = np.einsum("ti,tin->tn", w, points[:, sub])
            d = _norm(y - proj)
            ok = np.all(w >= -1e-12, axis=1) & (d < best_d - 1e-14)
            full = np.zeros((nT, k))
            full[:, sub] = w
            best_w[ok] = full[ok]
            best_d[ok] = d[ok]
    return best_w, best_d


def barycentric_locate(tri, y):
    """Simplex of M_h closest to y and the barycentric weights of that closest point."""
    y = np.asarray(y, float)
    w, d = _closest_in_simplices(tri.simplex_points, y)
    if tri.geometry.kind == "so3":
        w2, d2 = _closest_in_simplices(tri.simplex_points, -y)
        take = d2 < d
        w[take], d[take] = w2[take], d2[take]
    T = int(np.argmin(d))
    weights = np.where(w[T] < 0, 0.0, w[T])
    return T, weights / weights.sum()
