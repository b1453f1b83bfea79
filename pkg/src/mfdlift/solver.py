"""Assembly and primal-dual solution of the discrete lifted saddle-point problem.

Primal variables per pixel x: the lifted field v(x) in the unit simplex over
the L labels, and free multipliers per simplex T: wG (s x d), wg (s), wc.
Dual variables: nodal p (L x d) and q (L), and per simplex G (s x d), g (s),
a, b.  The saddle function is

    sum_x <-div_x p + q, v>
      + sum_{x,T} <wG, G - D_T p> + <wg, g - loc_T q> + wc (-a - b - off_T q)

with (G, a) in epi(eta*) and (g, b) in epi(rho_hat_T^*).  The variable
c := -(a + b) plays the role of q_{T,2}, so a + b + c = 0 holds exactly and
every dual projection is exact and separable per (pixel, simplex).

In ``lellmann`` mode the data enters linearly through rho(x, Z^k) and only
(p, G) and (v, wG) remain.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import proxkit
from . import regularizer as regmod
from .dataterm import ConvexifiedDataTerm, convexify_all, lellmann_mode_data
from .fem import simplex_operators

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# finite differences on the pixel grid


def grad_x(field, shape):
    """Forward differences with Neumann boundary: (P, ...) -> (P, ..., d)."""
    field = np.asarray(field, float)
    rest = field.shape[1:]
    u = field.reshape(tuple(shape) + rest)
    out = []
    for ax in range(len(shape)):
        d = np.zeros_like(u)
        sl_hi = [slice(None)] * u.ndim
        sl_lo = [slice(None)] * u.ndim
        sl_hi[ax] = slice(1, None)
        sl_lo[ax] = slice(None, -1)
        d[tuple(sl_lo)] = u[tuple(sl_hi)] - u[tuple(sl_lo)]
        out.append(d.reshape(field.shape))
    return np.stack(out, axis=-1)


def div_x(p, shape):
    """Negative adjoint of grad_x: (P, ..., d) -> (P, ...)."""
    p = np.asarray(p, float)
    rest = p.shape[1:-1]
    out = np.zeros(tuple(shape) + rest)
    for ax in range(len(shape)):
        pa = p[..., ax].reshape(tuple(shape) + rest)
        n = shape[ax]
        idx = [slice(None)] * pa.ndim
        d = np.zeros_like(pa)

        def sl(a, b):
            s = list(idx)
            s[ax] = slice(a, b)
            return tuple(s)

        if n > 1:
            d[sl(0, 1)] = pa[sl(0, 1)]
            d[sl(1, n - 1)] = pa[sl(1, n - 1)] - pa[sl(0, n - 2)]
            d[sl(n - 1, n)] = -pa[sl(n - 2, n - 1)]
        out += d
    return out.reshape(p.shape[:-1])


def _abs_grad_x(field, shape):
    field = np.asarray(field, float)
    rest = field.shape[1:]
    u = field.reshape(tuple(shape) + rest)
    out = []
    for ax in range(len(shape)):
        d = np.zeros_like(u)
        hi = [slice(None)] * u.ndim
        lo = [slice(None)] * u.ndim
        hi[ax] = slice(1, None)
        lo[ax] = slice(None, -1)
        d[tuple(lo)] = u[tuple(hi)] + u[tuple(lo)]
        out.append(d.reshape(field.shape))
    return np.stack(out, axis=-1)


def _abs_div_x(p, shape):
    p = np.asarray(p, float)
    rest = p.shape[1:-1]
    out = np.zeros(tuple(shape) + rest)
    for ax in range(len(shape)):
        pa = p[..., ax].reshape(tuple(shape) + rest)
        n = shape[ax]
        d = np.zeros_like(pa)
        idx = [slice(None)] * pa.ndim

        def sl(a, b):
            s = list(idx)
            s[ax] = slice(a, b)
            return tuple(s)

        if n > 1:
            d[sl(0, n - 1)] += pa[sl(0, n - 1)]
            d[sl(1, n)] += pa[sl(0, n - 1)]
        out += d
    return out.reshape(p.shape[:-1])


# ---------------------------------------------------------------------------
# problem and state


@dataclass
class LiftedProblem:
    """A lifted problem on a pixel grid of the given shape (d = len(shape))."""

    shape: tuple
    tri: object
    reg: regmod.RegularizerSpec
    data: ConvexifiedDataTerm = None
    rho_labels: np.ndarray = None
    frame: str = "ortho"
    mode: str = "sublabel"
    ops: object = field(default=None, repr=False)

    def __post_init__(self):
        self.shape = tuple(int(n) for n in self.shape)
        if len(self.shape) not in (1, 2):
            raise ValueError("pixel grids must be 1- or 2-dimensional")
        if self.mode not in ("sublabel", "lellmann"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.ops is None:
            self.ops = simplex_operators(self.tri, self.frame)
        P = self.n_pixels
        if self.mode == "sublabel":
            if self.data is None or self.data.shape != (P, self.tri.n_simplices):
                raise ValueError("sublabel mode needs a convexified data term for every pixel")
        else:
            if self.reg.kind not in ("tv", "tv_nuclear"):
                raise ValueError("lellmann mode supports only TV regularizers")
            if self.rho_labels is None or self.rho_labels.shape != (P, self.tri.n_labels):
                raise ValueError("lellmann mode needs rho(x, Z^k) for every pixel")
        L = self.tri.n_labels
        nT, s1 = self.ops.idx.shape
        S = np.zeros((nT * s1, L))
        S[np.arange(nT * s1), self.ops.idx.ravel()] = 1.0
        self._scatter = S
        s = s1 - 1
        # B maps stacked per-simplex gradients (nT*s) to nodal vectors (L)
        B = np.einsum("tik,tkl->lti", self.ops.Dreg, S.reshape(nT, s1, L)).reshape(L, nT * s)
        self._B = B
        self._Bpinv = np.linalg.pinv(B)
        # C maps stacked per-simplex affine coefficients (nT*(s+1)) to nodal vectors
        self._C = np.einsum("tik,tkl->lti", self.ops.Minv, S.reshape(nT, s1, L)).reshape(L, nT * s1)
        self._Babs, self._Cabs = np.abs(self._B), np.abs(self._C)
        if self.mode == "sublabel":
            hw = self.data.hull_w
            n = P * nT
            K = hw.shape[2]
            A = np.concatenate([hw, -np.ones(hw.shape[:3] + (1,))], axis=-1)
            self._qp_A = np.ascontiguousarray(A.reshape(n, K, s + 1))
            self._qp_B = np.ascontiguousarray(np.where(np.isfinite(self.data.hull_h), self.data.hull_h, 0.0).reshape(n, K))
            self._qp_n = np.ascontiguousarray(self.data.hull_count.reshape(n))
        # simplex used to absorb vertex mass that no simplex carries
        first = np.full(L, -1)
        pos = np.zeros(L, dtype=int)
        for t in range(nT - 1, -1, -1):
            for k, lab in enumerate(self.ops.idx[t]):
                first[lab], pos[lab] = t, k
        self._home = (first, pos)

    @classmethod
    def build(cls, tri, data_spec, reg, shape, mode="sublabel", frame="ortho"):
        shape = tuple(np.atleast_1d(shape))
        ops = simplex_operators(tri, frame)
        if mode == "sublabel":
            data = convexify_all(data_spec, tri, ops)
            return cls(shape, tri, reg, data=data, frame=frame, mode=mode, ops=ops)
        rho = lellmann_mode_data(data_spec, tri)
        return cls(shape, tri, reg, rho_labels=rho, frame=frame, mode=mode, ops=ops)

    @property
    def n_pixels(self):
        return int(np.prod(self.shape))

    @property
    def d(self):
        return len(self.shape)

    @property
    def s(self):
        return self.tri.dim

    # -- gather / scatter -------------------------------------------------
    def gather(self, nodal):
        """(P, L, ...) -> (P, nT, s+1, ...)."""
        return nodal[:, self.ops.idx]

    def scatter(self, local):
        """(P, nT, s+1, ...) -> (P, L, ...), summing contributions."""
        P, nT, s1 = local.shape[:3]
        rest = local.shape[3:]
        flat = local.reshape(P, nT * s1, -1).transpose(0, 2, 1)
        out = (flat @ self._scatter).transpose(0, 2, 1)
        return out.reshape((P, self.tri.n_labels) + rest)


@dataclass
class SaddleState:
    v: np.ndarray
    wG: np.ndarray
    p: np.ndarray
    G: np.ndarray
    wg: np.ndarray = None
    wc: np.ndarray = None
    q: np.ndarray = None
    g: np.ndarray = None
    a: np.ndarray = None
    b: np.ndarray = None
    sigma: dict = None
    tau: dict = None
    theta: float = 1.0
    iteration: int = 0
    bar: dict = None

    @property
    def c(self):
        return None if self.a is None else -(self.a + self.b)

    def primal(self):
        keys = ("v", "wG", "wg", "wc")
        return {k: getattr(self, k) for k in keys if getattr(self, k) is not None}

    def dual(self):
        keys = ("p", "q", "G", "g", "a", "b")
        return {k: getattr(self, k) for k in keys if getattr(self, k) is not None}

    def copy(self):
        out = SaddleState(**{k: getattr(self, k) for k in ("v", "wG", "p", "G", "wg", "wc", "q", "g", "a", "b")})
        for k in ("v", "wG", "p", "G", "wg", "wc", "q", "g", "a", "b"):
            val = getattr(out, k)
            if val is not None:
                setattr(out, k, val.copy())
        out.sigma, out.tau, out.theta, out.iteration = self.sigma, self.tau, self.theta, self.iteration
        out.bar = None if self.bar is None else {k: v.copy() for k, v in self.bar.items()}
        return out


# ---------------------------------------------------------------------------
# the linear operator K (primal -> dual) and its adjoint


def _apply_T(D, X):
    """Per-simplex transpose product: D (nT, i, k), X (P, nT, i, c) -> (P, nT, k, c)."""
    return np.matmul(D.transpose(0, 2, 1), X)


def _to_local(M, nodal):
    """(P, L, ...) -> (P, R, ...) through the transpose of the nodal map M (L, R)."""
    return np.moveaxis(np.tensordot(nodal, M, axes=([1], [0])), -1, 1)


def _to_nodal(M, local):
    """(P, R, ...) -> (P, L, ...) through the nodal map M (L, R)."""
    return np.moveaxis(np.tensordot(local, M, axes=([1], [1])), -1, 1)


def apply_K(prob, x, absolute=False):
    """Dual-space image of the primal block dict x."""
    B = prob._Babs if absolute else prob._B
    gx = _abs_grad_x if absolute else grad_x
    sgn = 1.0 if absolute else -1.0
    v, wG = x["v"], x["wG"]
    P, nT, s, d = wG.shape
    out = {}
    out["p"] = gx(v, prob.shape) + sgn * _to_nodal(B, wG.reshape(P, nT * s, d))
    out["G"] = wG.copy()
    if prob.mode == "sublabel":
        C = prob._Cabs if absolute else prob._C
        wgc = np.concatenate([x["wg"], x["wc"][..., None]], axis=-1)
        out["q"] = v + sgn * _to_nodal(C, wgc.reshape(P, nT * (s + 1)))
        out["g"] = x["wg"].copy()
        out["a"] = sgn * x["wc"]
        out["b"] = sgn * x["wc"]
    return out


def apply_KT(prob, y, absolute=False):
    """Primal-space image of the dual block dict y."""
    B = prob._Babs if absolute else prob._B
    sgn = 1.0 if absolute else -1.0
    divp = _abs_div_x(y["p"], prob.shape) if absolute else -div_x(y["p"], prob.shape)
    G = y["G"]
    P, nT, s, d = G.shape
    out = {}
    out["wG"] = G + sgn * _to_local(B, y["p"]).reshape(G.shape)
    if prob.mode == "sublabel":
        C = prob._Cabs if absolute else prob._C
        out["v"] = divp + y["q"]
        rhs = np.concatenate([y["g"], (sgn * (y["a"] + y["b"]))[..., None]], axis=-1)
        wgc = rhs + sgn * _to_local(C, y["q"]).reshape(rhs.shape)
        out["wg"] = wgc[..., :-1]
        out["wc"] = wgc[..., -1]
    else:
        out["v"] = divp
    return out


def _zeros_primal(prob):
    P, L, nT, s, d = prob.n_pixels, prob.tri.n_labels, prob.tri.n_simplices, prob.s, prob.d
    x = {"v": np.zeros((P, L)), "wG": np.zeros((P, nT, s, d))}
    if prob.mode == "sublabel":
        x["wg"] = np.zeros((P, nT, s))
        x["wc"] = np.zeros((P, nT))
    return x


def _zeros_dual(prob):
    P, L, nT, s, d = prob.n_pixels, prob.tri.n_labels, prob.tri.n_simplices, prob.s, prob.d
    y = {"p": np.zeros((P, L, d)), "G": np.zeros((P, nT, s, d))}
    if prob.mode == "sublabel":
        y["q"] = np.zeros((P, L))
        y["g"] = np.zeros((P, nT, s))
        y["a"] = np.zeros((P, nT))
        y["b"] = np.zeros((P, nT))
    return y


def _inner(a, b):
    return sum(float(np.vdot(a[k], b[k])) for k in a)


def operator_norm(prob, iters=50, seed=0):
    """Power-iteration estimate of ||K||."""
    rng = np.random.default_rng(seed)
    x = {k: rng.standard_normal(v.shape) for k, v in _zeros_primal(prob).items()}
    nrm = np.sqrt(_inner(x, x))
    est = 0.0
    for _ in range(iters):
        x = {k: v / nrm for k, v in x.items()}
        x = apply_KT(prob, apply_K(prob, x))
        nrm = np.sqrt(_inner(x, x))
        est = np.sqrt(nrm)
    return est


# ---------------------------------------------------------------------------
# assembly and iteration


def _step_sizes(prob, precond, ratio=1.0):
    sig, tau, nK = _base_step_sizes(prob, precond)
    # sigma * tau is unchanged, only the primal/dual balance moves
    sig = {k: v * ratio for k, v in sig.items()}
    tau = {k: v / ratio for k, v in tau.items()}
    return sig, tau, nK


def _base_step_sizes(prob, precond):
    if precond == "off":
        nK = operator_norm(prob)
        step = 0.95 / nK
        sig = {k: step for k in _zeros_dual(prob)}
        tau = {k: step for k in _zeros_primal(prob)}
        return sig, tau, nK
    if precond != "diag":
        raise ValueError(f"unknown preconditioner {precond!r}")
    ones_x = {k: np.ones_like(v) for k, v in _zeros_primal(prob).items()}
    ones_y = {k: np.ones_like(v) for k, v in _zeros_dual(prob).items()}
    rows = apply_K(prob, ones_x, absolute=True)
    cols = apply_KT(prob, ones_y, absolute=True)
    sig = {k: 1.0 / np.maximum(r, 1e-12) for k, r in rows.items()}
    tau = {k: 1.0 / np.maximum(c, 1e-12) for k, c in cols.items()}
    # projections need one step per constrained block
    tau["v"] = tau["v"].min(axis=1, keepdims=True)
    sG = sig["G"].reshape(sig["G"].shape[:2] + (-1,)).min(-1)
    if prob.mode == "sublabel":
        sG = np.minimum(sG, sig["a"])
        sg = np.minimum(sig["g"].min(-1), sig["b"])
        sig["g"] = np.broadcast_to(sg[..., None], sig["g"].shape).copy()
        sig["b"] = sg
        sig["a"] = sG
    sig["G"] = np.broadcast_to(sG[..., None, None], sig["G"].shape).copy()
    return sig, tau, None


def assemble(prob, precond="off", ratio=1.0):
    """Initial saddle state: uniform v, all other fields zero, step sizes set."""
    x = _zeros_primal(prob)
    x["v"][:] = 1.0 / prob.tri.n_labels
    y = _zeros_dual(prob)
    sig, tau, nK = _step_sizes(prob, precond, ratio)
    state = SaddleState(**x, **y, sigma=sig, tau=tau)
    state.bar = {k: v.copy() for k, v in x.items()}
    state.norm_K = nK
    return state


def _project_dual(prob, y):
    y["G"], a = regmod.project_epi_conjugate(prob.reg, y["G"], y.get("a", np.zeros(y["G"].shape[:2])))
    if prob.mode == "sublabel":
        y["a"] = a
        P, nT, s = y["g"].shape
        X0 = np.concatenate([y["g"], y["b"][..., None]], axis=-1).reshape(P * nT, s + 1)
        warm = getattr(prob, "_qp_warm", None)
        if warm is None or warm[1].shape[0] != X0.shape[0]:
            warm = prob._qp_warm = (np.zeros(X0.shape, dtype=np.int64), np.full(X0.shape[0], -1, dtype=np.int64))
        X = proxkit.project_halfspaces_batch(X0, prob._qp_A, prob._qp_B, prob._qp_n, warm=warm)
        X = X.reshape(P, nT, s + 1)
        y["g"] = X[..., :s]
        y["b"] = X[..., s]
    return y


def pdhg_step(prob, state):
    """One primal-dual iteration (dual ascent, exact projections, primal descent, extrapolation)."""
    Kx = apply_K(prob, state.bar)
    y = state.dual()
    y = {k: y[k] + state.sigma[k] * Kx[k] for k in y}
    y = _project_dual(prob, y)
    for k, val in y.items():
        setattr(state, k, val)
    KTy = apply_KT(prob, y)
    x_old = state.primal()
    x = {k: x_old[k] - state.tau[k] * KTy[k] for k in x_old}
    if prob.mode == "lellmann":
        x["v"] = x["v"] - state.tau["v"] * prob.rho_labels
    x["v"] = proxkit.project_simplex(x["v"])
    state.bar = {k: x[k] + state.theta * (x[k] - x_old[k]) for k in x}
    for k, val in x.items():
        setattr(state, k, val)
    state.iteration += 1
    return state


# ---------------------------------------------------------------------------
# energies


def feasible_dual(prob, state):
    """Feasible (p, q) derived from the iterate: p scaled into dom(eta*), q shifted."""
    p = state.p
    P, nT, s, d = state.wG.shape
    Gp = _to_local(prob._B, p).reshape(P, nT, s, d)
    R = prob.reg.dual_radius
    if np.isfinite(R):
        nrm = regmod.dual_norm(prob.reg, Gp)
        f = np.minimum(1.0, R / np.maximum(nrm.max(axis=1), 1e-300))
        p = p * f[:, None, None]
        Gp = Gp * f[:, None, None, None]
    if prob.mode == "lellmann":
        return p, prob.rho_labels
    q = state.q
    gcq = _to_local(prob._C, q).reshape(P, nT, s + 1)
    gq, cq = gcq[..., :s], gcq[..., s]
    viol = regmod.conjugate(prob.reg, Gp, tol=1e-9) + prob.data.conj(gq) + cq
    return p, q - viol.max(axis=1)[:, None]


def dual_energy(prob, state):
    p, q = feasible_dual(prob, state)
    lin = -div_x(p, prob.shape) + q
    return float(lin.min(axis=1).sum())


def feasible_primal(prob, state, eps=0.0):
    """Repair (v, w) into an exactly feasible primal point.

    Returns per-simplex vertex masses m (P, nT, s+1) that reproduce v and
    gradient multipliers wG with scatter(D^T wG) = grad_x v.  With ``eps`` > 0
    the point is first blended with the uniform label distribution, which gives
    every simplex positive mass (needed for finite quadratic perspectives).
    """
    v = state.v
    ops = prob.ops
    first, pos = prob._home
    P, L = v.shape
    nT, s, d = prob.tri.n_simplices, prob.s, prob.d
    if prob.mode == "sublabel":
        wgc = np.concatenate([state.wg, state.wc[..., None]], axis=-1)
        m = np.maximum(_apply_T(ops.Minv, wgc[..., None])[..., 0], 0.0)
    else:
        m = np.zeros((P, nT, s + 1))
    S = prob.scatter(m)
    ratio = np.where(S > 1e-300, v / np.where(S > 1e-300, S, 1.0), 0.0)
    m = m * prob.gather(ratio)
    leftover = np.where(S > 1e-300, 0.0, v)
    np.add.at(m, (slice(None), first, pos), leftover)
    wG0 = state.wG
    if eps > 0:
        share = np.bincount(ops.idx.ravel(), minlength=L)[ops.idx]
        m = (1 - eps) * m + eps / (L * share)[None]
        v = (1 - eps) * v + eps / L
        wG0 = (1 - eps) * wG0
    mass = m.sum(-1)
    R = grad_x(v, prob.shape) - _to_nodal(prob._B, wG0.reshape(P, nT * s, d))
    if prob.reg.kind == "quadratic":
        # only simplices that carry mass may carry gradient
        Bw = prob._B[None, :, :] * np.repeat(mass, s, axis=1)[:, None, :]
        M = np.einsum("xlk,mk->xlm", Bw, prob._B)
        Y = np.einsum("xlm,xmd->xld", np.linalg.pinv(M), R)
        dG = np.einsum("xlk,xld->xkd", Bw, Y)
        bad = np.abs(np.einsum("lk,xkd->xld", prob._B, dG) - R).max(axis=(1, 2)) > 1e-9 * (1 + np.abs(R).max())
    else:
        dG = _to_local(prob._Bpinv.T, R)
        bad = np.zeros(P, dtype=bool)
    wG = wG0 + dG.reshape(P, nT, s, d)
    return m, mass, wG, v, bad


# blending weights tried (largest first) when the quadratic energy needs them
_BLEND = tuple(10.0**-k for k in range(2, 14))


def _repaired_energy(prob, state, eps):
    m, mass, wG, v, bad = feasible_primal(prob, state, eps)
    if np.any(bad):
        return np.inf
    reg = regmod.perspective(prob.reg, wG, mass) if prob.mode == "sublabel" else regmod.value(prob.reg, wG)
    if prob.mode == "sublabel":
        first_moment = np.einsum("xtk,tks->xts", m, prob.ops.W)
        data = prob.data.perspective(first_moment, mass)
    else:
        data = np.sum(prob.rho_labels * v, axis=1)
    return float(np.sum(data) + np.sum(reg))


def primal_energy(prob, state):
    """Energy of a feasible primal point built from the iterate (an upper bound)."""
    e = _repaired_energy(prob, state, 0.0)
    if prob.reg.kind == "quadratic":
        prev = np.inf
        for eps in _BLEND:
            cur = _repaired_energy(prob, state, eps)
            e = min(e, cur)
            if np.isfinite(prev) and cur > prev:
                break
            prev = cur
    return e


def relative_gap(prob, state):
    pe = primal_energy(prob, state)
    de = dual_energy(prob, state)
    if not np.isfinite(pe):
        return np.inf, pe, de
    return (pe - de) / max(1.0, abs(pe)), pe, de


# ---------------------------------------------------------------------------
# drivers


@dataclass
class Diagnostics:
    iterations: int = 0
    converged: bool = False
    gap: float = np.inf
    primal: float = np.nan
    dual: float = np.nan
    trace: list = field(default_factory=list)
    norm_K: float = None
    seconds: float = 0.0


def solve(prob, max_iter=20000, gap_tol=1e-5, check_every=50, precond="diag", state=None, callback=None):
    """Run PDHG until the relative gap drops below ``gap_tol`` or ``max_iter``."""
    t0 = time.perf_counter()
    if state is None:
        state = assemble(prob, precond)
    diag = Diagnostics(norm_K=getattr(state, "norm_K", None))
    for it in range(1, max_iter + 1):
        pdhg_step(prob, state)
        if it % check_every == 0 or it == max_iter:
            gap, pe, de = relative_gap(prob, state)
            diag.trace.append((it, pe, de, gap))
            diag.gap, diag.primal, diag.dual = gap, pe, de
            if callback is not None:
                callback(state, diag)
            if gap < gap_tol:
                diag.converged = True
                break
    diag.iterations = state.iteration
    diag.seconds = time.perf_counter() - t0
    if not diag.converged:
        log.warning("no convergence after %d iterations (gap %.3e)", state.iteration, diag.gap)
    return state.v.copy(), diag, state


def solve_lellmann_tv(tri, data_spec, reg, shape, frame="ortho", **kwargs):
    """TV-only lifting with labelwise data rho(x, Z^k)."""
    if reg.kind not in ("tv", "tv_nuclear"):
        raise ValueError("the label-resolution fast path needs a TV regularizer")
    prob = LiftedProblem.build(tri, data_spec, reg, shape, mode="lellmann", frame=frame)
    return solve(prob, **kwargs)
