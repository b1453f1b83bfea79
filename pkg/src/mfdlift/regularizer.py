"""Convex regularizers eta acting on s x d gradient representations.

Kinds: ``tv`` (lam * Frobenius norm), ``tv_nuclear`` (lam * nuclear norm),
``huber`` (lam * phi_alpha of the Frobenius norm) and ``quadratic``
(lam / 2 * squared Frobenius norm).  Matrices are the last two axes.
"""

from dataclasses import dataclass

import numpy as np

from . import proxkit

KINDS = ("tv", "tv_nuclear", "huber", "quadratic")
CLI_NAMES = {"tv": "tv", "tvnuc": "tv_nuclear", "huber": "huber", "quad": "quadratic"}


@dataclass(frozen=True)
class RegularizerSpec:
    kind: str
    lam: float
    alpha: float = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown regularizer {self.kind!r}")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.kind == "huber" and not (self.alpha is not None and self.alpha > 0):
            raise ValueError("huber needs alpha > 0")

    @classmethod
    def from_cli(cls, name, lam, alpha=None):
        if name not in CLI_NAMES:
            raise ValueError(f"--reg must be one of {sorted(CLI_NAMES)}")
        return cls(CLI_NAMES[name], lam, alpha if name == "huber" else None)

    @property
    def dual_radius(self):
        """Radius of dom(eta*), infinite for the quadratic regularizer."""
        return np.inf if self.kind == "quadratic" else self.lam

    @property
    def dual_norm(self):
        return "spectral" if self.kind == "tv_nuclear" else "frobenius"


def _fro(x):
    return np.sqrt(np.sum(np.asarray(x, float) ** 2, axis=(-2, -1)))


def _as_matrix(x):
    x = np.asarray(x, float)
    return x[..., None] if x.ndim == 1 else x


def huber(r, alpha):
    r = np.asarray(r, float)
    return np.where(r <= alpha, r**2 / (2 * alpha), r - alpha / 2)


def value(spec, xi):
    xi = _as_matrix(xi)
    if spec.kind == "tv":
        return spec.lam * _fro(xi)
    if spec.kind == "tv_nuclear":
        return spec.lam * np.linalg.svd(xi, compute_uv=False).sum(-1)
    if spec.kind == "huber":
        return spec.lam * huber(_fro(xi), spec.alpha)
    return 0.5 * spec.lam * _fro(xi) ** 2


def dual_norm(spec, zeta):
    zeta = _as_matrix(zeta)
    if spec.kind == "tv_nuclear":
        return np.linalg.svd(zeta, compute_uv=False).max(-1)
    return _fro(zeta)


def conjugate(spec, zeta, tol=1e-12):
    """eta*(zeta), +inf outside the domain (with relative slack ``tol``)."""
    zeta = _as_matrix(zeta)
    nrm = dual_norm(spec, zeta)
    if spec.kind == "quadratic":
        return nrm**2 / (2 * spec.lam)
    inside = nrm <= spec.lam * (1 + tol)
    base = 0.0 if spec.kind in ("tv", "tv_nuclear") else spec.alpha * nrm**2 / (2 * spec.lam)
    return np.where(inside, base, np.inf)


def perspective(spec, xi, mass):
    """mass * eta(xi / mass), with the recession function at mass = 0."""
    xi = _as_matrix(xi)
    mass = np.asarray(mass, float)
    if spec.kind in ("tv", "tv_nuclear"):
        return value(spec, xi)
    r = _fro(xi)
    safe = np.where(mass > 0, mass, 1.0)
    if spec.kind == "huber":
        quad = r**2 / (2 * spec.alpha * safe)
        lin = r - spec.alpha * mass / 2
        out = spec.lam * np.where(r <= spec.alpha * mass, quad, lin)
        return np.where(mass > 0, out, spec.lam * r)
    out = 0.5 * spec.lam * r**2 / safe
    return np.where(mass > 0, out, np.where(r > 0, np.inf, 0.0))


def project_epi_conjugate(spec, zeta, a):
    """Projection of (zeta, a) onto {eta*(zeta) <= a}; zeta has shape (..., s, d)."""
    zeta = _as_matrix(zeta)
    a = np.asarray(a, float)
    shape = zeta.shape
    flat = zeta.reshape(shape[:-2] + (-1,))
    if spec.kind == "tv":
        return proxkit.project_ball(flat, spec.lam).reshape(shape), np.maximum(a, 0.0)
    if spec.kind == "tv_nuclear":
        return proxkit.project_ball(zeta, spec.lam, "spectral"), np.maximum(a, 0.0)
    if spec.kind == "quadratic":
        z, t = proxkit.project_parabola_epi(flat, a, 1.0 / spec.lam)
        return z.reshape(shape), t
    z, t = proxkit.project_truncated_parabola_epi(flat, a, spec.alpha / spec.lam, spec.lam)
    return z.reshape(shape), t
