"""Seeded synthetic fixtures and elevation-model helpers."""

import numpy as np

from .geometry import SO3, Circle, KleinBottle, Sphere2, canonical_quaternion

KINDS = ("circle_noisy", "sphere_curve", "klein_curve_250", "so3_grid", "flat_rof", "sphere_image")

DEFAULT_SIGMA = {
    "circle_noisy": 0.6,
    "sphere_curve": 0.2,
    "klein_curve_250": 0.15,
    "so3_grid": 0.1,
    "flat_rof": 0.15,
    "sphere_image": 0.3,
}


def wrap_angle(a):
    return (np.asarray(a, float) + np.pi) % (2 * np.pi) - np.pi


def tangent_noise(geom, z, sigma, rng):
    """Gaussian noise in T_z M, mapped back with exp."""
    z = np.asarray(z, float)
    xi = sigma * rng.standard_normal(z.shape)
    xi = np.einsum("...ij,...j->...i", geom.tangent_projector(z), xi)
    return geom.exp(z, xi)


def insar_phase(n=64):
    """Smooth phase field with a few wraps: a tilted ramp plus two bumps."""
    y, x = np.mgrid[0:n, 0:n] / (n - 1)
    bumps = 5.0 * np.exp(-((x - 0.3) ** 2 + (y - 0.35) ** 2) / 0.03) - 4.0 * np.exp(
        -((x - 0.7) ** 2 + (y - 0.7) ** 2) / 0.02
    )
    return wrap_angle(6.0 * x + 3.0 * y + bumps)


def elevation_hills(n=32):
    y, x = np.mgrid[0:n, 0:n] / (n - 1)
    z = 0.5 * np.sin(3 * x) + 0.4 * np.cos(4 * y) + 3.0 * np.exp(-((x - 0.5) ** 2 + (y - 0.5) ** 2) / 0.05)
    return z * n / 4.0


def normals_from_elevation(elev, spacing=1.0):
    """Unit surface normals (H, W, 3) of a height field.

    Central differences inside, one-sided differences at the boundary; x runs
    along columns and y along rows.
    """
    z = np.asarray(elev, float)
    if z.ndim == 3 and z.shape[2] == 1:
        z = z[..., 0]
    if z.ndim != 2 or min(z.shape) < 2:
        raise ValueError("elevation must be a 2-D raster with at least 2 rows and columns")
    zy, zx = np.gradient(z, spacing, edge_order=1)
    n = np.stack([-zx, -zy, np.ones_like(z)], axis=-1)
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


def hillshade(normals, light=(1.0, 1.0, 1.0)):
    """Lambertian shading max(<n, l>, 0) with a fixed unit light direction."""
    lvec = np.asarray(light, float)
    lvec = lvec / np.linalg.norm(lvec)
    return np.clip(np.asarray(normals, float) @ lvec, 0.0, 1.0)


def generate_synthetic(kind, seed=0, sigma=None):
    """Return a dict with ``clean``, ``noisy`` and (for so3_grid) ``mask`` arrays.

    Shapes: circle_noisy (64, 64) angles; sphere_curve (100, 3);
    klein_curve_250 (250, 3); so3_grid (8, 8, 4); flat_rof (64, 2);
    sphere_image (32, 32, 3).
    """
    if kind not in KINDS:
        raise ValueError(f"unknown synthetic kind {kind!r}; choose from {KINDS}")
    sigma = DEFAULT_SIGMA[kind] if sigma is None else float(sigma)
    rng = np.random.default_rng(seed)
    out = {"kind": kind, "seed": seed, "sigma": sigma}
    if kind == "circle_noisy":
        clean = insar_phase(64)
        out["clean"] = clean
        out["noisy"] = wrap_angle(clean + sigma * rng.standard_normal(clean.shape))
    elif kind == "sphere_curve":
        t = np.linspace(0, 1, 100)
        theta = 0.4 + 2.0 * t
        phi = 4.0 * t + 0.6 * np.sin(7 * t)
        clean = np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], -1)
        out["clean"] = clean
        out["noisy"] = tangent_noise(Sphere2(), clean, sigma, rng)
    elif kind == "klein_curve_250":
        geom = KleinBottle()
        t = np.linspace(0, 1, 250, endpoint=False)
        u = 2 * np.pi * t
        v = 1.0 + 2.5 * np.sin(2 * np.pi * t) + np.where(t > 0.5, 1.5, 0.0)
        uv = np.stack([u, v], -1)
        clean = geom.embed(uv)
        # noise in the parameter chart keeps the samples on the surface
        uvn = uv + sigma * rng.standard_normal(uv.shape)
        out["clean"] = clean
        out["noisy"] = geom.embed(uvn)
    elif kind == "so3_grid":
        n = 8
        y, x = np.mgrid[0:n, 0:n] / (n - 1)
        axis = np.stack([np.cos(2 * x), np.sin(2 * x), 0.5 + y], -1)
        axis /= np.linalg.norm(axis, axis=-1, keepdims=True)
        ang = 0.3 + 1.2 * x * y
        clean = canonical_quaternion(np.concatenate([np.cos(ang / 2)[..., None], np.sin(ang / 2)[..., None] * axis], -1))
        noisy = tangent_noise(SO3(), clean, sigma, rng)
        mask = np.zeros((n, n), dtype=bool)
        mask[2:6, 2:6] = True
        out["clean"], out["noisy"], out["mask"] = clean, noisy, mask
    elif kind == "flat_rof":
        t = np.arange(64)
        clean = np.stack([np.where(t < 20, 0.2, np.where(t < 44, 0.8, 0.4)),
                          np.where(t < 32, 0.3, 0.7) + 0.2 * np.sin(t / 10.0)], -1)
        out["clean"] = clean
        out["noisy"] = np.clip(clean + sigma * rng.standard_normal(clean.shape), 0.0, 1.0)
    else:
        clean = normals_from_elevation(elevation_hills(32))
        out["clean"] = clean
        out["noisy"] = tangent_noise(Sphere2(), clean, sigma, rng)
    return out


def circle_embed(angles):
    return Circle.from_angle(angles)
