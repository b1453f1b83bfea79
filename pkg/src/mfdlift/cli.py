"""Command-line driver: denoise, inpaint, mean, synth, normals.

Exit codes: 0 success, 2 usage, 3 input/output or data errors,
4 no convergence within --max-iter (the result is still written).
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as fio
from . import synth
from .dataterm import DataTermSpec
from .geometry import (
    Circle,
    build_circle,
    build_flat_box,
    build_klein,
    build_so3,
    build_sphere2,
)
from .regularizer import CLI_NAMES, RegularizerSpec
from .solver import LiftedProblem, solve
from .unlift import gradient_descent_mean, grid_mean_oracle, lifted_mean_demo, unlift_field, weighted_energy

log = logging.getLogger("mfdlift")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NOCONV = 0, 2, 3, 4
OFF_MANIFOLD_TOL = 1e-3


class DataError(Exception):
    pass


# ---------------------------------------------------------------------------
# input handling


def _read_input(path):
    """Returns (values (P, C), grid shape, kind) with kind "raster" or "signal"."""
    path = Path(path)
    try:
        if path.suffix in (".hdr", ".raw") or (path.suffix != ".csv" and path.with_suffix(".hdr").exists()):
            r = fio.read_raster(path).data
            return r.reshape(-1, r.shape[2]), r.shape[:2], "raster"
        sig = fio.read_signal(path).data
        return sig, (sig.shape[0],), "signal"
    except (OSError, fio.FormatError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def _write_output(path, values, shape, kind):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if kind == "raster":
        fio.write_raster(path, values.reshape(tuple(shape) + (-1,)))
    else:
        fio.write_signal(path, values)


def build_mesh(manifold, labels, values=None):
    """Triangulation for the --manifold/--labels flags."""
    if manifold == "s1":
        return build_circle(int(labels or 16))
    if manifold == "s2":
        return build_sphere2(int(labels or 0))
    if manifold == "so3":
        return build_so3()
    if manifold == "klein":
        m = int(labels or 5)
        return build_klein(m, m)
    if manifold == "flat":
        lo, hi = values.min(axis=0), values.max(axis=0)
        hi = np.where(hi > lo, hi, lo + 1.0)
        n = int(labels or 3)
        return build_flat_box(lo, hi, [n] * values.shape[1])
    raise DataError(f"unknown manifold {manifold!r}")


def _embed(values, manifold, tri):
    """Map raw input columns to points on M; angles are accepted for s1."""
    if manifold == "s1" and values.shape[1] == 1:
        return Circle.from_angle(values[:, 0]), True
    if values.shape[1] != tri.embed_dim:
        raise DataError(f"{manifold} data needs {tri.embed_dim} columns, got {values.shape[1]}")
    geom = tri.geometry
    off = geom.off_manifold_distance(values)
    if np.max(off) > OFF_MANIFOLD_TOL:
        raise DataError(f"input is {np.max(off):.3g} away from the manifold (tolerance {OFF_MANIFOLD_TOL})")
    return geom.project_to_manifold(values), False


def _regularizer(args):
    if args.reg not in CLI_NAMES:
        raise DataError(f"--reg must be one of {sorted(CLI_NAMES)}")
    return RegularizerSpec.from_cli(args.reg, args.lam, args.alpha)


def _write_diagnostics(path, diag, extra=None):
    lines = [
        f"iterations = {diag.iterations}",
        f"converged = {int(diag.converged)}",
        f"relative_gap = {diag.gap:.6e}",
        f"primal_energy = {diag.primal:.12g}",
        f"dual_energy = {diag.dual:.12g}",
        f"seconds = {diag.seconds:.3f}",
    ]
    for k, v in (extra or {}).items():
        lines.append(f"{k} = {v}")
    lines.append("# iteration primal dual gap")
    lines += [f"# {it} {p:.12g} {d:.12g} {g:.6e}" for it, p, d, g in diag.trace]
    Path(path).write_text("\n".join(lines) + "\n")


def diagnostics_path(out):
    out = Path(out)
    return out.with_name(out.stem + ".diag.txt")


def _run_lifted(args, mask=None):
    values, shape, kind = _read_input(args.inp)
    tri = build_mesh(args.manifold, args.labels, values)
    points, as_angle = _embed(values, args.manifold, tri)
    reg = _regularizer(args)
    if mask is not None:
        spec = DataTermSpec("inpainting_indicator", points, mask=mask.reshape(-1), subgrid_level=args.subgrid)
    else:
        spec = DataTermSpec("quadratic_distance", points, subgrid_level=args.subgrid)
    if args.mode == "lellmann" and reg.kind not in ("tv", "tv_nuclear"):
        raise DataError("--mode lellmann needs --reg tv or tvnuc")
    log.info("mesh %r, %d pixels, seed %d", tri, points.shape[0], args.seed)
    prob = LiftedProblem.build(tri, spec, reg, shape, mode=args.mode, frame=args.frame)
    v, diag, _ = solve(prob, max_iter=args.max_iter, gap_tol=args.gap_tol, precond=args.precond)
    z, flagged = unlift_field(v, tri)
    out = Circle.to_angle(z)[:, None] if as_angle else z
    _write_output(args.out, out, shape, kind)
    _write_diagnostics(diagnostics_path(args.out), diag,
                       {"seed": args.seed, "mesh": repr(tri), "flagged_means": int(flagged.sum())})
    if args.mesh_out:
        fio.export_mesh(args.mesh_out, tri)
    print(f"wrote {args.out}: {diag.iterations} iterations, relative gap {diag.gap:.3e}")
    return EXIT_OK if diag.converged else EXIT_NOCONV


def cmd_denoise(args):
    return _run_lifted(args)


def cmd_inpaint(args):
    if not args.mask:
        raise DataError("inpaint needs --mask")
    mvals, mshape, _ = _read_input(args.mask)
    _, shape, _ = _read_input(args.inp)
    if tuple(mshape) != tuple(shape) or mvals.shape[1] != 1:
        raise DataError(f"mask shape {tuple(mshape)} does not match input {tuple(shape)}")
    return _run_lifted(args, mask=mvals[:, 0] > 0.5)


def cmd_mean(args):
    data = fio.read_signal(args.inp).data if Path(args.inp).exists() else None
    if data is None:
        raise DataError(f"cannot read {args.inp}")
    if data.shape[1] == 2:
        ang, w = data[:, 0], data[:, 1]
        pts = Circle.from_angle(ang)
    elif data.shape[1] == 3:
        pts, w = data[:, :2], data[:, 2]
        pts = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    else:
        raise DataError("mean input rows are 'angle, weight' or 'x, y, weight'")
    if np.any(w < 0) or w.sum() <= 0:
        raise DataError("weights must be nonnegative with a positive sum")
    w = w / w.sum()
    geom = Circle()
    z, diag = lifted_mean_demo(pts, w, n_labels=int(args.labels or 16), subgrid=args.subgrid,
                               max_iter=args.max_iter)
    gd = gradient_descent_mean(geom, pts, w, Circle.from_angle(args.start))
    e_lift = float(weighted_energy(geom, z, pts, w))
    e_gd = float(weighted_energy(geom, gd.point, pts, w))
    print(f"lifted   angle {Circle.to_angle(z):.6f}  energy {e_lift:.6f}  gap {diag.gap:.2e}")
    print(f"descent  angle {Circle.to_angle(gd.point):.6f}  energy {e_gd:.6f}  iterations {gd.iterations}")
    if args.oracle:
        a, e = grid_mean_oracle(pts, w)
        print(f"oracle   angle {a:.6f}  energy {e:.6f}")
    return EXIT_OK


def cmd_synth(args):
    res = synth.generate_synthetic(args.kind, seed=args.seed, sigma=args.sigma)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    for key in ("noisy", "clean", "mask"):
        if key not in res:
            continue
        arr = np.asarray(res[key], float)
        target = out if key == "noisy" else out.with_name(f"{out.stem}_{key}{out.suffix}")
        if arr.ndim >= 2 and args.kind in ("circle_noisy", "so3_grid", "sphere_image"):
            fio.write_raster(target, arr if arr.ndim == 3 else arr[..., None])
        else:
            fio.write_signal(target, arr)
    print(f"wrote {args.kind} (seed {args.seed}, sigma {res['sigma']}) to {out}")
    return EXIT_OK


def cmd_normals(args):
    try:
        elev = fio.read_raster(args.inp).data
    except (OSError, fio.FormatError) as exc:
        raise DataError(str(exc)) from exc
    if elev.shape[2] != 1:
        raise DataError("elevation raster must have one channel")
    n = synth.normals_from_elevation(elev[..., 0])
    fio.write_raster(args.out, n)
    if args.hillshade:
        fio.write_pgm(args.hillshade, synth.hillshade(n))
    print(f"wrote normals {n.shape} to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def _common(p):
    p.add_argument("--manifold", choices=["s1", "s2", "so3", "klein", "flat"], default="s1")
    p.add_argument("--labels", type=int, default=None,
                   help="s1: label count; s2: refinement level; klein: grid size; flat: labels per axis")
    p.add_argument("--reg", default="tv", help="tv, tvnuc, huber or quad")
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--subgrid", type=int, default=4)
    p.add_argument("--mode", choices=["sublabel", "lellmann"], default="sublabel")
    p.add_argument("--frame", choices=["ortho", "logmap"], default="ortho")
    p.add_argument("--max-iter", type=int, default=20000)
    p.add_argument("--gap-tol", type=float, default=1e-5)
    p.add_argument("--precond", choices=["off", "diag"], default="diag")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mask", default=None)
    p.add_argument("--mesh-out", default=None, help="optional PLY export of the label mesh")
    p.add_argument("--oracle", action="store_true")
    p.add_argument("-v", "--verbose", action="store_true")


def make_parser():
    ap = argparse.ArgumentParser(prog="mfdlift", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in [("denoise", "quadratic-distance denoising"), ("inpaint", "inpainting with a mask")]:
        _common(sub.add_parser(name, help=helptext))
    p = sub.add_parser("mean", help="weighted circle mean: lifting vs. gradient descent")
    _common(p)
    p.set_defaults(subgrid=8)
    p.add_argument("--start", type=float, default=np.pi, help="gradient descent start angle")
    p = sub.add_parser("synth", help="write a seeded synthetic fixture")
    p.add_argument("--kind", choices=synth.KINDS, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("-v", "--verbose", action="store_true")
    p = sub.add_parser("normals", help="surface normals of an elevation raster")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--hillshade", default=None, help="optional PGM shaded relief")
    p.add_argument("-v", "--verbose", action="store_true")
    return ap


COMMANDS = {"denoise": cmd_denoise, "inpaint": cmd_inpaint, "mean": cmd_mean, "synth": cmd_synth,
            "normals": cmd_normals}


def main(argv=None):
    ap = make_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
