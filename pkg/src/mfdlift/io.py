"""Plain file formats: raw f32 rasters with a text header, CSV signals, PLY meshes, PGM images."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class FormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# rasters: <stem>.hdr (key = value lines) + <stem>.raw (little-endian f32, row-major)


@dataclass
class RasterFile:
    data: np.ndarray  # (height, width, channels)

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[2]


def _raster_paths(path):
    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (".hdr", ".raw") else path
    return stem.with_suffix(".hdr"), stem.with_suffix(".raw")


def write_raster(path, data):
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 2:
        data = data[..., None]
    if data.ndim != 3:
        raise FormatError("raster data must be (height, width[, channels])")
    hdr, raw = _raster_paths(path)
    h, w, c = data.shape
    hdr.write_text(f"width = {w}\nheight = {h}\nchannels = {c}\ndtype = f32\norder = row-major\n")
    raw.write_bytes(data.astype("<f4").tobytes())
    return hdr, raw


def read_raster(path):
    hdr, raw = _raster_paths(path)
    meta = {}
    for line in hdr.read_text().splitlines():
        if line.strip() and not line.lstrip().startswith("#"):
            if "=" not in line:
                raise FormatError(f"bad header line {line!r}")
            k, v = line.split("=", 1)
            meta[k.strip()] = v.strip()
    try:
        w, h, c = int(meta["width"]), int(meta["height"]), int(meta.get("channels", 1))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"incomplete raster header {hdr}") from exc
    if meta.get("dtype", "f32") != "f32":
        raise FormatError("only f32 rasters are supported")
    payload = raw.read_bytes()
    if len(payload) != w * h * c * 4:
        raise FormatError(f"payload has {len(payload)} bytes, expected {w * h * c * 4}")
    return RasterFile(np.frombuffer(payload, dtype="<f4").reshape(h, w, c).astype(float))


# ---------------------------------------------------------------------------
# signals: one row per sample, comma separated embedding coordinates


@dataclass
class SignalFile:
    data: np.ndarray  # (samples, columns)


def write_signal(path, data):
    data = np.asarray(data, float)
    if data.ndim == 1:
        data = data[:, None]
    np.savetxt(path, data, delimiter=",", fmt="%.17g")


def read_signal(path):
    rows = []
    ncol = None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            vals = [float(t) for t in line.replace(";", ",").split(",")]
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: not a number") from exc
        if ncol is None:
            ncol = len(vals)
        elif len(vals) != ncol:
            raise FormatError(f"{path}:{lineno}: expected {ncol} columns, got {len(vals)}")
        if not np.all(np.isfinite(vals)):
            raise FormatError(f"{path}:{lineno}: non-finite value")
        rows.append(vals)
    if not rows:
        raise FormatError(f"{path}: no samples")
    return SignalFile(np.array(rows))


# ---------------------------------------------------------------------------
# meshes and images


def write_ply(path, vertices, faces=None, edges=None):
    """ASCII PLY with arbitrary vertex dimension (x, y, z, w for 4-D points)."""
    vertices = np.asarray(vertices, float)
    names = ["x", "y", "z", "w"][: vertices.shape[1]]
    lines = ["ply", "format ascii 1.0", f"element vertex {len(vertices)}"]
    lines += [f"property double {n}" for n in names]
    if faces is not None:
        lines += [f"element face {len(faces)}", "property list uchar int vertex_indices"]
    if edges is not None:
        lines += [f"element edge {len(edges)}", "property int vertex1", "property int vertex2"]
    lines.append("end_header")
    lines += [" ".join(f"{x:.17g}" for x in v) for v in vertices]
    if faces is not None:
        lines += [f"{len(f)} " + " ".join(str(int(i)) for i in f) for f in faces]
    if edges is not None:
        lines += [f"{int(a)} {int(b)}" for a, b in edges]
    Path(path).write_text("\n".join(lines) + "\n")


def export_mesh(path, tri):
    """Write a triangulation as PLY; tetrahedral meshes get an adjacency sidecar."""
    path = Path(path)
    s = tri.dim
    if s == 1:
        write_ply(path, tri.vertices, edges=tri.simplices)
    elif s == 2:
        write_ply(path, tri.vertices, faces=tri.simplices)
    else:
        tris = tri.faces(3)
        write_ply(path, tri.vertices, faces=tris)
        # tetrahedra sharing a triangle
        owner = {}
        for t, simp in enumerate(tri.simplices):
            for skip in range(4):
                key = tuple(sorted(np.delete(simp, skip)))
                owner.setdefault(key, []).append(t)
        nbrs = [set() for _ in range(tri.n_simplices)]
        for ts in owner.values():
            for a in ts:
                nbrs[a].update(b for b in ts if b != a)
        side = path.with_suffix(".adj.txt")
        side.write_text(
            "\n".join(f"{t} " + " ".join(map(str, tri.simplices[t])) + " : " + " ".join(map(str, sorted(n)))
                      for t, n in enumerate(nbrs)) + "\n"
        )


def write_pgm(path, image):
    """8-bit binary PGM of an image with values in [0, 1]."""
    img = np.clip(np.asarray(image, float), 0.0, 1.0)
    h, w = img.shape
    data = np.rint(img * 255).astype(np.uint8)
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + data.tobytes())


def read_pgm(path):
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5":
        raise FormatError("not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    body = parts[4]
    return np.frombuffer(body[: w * h], dtype=np.uint8).reshape(h, w) / float(maxval)
