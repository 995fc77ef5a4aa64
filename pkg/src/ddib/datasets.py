"""Point clouds: synthetic 2-D domains, standardisation, pixels and file I/O.

Shapes of the six synthetic domains (raw coordinates, before
standardisation; every sample gets isotropic Gaussian jitter ``JITTER``):

==================  =====================================================
moons               upper unit half-circle centred (0, 0) and lower unit
                    half-circle centred (1, 0.5), equal odds
checkerboards       uniform on the 8 "even" cells of a 4x4 board on [-2, 2]^2
concentric_rings    circles of radius 1 and 2 centred at the origin
concentric_squares  square outlines of half-width 1 and 2
parallel_rings      radius-0.8 circles centred (-1.2, 0) and (1.2, 0)
parallel_squares    half-width-0.8 square outlines centred (-1.2, 0), (1.2, 0)
==================  =====================================================

Each component of a mixture is picked with equal probability. Tags are
assigned after sorting the raw points by their first coordinate, so that
colouring by tag shows a left-to-right gradient in plots.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateDataError, FormatError, ParameterError, ShapeError

JITTER = 0.05

ALIASES = {
    "m": "moons", "moons": "moons",
    "cb": "checkerboards", "checkerboards": "checkerboards", "checkerboard": "checkerboards",
    "cr": "concentric_rings", "concentric_rings": "concentric_rings",
    "cs": "concentric_squares", "concentric_squares": "concentric_squares",
    "pr": "parallel_rings", "parallel_rings": "parallel_rings",
    "ps": "parallel_squares", "parallel_squares": "parallel_squares",
}
KINDS = ("moons", "checkerboards", "concentric_rings", "concentric_squares",
         "parallel_rings", "parallel_squares")
SHORT_NAMES = {"moons": "M", "checkerboards": "CB", "concentric_rings": "CR",
               "concentric_squares": "CS", "parallel_rings": "PR", "parallel_squares": "PS"}


@dataclass(eq=False)
class PointCloud:
    """``points`` is an (n, dim) float array; ``tags`` are n unique integer ids."""

    points: np.ndarray
    tags: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.tags = np.asarray(self.tags, dtype=np.int64)
        if self.points.ndim != 2:
            raise ShapeError(f"points must be (n, dim), got shape {self.points.shape}")
        if self.tags.shape != (self.points.shape[0],):
            raise ShapeError(f"{self.points.shape[0]} points but tags of shape {self.tags.shape}")
        if len(np.unique(self.tags)) != len(self.tags):
            raise ShapeError("tags must be unique within a cloud")
        if not np.all(np.isfinite(self.points)):
            raise DegenerateDataError("point cloud contains non-finite coordinates")

    @classmethod
    def from_points(cls, points) -> "PointCloud":
        points = np.asarray(points, dtype=np.float64)
        return cls(points, np.arange(points.shape[0]))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]

    def with_points(self, points) -> "PointCloud":
        return PointCloud(points, self.tags.copy())

    def take(self, index) -> "PointCloud":
        return PointCloud(self.points[index], self.tags[index])


def as_points(x) -> np.ndarray:
    return np.asarray(getattr(x, "points", x), dtype=np.float64)


def canonical_kind(kind: str) -> str:
    try:
        return ALIASES[kind.lower().replace("-", "_").replace(" ", "_")]
    except KeyError:
        raise ParameterError(f"unknown dataset kind {kind!r}; choose from {', '.join(KINDS)}") from None


def _circle(rng, n, radius, centers):
    c = np.asarray(centers, dtype=np.float64)[rng.integers(0, len(centers), n)]
    theta = rng.uniform(0.0, 2 * np.pi, n)
    r = np.broadcast_to(radius, (n,)) if np.ndim(radius) == 0 else radius
    return c + r[:, None] * np.column_stack([np.cos(theta), np.sin(theta)])


def _square_outline(rng, n, half_width, centers):
    # uniform position along the perimeter
    c = np.asarray(centers, dtype=np.float64)[rng.integers(0, len(centers), n)]
    hw = np.broadcast_to(half_width, (n,)) if np.ndim(half_width) == 0 else half_width
    side = rng.integers(0, 4, n)
    u = rng.uniform(-1.0, 1.0, n)
    xy = np.empty((n, 2))
    xy[:, 0] = np.select([side == 0, side == 1, side == 2], [u, np.ones(n), u], -np.ones(n))
    xy[:, 1] = np.select([side == 0, side == 1, side == 2], [np.ones(n), u, -np.ones(n)], u)
    return c + hw[:, None] * xy


def _raw(kind, n, rng):
    if kind == "moons":
        upper = rng.integers(0, 2, n).astype(bool)
        theta = rng.uniform(0.0, np.pi, n)
        x = np.where(upper, np.cos(theta), 1.0 - np.cos(theta))
        y = np.where(upper, np.sin(theta), 0.5 - np.sin(theta))
        pts = np.column_stack([x, y])
    elif kind == "checkerboards":
        cells = np.array([(i, j) for i in range(4) for j in range(4) if (i + j) % 2 == 0])
        pick = cells[rng.integers(0, len(cells), n)]
        pts = -2.0 + pick + rng.uniform(0.0, 1.0, (n, 2))
    elif kind == "concentric_rings":
        pts = _circle(rng, n, rng.choice([1.0, 2.0], n), [(0.0, 0.0)])
    elif kind == "concentric_squares":
        pts = _square_outline(rng, n, rng.choice([1.0, 2.0], n), [(0.0, 0.0)])
    elif kind == "parallel_rings":
        pts = _circle(rng, n, 0.8, [(-1.2, 0.0), (1.2, 0.0)])
    else:
        pts = _square_outline(rng, n, 0.8, [(-1.2, 0.0), (1.2, 0.0)])
    return pts + JITTER * rng.standard_normal((n, 2))


def generate(kind: str, n: int, seed=0) -> PointCloud:
    """Draw ``n`` raw points of a synthetic domain; pure in (kind, n, seed)."""
    kind = canonical_kind(kind)
    if int(n) != n or n < 1:
        raise ParameterError(f"n must be a positive integer, got {n}")
    pts = _raw(kind, int(n), np.random.default_rng(seed))
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    return PointCloud(pts[order], np.arange(int(n)))


@dataclass(frozen=True)
class Standardizer:
    """Per-axis affine map ``(x - mean) / scale``."""

    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.scale) <= 0):
            raise DegenerateDataError("standardizer scale must be strictly positive")

    def apply(self, x):
        if isinstance(x, PointCloud):
            return x.with_points(self.apply(x.points))
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.scale

    def invert(self, x):
        if isinstance(x, PointCloud):
            return x.with_points(self.invert(x.points))
        return np.asarray(x, dtype=np.float64) * self.scale + self.mean

    def to_dict(self) -> dict:
        return {"mean": [float(v) for v in self.mean], "scale": [float(v) for v in self.scale]}

    @classmethod
    def from_dict(cls, d) -> "Standardizer":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["scale"], dtype=np.float64))


def standardize(cloud: PointCloud):
    """Zero mean, unit (population) variance per axis. Returns ``(cloud, standardizer)``."""
    x = as_points(cloud)
    if x.shape[0] < 2:
        raise DegenerateDataError("standardizing needs at least two points")
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    if np.any(scale <= 1e-12 * np.maximum(1.0, np.abs(mean))):
        raise DegenerateDataError(f"zero variance along axis {int(np.argmin(scale))}")
    st = Standardizer(mean, scale)
    out = st.apply(x)
    # second pass removes the rounding left by the first
    mean2, scale2 = out.mean(axis=0), out.std(axis=0)
    st = Standardizer(mean + scale * mean2, scale * scale2)
    tags = cloud.tags.copy() if isinstance(cloud, PointCloud) else np.arange(x.shape[0])
    return PointCloud(st.apply(x), tags), st


# --- images ----------------------------------------------------------------

def pixels_to_cloud(image) -> PointCloud:
    """(H, W, 3) uint8 raster -> one point per pixel in [-1, 1]^3, row-major tags."""
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3 or img.size == 0:
        raise FormatError(f"expected a non-empty (H, W, 3) RGB raster, got shape {img.shape}")
    if img.dtype != np.uint8:
        if not np.issubdtype(img.dtype, np.integer) or img.min() < 0 or img.max() > 255:
            raise FormatError("RGB raster must hold integers in [0, 255]")
    pts = img.reshape(-1, 3).astype(np.float64) * (2.0 / 255.0) - 1.0
    return PointCloud(pts, np.arange(pts.shape[0]))


def cloud_to_pixels(cloud: PointCloud, width: int, height: int) -> np.ndarray:
    """Inverse of :func:`pixels_to_cloud`: clamp, rescale, round half to even."""
    if cloud.dim != 3 or len(cloud) != width * height:
        raise ShapeError(f"cloud of {len(cloud)} {cloud.dim}-d points cannot fill a {width}x{height} RGB image")
    if cloud.tags.min() < 0 or cloud.tags.max() >= width * height:
        raise ShapeError("pixel tags must index the raster row-major")
    vals = np.rint((np.clip(cloud.points, -1.0, 1.0) + 1.0) * 127.5).astype(np.uint8)
    out = np.empty((width * height, 3), dtype=np.uint8)
    out[cloud.tags] = vals
    return out.reshape(height, width, 3)


def _ppm_tokens(data: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("truncated PPM header")
        tokens.append(data[start:pos])
    return tokens, pos + 1  # exactly one whitespace byte precedes the raster


def read_ppm(path) -> np.ndarray:
    """Read a binary (P6) PPM with maxval 255 into an (H, W, 3) uint8 array."""
    data = Path(path).read_bytes()
    tokens, offset = _ppm_tokens(data, 4)
    if tokens[0] != b"P6":
        raise FormatError(f"{path}: not a binary PPM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError(f"{path}: malformed PPM header") from None
    if maxval != 255 or width < 1 or height < 1:
        raise FormatError(f"{path}: only 8-bit PPMs are supported (maxval {maxval})")
    raster = data[offset:offset + width * height * 3]
    if len(raster) != width * height * 3:
        raise FormatError(f"{path}: expected {width * height * 3} raster bytes, found {len(raster)}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3).copy()


def write_ppm(path, image) -> None:
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise FormatError(f"expected (H, W, 3) uint8 raster, got {img.shape} {img.dtype}")
    h, w = img.shape[:2]
    Path(path).write_bytes(b"P6\n%d %d\n255\n" % (w, h) + img.tobytes())


# --- CSV point files -------------------------------------------------------

def write_csv(path, cloud: PointCloud) -> None:
    """Header ``x0,...,x{d-1},tag``; floats in shortest round-trip form."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{i}" for i in range(cloud.dim)] + ["tag"])
    for p, t in zip(cloud.points, cloud.tags):
        w.writerow([repr(float(v)) for v in p] + [int(t)])
    Path(path).write_text(buf.getvalue())


def read_csv(path) -> PointCloud:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise FormatError(f"{path}: empty point file", 1)
    header = [h.strip() for h in rows[0]]
    dim = len(header) - 1
    if dim < 1 or header[-1] != "tag" or header[:-1] != [f"x{i}" for i in range(dim)]:
        raise FormatError(f"{path}: header must be x0,...,x{{d-1}},tag; got {','.join(header)}", 1)
    pts, tags = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != dim + 1:
            raise FormatError(f"{path}: expected {dim + 1} fields, got {len(row)}", lineno)
        try:
            pts.append([float(v) for v in row[:-1]])
            tags.append(int(row[-1]))
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}", lineno) from None
    if not pts:
        raise FormatError(f"{path}: no points", 2)
    return PointCloud(np.array(pts), np.array(tags))
