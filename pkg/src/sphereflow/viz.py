"""Flow visualization: color-coded top-view rendering after a
length-preserving planar projection, and explicit-Euler streamline tracing.

The color coding uses the standard 55-bin optical-flow color wheel
(RY=15, YG=6, GC=4, CB=11, BM=13, MR=6 transitions); the zero vector maps to
white and vectors at or beyond the disk radius R saturate fully.  Rendering
is deterministic: no antialiasing, positional pixel writes only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError
from .mesh import TriMesh, build_icosphere, locate_faces
from .spectral import TriField

PARALLEL_TOL = 1e-14  # |P v| below this fraction of |v| counts as vertical
DEFAULT_TAU = 50
SEED_LEVEL = 4  # default seeds: level-4 icosphere vertices (2562 full sphere)
YELLOW = np.array([255.0, 255.0, 0.0])
GREEN = np.array([0.0, 128.0, 0.0])


@dataclass
class RasterImage:
    """8-bit RGB raster, row-major, top row first."""

    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) uint8
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be >= 1")
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        if self.pixels.shape != (self.height, self.width, 3):
            raise ValueError(f"pixel array shape {self.pixels.shape} does not "
                             f"match {self.height}x{self.width}x3")


@dataclass
class Streamline:
    """Euler trajectory on the sphere; points[0] is the seed."""

    seed: np.ndarray
    points: np.ndarray  # (tau + 1, 3)
    step: float
    flagged: bool = False  # seed (or trajectory) left the mesh coverage


def color_wheel() -> np.ndarray:
    """The 55-bin hue table, rows in [0, 1]^3."""
    segments = [
        (15, 0, 1, +1),  # red to yellow: red held, green ramps up
        (6, 1, 0, -1),   # yellow to green: green held, red ramps down
        (4, 1, 2, +1),   # green to cyan: green held, blue ramps up
        (11, 2, 1, -1),  # cyan to blue: blue held, green ramps down
        (13, 2, 0, +1),  # blue to magenta: blue held, red ramps up
        (6, 0, 2, -1),   # magenta to red: red held, blue ramps down
    ]
    total = sum(s[0] for s in segments)
    wheel = np.zeros((total, 3))
    row = 0
    for count, hold, ramp, direction in segments:
        vals = np.arange(count) / count
        wheel[row:row + count, hold] = 1.0
        wheel[row:row + count, ramp] = vals if direction > 0 else 1.0 - vals
        row += count
    return wheel


def project_for_display(vectors) -> tuple[np.ndarray, np.ndarray]:
    """Drop z and rescale to the original length: (|v|/|Pv|) Pv.

    Vectors (numerically) parallel to e_z cannot be rescaled; they map to
    zero and are reported in the returned flag array.  Zero vectors map to
    zero unflagged.
    """
    v = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    lengths = np.linalg.norm(v, axis=1)
    planar_len = np.hypot(v[:, 0], v[:, 1])
    flagged = planar_len < PARALLEL_TOL * lengths
    scale = np.zeros_like(lengths)
    ok = ~flagged & (planar_len > 0.0)
    scale[ok] = lengths[ok] / planar_len[ok]
    out = np.zeros_like(v)
    out[:, 0] = v[:, 0] * scale
    out[:, 1] = v[:, 1] * scale
    return out, flagged


def _pixel_grid(size: int):
    """Orthographic top view: x right, y up, unit disk inscribed."""
    centers = (np.arange(size) + 0.5) / size * 2.0 - 1.0
    x = centers[None, :].repeat(size, axis=0)
    y = (-centers)[:, None].repeat(size, axis=1)
    return x, y


def colorize(fld: TriField, radius: float, size: int = 512,
             view: str = "top") -> RasterImage:
    """Color-coded top view of a tangent field.

    Each disk pixel is lifted to the northern hemisphere, its triangle's
    vector projected to the plane, and encoded by hue (direction) and
    saturation (length relative to the disk radius).  Background is black.
    """
    if radius <= 0:
        raise ValueError(f"color disk radius must be > 0, got {radius}")
    if view != "top":
        raise ValueError(f"only the 'top' view is supported, got '{view}'")
    if size < 1:
        raise ValueError("image size must be >= 1")
    x, y = _pixel_grid(size)
    rho_sq = x ** 2 + y ** 2
    inside = rho_sq <= 1.0
    pts = np.stack([x[inside], y[inside],
                    np.sqrt(np.maximum(0.0, 1.0 - rho_sq[inside]))], axis=1)
    faces = locate_faces(fld.mesh, pts, allow_missing=True)
    covered = faces >= 0
    vectors = np.zeros((len(pts), 3))
    vectors[covered] = fld.vectors[faces[covered]]
    planar, flagged = project_for_display(vectors)

    wheel = color_wheel()
    ncols = len(wheel)
    lengths = np.hypot(planar[:, 0], planar[:, 1])
    sat = np.minimum(lengths / radius, 1.0)
    angle = np.arctan2(-planar[:, 1], -planar[:, 0]) / np.pi
    fk = (angle + 1.0) / 2.0 * (ncols - 1)
    k0 = np.floor(fk).astype(np.int64) % ncols
    k1 = (k0 + 1) % ncols
    frac = fk - np.floor(fk)
    col = (1.0 - frac)[:, None] * wheel[k0] + frac[:, None] * wheel[k1]
    col = 1.0 - sat[:, None] * (1.0 - col)
    rgb = np.floor(255.0 * col + 0.5).astype(np.uint8)
    rgb[~covered] = 0  # uncovered sphere points render as background

    pixels = np.zeros((size, size, 3), dtype=np.uint8)
    pixels[inside] = rgb
    return RasterImage(width=size, height=size, pixels=pixels,
                       meta={"flagged_parallel": int(flagged[covered].sum()),
                             "radius": radius})


def auto_step(fld: TriField) -> float:
    """Euler step h = 1 / (10 max |v|)."""
    vmax = float(np.linalg.norm(fld.vectors, axis=1).max(initial=0.0))
    if vmax == 0.0:
        raise ValueError("auto step is undefined for a zero field")
    return 1.0 / (10.0 * vmax)


def default_seeds(mesh: TriMesh) -> np.ndarray:
    """Vertices of a level-4 icosphere restricted to the mesh coverage."""
    seeds = build_icosphere(SEED_LEVEL).vertices
    covered = locate_faces(mesh, seeds, allow_missing=True) >= 0
    return seeds[covered]


def trace_streamlines(fld: TriField, seeds, tau: int = DEFAULT_TAU,
                      h: float | None = None) -> list[Streamline]:
    """Explicit Euler tracing with reprojection onto the sphere.

    The velocity at a point is the constant vector of its containing
    triangle.  After every step the point is renormalized (the tangent step
    leaves the surface at second order).  Seeds outside the mesh coverage
    produce a flagged streamline holding only the seed position; a
    trajectory leaving the coverage is frozen at its last point and flagged.
    """
    if tau < 1:
        raise ValueError(f"tau must be >= 1, got {tau}")
    step = auto_step(fld) if h is None else float(h)
    if step <= 0:
        raise ValueError(f"step size must be > 0, got {step}")
    pts = np.atleast_2d(np.asarray(seeds, dtype=np.float64)).copy()
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    n = len(pts)
    track = np.empty((n, tau + 1, 3))
    track[:, 0] = pts
    seed_covered = locate_faces(fld.mesh, pts, allow_missing=True) >= 0
    active = seed_covered.copy()
    flagged = ~active
    current = pts.copy()
    for t in range(1, tau + 1):
        if active.any():
            faces = locate_faces(fld.mesh, current[active], allow_missing=True)
            lost = faces < 0
            if lost.any():
                idx = np.nonzero(active)[0][lost]
                active[idx] = False
                flagged[idx] = True
                faces = faces[~lost]
            moving = np.nonzero(active)[0]
            stepped = current[moving] + step * fld.vectors[faces]
            stepped /= np.linalg.norm(stepped, axis=1)[:, None]
            current[moving] = stepped
        track[:, t] = current
    # uncovered seeds keep only their seed position; trajectories that left
    # the coverage mid-trace stay frozen at the exit point (full length)
    return [Streamline(seed=track[i, 0].copy(),
                       points=track[i] if seed_covered[i] else track[i, :1],
                       step=step, flagged=bool(flagged[i]))
            for i in range(n)]


def _draw_segment(pixels, p0, p1, t0, t1, tau_max):
    """Bresenham walk from pixel p0 to p1 with linearly interpolated color."""
    x0, y0 = p0
    x1, y1 = p1
    dx = abs(x1 - x0)
    dy = -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    steps = max(dx, -dy)
    h, w, _ = pixels.shape
    i = 0
    while True:
        t = t0 + (t1 - t0) * (i / steps if steps else 0.0)
        frac = t / tau_max if tau_max else 0.0
        color = (1.0 - frac) * YELLOW + frac * GREEN
        if 0 <= y0 < h and 0 <= x0 < w:
            pixels[y0, x0] = np.floor(color + 0.5).astype(np.uint8)
        if x0 == x1 and y0 == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy
        i += 1


def render_streamlines(lines: list, size: int = 512) -> RasterImage:
    """Top-view polyline raster; color runs yellow (step 0) to green (last).

    Points on the southern hemisphere are hidden; segments touching them are
    skipped.  Lines draw in input order, later lines overwrite.
    """
    if not lines:
        raise ValueError("no streamlines to render")
    if size < 1:
        raise ValueError("image size must be >= 1")
    pixels = np.zeros((size, size, 3), dtype=np.uint8)
    for line in lines:
        pts = line.points
        tau_max = len(pts) - 1
        cols = np.floor((pts[:, 0] + 1.0) / 2.0 * size).astype(np.int64)
        rows = np.floor((1.0 - pts[:, 1]) / 2.0 * size).astype(np.int64)
        cols = np.clip(cols, 0, size - 1)
        rows = np.clip(rows, 0, size - 1)
        visible = pts[:, 2] >= 0.0
        if tau_max == 0 or len(pts) == 1:
            if visible[0]:
                _draw_segment(pixels, (cols[0], rows[0]), (cols[0], rows[0]),
                              0, 0, 1)
            continue
        for k in range(tau_max):
            if not (visible[k] and visible[k + 1]):
                continue
            _draw_segment(pixels, (int(cols[k]), int(rows[k])),
                          (int(cols[k + 1]), int(rows[k + 1])),
                          k, k + 1, tau_max)
    return RasterImage(width=size, height=size, pixels=pixels)


# ---------------------------------------------------------------------------
# file formats

def write_ppm(image: RasterImage, path) -> None:
    """Binary PPM (P6, max value 255)."""
    with open(path, "wb") as fh:
        fh.write(f"P6\n{image.width} {image.height}\n255\n".encode("ascii"))
        fh.write(image.pixels.tobytes())


def read_ppm(path) -> RasterImage:
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P6":
        raise FormatError(f"{path}: not a binary PPM (P6)")
    try:
        width, height = (int(t) for t in parts[1].split())
        maxval = int(parts[2])
    except ValueError:
        raise FormatError(f"{path}: bad PPM header")
    if maxval != 255:
        raise FormatError(f"{path}: expected max value 255, got {maxval}")
    payload = parts[3]
    expected = width * height * 3
    if len(payload) != expected:
        raise FormatError(f"{path}: expected {expected} pixel bytes, "
                          f"got {len(payload)}")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return RasterImage(width=width, height=height, pixels=pixels.copy())


def write_streamlines_csv(lines: list, path) -> None:
    """CSV 'seed,step,x,y,z', seed-major, step-minor."""
    with open(path, "w") as fh:
        fh.write("seed,step,x,y,z\n")
        for s, line in enumerate(lines):
            for t, p in enumerate(line.points):
                fh.write(f"{s},{t},{p[0]:.17g},{p[1]:.17g},{p[2]:.17g}\n")
