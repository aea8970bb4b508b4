"""Scalar data on the mesh: frames, discrete derivatives, voxel projection,
sphere fitting, and synthetic rotation pairs with known ground-truth flow."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import harmonics
from .errors import FormatError
from .harmonics import BasisSpec, ScalarCoeffs
from .mesh import TriMesh
from .spectral import CoeffVector, TriField

MAX_ROTATION_ANGLE = 0.2  # small-motion guard for synthetic pairs
DEFAULT_RADIAL_SAMPLES = 11


@dataclass
class ScalarFrame:
    """Per-vertex samples of a scalar function at one time instant."""

    mesh: TriMesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.mesh.vertex_count,):
            raise ValueError(
                f"expected {self.mesh.vertex_count} vertex values, "
                f"got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("frame contains non-finite values")


def _same_mesh(a: TriMesh, b: TriMesh) -> bool:
    return a is b or (a.vertex_count == b.vertex_count
                      and a.face_count == b.face_count
                      and np.array_equal(a.faces, b.faces)
                      and np.array_equal(a.vertices, b.vertices))


def pl_gradient(frame: ScalarFrame) -> TriField:
    """Per-triangle surface gradient of the piecewise-linear interpolant.

    grad|_T = (F(v0) - F(v1)) h1/|h1|^2 + (F(v0) - F(v2)) h2/|h2|^2 with h_j
    the height vector from vertex j; the result lies in each triangle plane.
    """
    mesh = frame.mesh
    vals = frame.values[mesh.faces]  # (F, 3)
    h = mesh.heights
    hsq = np.einsum("fjk,fjk->fj", h, h)
    grad = ((vals[:, 0] - vals[:, 1]) / hsq[:, 1])[:, None] * h[:, 1] \
        + ((vals[:, 0] - vals[:, 2]) / hsq[:, 2])[:, None] * h[:, 2]
    return TriField(mesh=mesh, vectors=grad)


def time_derivative(f0: ScalarFrame, f1: ScalarFrame) -> ScalarFrame:
    """Forward difference f1 - f0, per vertex."""
    if not _same_mesh(f0.mesh, f1.mesh):
        raise ValueError("frames live on different meshes")
    return ScalarFrame(mesh=f0.mesh, values=f1.values - f0.values)


def normalize_frame(frame: ScalarFrame) -> ScalarFrame:
    """Affine map of [min, max] onto [0, 1].

    A constant frame has no range; it is returned unchanged with a warning.
    """
    vmin = float(frame.values.min())
    vmax = float(frame.values.max())
    if vmax == vmin:
        warnings.warn("constant frame cannot be normalized; returned as is")
        return ScalarFrame(mesh=frame.mesh, values=frame.values.copy())
    return ScalarFrame(mesh=frame.mesh,
                       values=(frame.values - vmin) / (vmax - vmin))


@dataclass
class VoxelGrid:
    """Regular grid of node values; world point of node (i, j, k) is
    origin + (i sx, j sy, k sz).  Values are stored x-fastest."""

    dims: tuple
    spacing: tuple
    origin: np.ndarray
    values: np.ndarray  # shape dims, values[i, j, k]

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.spacing = tuple(float(s) for s in self.spacing)
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        if len(self.dims) != 3 or any(d < 1 for d in self.dims):
            raise ValueError(f"dims must be three integers >= 1, got {self.dims}")
        if len(self.spacing) != 3 or any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.dims:
            raise ValueError(f"values shape {self.values.shape} does not "
                             f"match dims {self.dims}")


def trilinear_sample(grid: VoxelGrid, points) -> np.ndarray:
    """Trilinear interpolation of node values; reads outside the grid are 0."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    u = (pts - grid.origin) / np.array(grid.spacing)
    i0 = np.floor(u).astype(np.int64)
    frac = u - i0
    out = np.zeros(len(pts))
    dims = np.array(grid.dims)
    for corner in range(8):
        off = np.array([(corner >> a) & 1 for a in range(3)])
        idx = i0 + off
        w = np.prod(np.where(off == 1, frac, 1.0 - frac), axis=1)
        inside = np.all((idx >= 0) & (idx < dims), axis=1)
        ic = np.clip(idx, 0, dims - 1)
        vals = grid.values[ic[:, 0], ic[:, 1], ic[:, 2]]
        out += w * np.where(inside, vals, 0.0)
    return out


def project_voxels(grid: VoxelGrid, fit: "SphereFit", mesh: TriMesh,
                   eps: float, samples: int = DEFAULT_RADIAL_SAMPLES
                   ) -> ScalarFrame:
    """Radial maximum projection of the voxel data onto the mesh.

    For each vertex direction v the grid is sampled at
    center + c * radius * v for `samples` uniform c in [1-eps, 1+eps]; the
    frame value is the maximum.  Off-sphere deviations of a bright shell are
    absorbed as long as eps covers them.
    """
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    if samples < 2:
        raise ValueError(f"need at least 2 radial samples, got {samples}")
    radii = np.linspace(1.0 - eps, 1.0 + eps, samples) * fit.radius
    best = np.full(mesh.vertex_count, -np.inf)
    for r in radii:
        pts = fit.center[None, :] + r * mesh.vertices
        best = np.maximum(best, trilinear_sample(grid, pts))
    return ScalarFrame(mesh=mesh, values=best)


@dataclass
class SphereFit:
    """Least-squares sphere through a point cloud."""

    center: np.ndarray
    radius: float
    rms: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64).reshape(3)
        if self.radius <= 0:
            raise ValueError(f"radius must be > 0, got {self.radius}")


def fit_sphere(points) -> SphereFit:
    """Algebraic least-squares sphere fit.

    Minimizes the residuals of |x|^2 - 2 c.x + d over (c, d); the radius is
    sqrt(|c|^2 - d).  Requires >= 4 points not all coplanar.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"points must be (N, 3), got {pts.shape}")
    if len(pts) < 4:
        raise ValueError(f"sphere fit needs >= 4 points, got {len(pts)}")
    design = np.column_stack([2.0 * pts, np.ones(len(pts))])
    target = np.einsum("ij,ij->i", pts, pts)
    sol, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank < 4:
        raise ValueError("degenerate point cloud (coplanar points?): "
                         "sphere fit is not unique")
    center = sol[:3]
    d = -sol[3]  # |x|^2 - 2 c.x + d ~ 0
    radicand = float(center @ center - d)
    if radicand <= 0:
        raise ValueError("sphere fit produced a non-positive squared radius")
    radius = math.sqrt(radicand)
    rms = float(np.sqrt(np.mean(
        (np.linalg.norm(pts - center, axis=1) - radius) ** 2)))
    return SphereFit(center=center, radius=radius, rms=rms)


def rotation_matrix(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    a = np.asarray(axis, dtype=np.float64).reshape(3)
    norm = np.linalg.norm(a)
    if norm == 0:
        raise ValueError("rotation axis must be nonzero")
    a = a / norm
    c, s = math.cos(angle), math.sin(angle)
    K = np.array([[0.0, -a[2], a[1]],
                  [a[2], 0.0, -a[0]],
                  [-a[1], a[0], 0.0]])
    return c * np.eye(3) + s * K + (1.0 - c) * np.outer(a, a)


@dataclass
class SyntheticTruth:
    """Frame pair transported by a known rotation plus its exact flow
    coefficients (a degree-1 divergence-free field)."""

    frame0: ScalarFrame
    frame1: ScalarFrame
    true_flow: CoeffVector
    delta: float


def random_band_coeffs(n_max: int, seed: int, n_min: int = 1) -> ScalarCoeffs:
    """Standard-normal scalar coefficients on degrees n_min..n_max (fixed
    seed), zero elsewhere."""
    if n_min < 0 or n_max < n_min:
        raise ValueError(f"bad degree band [{n_min}, {n_max}]")
    rng = np.random.default_rng(seed)
    values = np.zeros(harmonics.scalar_dimension(n_max))
    lo = harmonics.scalar_position(n_min, 1)
    values[lo:] = rng.standard_normal(len(values) - lo)
    return ScalarCoeffs(n_max=n_max, values=values)


def synth_rotation(mesh: TriMesh, base: ScalarCoeffs, axis,
                   delta: float) -> SyntheticTruth:
    """Frame pair under rotation by angle delta about the given axis.

    frame0 samples the band-limited field; frame1 samples the same field at
    back-rotated vertices, so brightness constancy holds pointwise.  The
    generating velocity is delta * (axis x position), whose exact expansion
    is delta * sqrt(8 pi / 3) times the three degree-1 type-3 basis
    functions weighted by the axis components.  Coefficients are affinely
    rescaled once so frame0 lands in [0, 1] (the flow is unaffected).
    """
    if abs(delta) > MAX_ROTATION_ANGLE:
        raise ValueError(
            f"|delta| = {abs(delta)} exceeds the small-motion guard "
            f"{MAX_ROTATION_ANGLE}")
    a = np.asarray(axis, dtype=np.float64).reshape(3)
    norm = np.linalg.norm(a)
    if norm == 0:
        raise ValueError("rotation axis must be nonzero")
    a = a / norm

    values0 = harmonics.evaluate_scalar(base, mesh.vertices)
    vmin, vmax = float(values0.min()), float(values0.max())
    coeffs = base.values.copy()
    if vmax > vmin:
        coeffs /= (vmax - vmin)
        coeffs[0] -= vmin / (vmax - vmin) * math.sqrt(4.0 * math.pi)
    scaled = ScalarCoeffs(n_max=base.n_max, values=coeffs)

    frame0 = ScalarFrame(mesh=mesh,
                         values=harmonics.evaluate_scalar(scaled, mesh.vertices))
    back = mesh.vertices @ rotation_matrix(a, -delta).T
    frame1 = ScalarFrame(mesh=mesh,
                         values=harmonics.evaluate_scalar(scaled, back))

    spec = BasisSpec(1)
    flow = np.zeros(spec.dimension)
    scale = delta * math.sqrt(8.0 * math.pi / 3.0)
    # axis x position = scale * (a_y y3_{1,m=-1} + a_z y3_{1,m=0} + a_x y3_{1,m=+1})
    flow[spec.position(3, 1, 1)] = scale * a[1]
    flow[spec.position(3, 1, 2)] = scale * a[2]
    flow[spec.position(3, 1, 3)] = scale * a[0]
    return SyntheticTruth(
        frame0=frame0,
        frame1=frame1,
        true_flow=CoeffVector(spec=spec, values=flow),
        delta=delta,
    )


# ---------------------------------------------------------------------------
# file formats

def write_frame(frame: ScalarFrame, path) -> None:
    """Text format: 'spherefield 1', vertex count, one value per line."""
    lines = ["spherefield 1", str(len(frame.values))]
    lines.extend(f"{v:.17g}" for v in frame.values)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_frame(path, mesh: TriMesh) -> ScalarFrame:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].split() != ["spherefield", "1"]:
        raise FormatError(f"{path}: line 1: expected 'spherefield 1'")
    try:
        count = int(lines[1])
    except (ValueError, IndexError):
        raise FormatError(f"{path}: line 2: expected the value count")
    if count != mesh.vertex_count:
        raise FormatError(f"{path}: has {count} values but the mesh has "
                          f"{mesh.vertex_count} vertices")
    if len(lines) < 2 + count:
        raise FormatError(f"{path}: expected {2 + count} lines, got {len(lines)}")
    try:
        values = np.array([float(lines[2 + i]) for i in range(count)])
    except ValueError as exc:
        raise FormatError(f"{path}: malformed value row: {exc}")
    return ScalarFrame(mesh=mesh, values=values)


VOXEL_HEADER_BYTES = 64


def write_voxels(grid: VoxelGrid, path) -> None:
    """64-byte space-padded text header, then little-endian float32 values,
    x-fastest."""
    fields = ["voxelgrid", "1", *map(str, grid.dims),
              *(repr(s) for s in grid.spacing),
              *(repr(float(o)) for o in grid.origin)]
    header = " ".join(fields)
    if len(header) > VOXEL_HEADER_BYTES - 1:
        raise FormatError(
            f"voxel header '{header}' does not fit in "
            f"{VOXEL_HEADER_BYTES - 1} bytes; use rounder spacing/origin")
    header = header.ljust(VOXEL_HEADER_BYTES - 1) + "\n"
    flat = grid.values.transpose(2, 1, 0).ravel()  # x fastest
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(flat.astype("<f4").tobytes())


def read_voxels(path) -> VoxelGrid:
    with open(path, "rb") as fh:
        header = fh.read(VOXEL_HEADER_BYTES)
        payload = fh.read()
    try:
        tokens = header.decode("ascii").split()
    except UnicodeDecodeError:
        raise FormatError(f"{path}: header is not ASCII")
    if len(tokens) != 11 or tokens[0] != "voxelgrid" or tokens[1] != "1":
        raise FormatError(f"{path}: bad voxel header")
    try:
        nx, ny, nz = (int(t) for t in tokens[2:5])
        sx, sy, sz = (float(t) for t in tokens[5:8])
        origin = [float(t) for t in tokens[8:11]]
    except ValueError as exc:
        raise FormatError(f"{path}: bad header field: {exc}")
    expected = nx * ny * nz * 4
    if len(payload) != expected:
        raise FormatError(f"{path}: expected {expected} payload bytes, "
                          f"got {len(payload)}")
    flat = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    values = flat.reshape(nz, ny, nx).transpose(2, 1, 0)
    return VoxelGrid(dims=(nx, ny, nz), spacing=(sx, sy, sz),
                     origin=np.array(origin), values=values)


def read_points(path) -> np.ndarray:
    """CSV rows 'x,y,z', no header."""
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise FormatError(f"{path}: line {lineno}: expected 'x,y,z'")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise FormatError(f"{path}: line {lineno}: bad number")
    if not rows:
        raise FormatError(f"{path}: no points")
    return np.array(rows)


def write_points(points, path) -> None:
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    with open(path, "w") as fh:
        for p in pts:
            fh.write(f"{p[0]:.17g},{p[1]:.17g},{p[2]:.17g}\n")
