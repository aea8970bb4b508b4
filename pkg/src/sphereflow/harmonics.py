"""Real scalar and tangential vector spherical harmonics.

Conventions (fixed here for file-format determinism; the real fully
normalized basis):

- order index j in [1, 2n+1] maps to the classic order m via m = j - n - 1;
- no Condon-Shortley phase;
- Y has unit L2 norm on the sphere: Y(n, m) =
  Nbar(n,|m|) P(n,|m|)(cos theta) * {sqrt(2) cos(m phi), 1, sqrt(2) sin(|m| phi)}
  for m > 0, m = 0, m < 0, with Nbar the full normalization
  sqrt((2n+1)/(4 pi) (n-|m|)!/(n+|m|)!).

Associated Legendre functions are evaluated by the stable upward recurrence
on the normalized functions (good to degree ~150 in double precision).

The tangential vector basis of degree n and type 2/3 is the normalized
surface gradient of Y and its cross product with the outward normal.  Exact
evaluation uses spherical-coordinate derivatives and therefore rejects
points too close to the poles; mesh-based piecewise-constant approximations
(mesh_basis) have no such restriction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import parallel
from .mesh import TriMesh

POLE_GUARD = 1e-9  # exact vector evaluation rejects |z| > 1 - POLE_GUARD
DEFAULT_BASIS_CELLS = 50_000_000  # memory guard on faces x dimension


def eigenvalue(n: int) -> float:
    """Laplace-Beltrami eigenvalue n (n + 1)."""
    if n < 0:
        raise ValueError(f"degree must be >= 0, got {n}")
    return float(n * (n + 1))


@dataclass(frozen=True)
class BasisIndex:
    """One tangential basis function: type (2 curl-free / 3 div-free),
    degree n >= 1, order index j in [1, 2n+1]."""

    vtype: int
    degree: int
    order: int

    def __post_init__(self):
        if self.vtype not in (2, 3):
            raise ValueError(f"vtype must be 2 or 3, got {self.vtype}")
        if self.degree < 1:
            raise ValueError(f"degree must be >= 1, got {self.degree}")
        if not 1 <= self.order <= 2 * self.degree + 1:
            raise ValueError(
                f"order {self.order} out of range for degree {self.degree}")


@lru_cache(maxsize=32)
def _index_arrays(n_max: int):
    vtypes, degrees, orders = [], [], []
    for n in range(1, n_max + 1):
        for vtype in (2, 3):
            for j in range(1, 2 * n + 2):
                vtypes.append(vtype)
                degrees.append(n)
                orders.append(j)
    out = (np.array(vtypes, dtype=np.int64),
           np.array(degrees, dtype=np.int64),
           np.array(orders, dtype=np.int64))
    for arr in out:
        arr.setflags(write=False)
    return out


@dataclass(frozen=True)
class BasisSpec:
    """Canonical enumeration of the tangential basis up to degree n_max.

    Order: degree ascending; within a degree type 2 before type 3; within a
    type the order index j ascending.
    """

    n_max: int

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {self.n_max}")

    @property
    def dimension(self) -> int:
        return 2 * (self.n_max ** 2 + 2 * self.n_max)

    @property
    def vtypes(self) -> np.ndarray:
        return _index_arrays(self.n_max)[0]

    @property
    def degrees(self) -> np.ndarray:
        return _index_arrays(self.n_max)[1]

    @property
    def orders(self) -> np.ndarray:
        return _index_arrays(self.n_max)[2]

    @property
    def eigenvalues(self) -> np.ndarray:
        d = self.degrees
        return (d * (d + 1)).astype(np.float64)

    def position(self, vtype: int, n: int, j: int) -> int:
        """Flat index of (vtype, n, j) in the canonical order."""
        BasisIndex(vtype, n, j)  # validates
        if n > self.n_max:
            raise ValueError(f"degree {n} exceeds n_max {self.n_max}")
        below = 2 * ((n - 1) ** 2 + 2 * (n - 1))
        return below + (0 if vtype == 2 else 2 * n + 1) + (j - 1)

    def index(self, p: int) -> BasisIndex:
        return BasisIndex(int(self.vtypes[p]), int(self.degrees[p]),
                          int(self.orders[p]))


def scalar_dimension(n_max: int) -> int:
    return (n_max + 1) ** 2


def scalar_position(n: int, j: int) -> int:
    """Flat index of scalar Y(n, j): degrees ascending, j ascending."""
    if n < 0 or not 1 <= j <= 2 * n + 1:
        raise ValueError(f"invalid scalar index (n={n}, j={j})")
    return n * n + j - 1


@dataclass
class ScalarCoeffs:
    """Coefficients of a scalar field over Y(n, j), degrees 0..n_max."""

    n_max: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (scalar_dimension(self.n_max),):
            raise ValueError(
                f"expected {scalar_dimension(self.n_max)} coefficients for "
                f"n_max={self.n_max}, got {self.values.shape}")


def _check_points(points):
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"points must be (N, 3), got {pts.shape}")
    return pts


def _sh_tables(pts: np.ndarray, n_max: int, want_grad: bool):
    """Tables of Y (and optionally d_theta Y, d_phi Y / sin theta).

    Output shape (N, (n_max+1)^2) in scalar canonical order.  The recurrence
    runs per order m, upward in degree n, on fully normalized Legendre
    functions; azimuthal factors are built incrementally.
    """
    npts = len(pts)
    ct = pts[:, 2]  # cos theta
    st = np.hypot(pts[:, 0], pts[:, 1])  # sin theta >= 0
    safe = st > 0.0
    cp = np.where(safe, pts[:, 0] / np.where(safe, st, 1.0), 1.0)
    sp = np.where(safe, pts[:, 1] / np.where(safe, st, 1.0), 0.0)

    S = scalar_dimension(n_max)
    values = np.zeros((npts, S))
    dtheta = np.zeros((npts, S)) if want_grad else None
    dphi_s = np.zeros((npts, S)) if want_grad else None
    if want_grad:
        inv_st = 1.0 / st  # callers enforce the pole guard

    cos_m = np.ones(npts)  # cos(m phi)
    sin_m = np.zeros(npts)  # sin(m phi)
    pmm = np.full(npts, 1.0 / math.sqrt(4.0 * math.pi))  # normalized P(m, m)

    for m in range(0, n_max + 1):
        if m > 0:
            pmm = pmm * st * math.sqrt(1.0 + 0.5 / m)
            cos_prev, sin_prev = cos_m, sin_m
            cos_m = cos_prev * cp - sin_prev * sp
            sin_m = sin_prev * cp + cos_prev * sp
        p_prev = np.zeros(npts)  # P(n-1, m)
        p_curr = pmm
        for n in range(m, n_max + 1):
            if n > m:
                a = math.sqrt((4.0 * n * n - 1.0) / (n * n - m * m))
                b = 0.0 if n == m + 1 else math.sqrt(
                    ((n - 1.0) ** 2 - m * m) / (4.0 * (n - 1.0) ** 2 - 1.0))
                p_next = a * (ct * p_curr - b * p_prev)
                p_prev, p_curr = p_curr, p_next
            if m == 0:
                cols = (scalar_position(n, n + 1),)
                azim = (np.ones(npts),)
                azim_d = (np.zeros(npts),)
            else:
                cols = (scalar_position(n, n + 1 + m),
                        scalar_position(n, n + 1 - m))
                azim = (math.sqrt(2.0) * cos_m, math.sqrt(2.0) * sin_m)
                azim_d = (-m * math.sqrt(2.0) * sin_m,
                          m * math.sqrt(2.0) * cos_m)
            for col, az, azd in zip(cols, azim, azim_d):
                values[:, col] = p_curr * az
                if want_grad:
                    e = math.sqrt(
                        (n * n - m * m) * (2.0 * n + 1.0) / (2.0 * n - 1.0)
                    ) if n > 0 else 0.0
                    dp = (n * ct * p_curr - e * p_prev) * inv_st
                    dtheta[:, col] = dp * az
                    dphi_s[:, col] = p_curr * azd * inv_st
    if want_grad:
        return values, dtheta, dphi_s
    return values


def scalar_table(points, n_max: int) -> np.ndarray:
    """All Y(n, j) for n <= n_max at the given points, shape (N, (n_max+1)^2)."""
    return _sh_tables(_check_points(points), n_max, want_grad=False)


def scalar_harmonic(n: int, j: int, points) -> np.ndarray:
    """Y(n, j) at the given points (vectorized over points)."""
    col = scalar_position(n, j)
    return scalar_table(points, n)[:, col]


def evaluate_scalar(coeffs: ScalarCoeffs, points) -> np.ndarray:
    """Synthesis sum_{n,j} c_{nj} Y_{nj} at the given points."""
    return scalar_table(points, coeffs.n_max) @ coeffs.values


def _grad_frame(pts):
    """Spherical frame vectors e_theta, e_phi at each point."""
    ct = pts[:, 2]
    st = np.hypot(pts[:, 0], pts[:, 1])
    cp = pts[:, 0] / st
    sp = pts[:, 1] / st
    e_theta = np.stack([ct * cp, ct * sp, -st], axis=1)
    e_phi = np.stack([-sp, cp, np.zeros_like(sp)], axis=1)
    return e_theta, e_phi


def vector_table(points, spec: BasisSpec) -> np.ndarray:
    """Exact tangential basis values, shape (N, dimension, 3).

    Rejects points with |z| > 1 - POLE_GUARD: the spherical-coordinate
    derivative formulas degrade there (use mesh_basis for quadrature).
    """
    pts = _check_points(points)
    if np.any(np.abs(pts[:, 2]) > 1.0 - POLE_GUARD):
        raise ValueError(
            "exact vector harmonic evaluation is unsupported within "
            f"{POLE_GUARD:g} of the poles; use the mesh approximation")
    _, dtheta, dphi_s = _sh_tables(pts, spec.n_max, want_grad=True)
    e_theta, e_phi = _grad_frame(pts)
    # surface gradient of each scalar harmonic
    grads = (dtheta[:, :, None] * e_theta[:, None, :]
             + dphi_s[:, :, None] * e_phi[:, None, :])
    scols = scalar_position_array(spec)
    fac = 1.0 / np.sqrt(spec.eigenvalues)
    out = np.empty((len(pts), spec.dimension, 3))
    sel = grads[:, scols, :]
    crosses = np.cross(sel, pts[:, None, :])
    is2 = spec.vtypes == 2
    out[:, is2, :] = sel[:, is2, :] * fac[is2][None, :, None]
    out[:, ~is2, :] = crosses[:, ~is2, :] * fac[~is2][None, :, None]
    return out


def scalar_position_array(spec: BasisSpec) -> np.ndarray:
    """Scalar table column feeding each tangential basis index."""
    return spec.degrees ** 2 + spec.orders - 1


def vector_harmonic(vtype: int, n: int, j: int, points) -> np.ndarray:
    """One tangential basis function at the given points, shape (N, 3)."""
    spec = BasisSpec(n)
    table = vector_table(points, spec)
    return table[:, spec.position(vtype, n, j), :]


@dataclass
class MeshBasis:
    """Piecewise-constant per-triangle approximation of the tangential basis.

    values has shape (faces, dimension, 3): triangle-major, basis-minor.
    Type-2 entries are the scaled piecewise-linear surface gradients of the
    vertex-sampled scalar harmonics; type-3 entries are those gradients
    crossed with the flat triangle normal.
    """

    mesh: TriMesh
    spec: BasisSpec
    values: np.ndarray


def mesh_basis(mesh: TriMesh, spec: BasisSpec,
               max_cells: int = DEFAULT_BASIS_CELLS) -> MeshBasis:
    cells = mesh.face_count * spec.dimension
    if cells > max_cells:
        raise MemoryError(
            f"basis table needs {cells} cells "
            f"({cells * 24 / 1e9:.1f} GB) exceeding the budget {max_cells}; "
            "lower n_max or the mesh level, or raise max_cells")
    vert_values = _sh_tables(mesh.vertices, spec.n_max, want_grad=False)

    # per-face corner weights of the PL gradient:
    # grad = F(v0) (H1 + H2) - F(v1) H1 - F(v2) H2, H_j = h_j / |h_j|^2
    h = mesh.heights
    hsq = np.einsum("fjk,fjk->fj", h, h)
    H = h / hsq[:, :, None]
    G = np.empty_like(h)  # (F, corner, xyz)
    G[:, 0] = H[:, 1] + H[:, 2]
    G[:, 1] = -H[:, 1]
    G[:, 2] = -H[:, 2]

    S = scalar_dimension(spec.n_max)
    scols = scalar_position_array(spec)
    fac = 1.0 / np.sqrt(spec.eigenvalues)
    is2 = spec.vtypes == 2
    out = np.empty((mesh.face_count, spec.dimension, 3))

    def fill(lo, hi):
        corner_vals = vert_values[mesh.faces[lo:hi]]  # (C, 3, S)
        grads = np.matmul(corner_vals.transpose(0, 2, 1), G[lo:hi])  # (C, S, 3)
        sel = grads[:, scols, :]
        out[lo:hi, is2, :] = sel[:, is2, :] * fac[is2][None, :, None]
        crosses = np.cross(sel[:, ~is2, :], mesh.normals[lo:hi, None, :])
        out[lo:hi, ~is2, :] = crosses * fac[~is2][None, :, None]
        return None

    parallel.map_chunks(fill, mesh.face_count)
    return MeshBasis(mesh=mesh, spec=spec, values=out)
