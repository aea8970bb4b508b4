"""Coefficient-space calculus: Sobolev weights and norms, synthesis and
analysis against the mesh basis, Helmholtz split and potentials."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import parallel
from .errors import FormatError
from .harmonics import (BasisSpec, MeshBasis, ScalarCoeffs, scalar_dimension,
                        scalar_position)
from .mesh import TriMesh

WEIGHT_KINDS = ("power", "halving", "exponent")
EXPONENT_STEP = 0.25  # per-step decrement of the eigenvalue exponent


@dataclass
class CoeffVector:
    """Coefficients of a tangent field over the canonical basis order."""

    spec: BasisSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.spec.dimension,):
            raise ValueError(
                f"expected {self.spec.dimension} coefficients for "
                f"n_max={self.spec.n_max}, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("coefficients contain non-finite values")

    def embedded(self, spec: BasisSpec) -> "CoeffVector":
        """This vector re-indexed on a larger (or equal) basis."""
        if spec.n_max < self.spec.n_max:
            raise ValueError("cannot embed into a smaller basis")
        # canonical order groups by degree, so degrees <= old n_max occupy a
        # common prefix of both enumerations
        values = np.zeros(spec.dimension)
        values[:self.spec.dimension] = self.values
        return CoeffVector(spec=spec, values=values)

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


@dataclass
class TriField:
    """One tangent vector per triangle (constant on each face)."""

    mesh: TriMesh
    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.shape != (self.mesh.face_count, 3):
            raise ValueError(
                f"expected ({self.mesh.face_count}, 3) vectors, "
                f"got {self.vectors.shape}")


@dataclass(frozen=True)
class WeightSequence:
    """Degree-indexed regularization weights.

    kind 'power':    alpha * lambda_n^s
    kind 'halving':  2^(1-k) * alpha * lambda_n^s
    kind 'exponent': alpha * lambda_n^(s - (k-1)/4)

    Both vector types of a degree share the weight.  The schedule kinds are
    elementwise non-increasing in the step index k.
    """

    kind: str
    alpha: float
    s: float
    k: int = 1

    def __post_init__(self):
        if self.kind not in WEIGHT_KINDS:
            raise ValueError(f"unknown weight kind '{self.kind}', "
                             f"expected one of {WEIGHT_KINDS}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.k < 1:
            raise ValueError(f"step index must be >= 1, got {self.k}")

    def degree_weight(self, n) -> np.ndarray:
        lam = np.asarray(n, dtype=np.float64)
        lam = lam * (lam + 1.0)
        if self.kind == "power":
            return self.alpha * lam ** self.s
        if self.kind == "halving":
            return 2.0 ** (1 - self.k) * self.alpha * lam ** self.s
        return self.alpha * lam ** (self.s - (self.k - 1) * EXPONENT_STEP)

    def values(self, spec: BasisSpec) -> np.ndarray:
        return self.degree_weight(spec.degrees)

    def at_step(self, k: int) -> "WeightSequence":
        return WeightSequence(kind=self.kind, alpha=self.alpha, s=self.s, k=k)

    def describe(self) -> str:
        tag = f"{self.kind} alpha={self.alpha:g} s={self.s:g}"
        if self.kind != "power":
            tag += f" k={self.k}"
        return tag


def weight_values(kind: str, alpha: float, s: float, spec: BasisSpec,
                  k: int = 1) -> np.ndarray:
    """Per-index weights for the given family (convenience wrapper)."""
    return WeightSequence(kind=kind, alpha=alpha, s=s, k=k).values(spec)


def sobolev_norm(coeffs: CoeffVector, weights) -> float:
    """sqrt(sum_p w_p c_p^2) for per-index weights (array or sequence)."""
    if isinstance(weights, WeightSequence):
        w = weights.values(coeffs.spec)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != coeffs.values.shape:
            raise ValueError(f"weights shape {w.shape} does not match "
                             f"coefficients {coeffs.values.shape}")
    return float(np.sqrt(np.sum(w * coeffs.values ** 2)))


def synthesize(coeffs: CoeffVector, basis: MeshBasis) -> TriField:
    """Per-triangle field sum_p c_p yhat_p."""
    if coeffs.spec != basis.spec:
        raise ValueError("coefficient spec does not match the basis table")
    out = np.empty((basis.mesh.face_count, 3))

    def fill(lo, hi):
        # (C, 3, dim) @ (dim,) per chunk; independent writes
        out[lo:hi] = basis.values[lo:hi].transpose(0, 2, 1) @ coeffs.values
        return None

    parallel.map_chunks(fill, basis.mesh.face_count)
    return TriField(mesh=basis.mesh, vectors=out)


def analyze(field: TriField, basis: MeshBasis) -> CoeffVector:
    """Discrete inner products c_p = sum_i A_i f_i . yhat_p,i.

    This is the plain area-weighted projection; it is NOT Gram-inverted, so
    analyze(synthesize(c)) equals (discrete Gram) @ c, not c.
    """
    if field.mesh is not basis.mesh and field.vectors.shape[0] != basis.mesh.face_count:
        raise ValueError("field mesh does not match the basis table")
    areas = basis.mesh.areas
    weighted = field.vectors * areas[:, None]

    # contract over faces and components with fixed chunk order
    def partial(lo, hi):
        tab = basis.values[lo:hi]  # (C, dim, 3)
        w = weighted[lo:hi]  # (C, 3)
        flat = tab.transpose(1, 0, 2).reshape(basis.spec.dimension, -1)
        return flat @ w.reshape(-1)

    values = parallel.reduce_chunks(partial, basis.mesh.face_count)
    return CoeffVector(spec=basis.spec, values=values)


def helmholtz_split(coeffs: CoeffVector) -> tuple[CoeffVector, CoeffVector]:
    """Split into the curl-free (type 2) and divergence-free (type 3) parts.

    The parts have disjoint support and sum exactly to the input.
    """
    is2 = coeffs.spec.vtypes == 2
    curl_free = np.where(is2, coeffs.values, 0.0)
    div_free = np.where(is2, 0.0, coeffs.values)
    return (CoeffVector(spec=coeffs.spec, values=curl_free),
            CoeffVector(spec=coeffs.spec, values=div_free))


def stream_potentials(coeffs: CoeffVector) -> tuple[ScalarCoeffs, ScalarCoeffs]:
    """Scalar potential (type 2) and stream function (type 3) coefficients.

    The type-i part of the field is the surface gradient of
    sum c_p lambda_n^(-1/2) Y_(n,j) (crossed with the normal for type 3).
    """
    spec = coeffs.spec
    pot2 = np.zeros(scalar_dimension(spec.n_max))
    pot3 = np.zeros(scalar_dimension(spec.n_max))
    fac = 1.0 / np.sqrt(spec.eigenvalues)
    cols = spec.degrees ** 2 + spec.orders - 1
    is2 = spec.vtypes == 2
    np.add.at(pot2, cols[is2], coeffs.values[is2] * fac[is2])
    np.add.at(pot3, cols[~is2], coeffs.values[~is2] * fac[~is2])
    return (ScalarCoeffs(n_max=spec.n_max, values=pot2),
            ScalarCoeffs(n_max=spec.n_max, values=pot3))


# ---------------------------------------------------------------------------
# file formats

def write_trifield(field: TriField, path) -> None:
    """Text format: 'spheretrifield 1', face count, one vector per line."""
    lines = ["spheretrifield 1", str(field.mesh.face_count)]
    lines.extend(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}" for v in field.vectors)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trifield(path, mesh: TriMesh) -> TriField:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].split() != ["spheretrifield", "1"]:
        raise FormatError(f"{path}: line 1: expected 'spheretrifield 1'")
    try:
        count = int(lines[1])
    except (ValueError, IndexError):
        raise FormatError(f"{path}: line 2: expected the face count")
    if count != mesh.face_count:
        raise FormatError(f"{path}: has {count} vectors but the mesh has "
                          f"{mesh.face_count} faces")
    if len(lines) < 2 + count:
        raise FormatError(f"{path}: expected {2 + count} lines, got {len(lines)}")
    try:
        vectors = np.array(
            [[float(t) for t in lines[2 + i].split()] for i in range(count)])
    except ValueError as exc:
        raise FormatError(f"{path}: malformed vector row: {exc}")
    if vectors.shape != (count, 3):
        raise FormatError(f"{path}: vector rows must have 3 components")
    return TriField(mesh=mesh, vectors=vectors)


def write_coeffs(coeffs: CoeffVector, path) -> None:
    """CSV 'vtype,n,j,value' in canonical order, 17 significant digits."""
    spec = coeffs.spec
    with open(path, "w") as fh:
        fh.write("vtype,n,j,value\n")
        for vt, n, j, v in zip(spec.vtypes, spec.degrees, spec.orders,
                               coeffs.values):
            fh.write(f"{vt},{n},{j},{v:.17g}\n")


def read_coeffs(path) -> CoeffVector:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "vtype,n,j,value":
        raise FormatError(f"{path}: line 1: expected header 'vtype,n,j,value'")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise FormatError(f"{path}: line {lineno}: expected 4 fields")
        try:
            rows.append((int(parts[0]), int(parts[1]), int(parts[2]),
                         float(parts[3])))
        except ValueError:
            raise FormatError(f"{path}: line {lineno}: bad field")
    if not rows:
        raise FormatError(f"{path}: no coefficient rows")
    n_max = max(r[1] for r in rows)
    spec = BasisSpec(n_max)
    if len(rows) != spec.dimension:
        raise FormatError(f"{path}: expected {spec.dimension} rows for "
                          f"n_max={n_max}, got {len(rows)}")
    values = np.empty(spec.dimension)
    for p, (vt, n, j, v) in enumerate(rows):
        if (vt, n, j) != (int(spec.vtypes[p]), int(spec.degrees[p]),
                          int(spec.orders[p])):
            raise FormatError(f"{path}: line {p + 2}: index ({vt},{n},{j}) "
                              "violates the canonical order")
        values[p] = v
    return CoeffVector(spec=spec, values=values)
