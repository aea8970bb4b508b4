"""Galerkin system assembly from the per-triangle quadrature table.

All integrals reduce to sums over triangles of products of the per-triangle
dot products q[i, p] = grad F . yhat_p and the triangle areas.  The table is
built once per frame pair and reused by every model.  Reductions over the
triangle axis run in fixed chunk order (see parallel), so assembled systems
are bitwise independent of the thread count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import parallel
from .errors import NumericalError
from .fields import ScalarFrame, _same_mesh, pl_gradient, time_derivative
from .harmonics import BasisSpec, MeshBasis
from .mesh import TriMesh
from .spectral import CoeffVector

DENSE_LIMIT = 4096  # refuse dense assembly above this dimension by default
GRADIENT_ANCHORS = ("f0", "mid")


@dataclass
class QuadratureTable:
    """Raw material of all linear systems.

    q[i, p]   = grad Fhat on triangle i  .  yhat_p on triangle i
    areas[i]  = triangle area
    bvals[i]  = (areas[i] / 3) * sum of the three vertex values of dFhat/dt
                (the exact integral of the PL time derivative over triangle i)
    """

    mesh: TriMesh
    spec: BasisSpec
    q: np.ndarray
    areas: np.ndarray
    bvals: np.ndarray

    @property
    def dimension(self) -> int:
        return self.spec.dimension


def build_quadrature(basis: MeshBasis, f0: ScalarFrame, f1: ScalarFrame,
                     gradient_anchor: str = "f0") -> QuadratureTable:
    """Evaluate the per-triangle dot products and time-derivative integrals.

    The spatial gradient is taken from f0 by default (matching the forward
    difference anchor); 'mid' uses the average frame instead.
    """
    if gradient_anchor not in GRADIENT_ANCHORS:
        raise ValueError(f"gradient_anchor must be one of {GRADIENT_ANCHORS}")
    mesh = basis.mesh
    dt = time_derivative(f0, f1)  # also validates the meshes against each other
    if not _same_mesh(f0.mesh, mesh):
        raise ValueError("frames do not live on the basis mesh")
    if gradient_anchor == "f0":
        anchor = f0
    else:
        anchor = ScalarFrame(mesh=f0.mesh, values=0.5 * (f0.values + f1.values))
    grads = pl_gradient(anchor).vectors  # (F, 3)

    out = np.empty((mesh.face_count, basis.spec.dimension))

    def fill(lo, hi):
        out[lo:hi] = np.einsum("fpk,fk->fp", basis.values[lo:hi], grads[lo:hi])
        return None

    parallel.map_chunks(fill, mesh.face_count)
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite quadrature entries")
    bvals = mesh.areas / 3.0 * dt.values[mesh.faces].sum(axis=1)
    return QuadratureTable(mesh=mesh, spec=basis.spec, q=out,
                           areas=mesh.areas.copy(), bvals=bvals)


def assemble_data_matrix(qt: QuadratureTable,
                         dense_limit: int = DENSE_LIMIT) -> np.ndarray:
    """Dense data-term matrix a_pq = sum_i q_ip q_iq A_i.

    Exactly symmetric by construction (upper triangle mirrored).  Refuses
    dimensions above dense_limit; use apply_data_matrix instead there.
    """
    dim = qt.dimension
    if dim > dense_limit:
        raise MemoryError(
            f"dense assembly of a {dim}x{dim} matrix exceeds the limit "
            f"{dense_limit}; use the matrix-free product")

    def partial(lo, hi):
        qc = qt.q[lo:hi]
        return (qc * qt.areas[lo:hi, None]).T @ qc

    A = parallel.reduce_chunks(partial, qt.mesh.face_count)
    upper = np.triu(A)
    A = upper + np.triu(A, 1).T
    if not np.all(np.isfinite(A)):
        raise NumericalError("non-finite entries in the assembled matrix")
    return A


def assemble_rhs(qt: QuadratureTable) -> np.ndarray:
    """Right-hand side b_p = - sum_i q_ip * bvals_i."""

    def partial(lo, hi):
        return qt.q[lo:hi].T @ qt.bvals[lo:hi]

    b = -parallel.reduce_chunks(partial, qt.mesh.face_count)
    if not np.all(np.isfinite(b)):
        raise NumericalError("non-finite entries in the right-hand side")
    return b


def apply_data_matrix(qt: QuadratureTable, x: np.ndarray) -> np.ndarray:
    """Matrix-free product A x = q^T (areas * (q x))."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (qt.dimension,):
        raise ValueError(f"expected a vector of length {qt.dimension}, "
                         f"got {x.shape}")

    def partial(lo, hi):
        qc = qt.q[lo:hi]
        return qc.T @ (qt.areas[lo:hi] * (qc @ x))

    return parallel.reduce_chunks(partial, qt.mesh.face_count)


@dataclass
class BlockSystem:
    """Symmetric 2x2 block system for the joint two-field minimization:

        [ A + D1    A    ] [u]   [b]
        [   A    A + D2  ] [v] = [b]

    Both index sets span the full basis, so all blocks share the same data
    matrix, applied once per product via the sum u + v.
    """

    qt: QuadratureTable
    d1: np.ndarray
    d2: np.ndarray
    rhs: np.ndarray
    dense: np.ndarray | None  # data matrix, when materialized

    @property
    def dimension(self) -> int:
        return self.qt.dimension

    def apply(self, xy: np.ndarray) -> np.ndarray:
        dim = self.dimension
        u, v = xy[:dim], xy[dim:]
        if self.dense is not None:
            shared = self.dense @ (u + v)
        else:
            shared = apply_data_matrix(self.qt, u + v)
        return np.concatenate([shared + self.d1 * u, shared + self.d2 * v])


def assemble_block_system(qt: QuadratureTable, d1: np.ndarray, d2: np.ndarray,
                          dense: np.ndarray | None = None) -> BlockSystem:
    d1 = np.asarray(d1, dtype=np.float64)
    d2 = np.asarray(d2, dtype=np.float64)
    for name, d in (("first", d1), ("second", d2)):
        if d.shape != (qt.dimension,):
            raise ValueError(f"{name} weight vector has shape {d.shape}, "
                             f"expected ({qt.dimension},)")
        if np.any(d <= 0):
            raise ValueError(f"{name} weight vector must be positive")
    b = assemble_rhs(qt)
    return BlockSystem(qt=qt, d1=d1, d2=d2, rhs=np.concatenate([b, b]),
                       dense=dense)


def residual_rhs(b: np.ndarray, qt: QuadratureTable,
                 prev: CoeffVector | np.ndarray) -> np.ndarray:
    """Right-hand side for a restart on the residual: b - A c_prev."""
    values = prev.values if isinstance(prev, CoeffVector) else np.asarray(prev)
    return b - apply_data_matrix(qt, values)
