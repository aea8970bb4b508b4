"""Variational flow models: single-field estimate, u+v decomposition, and
the hierarchical scheme, on top of restarted GMRES (default) or CG.

The regularized optimality system is (A + D) w = b with A the data-term
matrix, D the diagonal of Sobolev weights and b the right-hand side from the
time derivative.  Solvers report the true relative residual |op(x) - b|/|b|
recomputed at termination; non-convergence is a reported state, not an
exception.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .assembly import (DENSE_LIMIT, QuadratureTable, apply_data_matrix,
                       assemble_block_system, assemble_data_matrix,
                       assemble_rhs)
from .errors import NumericalError
from .spectral import CoeffVector, WeightSequence

DEFAULT_TOL = 0.02
DEFAULT_MAX_ITER = 100
DEFAULT_RESTART = 50
FIRST_STEP_OVERRIDES = (1000, 0.025)  # (max_iter, tol) for hierarchical step 1
SOLVER_METHODS = ("gmres", "cg")


@dataclass
class SolveReport:
    iterations: int
    relative_residual: float
    converged: bool
    wall_time: float


@dataclass
class FlowEstimate:
    coeffs: CoeffVector
    report: SolveReport
    weights: str  # descriptor of the weight sequence used


@dataclass
class UVDecomposition:
    u: CoeffVector
    v: CoeffVector
    report: SolveReport


@dataclass
class Hierarchy:
    steps: list  # per-step increments u_k (CoeffVector)
    accumulated: list  # partial sums u^(k) (CoeffVector)
    reports: list
    data_terms: list  # data term of each accumulated solution
    schedule: str


def _check_finite(vec: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(vec)):
        raise NumericalError("operator produced non-finite values")
    return vec


def krylov_solve(apply: Callable[[np.ndarray], np.ndarray], rhs: np.ndarray,
                 tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                 restart: int = DEFAULT_RESTART, method: str = "gmres",
                 ) -> tuple[np.ndarray, SolveReport]:
    """Iterative solve of a symmetric positive definite system.

    Runs until the relative residual drops to tol or max_iter total
    iterations are spent.  A zero right-hand side returns the zero vector
    immediately.  The reported residual is recomputed from the operator.
    """
    if tol <= 0:
        raise ValueError(f"tolerance must be > 0, got {tol}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")
    if method not in SOLVER_METHODS:
        raise ValueError(f"unknown method '{method}', expected {SOLVER_METHODS}")
    rhs = np.asarray(rhs, dtype=np.float64)
    start = time.perf_counter()
    bnorm = float(np.linalg.norm(rhs))
    if bnorm == 0.0:
        return np.zeros_like(rhs), SolveReport(
            iterations=0, relative_residual=0.0, converged=True,
            wall_time=time.perf_counter() - start)
    if method == "gmres":
        x, iterations = _gmres(apply, rhs, bnorm, tol, max_iter, restart)
    else:
        x, iterations = _cg(apply, rhs, bnorm, tol, max_iter)
    residual = float(np.linalg.norm(rhs - _check_finite(apply(x))) / bnorm)
    return x, SolveReport(
        iterations=iterations,
        relative_residual=residual,
        converged=residual <= tol,
        wall_time=time.perf_counter() - start)


def _gmres(apply, b, bnorm, tol, max_iter, restart):
    """Restarted GMRES with modified Gram-Schmidt and Givens rotations."""
    n = len(b)
    x = np.zeros(n)
    total = 0
    while total < max_iter:
        r = b - _check_finite(apply(x)) if total else b.copy()
        rnorm = float(np.linalg.norm(r))
        if rnorm / bnorm <= tol:
            break
        m = min(restart, max_iter - total)
        V = np.empty((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = rnorm
        V[0] = r / rnorm
        k_done = 0
        exhausted = False
        for k in range(m):
            w = _check_finite(apply(V[k]))
            for i in range(k + 1):  # modified Gram-Schmidt
                H[i, k] = float(V[i] @ w)
                w = w - H[i, k] * V[i]
            h_next = float(np.linalg.norm(w))
            H[k + 1, k] = h_next
            for i in range(k):  # previously accumulated rotations
                t = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
                H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
                H[i, k] = t
            denom = math.hypot(H[k, k], H[k + 1, k])
            if denom == 0.0:  # dead column: operator annihilated V[k]
                exhausted = True
                total += 1
                break
            cs[k] = H[k, k] / denom
            sn[k] = H[k + 1, k] / denom
            H[k, k] = denom
            H[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            total += 1
            k_done = k + 1
            if abs(g[k + 1]) / bnorm <= tol:
                break
            if h_next == 0.0:  # happy breakdown: subspace is invariant
                exhausted = True
                break
            if k + 1 < m:
                V[k + 1] = w / h_next
        if k_done == 0:
            break
        y = np.linalg.solve(np.triu(H[:k_done, :k_done]), g[:k_done])
        x = x + V[:k_done].T @ y
        if exhausted:
            break
    return x, total


def _cg(apply, b, bnorm, tol, max_iter):
    """Conjugate gradients from a zero start."""
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = float(r @ r)
    total = 0
    for _ in range(max_iter):
        Ap = _check_finite(apply(p))
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            break  # lost positive definiteness; report what we have
        alpha = rs / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        total += 1
        rs_new = float(r @ r)
        if math.sqrt(rs_new) / bnorm <= tol:
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x, total


def _weight_array(qt: QuadratureTable, weights) -> tuple[np.ndarray, str]:
    if isinstance(weights, WeightSequence):
        return weights.values(qt.spec), weights.describe()
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (qt.dimension,):
        raise ValueError(f"weights shape {w.shape} does not match the "
                         f"basis dimension {qt.dimension}")
    return w, "custom"


def _data_operator(qt: QuadratureTable, dense: bool | None,
                   dense_limit: int = DENSE_LIMIT):
    """The data matrix as (apply, dense_or_None).

    dense=None picks dense assembly below the dimension limit and the
    matrix-free product above it; True forces dense, False matrix-free.
    """
    use_dense = qt.dimension <= dense_limit if dense is None else dense
    if use_dense:
        A = assemble_data_matrix(qt, dense_limit=max(dense_limit, qt.dimension))
        return (lambda x: A @ x), A
    return (lambda x: apply_data_matrix(qt, x)), None


def data_term(qt: QuadratureTable, coeffs: CoeffVector) -> float:
    """Quadrature value of the squared optical-flow residual.

    Per triangle the time derivative enters through its mean value
    bvals_i / A_i, which makes this expression expand exactly as
    c^T A c - 2 b^T c + data_term(0) with the assembled A and b.
    """
    if coeffs.spec != qt.spec:
        raise ValueError("coefficient spec does not match the quadrature table")
    mean_dt = qt.bvals / qt.areas
    residual = qt.q @ coeffs.values + mean_dt
    return float(np.sum(qt.areas * residual ** 2))


def estimate_flow(qt: QuadratureTable, weights,
                  tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                  method: str = "gmres", restart: int = DEFAULT_RESTART,
                  dense: bool | None = None) -> FlowEstimate:
    """Minimize the Tikhonov-regularized flow functional: (A + D) w = b."""
    w, label = _weight_array(qt, weights)
    if np.any(w <= 0):
        raise ValueError("regularization weights must be positive")
    apply_A, _ = _data_operator(qt, dense)
    b = assemble_rhs(qt)
    x, report = krylov_solve(lambda v: apply_A(v) + w * v, b, tol=tol,
                             max_iter=max_iter, restart=restart, method=method)
    return FlowEstimate(coeffs=CoeffVector(spec=qt.spec, values=x),
                        report=report, weights=label)


def solve_uv(qt: QuadratureTable, weights_u, weights_v,
             tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
             method: str = "gmres", restart: int = DEFAULT_RESTART,
             dense: bool | None = None) -> UVDecomposition:
    """Joint minimization over two fields sharing the data term D(u+v, F)."""
    wu, _ = _weight_array(qt, weights_u)
    wv, _ = _weight_array(qt, weights_v)
    _, A = _data_operator(qt, dense)
    system = assemble_block_system(qt, wu, wv, dense=A)
    xy, report = krylov_solve(system.apply, system.rhs, tol=tol,
                              max_iter=max_iter, restart=restart, method=method)
    dim = qt.dimension
    return UVDecomposition(
        u=CoeffVector(spec=qt.spec, values=xy[:dim]),
        v=CoeffVector(spec=qt.spec, values=xy[dim:]),
        report=report)


def solve_hierarchical(qt: QuadratureTable, schedule: WeightSequence,
                       steps: int,
                       tol: float = DEFAULT_TOL,
                       max_iter: int = DEFAULT_MAX_ITER,
                       first_step_overrides: tuple | None = None,
                       method: str = "gmres", restart: int = DEFAULT_RESTART,
                       dense: bool | None = None) -> Hierarchy:
    """Iterated solves on data-term residuals with a weakening schedule.

    Step 1 minimizes the plain functional with the step-1 weights (the exact
    same code path as estimate_flow); step k > 1 solves
    (A + D^(k)) u_k = b - A u^(k-1) and the increments accumulate.
    first_step_overrides=(max_iter, tol) loosens only the first solve.
    """
    if steps < 1:
        raise ValueError(f"need at least one step, got {steps}")
    weight_arrays = [schedule.at_step(k).values(qt.spec)
                     for k in range(1, steps + 1)]
    for k in range(1, steps):
        if np.any(weight_arrays[k] > weight_arrays[k - 1]):
            raise ValueError(
                f"schedule is not non-increasing between steps {k} and {k + 1}")

    apply_A, _ = _data_operator(qt, dense)
    b = assemble_rhs(qt)
    first_iter, first_tol = first_step_overrides or (max_iter, tol)

    increments, accumulated, reports, terms = [], [], [], []
    acc = np.zeros(qt.dimension)
    for k in range(steps):
        it_k, tol_k = (first_iter, first_tol) if k == 0 else (max_iter, tol)
        w = weight_arrays[k]
        rhs = b if k == 0 else b - apply_A(acc)
        x, report = krylov_solve(lambda v: apply_A(v) + w * v, rhs, tol=tol_k,
                                 max_iter=it_k, restart=restart, method=method)
        acc = acc + x
        increments.append(CoeffVector(spec=qt.spec, values=x))
        accumulated.append(CoeffVector(spec=qt.spec, values=acc.copy()))
        reports.append(report)
        terms.append(data_term(qt, accumulated[-1]))
        if k > 0 and terms[-1] > terms[-2]:
            warnings.warn(
                f"hierarchical data term increased at step {k + 1} "
                f"({terms[-2]:.6g} -> {terms[-1]:.6g}); the step-{k + 1} "
                "solve may be under-resolved")
    return Hierarchy(steps=increments, accumulated=accumulated,
                     reports=reports, data_terms=terms,
                     schedule=schedule.describe())
