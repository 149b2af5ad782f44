"""Sparse Symmetric Linear Algebra

This script holds the symmetric sparse matrix type every other module
assembles into, and the solvers applied to it: conjugate gradients for the
symmetric positive definite time-stepping and mass systems, MINRES for the
symmetric indefinite KKT system and a dense LU solve that serves as the oracle
for tests.

This file can also be imported as a module and contains the following:

    * SparseSymMatrix - Upper triangle storage with symmetric application
    * SolveReport - Iterations, residual and convergence flag of a solve
    * matvec - Applies a SparseSymMatrix to a vector
    * solve_spd_cg - Conjugate gradients
    * solve_sym_minres - Unpreconditioned MINRES (Lanczos based)
    * solve_dense_direct - LU-based dense solve with pivot checks

Example of usage:

    >>> import numpy as np
    >>> from libs.linalg import SparseSymMatrix, solve_sym_minres
    >>> A = SparseSymMatrix.from_dense(np.diag([1., -1.]))
    >>> x, report = solve_sym_minres(A, np.array([2., 3.]))
    >>> np.allclose(x, [2., -3.]), report.converged
    (True, True)
"""
from __future__ import annotations

import logging

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps

from .utils import SingularMatrixError, StructuralError


DEFAULT_MINRES_TOL = 1e-8
DEFAULT_MINRES_MAXIT = 50_000
DEFAULT_CG_TOL = 1e-10
DENSE_ORACLE_CAP = 2000

# NOTE: Restarts of MINRES from the current iterate when the recursively updated
# residual has converged but the true one has not
MAX_MINRES_RESTARTS = 5


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual_norm: float
    converged: bool


class SparseSymMatrix:
    """A symmetric sparse matrix, of which only the upper triangle is stored

    The coordinate list is summed up and sorted on construction, so no
    (row, col)-pair appears twice. The full matrix is kept in compressed sparse
    rows for application

    Parameters
    ----------
    dim: int
        The number of rows and columns
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
        The coordinate list of the upper triangle, row <= col. Repeated pairs
        are summed
    """

    def __init__(self, dim: int, rows, cols, values) -> None:
        if dim < 1:
            raise StructuralError(f"Matrix dimension must be positive, got {dim}")

        rows, cols = np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64)
        values = np.asarray(values, dtype=float)
        if not (rows.shape == cols.shape == values.shape):
            raise StructuralError("Rows, columns and values must have equal length")
        if rows.size and (min(rows.min(), cols.min()) < 0
                          or max(rows.max(), cols.max()) >= dim):
            raise StructuralError(f"Coordinates exceed the dimension {dim}")

        if np.any(rows > cols):
            raise StructuralError("Only the upper triangle (row <= col) is stored")

        upper = sps.coo_matrix((values, (rows, cols)), shape=(dim, dim)).tocsr()
        upper.sum_duplicates()
        upper.eliminate_zeros()
        upper.sort_indices()

        self.dim = dim
        self._upper = upper
        self._full = (upper + sps.triu(upper, k=1).T).tocsr()

    @classmethod
    def from_sparse(cls, matrix: sps.spmatrix) -> SparseSymMatrix:
        """Builds from a full (symmetric) scipy matrix by keeping its upper triangle"""
        if matrix.shape[0] != matrix.shape[1]:
            raise StructuralError(f"Matrix must be square, got {matrix.shape}")
        upper = sps.triu(matrix).tocoo()
        return cls(matrix.shape[0], upper.row, upper.col, upper.data)

    @classmethod
    def from_dense(cls, matrix: np.ndarray) -> SparseSymMatrix:
        return cls.from_sparse(sps.coo_matrix(np.atleast_2d(matrix)))

    @classmethod
    def identity(cls, dim: int) -> SparseSymMatrix:
        index = np.arange(dim)
        return cls(dim, index, index, np.ones(dim))

    @property
    def entries(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """The coordinate list (row, col, value) of the upper triangle"""
        upper = self._upper.tocoo()
        return upper.row, upper.col, upper.data

    @property
    def nnz(self) -> int:
        return self._upper.nnz

    def to_csr(self) -> sps.csr_matrix:
        return self._full.copy()

    def to_dense(self) -> np.ndarray:
        return self._full.toarray()

    def diagonal(self) -> np.ndarray:
        return self._upper.diagonal()

    def __matmul__(self, x: np.ndarray) -> np.ndarray:
        return matvec(self, x)

    def __add__(self, other: SparseSymMatrix) -> SparseSymMatrix:
        if not isinstance(other, SparseSymMatrix):
            return NotImplemented
        if other.dim != self.dim:
            raise StructuralError(f"Cannot add matrices of dimension {self.dim} and {other.dim}")
        return SparseSymMatrix.from_sparse(self._upper + other._upper)

    def __mul__(self, scalar: float) -> SparseSymMatrix:
        if not np.isscalar(scalar):
            return NotImplemented
        return SparseSymMatrix.from_sparse(self._upper*float(scalar))

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"SparseSymMatrix(dim={self.dim}, nnz={self.nnz})"


Operator = Union[SparseSymMatrix, sps.spmatrix, np.ndarray]


def _as_csr(A: Operator):
    if isinstance(A, SparseSymMatrix):
        return A._full
    return A


def matvec(A: SparseSymMatrix, x: np.ndarray) -> np.ndarray:
    """Applies A to x, expanding the stored triangle symmetrically

    Parameters
    ----------
    A: SparseSymMatrix
    x: np.ndarray

    Returns
    -------
    Ax: np.ndarray
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != A.dim:
        raise StructuralError(f"Cannot apply a matrix of dimension {A.dim}"
                              f" to a vector of shape {x.shape}")
    return A._full @ x


def _check_system(A: Operator, b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    dim = A.dim if isinstance(A, SparseSymMatrix) else A.shape[0]
    if b.ndim != 1 or b.shape[0] != dim:
        raise StructuralError(f"Right-hand side of shape {b.shape} does not"
                              f" match the matrix dimension {dim}")
    return b


def solve_spd_cg(A: Operator, b: np.ndarray,
                 tol: float = DEFAULT_CG_TOL,
                 maxit: Optional[int] = None,
                 x0: Optional[np.ndarray] = None) -> Tuple[np.ndarray, SolveReport]:
    """Solves Ax = b for symmetric positive definite A with conjugate gradients

    Parameters
    ----------
    A: SparseSymMatrix
    b: np.ndarray
    tol: float, optional
        The relative residual ||b - Ax||/||b|| to reach
    maxit: int, optional
        Defaults to ten times the dimension
    x0: np.ndarray, optional
        Initial guess. Defaults to zero

    Returns
    -------
    x: np.ndarray
    report: SolveReport
        If 'maxit' is reached the report is flagged as not converged, and the
        caller decides
    """
    if tol <= 0:
        raise ValueError(f"The tolerance must be positive, got {tol}")
    b = _check_system(A, b)
    operator = _as_csr(A)
    maxit = 10*b.shape[0] if maxit is None else maxit

    b_norm = np.linalg.norm(b)
    if b_norm == 0.:
        return np.zeros_like(b), SolveReport(0, 0., True)

    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - operator @ x
    p = r.copy()
    rr = r @ r
    threshold = tol*b_norm

    iterations = 0
    while np.sqrt(rr) > threshold and iterations < maxit:
        Ap = operator @ p
        curvature = p @ Ap
        if curvature <= 0:
            logging.warning(f"CG met non-positive curvature {curvature:.3e}")
            break
        alpha = rr/curvature
        x += alpha*p
        r -= alpha*Ap
        rr_new = r @ r
        p = r + (rr_new/rr)*p
        rr = rr_new
        iterations += 1

    residual_norm = float(np.linalg.norm(b - operator @ x))
    return x, SolveReport(iterations, residual_norm, bool(residual_norm <= threshold))


def _minres_sweep(operator, b: np.ndarray, tol_abs: float,
                  maxit: int) -> Tuple[np.ndarray, int]:
    """One unpreconditioned MINRES run from a zero initial guess, stopping when
    the recursively updated residual norm drops below 'tol_abs'"""
    x = np.zeros_like(b)
    beta1 = np.linalg.norm(b)
    if beta1 == 0.:
        return x, 0

    r1, r2, y = b.copy(), b.copy(), b.copy()
    beta, old_beta = beta1, 0.
    dbar, epsln, phibar = 0., 0., beta1
    cs, sn = -1., 0.
    w, w2 = np.zeros_like(b), np.zeros_like(b)
    eps = np.finfo(float).eps

    iterations = 0
    while iterations < maxit:
        iterations += 1
        v = y/beta
        y = operator @ v
        if iterations >= 2:
            y = y - (beta/old_beta)*r1
        alpha = v @ y
        y = y - (alpha/beta)*r2
        r1, r2 = r2, y
        old_beta, beta = beta, np.linalg.norm(y)

        # Apply the previous rotation, then build the next one
        old_epsln = epsln
        delta = cs*dbar + sn*alpha
        gbar = sn*dbar - cs*alpha
        epsln = sn*beta
        dbar = -cs*beta
        gamma = max(np.hypot(gbar, beta), eps)
        cs, sn = gbar/gamma, beta/gamma
        phi = cs*phibar
        phibar = sn*phibar

        w1, w2 = w2, w
        w = (v - old_epsln*w1 - delta*w2)/gamma
        x = x + phi*w

        if phibar <= tol_abs or beta == 0.:
            break
    return x, iterations


def solve_sym_minres(A: Operator, b: np.ndarray,
                     tol: float = DEFAULT_MINRES_TOL,
                     maxit: int = DEFAULT_MINRES_MAXIT) -> Tuple[np.ndarray, SolveReport]:
    """Solves Ax = b for symmetric, possibly indefinite A with MINRES, starting
    from a zero initial guess

    Parameters
    ----------
    A: SparseSymMatrix
    b: np.ndarray
    tol: float, optional
        The relative residual ||r_k||/||r_0|| to reach
    maxit: int, optional
        The total number of iterations allowed

    Returns
    -------
    x: np.ndarray
    report: SolveReport
        Flagged as not converged if 'maxit' was used up
    """
    if tol <= 0:
        raise ValueError(f"The tolerance must be positive, got {tol}")
    b = _check_system(A, b)
    operator = _as_csr(A)

    b_norm = np.linalg.norm(b)
    if b_norm == 0.:
        return np.zeros_like(b), SolveReport(0, 0., True)

    threshold = tol*b_norm
    x, residual = np.zeros_like(b), b.copy()
    residual_norm, iterations = b_norm, 0

    for restart in range(MAX_MINRES_RESTARTS + 1):
        correction, sweep_iterations = _minres_sweep(operator, residual,
                                                     threshold, maxit - iterations)
        x += correction
        iterations += sweep_iterations
        residual = b - operator @ x
        residual_norm = float(np.linalg.norm(residual))
        if residual_norm <= threshold or iterations >= maxit:
            break
        logging.info(f"MINRES restart {restart + 1}: true relative residual"
                     f" {residual_norm/b_norm:.3e} above {tol:.1e}")

    converged = bool(residual_norm <= threshold)
    if not converged:
        logging.warning(f"MINRES did not converge in {iterations} iterations,"
                        f" relative residual {residual_norm/b_norm:.3e}")
    return x, SolveReport(iterations, residual_norm, converged)


def solve_dense_direct(A: np.ndarray, b: np.ndarray,
                       max_dim: int = DENSE_ORACLE_CAP) -> np.ndarray:
    """Solves a dense square system through an LU-factorization

    Parameters
    ----------
    A: np.ndarray
        Dense, square and nonsingular. A SparseSymMatrix is densified
    b: np.ndarray
    max_dim: int, optional
        The largest dimension accepted

    Returns
    -------
    x: np.ndarray
    """
    if isinstance(A, SparseSymMatrix):
        A = A.to_dense()
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise StructuralError(f"Matrix must be square, got {A.shape}")
    if A.shape[0] > max_dim:
        raise StructuralError(f"Dense solves are capped at dimension {max_dim},"
                              f" got {A.shape[0]}")
    b = _check_system(A, b)

    lu, piv = sla.lu_factor(A, check_finite=True)
    pivots = np.abs(np.diag(lu))
    scale = max(np.abs(A).max(), np.finfo(float).tiny)
    small = np.flatnonzero(pivots <= A.shape[0]*np.finfo(float).eps*scale)
    if small.size:
        raise SingularMatrixError(f"Matrix is singular to working precision:"
                                  f" pivot {small[0]} is {pivots[small[0]]:.3e}")
    return sla.lu_solve((lu, piv), b)
