"""Sparse storage, direct factorization and the two Krylov solvers used on Schur systems.

Matrices are plain ``scipy.sparse.csr_matrix`` objects. The Krylov methods
work on any callable ``op(x) -> y`` and accept an optional ``project``
callable applied to residuals and search directions, which is how the
constant-pressure nullspace is deflated.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

logger = logging.getLogger(__name__)

LinearOperator = Callable[[np.ndarray], np.ndarray]


class SingularMatrixError(RuntimeError):
    def __init__(self, message, pivot: Optional[int] = None):
        super().__init__(message)
        self.pivot = pivot


class KrylovBreakdown(RuntimeError):
    """A Krylov recurrence divided by (numerically) zero."""


@dataclass
class KrylovReport:
    iterations: int
    residual: float
    converged: bool
    stagnated: bool = False


def csr_from_triplets(rows, cols, vals, shape) -> sp.csr_matrix:
    """Sum duplicate entries and return canonical CSR (sorted, unique columns)."""
    A = sp.coo_matrix(
        (np.ravel(vals), (np.ravel(rows), np.ravel(cols))), shape=shape
    ).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def dump_matrix_market(path, A) -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(A))


class Factorization:
    """Sparse LU (SuperLU, COLAMD ordering, partial pivoting)."""

    def __init__(self, A):
        A = sp.csc_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"cannot factorize non-square matrix of shape {A.shape}")
        empty = np.flatnonzero(np.diff(A.indptr) == 0)
        if empty.size:
            raise SingularMatrixError(
                f"structurally singular: column {empty[0]} is empty", pivot=int(empty[0])
            )
        try:
            self._lu = spla.splu(A, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SingularMatrixError(f"LU factorization failed: {exc}") from exc
        d = np.abs(self._lu.U.diagonal())
        tiny = d <= 1e-14 * max(d.max(initial=0.0), 1.0)
        if tiny.any():
            k = int(np.flatnonzero(tiny)[0])
            raise SingularMatrixError(f"numerically singular at pivot {k}", pivot=k)
        self.shape = A.shape

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self._lu.solve(np.asarray(b, dtype=float))


def factorize(A) -> Factorization:
    return Factorization(A)


def _as_op(op) -> LinearOperator:
    if callable(op):
        return op
    return lambda x: op @ x


def _identity(x):
    return x


def cg(op, b, M=None, tol=1e-10, maxit=1000, x0=None, project=None):
    """Preconditioned conjugate gradients.

    Stops when ``||b - op(x)||_2 <= tol`` (absolute). ``M`` applies the
    inverse of the preconditioner.
    """
    A = _as_op(op)
    Minv = _as_op(M) if M is not None else _identity
    P = project or _identity
    b = P(np.asarray(b, dtype=float))
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - P(A(x)) if x0 is not None else b.copy()
    rnorm = np.linalg.norm(r)
    if rnorm <= tol:
        return x, KrylovReport(0, rnorm, True)
    z = P(Minv(r))
    p = z.copy()
    rz = r @ z
    for it in range(1, maxit + 1):
        Ap = P(A(p))
        pAp = p @ Ap
        if abs(pAp) <= 1e-300 or abs(rz) <= 1e-300:
            raise KrylovBreakdown(f"CG breakdown at iteration {it}: p.Ap={pAp:.3e}, r.z={rz:.3e}")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        rnorm = np.linalg.norm(r)
        if rnorm <= tol:
            return x, KrylovReport(it, rnorm, True)
        z = P(Minv(r))
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, KrylovReport(maxit, rnorm, False)


def gmres(op, b, M=None, tol=1e-10, restart=100, maxit=1000, x0=None, project=None):
    """Right-preconditioned restarted GMRES (modified Gram-Schmidt, Givens).

    The monitored residual is the true residual ``||b - op(x)||_2`` since
    right preconditioning leaves it unchanged; stops when it is <= ``tol``.
    """
    A = _as_op(op)
    Minv = _as_op(M) if M is not None else _identity
    P = project or _identity
    b = P(np.asarray(b, dtype=float))
    n = b.size
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    total = 0
    rnorm = np.inf
    prev_cycle = np.inf
    while True:
        r = b - P(A(x)) if (x0 is not None or total > 0) else b.copy()
        beta = np.linalg.norm(r)
        rnorm = beta
        if beta <= tol:
            return x, KrylovReport(total, beta, True)
        if total >= maxit:
            return x, KrylovReport(total, beta, False)
        if beta >= prev_cycle * (1 - 1e-12):
            logger.warning("GMRES stagnated after %d iterations (residual %.3e)", total, beta)
            return x, KrylovReport(total, beta, False, stagnated=True)
        prev_cycle = beta
        m = min(restart, maxit - total)
        V = np.zeros((m + 1, n))
        Z = np.zeros((m, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        j_used = 0
        singular = False
        for j in range(m):
            Z[j] = P(Minv(V[j]))
            w = np.array(P(A(Z[j])), dtype=float)  # copy: the operator may return its argument
            for i in range(j + 1):
                H[i, j] = w @ V[i]
                w -= H[i, j] * V[i]
            hnext = np.linalg.norm(w)
            H[j + 1, j] = hnext
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = np.hypot(H[j, j], H[j + 1, j])
            if denom <= 1e-14 * beta:
                # A Z_j is dependent on earlier directions: singular operator
                singular = True
                break
            cs[j], sn[j] = H[j, j] / denom, H[j + 1, j] / denom
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            j_used = j + 1
            total += 1
            rnorm = abs(g[j + 1])
            # hnext == 0: the Krylov space is invariant and the solve is exact
            if rnorm <= tol or hnext <= 1e-14 * beta:
                break
            V[j + 1] = w / hnext
        if j_used:
            y = np.linalg.solve(np.triu(H[:j_used, :j_used]), g[:j_used])
            x = x + y @ Z[:j_used]
        if singular:
            rnorm = np.linalg.norm(b - P(A(x)))
            logger.warning("GMRES hit a singular direction after %d iterations (residual %.3e)", total, rnorm)
            return x, KrylovReport(total, rnorm, rnorm <= tol, stagnated=True)
        if rnorm <= tol:
            r = b - P(A(x))
            true_norm = np.linalg.norm(r)
            if true_norm <= tol:
                return x, KrylovReport(total, true_norm, True)
