"""Naive dense reference implementations.

These exist to falsify the fast paths: explicit companion matrices, a
textbook GMRES and direct solves of ``A(mu) x = b``.  Every routine has a
hard size guard.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import ProblemDefinitionError, SizeGuardError
from .linearization import LowRankTaylorProblem, TaylorProblem
from .problems import taylor_coefficients

DENSE_LIMIT = 4000
DIRECT_DENSE_LIMIT = 2000
DIRECT_SPARSE_LIMIT = 10000


@dataclass
class DenseCompanion:
    matrix: np.ndarray
    N: int
    n: int
    s: int | None = None
    p: int | None = None

    @property
    def block_sizes(self) -> list[int]:
        if self.s is None:
            return [self.n] * (self.N + 1)
        return [self.n] * self.s + [self.p] * (self.N + 1 - self.s)


def assemble_companion(problem: TaylorProblem, N: int) -> DenseCompanion:
    """Explicit ``(N+1)n`` square companion matrix.

    Block row one holds ``B_i = -A(0)^{-1} A^{(i+1)}(0) / (i+1)``, and the
    subdiagonal blocks are ``I / j``.
    """
    n = problem.dim
    size = (N + 1) * n
    if size > DENSE_LIMIT:
        raise SizeGuardError(f"dense companion of size {size} exceeds {DENSE_LIMIT}")
    derivs = taylor_coefficients(problem, N + 1)
    M = np.zeros((size, size), dtype=complex)
    for i in range(N + 1):
        M[:n, i * n : (i + 1) * n] = -problem.solve_A0(derivs[i + 1]) / (i + 1)
    for j in range(1, N + 1):
        M[j * n : (j + 1) * n, (j - 1) * n : j * n] = np.eye(n) / j
    return DenseCompanion(M, N, n)


def assemble_companion_lowrank(problem: LowRankTaylorProblem, N: int) -> DenseCompanion:
    """Compressed companion matrix: s blocks of size n, then blocks of size p.

    First block row: ``B_0 .. B_{s-1}`` then ``-A(0)^{-1} U_{i+1} / (i+1)``
    for ``i = s..N``; block row ``s+1`` holds ``V^T / s``.
    """
    n, s, p = problem.dim, problem.s, problem.rank
    if N < s:
        raise ValueError("N must be at least s")
    sizes = [n] * s + [p] * (N + 1 - s)
    size = sum(sizes)
    if size > DENSE_LIMIT:
        raise SizeGuardError(f"dense companion of size {size} exceeds {DENSE_LIMIT}")
    offs = np.cumsum([0, *sizes])
    eye_n = np.eye(n, dtype=complex)
    eye_p = np.eye(p, dtype=complex)
    M = np.zeros((size, size), dtype=complex)
    for i in range(s):
        Ai = np.column_stack([problem.deriv_apply(i + 1, eye_n[:, k]) for k in range(n)])
        M[:n, offs[i] : offs[i + 1]] = -problem.solve_A0(Ai) / (i + 1)
    for i in range(s, N + 1):
        Ui = np.column_stack([problem.U_apply(i + 1, eye_p[:, k]) for k in range(p)])
        M[:n, offs[i] : offs[i + 1]] = -problem.solve_A0(Ui) / (i + 1)
    for j in range(1, N + 1):
        rows = slice(offs[j], offs[j + 1])
        cols = slice(offs[j - 1], offs[j])
        if j < s:
            M[rows, cols] = eye_n / j
        elif j == s:
            Vt = np.column_stack([problem.Vt_apply(eye_n[:, k]) for k in range(n)])
            M[rows, cols] = Vt / s
        else:
            M[rows, cols] = eye_p / j
    return DenseCompanion(M, N, n, s, p)


def companion_rhs(problem: TaylorProblem, sizes: list[int]) -> np.ndarray:
    """``c = -e_1 (x) A(0)^{-1} b`` padded to the given block sizes."""
    c = np.zeros(sum(sizes), dtype=complex)
    c[: problem.dim] = -problem.solve_A0(problem.rhs)
    return c


def reference_gmres(M: np.ndarray, rhs: np.ndarray, m: int):
    """Textbook GMRES (modified Gram-Schmidt Arnoldi, zero initial guess).

    Returns the iterates ``x_1..x_m`` and residual norms ``r_0..r_m``.
    """
    M = np.asarray(M, dtype=complex)
    rhs = np.asarray(rhs, dtype=complex)
    size = M.shape[0]
    beta = np.linalg.norm(rhs)
    V = np.zeros((size, m + 1), dtype=complex)
    H = np.zeros((m + 1, m), dtype=complex)
    V[:, 0] = rhs / beta
    iterates, residuals = [], [beta]
    for k in range(m):
        w = M @ V[:, k]
        for i in range(k + 1):
            H[i, k] = np.vdot(V[:, i], w)
            w = w - H[i, k] * V[:, i]
        H[k + 1, k] = np.linalg.norm(w)
        if H[k + 1, k] > 1e-300:
            V[:, k + 1] = w / H[k + 1, k]
        e1 = np.zeros(k + 2, dtype=complex)
        e1[0] = beta
        y = np.linalg.lstsq(H[: k + 2, : k + 1], e1, rcond=None)[0]
        iterates.append(V[:, : k + 1] @ y)
        residuals.append(float(np.linalg.norm(rhs - M @ iterates[-1])))
    return iterates, residuals


def direct_solve(problem: TaylorProblem, mu: complex) -> np.ndarray:
    """Solve ``A(mu) x = b`` by LU on the explicitly assembled matrix."""
    n = problem.dim
    if n > DIRECT_SPARSE_LIMIT:
        raise SizeGuardError(f"direct solve of size {n} exceeds {DIRECT_SPARSE_LIMIT}")
    A = problem.assemble(mu)
    b = problem.rhs
    if sp.issparse(A):
        try:
            x = spla.splu(sp.csc_matrix(A, dtype=complex)).solve(b.astype(complex))
        except RuntimeError as exc:
            raise ProblemDefinitionError(f"A({mu}) is singular: {exc}") from None
    else:
        if n > DIRECT_DENSE_LIMIT:
            raise SizeGuardError(f"dense direct solve of size {n} exceeds {DIRECT_DENSE_LIMIT}")
        try:
            with np.errstate(all="ignore"), warnings.catch_warnings():
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                x = sla.solve(np.asarray(A, dtype=complex), b)
        except sla.LinAlgError as exc:
            raise ProblemDefinitionError(f"A({mu}) is singular: {exc}") from None
    if not np.all(np.isfinite(x)):
        raise ProblemDefinitionError(f"A({mu}) is singular")
    return x
