"""Arnoldi factorization of the infinite companion operator.

The factorization ``B Q_m = Q_{m+1} H_m`` does not depend on the parameter,
so one run serves every ``mu``.  Three storage schemes for ``Q`` are
provided:

``full``
    column ``j`` is stored as ``j`` blocks of size n.
``lowrank``
    after ``s`` blocks of size n the remaining blocks have size p; needs a
    :class:`~infgmres.linearization.LowRankTaylorProblem`.
``tensor``
    every block of every column is ``Z @ a`` for a single orthonormal
    ``Z`` (n x r); only ``Z`` and the coefficient tensor are stored.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import EmptyKrylovError, StructureError
from .linearization import (
    BlockVector,
    TaylorProblem,
    _apply_full,
    _apply_lowrank,
    lowrank_block_sizes,
)

VARIANTS = ("full", "lowrank", "tensor")


@dataclass(frozen=True)
class OrthoPolicy:
    """Gram-Schmidt settings.

    ``reorth`` is ``"always"`` (classical GS plus one unconditional second
    pass), ``"dgks"`` (second pass only if the projected norm dropped below
    ``eta`` times the original) or ``"never"``.
    """

    reorth: str = "always"
    eta: float = 1 / np.sqrt(2)
    breakdown_tol: float = 1e-14

    def __post_init__(self):
        if self.reorth not in ("always", "dgks", "never"):
            raise ValueError(f"unknown reorthogonalization mode {self.reorth!r}")


@dataclass
class GSResult:
    h: np.ndarray
    beta: float
    q: np.ndarray
    passes: int

    def __iter__(self):
        return iter((self.h, self.beta, self.q))


def _columns(basis) -> list[np.ndarray]:
    if isinstance(basis, np.ndarray):
        return [basis[:, j] for j in range(basis.shape[1])]
    return [b.flat() if isinstance(b, BlockVector) else np.asarray(b) for b in basis]


def _project_out(y: np.ndarray, cols: Sequence[np.ndarray]):
    h = np.array([np.vdot(q, y[: q.size]) for q in cols], dtype=complex)
    w = y.copy()
    for hi, q in zip(h, cols):
        w[: q.size] -= hi * q
    return h, w


def gram_schmidt(y, basis, policy: OrthoPolicy = OrthoPolicy()) -> GSResult:
    """Orthogonalize ``y`` against orthonormal ``basis`` columns.

    Columns may be shorter than ``y``; they are implicitly zero padded.
    Returns ``h``, ``beta`` and ``q`` with ``y = sum h_i q_i + beta q``.  A
    ``beta`` of zero signals that ``y`` lies in the span (lucky breakdown);
    ``q`` is then the zero vector.
    """
    y = y.flat() if isinstance(y, BlockVector) else np.asarray(y, dtype=complex)
    cols = _columns(basis)
    if not cols:
        raise StructureError("gram_schmidt needs a nonempty basis")
    norm0 = np.linalg.norm(y)
    h, w = _project_out(y, cols)
    passes = 1
    wnorm = np.linalg.norm(w)
    if policy.reorth == "always" or (policy.reorth == "dgks" and wnorm < policy.eta * norm0):
        h2, w = _project_out(w, cols)
        h = h + h2
        passes = 2
        wnorm = np.linalg.norm(w)
    if wnorm <= policy.breakdown_tol * norm0 or wnorm == 0.0:
        return GSResult(h, 0.0, np.zeros_like(w), passes)
    return GSResult(h, float(wnorm), w / wnorm, passes)


def _grow(arr: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    new = np.zeros(shape, dtype=arr.dtype)
    new[tuple(slice(0, k) for k in arr.shape)] = arr
    return new


class FullBasis:
    """Column ``j`` (1-based) holds ``j`` blocks of size n."""

    variant = "full"

    def __init__(self, n: int):
        self.n = n
        self.columns: list[np.ndarray] = []

    def __len__(self):
        return len(self.columns)

    def append(self, q: np.ndarray) -> None:
        self.columns.append(q)

    def block_sizes(self, j: int) -> list[int]:
        return [self.n] * j

    def next_vector(self, problem: TaylorProblem) -> np.ndarray:
        q = self.columns[-1]
        k = len(self.columns)
        out = _apply_full(problem, q.reshape(k, self.n).T)
        return out.T.reshape(-1)

    def orthogonalize(self, y, policy):
        return gram_schmidt(y, self.columns, policy)

    def first_block(self, j: int) -> np.ndarray:
        return self.columns[j][: self.n]

    def column(self, j: int) -> BlockVector:
        return BlockVector.from_flat(self.columns[j], self.block_sizes(j + 1))

    @property
    def storage_count(self) -> int:
        return sum(c.size for c in self.columns)


class LowRankBasis(FullBasis):
    """Columns grow by n entries for the first s steps and by p afterwards."""

    variant = "lowrank"

    def __init__(self, n: int, s: int, p: int):
        super().__init__(n)
        self.s = s
        self.p = p

    def block_sizes(self, j: int) -> list[int]:
        return lowrank_block_sizes(j, self.n, self.s, self.p)

    def next_vector(self, problem) -> np.ndarray:
        k = len(self.columns)
        blocks = self.column(k - 1).blocks
        return np.concatenate(_apply_lowrank(problem, blocks))


class TensorBasis:
    """Compressed basis: block ``l`` of column ``j`` is ``Z @ coeffs[:, l, j]``.

    Storage is ``n r + r (m+1)^2`` for ``m+1`` columns and rank ``r``.
    """

    variant = "tensor"

    def __init__(self, n: int, capacity: int = 32, z_tol: float = 1e-14):
        self.n = n
        self.r = 0
        self.ncols = 0
        self.z_tol = z_tol
        cap = max(capacity, 2)
        self.Z = np.zeros((n, min(cap, 32)), dtype=complex)
        self.coeffs = np.zeros((min(cap, 32), cap, cap), dtype=complex)

    def __len__(self):
        return self.ncols

    def _ensure(self, r: int, cols: int) -> None:
        if r > self.Z.shape[1]:
            new_r = max(r, 2 * self.Z.shape[1])
            self.Z = _grow(self.Z, (self.n, new_r))
        rc, lc, _ = self.coeffs.shape
        if r > rc or cols > lc:
            new_r = max(rc, r if r <= rc else max(r, 2 * rc))
            new_l = lc if cols <= lc else max(cols, 2 * lc)
            self.coeffs = _grow(self.coeffs, (new_r, new_l, new_l))

    def start(self, q1: np.ndarray) -> None:
        self._ensure(1, 1)
        self.Z[:, 0] = q1
        self.r = 1
        self.coeffs[0, 0, 0] = 1.0
        self.ncols = 1

    def append(self, qcoef: np.ndarray) -> None:
        j = self.ncols
        self._ensure(self.r, j + 1)
        self.coeffs[: self.r, : j + 1, j] = qcoef.reshape(self.r, j + 1)
        self.ncols += 1

    def next_vector(self, problem: TaylorProblem) -> np.ndarray:
        j = self.ncols
        r = self.r
        a = self.coeffs[:r, :j, j - 1] / np.arange(1, j + 1)
        Zr = self.Z[:, :r]
        xt = -problem.solve_A0(problem.deriv_sum(Zr @ a))
        # two-pass classical Gram-Schmidt of the new block against Z
        xnorm = np.linalg.norm(xt)
        t = Zr.conj().T @ xt
        xt = xt - Zr @ t
        t2 = Zr.conj().T @ xt
        xt = xt - Zr @ t2
        t = t + t2
        tau = np.linalg.norm(xt)
        if tau > self.z_tol * xnorm:
            self._ensure(r + 1, j + 1)
            self.Z[:, r] = xt / tau
            self.r = r + 1
            t = np.append(t, tau)
            a = np.vstack([a, np.zeros((1, j), dtype=complex)])
        y = np.empty((self.r, j + 1), dtype=complex)
        y[:, 0] = t
        y[:, 1:] = a
        return y.reshape(-1)

    def orthogonalize(self, ycoef, policy):
        j = self.ncols
        C = self.coeffs[: self.r, : j + 1, :j].reshape(self.r * (j + 1), j)
        return gram_schmidt(ycoef, C, policy)

    def first_block(self, j: int) -> np.ndarray:
        return self.Z[:, : self.r] @ self.coeffs[: self.r, 0, j]

    def column(self, j: int) -> BlockVector:
        Zr = self.Z[:, : self.r]
        return BlockVector([Zr @ self.coeffs[: self.r, l, j] for l in range(j + 1)])

    @property
    def storage_count(self) -> int:
        return self.n * self.r + self.r * self.ncols**2


def basis_first_block(basis) -> np.ndarray:
    """Rows ``1..n`` of the stacked basis matrix, one column per basis vector."""
    if isinstance(basis, TensorBasis):
        return basis.Z[:, : basis.r] @ basis.coeffs[: basis.r, 0, : basis.ncols]
    return np.column_stack([basis.first_block(j) for j in range(len(basis))])


class ArnoldiFactorization:
    """Arnoldi relation for the companion operator, grown step by step.

    ``extend`` mutates the object; once a caller stops extending it, all
    read access (``hessenberg``, ``first_block_rows``) is side-effect free.
    """

    def __init__(self, problem: TaylorProblem, variant: str = "full",
                 policy: OrthoPolicy = OrthoPolicy(), capacity: int = 32):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")
        if variant == "lowrank" and not problem.is_lowrank:
            raise StructureError("the lowrank variant needs a problem with a low-rank tail")
        self.problem = problem
        self.variant = variant
        self.policy = policy
        n = problem.dim
        self.c_hat = -problem.solve_A0(problem.rhs)
        self.c_norm = float(np.linalg.norm(self.c_hat))
        if self.c_norm == 0.0 or not np.isfinite(self.c_norm):
            raise EmptyKrylovError("A(0)^{-1} b is zero; the Krylov space is empty")
        q1 = self.c_hat / self.c_norm
        if variant == "full":
            self.basis = FullBasis(n)
            self.basis.append(q1)
        elif variant == "lowrank":
            self.basis = LowRankBasis(n, problem.s, problem.rank)
            self.basis.append(q1)
        else:
            self.basis = TensorBasis(n, capacity + 1)
            self.basis.start(q1)
        capacity = max(capacity, 1)
        self._H = np.zeros((capacity + 1, capacity), dtype=complex)
        self._F = np.zeros((n, capacity + 1), dtype=complex)
        self._F[:, 0] = q1
        self.m = 0
        self.breakdown = False
        self.gs_passes: list[int] = []

    @property
    def n(self) -> int:
        return self.problem.dim

    def extend(self, steps: int = 1) -> int:
        """Run up to ``steps`` Arnoldi steps; returns how many were done."""
        done = 0
        while done < steps and not self.breakdown:
            m = self.m
            if m + 1 >= self._H.shape[1]:
                cap = 2 * self._H.shape[1]
                self._H = _grow(self._H, (cap + 1, cap))
                self._F = _grow(self._F, (self.n, cap + 1))
            y = self.basis.next_vector(self.problem)
            gs = self.basis.orthogonalize(y, self.policy)
            h, beta, q = gs
            self.gs_passes.append(gs.passes)
            self._H[: m + 1, m] = h
            self._H[m + 1, m] = beta
            self.m = m + 1
            done += 1
            if beta == 0.0:
                self.breakdown = True
                break
            self.basis.append(q)
            self._F[:, m + 1] = self.basis.first_block(m + 1)
        return done

    @property
    def hessenberg(self) -> np.ndarray:
        """The ``(m+1) x m`` upper Hessenberg matrix."""
        return self._H[: self.m + 1, : self.m].copy()

    def first_block_rows(self, m: int | None = None) -> np.ndarray:
        """``Q_m(1:n, :)``: first blocks of the first ``m`` basis vectors."""
        m = self.m if m is None else m
        if m > self.m or m < 0:
            raise ValueError(f"requested {m} columns, factorization has m={self.m}")
        return self._F[:, :m]

    @property
    def storage_count(self) -> int:
        return self.basis.storage_count


def arnoldi_build(problem: TaylorProblem, max_iters: int, variant: str = "full",
                  ortho_policy: OrthoPolicy = OrthoPolicy()) -> ArnoldiFactorization:
    """Build ``max_iters`` Arnoldi steps (fewer on lucky breakdown)."""
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    fac = ArnoldiFactorization(problem, variant, ortho_policy, capacity=max_iters)
    fac.extend(max_iters)
    return fac
