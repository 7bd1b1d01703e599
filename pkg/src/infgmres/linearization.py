"""Implicit companion operator for analytic matrix functions.

A parameter-dependent system ``A(mu) x = b`` is rewritten as
``(mu B - I) v = c`` where ``B`` is an infinite block companion matrix built
from the Taylor coefficients of ``A`` at zero.  ``B`` is never stored: it is
applied to vectors whose block tail is zero, and the result has exactly one
more nonzero block than its input.
"""

from __future__ import annotations

import abc
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import ProblemDefinitionError, StructureError

#: Above this size A(0) is factorized with a sparse LU.
DENSE_LU_LIMIT = 2000


class A0Factorization:
    """LU factorization of A(0), prepared once and reused for every solve."""

    def __init__(self, matrix):
        n = matrix.shape[0]
        if matrix.shape != (n, n):
            raise StructureError(f"A(0) must be square, got shape {matrix.shape}")
        self.n = n
        if sp.issparse(matrix) and n > DENSE_LU_LIMIT:
            try:
                self._splu = spla.splu(sp.csc_matrix(matrix, dtype=complex))
            except RuntimeError as exc:
                raise ProblemDefinitionError(f"A(0) is singular: {exc}") from None
            self._lu = None
        else:
            dense = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix)
            dense = np.asarray(dense, dtype=complex)
            with warnings.catch_warnings():
                # singularity is reported below as ProblemDefinitionError
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                lu, piv = sla.lu_factor(dense, check_finite=True)
            diag = np.abs(np.diag(lu))
            if diag.min() <= n * np.finfo(float).eps * max(diag.max(), 1.0):
                raise ProblemDefinitionError("A(0) is numerically singular")
            self._lu = (lu, piv)
            self._splu = None

    def solve(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=complex)
        if self._lu is not None:
            return sla.lu_solve(self._lu, y, check_finite=False)
        return self._splu.solve(y)


class TaylorProblem(abc.ABC):
    """Parameter-dependent linear system ``A(mu) x = b`` with A analytic at 0.

    Subclasses provide the action of ``A(0)^{-1}``, of the derivatives
    ``A^{(i)}(0)`` and of the exact matrix ``A(mu)``.  Instances are treated
    as immutable once constructed.
    """

    dim: int
    rhs: np.ndarray

    @abc.abstractmethod
    def solve_A0(self, y: np.ndarray) -> np.ndarray:
        """Return ``A(0)^{-1} y``."""

    @abc.abstractmethod
    def deriv_apply(self, order: int, y: np.ndarray) -> np.ndarray:
        """Return ``A^{(order)}(0) y`` for ``order >= 0``."""

    @abc.abstractmethod
    def eval_apply(self, mu: complex, y: np.ndarray) -> np.ndarray:
        """Return ``A(mu) y`` without truncation."""

    def deriv_sum(self, X: np.ndarray) -> np.ndarray:
        """Return ``sum_i A^{(i)}(0) X[:, i-1]`` for ``i = 1..X.shape[1]``.

        Problems with structured derivative families override this.
        """
        acc = np.zeros(self.dim, dtype=complex)
        for i in range(1, X.shape[1] + 1):
            acc += self.deriv_apply(i, X[:, i - 1])
        return acc

    def assemble(self, mu: complex):
        """Explicit ``A(mu)``; the generic fallback applies A(mu) to unit vectors."""
        if self.dim > DENSE_LU_LIMIT:
            raise NotImplementedError("no explicit assembly for this problem size")
        eye = np.eye(self.dim, dtype=complex)
        return np.column_stack([self.eval_apply(mu, eye[:, k]) for k in range(self.dim)])

    @property
    def is_lowrank(self) -> bool:
        return False


class LowRankTaylorProblem(TaylorProblem):
    """Problem whose derivatives beyond order ``s`` factor as ``U_i V^T``.

    ``U_apply(i, z)`` applies ``U_i`` (n x p) for ``i > s``; ``Vt_apply``
    applies the plain (non-conjugated) transpose ``V^T``.
    """

    s: int
    rank: int

    @abc.abstractmethod
    def U_apply(self, order: int, z: np.ndarray) -> np.ndarray:
        ...

    @abc.abstractmethod
    def Vt_apply(self, y: np.ndarray) -> np.ndarray:
        ...

    def U_sum(self, first_order: int, Z: np.ndarray) -> np.ndarray:
        """Return ``sum_k U_{first_order+k} Z[:, k]``."""
        acc = np.zeros(self.dim, dtype=complex)
        for k in range(Z.shape[1]):
            acc += self.U_apply(first_order + k, Z[:, k])
        return acc

    @property
    def is_lowrank(self) -> bool:
        return True


def lowrank_block_sizes(nblocks: int, n: int, s: int, p: int) -> list[int]:
    """Block sizes of a low-rank iterate with ``nblocks`` nonzero blocks."""
    return [n] * min(nblocks, s) + [p] * max(0, nblocks - s)


@dataclass(frozen=True)
class BlockVector:
    """Leading nonzero blocks of an infinite vector with a zero tail."""

    blocks: tuple[np.ndarray, ...]

    def __init__(self, blocks: Sequence[np.ndarray]):
        object.__setattr__(
            self, "blocks", tuple(np.asarray(b, dtype=complex).ravel() for b in blocks)
        )

    @classmethod
    def from_flat(cls, flat: np.ndarray, sizes: Sequence[int]) -> "BlockVector":
        flat = np.asarray(flat)
        if flat.size != sum(sizes):
            raise StructureError(f"vector of length {flat.size} does not fit sizes {list(sizes)}")
        edges = np.cumsum([0, *sizes])
        return cls([flat[a:b] for a, b in zip(edges[:-1], edges[1:])])

    @classmethod
    def from_matrix(cls, X: np.ndarray) -> "BlockVector":
        """Columns of ``X`` become the blocks (``vec`` ordering)."""
        return cls([X[:, k] for k in range(X.shape[1])])

    @property
    def block_sizes(self) -> list[int]:
        return [b.size for b in self.blocks]

    def __len__(self) -> int:
        return len(self.blocks)

    def flat(self) -> np.ndarray:
        if not self.blocks:
            return np.zeros(0, dtype=complex)
        return np.concatenate(self.blocks)

    def padded(self, nblocks: int, block_size: int | None = None) -> np.ndarray:
        """Flat representation with zero blocks appended up to ``nblocks``."""
        extra = nblocks - len(self.blocks)
        if extra < 0:
            raise StructureError("cannot pad to fewer blocks than present")
        size = block_size if block_size is not None else self.blocks[-1].size
        return np.concatenate([self.flat(), np.zeros(extra * size, dtype=complex)])

    def norm(self) -> float:
        return float(np.linalg.norm(self.flat()))

    def as_matrix(self) -> np.ndarray:
        sizes = set(self.block_sizes)
        if len(sizes) != 1:
            raise StructureError("blocks have mixed sizes")
        return np.column_stack(self.blocks)


def _apply_full(problem: TaylorProblem, X: np.ndarray) -> np.ndarray:
    """Matrix form of the companion action: ``X`` is n x k, result n x (k+1)."""
    k = X.shape[1]
    scale = 1.0 / np.arange(1, k + 1)
    scaled = X * scale
    out = np.empty((X.shape[0], k + 1), dtype=complex)
    out[:, 0] = -problem.solve_A0(problem.deriv_sum(scaled))
    out[:, 1:] = scaled
    return out


def companion_apply(problem: TaylorProblem, v: BlockVector) -> BlockVector:
    """Apply the infinite companion matrix to ``vec(x_1, ..., x_k, 0, ...)``.

    The first output block is ``-A(0)^{-1} sum_i A^{(i)}(0) x_i / i`` and
    block ``j+1`` is ``x_j / j``.  The cost does not depend on any truncation
    order.
    """
    if len(v) < 1:
        raise StructureError("companion_apply needs at least one block")
    if any(size != problem.dim for size in v.block_sizes):
        raise StructureError(
            f"block sizes {v.block_sizes} do not match problem dimension {problem.dim}"
        )
    return BlockVector.from_matrix(_apply_full(problem, v.as_matrix()))


def _apply_lowrank(problem: LowRankTaylorProblem, blocks: Sequence[np.ndarray]) -> list[np.ndarray]:
    m = len(blocks)
    s = problem.s
    n_part = min(m, s)
    acc = problem.deriv_sum(
        np.column_stack([blocks[i] / (i + 1) for i in range(n_part)])
    )
    if m > s:
        tail = np.column_stack([blocks[i] / (i + 1) for i in range(s, m)])
        acc = acc + problem.U_sum(s + 1, tail)
    out = [-problem.solve_A0(acc)]
    out.extend(blocks[j - 1] / j for j in range(1, min(m, s - 1) + 1))
    if m >= s:
        out.append(problem.Vt_apply(blocks[s - 1]) / s)
    out.extend(blocks[j - 1] / j for j in range(s + 1, m + 1))
    return out


def companion_apply_lowrank(problem: LowRankTaylorProblem, v: BlockVector, m: int | None = None) -> BlockVector:
    """Companion action in the compressed block pattern.

    The first ``min(m, s)`` blocks have size n and later blocks size p.  The
    block produced from ``x_s`` is ``V^T x_s / s``; for ``m < s`` this reduces
    to :func:`companion_apply`.
    """
    if not problem.is_lowrank:
        raise StructureError("companion_apply_lowrank needs a LowRankTaylorProblem")
    if m is None:
        m = len(v)
    expected = lowrank_block_sizes(m, problem.dim, problem.s, problem.rank)
    if m < 1 or v.block_sizes != expected:
        raise StructureError(
            f"block sizes {v.block_sizes} inconsistent with m={m}, s={problem.s}, p={problem.rank}"
        )
    return BlockVector(_apply_lowrank(problem, v.blocks))


def residual_true(problem: TaylorProblem, mu: complex, x: np.ndarray) -> float:
    """Relative residual ``||A(mu) x - b|| / ||b||`` with the exact A(mu)."""
    x = np.asarray(x)
    if x.shape != (problem.dim,):
        raise StructureError(f"x has shape {x.shape}, expected ({problem.dim},)")
    b = problem.rhs
    return float(np.linalg.norm(problem.eval_apply(mu, x) - b) / np.linalg.norm(b))
