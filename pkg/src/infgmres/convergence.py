"""Eigenvalue-based convergence prediction.

The residual of the linearized system behaves like ``(|mu| |gamma_{j+1}|)^k``
for large ``k``, where ``gamma_1, gamma_2, ...`` are the eigenvalues of the
companion matrix ordered by decreasing modulus and ``j`` of them are treated
as outliers.  The ``gamma_i`` are reciprocals of eigenvalues of the
nonlinear eigenvalue problem ``A(lambda) v = 0`` closest to the origin.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .exceptions import SizeGuardError, UndefinedFactorError
from .krylov import ArnoldiFactorization
from .linearization import TaylorProblem
from .oracle import DENSE_LIMIT, assemble_companion

#: Ratios at residuals below this multiple of eps * r_0 measure roundoff.
STAGNATION_FACTOR = 1e2
#: The asymptotic bound is checked once the residual drops below KNEE * r_0.
KNEE = 1e-2


@dataclass(frozen=True)
class SpectrumEstimate:
    gammas: np.ndarray
    source: str
    vectors: np.ndarray | None = None

    @property
    def lambdas(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 1.0 / self.gammas


@dataclass(frozen=True)
class BoundPrediction:
    mu: complex
    j: int
    factor: float

    def per_k(self, k):
        return self.factor ** np.asarray(k)


def _sorted(vals, vecs=None):
    order = np.argsort(-np.abs(vals), kind="stable")
    return vals[order], (None if vecs is None else vecs[:, order])


def spectrum_dense(problem: TaylorProblem, N: int) -> SpectrumEstimate:
    """Full spectrum of the explicitly assembled companion matrix of order N."""
    size = (N + 1) * problem.dim
    if size > DENSE_LIMIT:
        raise SizeGuardError(
            f"companion matrix of size {size} exceeds {DENSE_LIMIT}; use spectrum_ritz instead"
        )
    M = assemble_companion(problem, N).matrix
    vals, vecs = sla.eig(M)
    vals, vecs = _sorted(vals, vecs)
    return SpectrumEstimate(vals, "dense", vecs)


def spectrum_ritz(fac: ArnoldiFactorization, count: int | None = None) -> SpectrumEstimate:
    """Ritz values of the square part of the Hessenberg matrix."""
    m = fac.m
    if count is not None and count > m:
        raise ValueError(f"asked for {count} Ritz values from m={m} steps")
    H = fac._H[:m, :m]
    vals, vecs = sla.eig(H)
    vals, vecs = _sorted(vals, vecs)
    if count is not None:
        vals, vecs = vals[:count], vecs[:, :count]
    return SpectrumEstimate(vals, "ritz", vecs)


def predict_bound(spec: SpectrumEstimate, mu: complex, j: int = 0) -> BoundPrediction:
    """Asymptotic convergence factor ``|mu| |gamma_{j+1}|``."""
    gammas = np.asarray(spec.gammas)
    if j < 0 or j >= gammas.size:
        raise IndexError(f"outlier count {j} needs at least {j + 1} eigenvalue estimates, have {gammas.size}")
    mods = np.abs(gammas)
    if j > 0 and mods[:j].min() <= mods[j]:
        warnings.warn(
            f"outliers are not strictly separated: |gamma_{j}| = {mods[j - 1]:.6g} <= |gamma_{j + 1}| = {mods[j]:.6g}",
            stacklevel=2,
        )
    return BoundPrediction(complex(mu), j, float(abs(mu) * mods[j]))


def knee_index(history: Sequence[float]) -> int:
    """First k with ``r_k < KNEE * r_0`` (len(history) if never reached)."""
    h = np.asarray(history, dtype=float)
    hits = np.nonzero(h < KNEE * h[0])[0]
    return int(hits[0]) if hits.size else len(h)


def observed_factor(residual_history: Sequence[float], start: int = 0) -> float:
    """Worst per-step reduction ``max_k r_{k+1} / r_k``.

    Entries below ``STAGNATION_FACTOR * eps * r_0`` are discarded, as are
    entries before ``start`` (e.g. the :func:`knee_index`).
    """
    h = np.asarray(residual_history, dtype=float)
    if h.size < 2:
        raise UndefinedFactorError("need at least two residuals")
    floor = STAGNATION_FACTOR * np.finfo(float).eps * h[0]
    valid = h > floor
    # stop at the first stagnated entry; later ratios only see roundoff
    stop = int(np.argmin(valid)) if not valid.all() else h.size
    seg = h[start:stop]
    if seg.size < 2:
        raise UndefinedFactorError("fewer than two residuals above the stagnation floor")
    return float(np.max(seg[1:] / seg[:-1]))


def _rest_projector(A: np.ndarray, gammas) -> np.ndarray:
    """Spectral projector onto the invariant subspace of the eigenvalues not in ``gammas``."""
    vals, R = np.linalg.eig(A)
    dom = []
    for g in gammas:
        order = [i for i in np.argsort(np.abs(vals - g)) if i not in dom]
        dom.append(order[0])
    L = np.linalg.inv(R)
    return np.eye(A.shape[0]) - R[:, dom] @ L[dom, :]


def gelfand_limit_check(A: np.ndarray, j: int, k_max: int, gammas: Sequence[complex] | None = None):
    """``||(A - g_1 I) ... (A - g_j I) A^k||_2^{1/k}`` for ``k = 1..k_max``.

    ``gammas`` are the ``j`` dominant eigenvalues; when omitted they are the
    ``j`` eigenvalues of ``A`` of largest modulus.  The power is accumulated
    with per-step rescaling, so only the logarithm of the scale is carried.

    With ``P`` the product and ``Pi`` the spectral projector onto the
    remaining eigenvalues, ``P A^k = P A^k Pi`` holds exactly for
    diagonalizable ``A``.  Each step multiplies by ``A Pi`` so that rounding
    errors along the annihilated directions cannot grow like ``|g_1|^k``.
    """
    A = np.asarray(A, dtype=complex)
    n = A.shape[0]
    if gammas is None:
        ev = np.linalg.eigvals(A)
        gammas = ev[np.argsort(-np.abs(ev), kind="stable")][:j]
    gammas = list(gammas)[:j]
    P = np.eye(n, dtype=complex)
    for g in gammas:
        P = P @ (A - g * np.eye(n))
    step = A @ _rest_projector(A, gammas) if gammas else A
    scale = np.linalg.norm(P)
    if scale == 0.0:
        return [(k, 0.0) for k in range(1, k_max + 1)]
    M = P / scale
    log_scale = np.log(scale)
    out = []
    for k in range(1, k_max + 1):
        with np.errstate(all="ignore"):
            M = M @ step
            s = np.linalg.norm(M)
        if s == 0.0:
            out.extend((kk, 0.0) for kk in range(k, k_max + 1))
            break
        with np.errstate(all="ignore"):
            M = M / s
            log_scale += np.log(s)
            value = np.exp((log_scale + np.log(np.linalg.norm(M, 2))) / k)
        if not np.isfinite(value):
            raise OverflowError(f"value not representable beyond k={k - 1}")
        out.append((k, float(value)))
    return out


def gelfand_test_matrix(size: int = 6, seed: int = 0, spectrum: Sequence[complex] | None = None):
    """``V diag(spectrum) V^{-1}`` with a seeded, well-conditioned ``V``.

    The default spectrum is ``3, 2.5, 1, 0.5, 0.25, ...``.  ``V = I + E``
    with ``||E||_2 = 0.3``, so ``kappa_2(V) <= 1.3 / 0.7``.
    Returns ``(A, spectrum)``.
    """
    if spectrum is None:
        head = [3.0, 2.5, 1.0]
        spectrum = (head + [0.5**k for k in range(1, size)])[:size]
    spectrum = np.asarray(spectrum, dtype=complex)
    size = spectrum.size
    rng = np.random.default_rng(seed)
    E = rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))
    V = np.eye(size) + 0.3 * E / np.linalg.norm(E, 2)
    A = V @ np.diag(spectrum) @ np.linalg.inv(V)
    return A, spectrum
