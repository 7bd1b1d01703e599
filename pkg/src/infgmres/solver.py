"""Parameterized solutions from a single Arnoldi factorization.

For every ``mu`` the GMRES iterate of ``(mu B - I) v = c`` is obtained from
the small least-squares problem

    min_z || (mu H_m - I_m) z - ||c|| e_1 ||,

where ``I_m`` is the m x m identity with a zero row appended.  The
approximation to ``x(mu)`` is the first block of ``Q_m z``.
"""

from __future__ import annotations

import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exceptions import RankDeficientWarning
from .krylov import ArnoldiFactorization, OrthoPolicy
from .linearization import TaylorProblem, residual_true


def shifted_lstsq(H: np.ndarray, mu: complex, c_norm: float):
    """Solve the shifted least-squares problem for an ``(m+1) x m`` Hessenberg.

    Returns ``(z, residual_norm, rank_deficient)``.  Dense QR is used unless
    R is numerically singular, in which case the minimum-norm solution from
    an SVD-based solver is returned.
    """
    m = H.shape[1]
    M = mu * H
    M[np.arange(m), np.arange(m)] -= 1.0
    rhs = np.zeros(m + 1, dtype=complex)
    rhs[0] = c_norm
    Qf, R = np.linalg.qr(M)
    d = np.abs(np.diag(R))
    rank_deficient = d.min() <= max(m + 1, 1) * np.finfo(float).eps * d.max()
    if rank_deficient:
        z = np.linalg.lstsq(M, rhs, rcond=None)[0]
    else:
        z = np.linalg.solve(R, Qf.conj().T @ rhs)
    return z, float(np.linalg.norm(M @ z - rhs)), bool(rank_deficient)


class ParamSolution:
    """Map ``mu -> x_m(mu)`` backed by a shared, read-only factorization."""

    def __init__(self, factorization: ArnoldiFactorization, problem: TaylorProblem | None = None):
        self.factorization = factorization
        self.problem = factorization.problem if problem is None else problem

    def evaluate(self, mu: complex, m: int | None = None):
        """Return ``(x, ls_residual)`` using the first ``m`` Arnoldi steps.

        ``mu == 0`` returns ``A(0)^{-1} b`` with residual zero.
        """
        fac = self.factorization
        if mu == 0:
            return -fac.c_hat.copy(), 0.0
        m = fac.m if m is None else m
        if not 1 <= m <= fac.m:
            raise ValueError(f"iteration budget {m} outside 1..{fac.m}")
        H = fac._H[: m + 1, :m]
        z, res, deficient = shifted_lstsq(H, mu, fac.c_norm)
        if deficient:
            warnings.warn(f"shifted least-squares matrix rank deficient at mu={mu}, m={m}",
                          RankDeficientWarning, stacklevel=2)
        return fac.first_block_rows(m) @ z, res

    __call__ = evaluate


def evaluate(sol: ParamSolution, mu: complex, m: int | None = None):
    return sol.evaluate(mu, m)


@dataclass
class SweepResult:
    mu_values: list
    solutions: list
    ls_residuals: list
    true_residuals: list
    iterations: list
    converged: list
    iterations_used: int
    wall_times: list
    c_norm: float
    #: per-mu residual histories indexed by k = 0..iterations (k = 0 is x = 0)
    true_history: list = field(default_factory=list)
    ls_history: list = field(default_factory=list)
    factorization: ArnoldiFactorization | None = None

    @property
    def all_converged(self) -> bool:
        return all(self.converged)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("INFGMRES_THREADS", "1")))
    except ValueError:
        return 1


def sweep(problem: TaylorProblem, mu_values, tol: float = 1e-12, max_iters: int = 200,
          variant: str = "full", ortho_policy: OrthoPolicy = OrthoPolicy(),
          workers: int | None = None) -> SweepResult:
    """Solve ``A(mu) x = b`` for all ``mu_values`` from one growing factorization.

    After every Arnoldi step each unconverged ``mu`` is re-evaluated; it is
    converged once ``||A(mu) x - b|| / ||b|| <= tol``.  Non-convergence is
    reported through the ``converged`` flags, not raised.
    """
    mus = [complex(mu) for mu in mu_values]
    if not mus:
        raise ValueError("mu_values is empty")
    if tol <= 0:
        raise ValueError("tol must be positive")
    workers = _threads() if workers is None else workers
    start = time.perf_counter()
    fac = ArnoldiFactorization(problem, variant, ortho_policy, capacity=max_iters)
    sol = ParamSolution(fac, problem)
    count = len(mus)
    solutions = [None] * count
    ls_res = [np.nan] * count
    true_res = [np.nan] * count
    iters = [0] * count
    conv = [False] * count
    wall = [0.0] * count
    true_hist = [[1.0] for _ in mus]
    ls_hist = [[fac.c_norm] for _ in mus]
    active = []
    for i, mu in enumerate(mus):
        if mu == 0:
            x, r = sol.evaluate(0.0)
            solutions[i], ls_res[i], true_res[i] = x, r, residual_true(problem, mu, x)
            conv[i] = True
            wall[i] = time.perf_counter() - start
        else:
            active.append(i)

    def one(i, m):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RankDeficientWarning)
            x, r = sol.evaluate(mus[i], m)
        return x, r, residual_true(problem, mus[i], x)

    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        while active and fac.m < max_iters and not fac.breakdown:
            fac.extend(1)
            m = fac.m
            if pool is None:
                results = [one(i, m) for i in active]
            else:
                results = list(pool.map(lambda i: one(i, m), active))
            still = []
            for i, (x, r, tr) in zip(active, results):
                solutions[i], ls_res[i], true_res[i], iters[i] = x, r, tr, m
                true_hist[i].append(tr)
                ls_hist[i].append(r)
                if tr <= tol:
                    conv[i] = True
                    wall[i] = time.perf_counter() - start
                else:
                    still.append(i)
            active = still
    finally:
        if pool is not None:
            pool.shutdown()
    for i in active:
        wall[i] = time.perf_counter() - start
        if solutions[i] is None:
            solutions[i] = np.zeros(problem.dim, dtype=complex)
            true_res[i] = 1.0
            ls_res[i] = fac.c_norm
    return SweepResult(
        mu_values=mus, solutions=solutions, ls_residuals=ls_res, true_residuals=true_res,
        iterations=iters, converged=conv, iterations_used=fac.m, wall_times=wall,
        c_norm=fac.c_norm, true_history=true_hist, ls_history=ls_hist, factorization=fac,
    )
