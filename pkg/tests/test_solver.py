import math
import threading

import numpy as np
import pytest

from infgmres.exceptions import RankDeficientWarning
from infgmres.krylov import arnoldi_build
from infgmres.linearization import residual_true
from infgmres.oracle import assemble_companion, companion_rhs, direct_solve, reference_gmres
from infgmres.problems import build_delay
from infgmres.solver import ParamSolution, evaluate, shifted_lstsq, sweep

from support import random_polynomial_problem, rel_err, toy_problem


def test_toy_example():
    # the linearized residual also weighs the tail blocks mu^i x / i!, so
    # m = 2 is not yet exact; the first block converges quickly after that
    sol = ParamSolution(arnoldi_build(toy_problem(), 12))
    x2, _ = evaluate(sol, 0.5, 2)
    assert abs(x2[0] - 2.0) > 1e-3
    x, res = evaluate(sol, 0.5, 12)
    np.testing.assert_allclose(x, [2.0, 0.0], atol=1e-12)


def test_mu_zero_short_circuit(rng):
    p = random_polynomial_problem(rng, n=4)
    sol = ParamSolution(arnoldi_build(p, 3))
    x, res = sol.evaluate(0.0)
    assert res == 0.0
    np.testing.assert_allclose(x, p.solve_A0(p.rhs))


def test_delay_small_matches_direct():
    p = build_delay(8, seed=11)
    sol = ParamSolution(arnoldi_build(p, 8))
    x, _ = sol(0.05, 8)
    assert rel_err(x, direct_solve(p, 0.05)) <= 1e-8


def test_budget_checks(rng):
    sol = ParamSolution(arnoldi_build(random_polynomial_problem(rng, n=3), 4))
    with pytest.raises(ValueError):
        sol.evaluate(0.1, 5)
    with pytest.raises(ValueError):
        sol.evaluate(0.1, 0)


def test_evaluation_is_pure(delay100):
    fac = arnoldi_build(delay100, 15)
    H = fac.hessenberg.copy()
    sol = ParamSolution(fac)
    a = sol.evaluate(0.07 + 0.02j)
    b = sol.evaluate(0.07 + 0.02j)
    assert np.array_equal(a[0], b[0]) and a[1] == b[1]
    assert np.array_equal(H, fac.hessenberg)


def test_concurrent_evaluations_agree(delay100):
    sol = ParamSolution(arnoldi_build(delay100, 20))
    mus = np.linspace(0.01, 0.2, 8)
    serial = [sol.evaluate(mu)[0] for mu in mus]
    out = [None] * len(mus)

    def work(i):
        out[i] = sol.evaluate(mus[i])[0]

    threads = [threading.Thread(target=work, args=(i,)) for i in range(len(mus))]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for a, b in zip(serial, out):
        assert np.array_equal(a, b)


@pytest.mark.parametrize("mu", [0.3, 0.4j, -0.25 + 0.1j])
def test_gmres_equivalence(rng, mu):
    for _ in range(3):
        p = random_polynomial_problem(rng, n=3, degree=3)
        N = 10
        dense = assemble_companion(p, N)
        M = mu * dense.matrix - np.eye(dense.matrix.shape[0])
        c = companion_rhs(p, dense.block_sizes)
        iterates, residuals = reference_gmres(M, c, N)
        sol = ParamSolution(arnoldi_build(p, N))
        for m in range(1, N + 1):
            x, ls = sol.evaluate(mu, m)
            assert rel_err(x, iterates[m - 1][:3]) <= 1e-10
            assert ls == pytest.approx(residuals[m], rel=1e-8, abs=1e-13)


@pytest.mark.parametrize("mu", [0.1, 0.5j, -0.3])
def test_linearized_solution_structure(rng, mu):
    for _ in range(3):
        p = random_polynomial_problem(rng, n=int(rng.integers(1, 7)), degree=3)
        n, N = p.dim, 6
        dense = assemble_companion(p, N)
        c = companion_rhs(p, dense.block_sizes)
        v = np.linalg.solve(mu * dense.matrix - np.eye(dense.matrix.shape[0]), c)
        blocks = v.reshape(N + 1, n)
        for i in range(N + 1):
            assert rel_err(blocks[i], mu**i / math.factorial(i) * blocks[0]) <= 1e-10
        # the degree-3 polynomial is reproduced exactly by any N >= 2
        x = direct_solve(p, mu)
        assert rel_err(blocks[0], x) <= 1e-10
        stacked = np.concatenate([mu**i / math.factorial(i) * x for i in range(N + 1)])
        M = mu * dense.matrix - np.eye(dense.matrix.shape[0])
        assert np.linalg.norm(M @ stacked - c) <= 1e-10 * np.linalg.norm(c)


def test_evaluate_matches_truncated_direct_solve(rng):
    p = random_polynomial_problem(rng, n=3, degree=2)
    N = 8
    mu = 0.1
    dense = assemble_companion(p, N)
    v = np.linalg.solve(mu * dense.matrix - np.eye(dense.matrix.shape[0]), companion_rhs(p, dense.block_sizes))
    sol = ParamSolution(arnoldi_build(p, (N + 1) * p.dim))
    x, _ = sol.evaluate(mu)
    assert rel_err(x, v[:3]) <= 1e-10


def test_ls_residual_is_optimal(delay100, rng):
    fac = arnoldi_build(delay100, 12)
    H = fac.hessenberg
    for mu in (0.05, 0.15 + 0.05j):
        z, res, deficient = shifted_lstsq(H, mu, fac.c_norm)
        assert not deficient
        M = mu * H
        M[np.arange(12), np.arange(12)] -= 1.0
        rhs = np.zeros(13, dtype=complex)
        rhs[0] = fac.c_norm
        assert np.linalg.norm(M @ z - rhs) == pytest.approx(res, rel=1e-12)
        for _ in range(20):
            d = rng.standard_normal(12) + 1j * rng.standard_normal(12)
            d *= 1e-6 / np.linalg.norm(d)
            assert np.linalg.norm(M @ (z + d) - rhs) >= res - 1e-15 * fac.c_norm


def test_ls_residual_monotone(delay100):
    fac = arnoldi_build(delay100, 40)
    sol = ParamSolution(fac)
    for mu in (0.01, 0.1, 0.2, 0.5, 0.1 + 0.3j):
        res = [sol.evaluate(mu, m)[1] for m in range(1, 41)]
        assert np.all(np.diff(res) <= 1e-13 * fac.c_norm)


def test_rank_deficient_flag():
    H = np.zeros((3, 2), dtype=complex)
    H[0, 0] = 1.0
    H[1, 0] = 0.0
    z, res, deficient = shifted_lstsq(H, 1.0, 1.0)
    assert deficient
    assert np.all(np.isfinite(z))


def test_rank_deficient_warning(monkeypatch, delay100):
    sol = ParamSolution(arnoldi_build(delay100, 3))
    import infgmres.solver as solver_mod

    real = solver_mod.shifted_lstsq
    monkeypatch.setattr(solver_mod, "shifted_lstsq", lambda H, mu, c: (*real(H, mu, c)[:2], True))
    with pytest.warns(RankDeficientWarning):
        sol.evaluate(0.1)


# sweep -----------------------------------------------------------------------

def test_sweep_singleton_matches_evaluate(delay100):
    res = sweep(delay100, [0.08], tol=1e-12)
    assert res.converged[0]
    m = res.iterations[0]
    x, ls = ParamSolution(res.factorization).evaluate(0.08, m)
    assert np.array_equal(x, res.solutions[0])
    assert ls == res.ls_residuals[0]
    assert res.true_residuals[0] == pytest.approx(residual_true(delay100, 0.08, x))


def test_sweep_lists_and_zero(delay100):
    mus = [0.0, 0.05, 0.1]
    res = sweep(delay100, mus)
    assert len(res.solutions) == len(res.ls_residuals) == len(res.true_residuals) == 3
    assert res.iterations[0] == 0 and res.converged[0]
    np.testing.assert_allclose(res.solutions[0], direct_solve(delay100, 0.0), rtol=1e-12)
    assert res.all_converged
    assert res.iterations_used == max(res.iterations)


def test_sweep_iterations_monotone(delay100):
    res = sweep(delay100, [0.01, 0.1])
    assert res.iterations[0] <= res.iterations[1]


def test_sweep_not_converged_is_partial(delay100):
    res = sweep(delay100, [0.01, 0.9], tol=1e-14, max_iters=5)
    assert not res.all_converged
    assert res.iterations_used == 5
    assert all(np.isfinite(res.true_residuals))


def test_sweep_threads_match_serial(delay100, monkeypatch):
    mus = list(np.linspace(0.02, 0.2, 6))
    serial = sweep(delay100, mus, workers=1)
    monkeypatch.setenv("INFGMRES_THREADS", "3")
    threaded = sweep(delay100, mus)
    assert serial.iterations == threaded.iterations
    for a, b in zip(serial.solutions, threaded.solutions):
        assert np.array_equal(a, b)


def test_sweep_histories(delay100):
    res = sweep(delay100, [0.05])
    assert len(res.true_history[0]) == res.iterations[0] + 1
    assert res.true_history[0][0] == 1.0
    assert res.ls_history[0][0] == res.c_norm


def test_sweep_validation(delay100):
    with pytest.raises(ValueError):
        sweep(delay100, [])
    with pytest.raises(ValueError):
        sweep(delay100, [0.1], tol=0.0)


@pytest.mark.parametrize("variant", ["full", "tensor"])
def test_sweep_variants_agree(delay100, variant):
    res = sweep(delay100, [0.03, 0.12], variant=variant)
    ref = [direct_solve(delay100, mu) for mu in (0.03, 0.12)]
    for x, r in zip(res.solutions, ref):
        assert rel_err(x, r) < 1e-9
