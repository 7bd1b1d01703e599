import json
import math

import mpmath
import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp

from infgmres.exceptions import ProblemDefinitionError, ProblemFileError, StructureError
from infgmres.oracle import direct_solve
from infgmres.problems import (
    GenericProblem,
    build_delay,
    build_helmholtz1d,
    load_generic,
    random_delay_matrices,
    taylor_coefficients,
    write_generic,
)
from infgmres.solver import sweep

from support import rel_err


# delay -----------------------------------------------------------------------

def test_delay_derivatives(rng):
    p = build_delay(20, seed=3)
    y = rng.standard_normal(20)
    A1y = p.A1 @ y
    np.testing.assert_allclose(p.deriv_apply(1, y), -y - A1y)
    np.testing.assert_allclose(p.deriv_apply(2, y), A1y)
    np.testing.assert_allclose(p.deriv_apply(3, y), -A1y)
    np.testing.assert_allclose(p.deriv_apply(0, y), p.eval_apply(0.0, y))


def test_delay_deriv_sum_matches_loop(rng):
    p = build_delay(15, seed=1)
    X = rng.standard_normal((15, 7))
    loop = sum(p.deriv_apply(i + 1, X[:, i]) for i in range(7))
    np.testing.assert_allclose(p.deriv_sum(X), loop, atol=1e-13)


def test_delay_eval_is_exact(rng):
    p = build_delay(10, seed=2)
    y = rng.standard_normal(10)
    mu = 0.3 - 0.2j
    A = -mu * np.eye(10) + p.A0.toarray() + np.exp(-mu) * p.A1.toarray()
    np.testing.assert_allclose(p.eval_apply(mu, y), A @ y, atol=1e-13)


def test_delay_two_by_two():
    A0 = np.eye(2)
    A1 = np.diag([0.5, 0.2])
    b = np.array([1.0, 2.0])
    p = build_delay(A0=A0, A1=A1, b=b)
    res = sweep(p, [0.1], tol=1e-13, max_iters=60)
    exact = np.linalg.solve(-0.1 * np.eye(2) + A0 + A1 * np.exp(-0.1), b)
    assert rel_err(res.solutions[0], exact) < 1e-12


def test_delay_affine_case_converges_to_exact_solve(rng):
    # the linearized residual still carries the tail blocks, so m = n is not
    # exact; convergence is geometric instead
    n = 6
    A0 = rng.standard_normal((n, n)) - 4 * np.eye(n)
    p = build_delay(A0=A0, A1=np.zeros((n, n)), b=rng.standard_normal(n))
    assert np.all(p.deriv_apply(2, np.ones(n)) == 0)
    res = sweep(p, [0.4], tol=1e-12, max_iters=40)
    assert res.converged[0]
    exact = np.linalg.solve(-0.4 * np.eye(n) + A0, p.rhs)
    assert rel_err(res.solutions[0], exact) < 1e-10


def test_delay_generator_reproducible():
    a0, a1 = random_delay_matrices(50, seed=7)
    b0, b1 = random_delay_matrices(50, seed=7)
    assert (a0 != b0).nnz == 0 and (a1 != b1).nnz == 0
    c0, _ = random_delay_matrices(50, seed=8)
    assert (a0 != c0).nnz > 0


def test_delay_singular_A0():
    with pytest.raises(ProblemDefinitionError):
        build_delay(A0=np.eye(3), A1=-np.eye(3))


def test_delay_shape_checks():
    with pytest.raises(StructureError):
        build_delay(A0=np.eye(3), A1=np.eye(2))
    with pytest.raises(ProblemDefinitionError):
        build_delay()


# Helmholtz -----------------------------------------------------------------

def test_helmholtz_g_f_at_zero():
    p = build_helmholtz1d(20)
    assert p.g(0.0) == pytest.approx(math.cos(0.5), abs=1e-15)
    assert p.f(0.0) == pytest.approx(math.sin(0.5), abs=1e-15)
    assert p.g_derivs[0] == pytest.approx(math.cos(0.5), abs=1e-15)
    assert p.f_derivs[0] == pytest.approx(math.sin(0.5), abs=1e-15)
    assert p.k0 == 5.0


def test_helmholtz_derivatives_match_mpmath():
    p = build_helmholtz1d(20)
    mpmath.mp.dps = 60
    g = lambda t: mpmath.cos(mpmath.mpf("0.5") * (1 + 5 * t))
    f = lambda t: mpmath.sin(mpmath.mpf("0.5") * (1 + 5 * t)) / (1 + 5 * t)
    for m in (1, 2, 3, 7, 15, 30):
        gm = float(mpmath.diff(g, 0, m))
        fm = float(mpmath.diff(f, 0, m))
        assert p.g_derivs[m] == pytest.approx(gm, rel=1e-10, abs=1e-12)
        assert p.f_derivs[m] == pytest.approx(fm, rel=1e-10, abs=1e-12)


def test_helmholtz_grid_and_rows():
    p = build_helmholtz1d(40)
    assert p.x[0] == pytest.approx(1 / 40)
    assert p.x[-1] == 1.0
    assert p.rhs[-1] == 0.0
    assert p.D.getrow(39).nnz == 0
    assert p.K(0.7).tocsr().getrow(39).nnz == 0 or p.K(0.7).diagonal()[-1] == 0
    assert p.L.diagonal()[-1] == 0


@pytest.mark.parametrize("mu", [0.3, 1.6, 2.5])
def test_helmholtz_eval_matches_assembled(mu, rng):
    p = build_helmholtz1d(50)
    y = rng.standard_normal(50) + 1j * rng.standard_normal(50)
    A = (p.D + p.K(mu) + p.L).toarray() + p.X @ p.F(mu) @ p.Y.T
    assert rel_err(p.eval_apply(mu, y), A @ y) < 1e-12
    assert rel_err(p.assemble(mu) @ y, A @ y) < 1e-12


def test_helmholtz_polynomial_part_is_quadratic(rng):
    p = build_helmholtz1d(30)
    y = rng.standard_normal(30)
    for order in (3, 4, 9):
        d = p.deriv_apply(order, y)
        assert np.all(d[:-1] == 0)
        np.testing.assert_allclose(d, p.U_apply(order, p.Vt_apply(y)), rtol=1e-12)


def test_helmholtz_tail_has_rank_two(rng):
    p = build_helmholtz1d(30)
    Y = rng.standard_normal((30, 3))
    for order in (3, 5, 12):
        images = np.column_stack([p.deriv_apply(order, Y[:, k]) for k in range(3)])
        sv = np.linalg.svd(images, compute_uv=False)
        assert sv[2] <= 1e-12 * sv[0]


def test_helmholtz_deriv_sum_matches_loop(rng):
    p = build_helmholtz1d(30)
    X = rng.standard_normal((30, 9))
    loop = sum(p.deriv_apply(i + 1, X[:, i]) for i in range(9))
    np.testing.assert_allclose(p.deriv_sum(X), loop, rtol=1e-12, atol=1e-10)
    Z = rng.standard_normal((2, 5))
    loop = sum(p.U_apply(3 + i, Z[:, i]) for i in range(5))
    np.testing.assert_allclose(p.U_sum(3, Z), loop, rtol=1e-12)


def test_helmholtz_order_limit():
    p = build_helmholtz1d(10)
    with pytest.raises(ProblemDefinitionError):
        p.F_deriv(p.MAX_ORDER + 1)


def test_helmholtz_small_n():
    with pytest.raises(ProblemDefinitionError):
        build_helmholtz1d(3)


def test_helmholtz_boundary_fidelity():
    p = build_helmholtz1d(400)
    res = sweep(p, [1.6], tol=1e-10, max_iters=80, variant="lowrank")
    assert res.converged[0]
    u = res.solutions[0]
    assert abs(p.boundary_residual(1.6, u)) <= 1e-6 * np.linalg.norm(u)


# Taylor consistency ----------------------------------------------------------

@pytest.mark.parametrize("builder", [lambda: build_delay(30, seed=4), lambda: build_helmholtz1d(30)])
def test_taylor_series_converges(builder, rng):
    p = builder()
    y = rng.standard_normal(p.dim)
    mu = 0.1
    exact = p.eval_apply(mu, y)
    errs = []
    acc = np.zeros(p.dim, dtype=complex)
    for i in range(21):
        acc = acc + mu**i / math.factorial(i) * p.deriv_apply(i, y)
        errs.append(np.linalg.norm(acc - exact) / np.linalg.norm(exact))
    assert errs[-1] < 1e-13
    # geometric decay before hitting roundoff
    assert errs[6] < 1e-3 * errs[2]


# generic --------------------------------------------------------------------

def test_toy_manifest(tmp_path):
    path = write_generic(tmp_path, [np.eye(2), -np.eye(2)], np.array([1.0, 0.0]), polynomial=True)
    p = load_generic(path)
    assert p.dim == 2
    x = direct_solve(p, 0.5)
    np.testing.assert_allclose(x, [2.0, 0.0], atol=1e-14)


def test_delay_round_trip(tmp_path, rng):
    d = build_delay(12, seed=5)
    coeffs = [sp.csr_matrix(A) for A in taylor_coefficients(d, 10)]
    path = write_generic(tmp_path, coeffs, d.rhs)
    p = load_generic(path)
    y = rng.standard_normal(12)
    for i in range(11):
        ref = d.deriv_apply(i, y)
        assert np.linalg.norm(p.deriv_apply(i, y) - ref) <= 1e-15 * max(1.0, np.linalg.norm(ref)) * 12
    with pytest.raises(ProblemDefinitionError):
        p.deriv_apply(11, y)
    np.testing.assert_allclose(p.rhs, d.rhs)


def test_lowrank_manifest_round_trip(tmp_path, rng):
    h = build_helmholtz1d(12)
    coeffs = taylor_coefficients(h, 2)
    lowrank = {"s": 2, "U": h.X, "V": h.Y, "F_derivs": [h.F_deriv(i) for i in range(3, 25)]}
    p = load_generic(write_generic(tmp_path, coeffs, h.rhs, lowrank=lowrank))
    assert p.is_lowrank and p.s == 2 and p.rank == 2
    y = rng.standard_normal(12)
    for i in (1, 2, 3, 10):
        np.testing.assert_allclose(p.deriv_apply(i, y), h.deriv_apply(i, y), rtol=1e-13, atol=1e-9)
    np.testing.assert_allclose(p.eval_apply(0.05, y), h.eval_apply(0.05, y), rtol=1e-10)


def test_generic_missing_file(tmp_path):
    path = write_generic(tmp_path, [np.eye(2)], np.ones(2))
    (tmp_path / "A0.mtx").unlink()
    with pytest.raises(ProblemFileError, match="A0.mtx"):
        load_generic(path)
    with pytest.raises(ProblemFileError):
        load_generic(tmp_path / "absent.json")


def test_generic_dimension_mismatch(tmp_path):
    path = write_generic(tmp_path, [np.eye(2), np.eye(2)], np.ones(2))
    scipy.io.mmwrite(str(tmp_path / "A1"), np.eye(3))
    with pytest.raises(ProblemDefinitionError, match="A1.mtx"):
        load_generic(path)


def test_generic_non_square(tmp_path):
    path = write_generic(tmp_path, [np.eye(2)], np.ones(2))
    scipy.io.mmwrite(str(tmp_path / "A0"), np.ones((2, 3)))
    with pytest.raises(ProblemDefinitionError):
        load_generic(path)


def test_generic_singular_A0(tmp_path):
    path = write_generic(tmp_path, [np.zeros((2, 2))], np.ones(2))
    with pytest.raises(ProblemDefinitionError):
        load_generic(path)


def test_generic_bad_manifest(tmp_path):
    bad = tmp_path / "m.json"
    bad.write_text("{not json")
    with pytest.raises(ProblemDefinitionError):
        load_generic(bad)
    bad.write_text(json.dumps({"n": 2}))
    with pytest.raises(ProblemDefinitionError, match="rhs"):
        load_generic(bad)


def test_generic_order_past_list():
    p = GenericProblem([np.eye(2), np.eye(2)], np.ones(2))
    with pytest.raises(ProblemDefinitionError):
        p.deriv_apply(2, np.ones(2))
    q = GenericProblem([np.eye(2), np.eye(2)], np.ones(2), polynomial=True)
    assert np.all(q.deriv_apply(5, np.ones(2)) == 0)
