"""Small problem factories shared by the test modules."""

import numpy as np

from infgmres.problems import GenericLowRankProblem, GenericProblem


def toy_problem():
    """``A(mu) = (1 - mu) I`` on C^2 with ``b = e_1``."""
    eye = np.eye(2)
    return GenericProblem([eye, -eye], np.array([1.0, 0.0]), polynomial=True)


def random_polynomial_problem(rng, n=None, degree=None):
    n = int(rng.integers(1, 7)) if n is None else n
    degree = int(rng.integers(1, 7)) if degree is None else degree
    A0 = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)) + 3 * np.sqrt(n) * np.eye(n)
    coeffs = [A0] + [
        (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / (i + 1)
        for i in range(degree)
    ]
    b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return GenericProblem(coeffs, b, polynomial=True)


def random_lowrank_problem(rng, n=6, s=2, p=1, tail=12):
    base = random_polynomial_problem(rng, n=n, degree=s)
    U = rng.standard_normal((n, p)) + 1j * rng.standard_normal((n, p))
    V = rng.standard_normal((n, p)) + 1j * rng.standard_normal((n, p))
    Fs = [0.5**k * (rng.standard_normal((p, p)) + 1j * rng.standard_normal((p, p))) for k in range(tail)]
    return GenericLowRankProblem(base.coefficients, base.rhs, s, U, V, Fs)


def random_block_vector(rng, sizes):
    from infgmres.linearization import BlockVector

    return BlockVector([rng.standard_normal(k) + 1j * rng.standard_normal(k) for k in sizes])


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)
