"""Concrete parameter-dependent problems.

* :class:`DelayProblem` evaluates the transfer function of a time-delay
  system, ``A(s) = -s I + A0 + A1 exp(-s)``.
* :class:`Helmholtz1DProblem` is a finite-difference Helmholtz problem on
  ``[0, 1]`` with an exact absorbing (Robin) condition at ``x = 1``; its
  boundary row makes all derivatives beyond order two rank two.
* :class:`GenericProblem` holds an explicit list of derivative matrices,
  optionally with a low-rank tail, loaded from Matrix Market files.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.io
import scipy.sparse as sp

from .exceptions import ProblemDefinitionError, ProblemFileError, StructureError
from .linearization import A0Factorization, LowRankTaylorProblem, TaylorProblem


def _as_operator(M):
    return sp.csr_matrix(M, dtype=complex) if sp.issparse(M) else np.asarray(M, dtype=complex)


# ---------------------------------------------------------------------------
# time-delay system


def random_delay_matrices(n: int, seed: int = 0, density: float | None = None):
    """Reproducible sparse ``A0, A1`` for the delay problem.

    Both random parts have density ``10/n`` and are scaled so that their
    2-norm bound is 1/4; with the ``-I`` shift the eigenvalues of
    ``A(0) = A0 + A1`` lie in the disc of radius 1/2 around -1.
    """
    rng = np.random.default_rng(seed)
    density = min(1.0, 10.0 / n) if density is None else density

    def part():
        R = sp.random(n, n, density=density, random_state=rng, data_rvs=rng.standard_normal, format="csr")
        # sqrt(||R||_1 ||R||_inf) bounds ||R||_2 from above
        bound = math.sqrt(sp.linalg.norm(R, 1) * sp.linalg.norm(R, np.inf))
        return R / bound if bound > 0 else R

    A0 = 0.25 * part() - sp.identity(n, format="csr")
    A1 = 0.25 * part()
    return A0.tocsr(), A1.tocsr()


class DelayProblem(TaylorProblem):
    """``A(s) = -s I + A0 + A1 e^{-s}`` with delay fixed to one."""

    def __init__(self, A0, A1, b):
        self.A0 = _as_operator(A0)
        self.A1 = _as_operator(A1)
        self.dim = self.A0.shape[0]
        if self.A0.shape != (self.dim, self.dim) or self.A1.shape != self.A0.shape:
            raise StructureError("A0 and A1 must be square of equal size")
        self.rhs = np.asarray(b, dtype=complex).ravel()
        if self.rhs.shape != (self.dim,):
            raise StructureError("right-hand side has the wrong length")
        self._lu = A0Factorization(self.A0 + self.A1)

    def solve_A0(self, y):
        return self._lu.solve(y)

    def deriv_apply(self, order, y):
        if order == 0:
            return self.A0 @ y + self.A1 @ y
        if order == 1:
            return -y - self.A1 @ y
        return (-1) ** order * (self.A1 @ y)

    def deriv_sum(self, X):
        acc = -X[:, 0] - self.A1 @ X[:, 0]
        if X.shape[1] > 1:
            signs = (-1.0) ** np.arange(2, X.shape[1] + 1)
            acc = acc + self.A1 @ (X[:, 1:] @ signs)
        return acc

    def eval_apply(self, mu, y):
        return -mu * y + self.A0 @ y + np.exp(-mu) * (self.A1 @ y)

    def assemble(self, mu):
        if sp.issparse(self.A0):
            return sp.csc_matrix(-mu * sp.identity(self.dim) + self.A0 + np.exp(-mu) * self.A1)
        return -mu * np.eye(self.dim) + self.A0 + np.exp(-mu) * self.A1


def build_delay(n: int | None = None, A0=None, A1=None, b=None, seed: int = 0) -> DelayProblem:
    """Delay problem from explicit matrices, or from :func:`random_delay_matrices`.

    The default right-hand side is the all-ones vector.
    """
    if A0 is None or A1 is None:
        if n is None:
            raise ProblemDefinitionError("either n or both A0 and A1 are required")
        A0, A1 = random_delay_matrices(n, seed)
    n = A0.shape[0]
    if b is None:
        b = np.ones(n)
    return DelayProblem(A0, A1, b)


# ---------------------------------------------------------------------------
# 1D Helmholtz with an absorbing boundary


def _sin_over_t_moments(theta0: float, max_order: int) -> np.ndarray:
    """``Re(i^m J_m)`` for ``J_m = int_0^1 u^m e^{i theta0 u} du``.

    Since ``sin(a t)/t = a * int_0^1 cos(a t u) du``, the m-th derivative of
    ``sin(a t)/t`` at ``t = 1`` is ``a^{m+1} Re(i^m J_m)``.  ``J_m`` is summed
    from ``sum_k (i a)^k / (k! (m + k + 1))``, which has no cancellation,
    unlike Leibniz expansions of the quotient whose terms grow like m!.
    """
    out = np.empty(max_order + 1)
    for m in range(max_order + 1):
        J = 0j
        term = 1.0 + 0j
        k = 0
        while True:
            contrib = term / (m + k + 1)
            J += contrib
            if abs(contrib) < 1e-18 * abs(J):
                break
            k += 1
            term *= 1j * theta0 / k
        out[m] = ((1, 1j, -1, -1j)[m % 4] * J).real
    return out


class Helmholtz1DProblem(LowRankTaylorProblem):
    """Finite-difference Helmholtz problem with a Dirichlet-to-Neumann boundary.

    ``A(mu) = D + K(mu) + L + X F(mu) Y^T`` on the grid ``x_k = k/n``,
    ``k = 1..n``; the last row carries the Robin condition
    ``g(mu) u(1) + f(mu) u'(1) = 0``.
    """

    a = 0.0
    b_pt = 1.0
    c_pt = 1.5
    alpha = 10.0
    s = 2
    rank = 2

    #: Highest derivative order of g and f kept; (2.5)^m overflows near 775.
    MAX_ORDER = 700

    def __init__(self, n: int):
        if n < 4:
            raise ProblemDefinitionError("the one-sided boundary stencil needs n >= 4")
        self.dim = n
        self.dx = (self.b_pt - self.a) / n
        self.x = self.a + self.dx * np.arange(1, n + 1)
        self.x[-1] = self.b_pt
        self.k0 = float(self.k_fun(np.array([self.b_pt]))[0])
        interior = np.ones(n)
        interior[-1] = 0.0
        self.kvals = self.k_fun(self.x) * interior
        self.betavals = self.beta_fun(self.x) * interior
        self._interior = interior

        main = -2.0 * interior
        upper = np.ones(n - 1)
        lower = np.ones(n - 1)
        lower[-1] = 0.0  # row n is zero
        self.D = sp.diags([lower, main, upper], [-1, 0, 1], format="csr") / self.dx**2
        self.L = sp.diags(self.betavals, format="csr")
        self.X = np.zeros((n, 2))
        self.X[-1, :] = 1.0
        self.Y = np.zeros((n, 2))
        self.Y[-1, 0] = 1.0
        self.Y[[-1, -2, -3], 1] = [1.5 / self.dx, -2.0 / self.dx, 0.5 / self.dx]

        theta0 = self.c_pt - self.b_pt
        theta = theta0 * self.k0
        orders = np.arange(self.MAX_ORDER + 1)
        self.g_derivs = theta**orders * np.cos(theta0 + orders * np.pi / 2)
        # f^(m)(0) = k0^m * theta0^(m+1) * Re(i^m J_m)
        self.f_derivs = theta0 * theta**orders * _sin_over_t_moments(theta0, self.MAX_ORDER)

        self.rhs = self.h_fun(self.x).astype(complex)
        self._lu = A0Factorization(self.assemble(0.0))

    # coefficient functions -------------------------------------------------
    def k_fun(self, x):
        x = np.asarray(x, dtype=float)
        b, alpha = self.b_pt, self.alpha
        wave = np.sin(alpha * np.pi / b * x)
        return np.where(
            x < b / 2,
            5 + 10 * x / b * wave,
            np.where(x < b, 5 + 10 * (1 - x / b) * wave, 5.0),
        )

    def beta_fun(self, x):
        x = np.asarray(x, dtype=float)
        a, b = self.a, self.b_pt
        return np.where((x >= a) & (x < b), np.sin((x - a) / (b - a) * 2 * np.pi), 0.0)

    def h_fun(self, x):
        x = np.asarray(x, dtype=float)
        a, b = self.a, self.b_pt
        return np.where((x >= a) & (x < b), (x - b) ** 2 / (a - b) ** 2, 0.0)

    def g(self, mu):
        return np.cos((self.c_pt - self.b_pt) * (1 + self.k0 * mu))

    def f(self, mu):
        t = 1 + self.k0 * mu
        return np.sin((self.c_pt - self.b_pt) * t) / t

    def F(self, mu) -> np.ndarray:
        return np.diag([self.g(mu), self.f(mu)])

    def F_deriv(self, order: int) -> np.ndarray:
        if order > self.MAX_ORDER:
            raise ProblemDefinitionError(
                f"derivative order {order} exceeds the supported maximum {self.MAX_ORDER}"
            )
        return np.diag([self.g_derivs[order], self.f_derivs[order]])

    def K(self, mu) -> sp.spmatrix:
        return sp.diags(self._interior * (1 + mu * self.kvals) ** 2)

    # problem interface -------------------------------------------------------
    def assemble(self, mu):
        lowrank = sp.csr_matrix(self.X @ self.F(mu) @ self.Y.T)
        return sp.csc_matrix(self.D + self.K(mu) + self.L + lowrank, dtype=complex)

    def solve_A0(self, y):
        return self._lu.solve(y)

    def Vt_apply(self, y):
        return self.Y.T @ y

    def U_apply(self, order, z):
        gi, fi = np.diag(self.F_deriv(order))
        out = np.zeros(self.dim, dtype=complex)
        out[-1] = gi * z[0] + fi * z[1]
        return out

    def U_sum(self, first_order, Z):
        last = first_order + Z.shape[1] - 1
        self.F_deriv(last)
        g = self.g_derivs[first_order : last + 1]
        f = self.f_derivs[first_order : last + 1]
        out = np.zeros(self.dim, dtype=complex)
        out[-1] = g @ Z[0] + f @ Z[1]
        return out

    def _poly_apply(self, order, y):
        if order == 0:
            return self.D @ y + self._interior * y + self.betavals * y
        if order == 1:
            return 2 * self.kvals * y
        if order == 2:
            return 2 * self.kvals**2 * y
        return np.zeros(self.dim, dtype=complex)

    def deriv_apply(self, order, y):
        y = np.asarray(y, dtype=complex)
        return self._poly_apply(order, y) + self.X @ (self.F_deriv(order) @ (self.Y.T @ y))

    def deriv_sum(self, X):
        k = X.shape[1]
        acc = 2 * self.kvals * X[:, 0]
        if k > 1:
            acc = acc + 2 * self.kvals**2 * X[:, 1]
        self.F_deriv(k)
        YX = self.Y.T @ X
        acc = acc.astype(complex)
        acc[-1] += self.g_derivs[1 : k + 1] @ YX[0] + self.f_derivs[1 : k + 1] @ YX[1]
        return acc

    def eval_apply(self, mu, y):
        y = np.asarray(y, dtype=complex)
        return (
            self.D @ y
            + self._interior * (1 + mu * self.kvals) ** 2 * y
            + self.betavals * y
            + self.X @ (self.F(mu) @ (self.Y.T @ y))
        )

    def boundary_residual(self, mu, u) -> complex:
        """``g(mu) u(b) + f(mu) * (one-sided difference of u at b)``."""
        return complex(self.g(mu) * u[-1] + self.f(mu) * (self.Y[:, 1] @ u))


def build_helmholtz1d(n: int) -> Helmholtz1DProblem:
    return Helmholtz1DProblem(n)


# ---------------------------------------------------------------------------
# explicit coefficient lists


class GenericProblem(TaylorProblem):
    """Problem given by derivative matrices ``A^{(0)}(0), ..., A^{(N)}(0)``.

    Derivative orders beyond the list raise :class:`ProblemDefinitionError`
    unless ``polynomial=True``, in which case they are zero.  ``eval_apply``
    sums the (finite) Taylor series.
    """

    def __init__(self, coefficients: Sequence, rhs, polynomial: bool = False, source: str = "<memory>"):
        if not coefficients:
            raise ProblemDefinitionError(f"{source}: no coefficient matrices")
        self.coefficients = [_as_operator(A) for A in coefficients]
        self.dim = self.coefficients[0].shape[0]
        for i, A in enumerate(self.coefficients):
            if A.shape != (self.dim, self.dim):
                raise ProblemDefinitionError(
                    f"{source}: coefficient {i} has shape {A.shape}, expected {(self.dim, self.dim)}"
                )
        self.rhs = np.asarray(rhs, dtype=complex).ravel()
        if self.rhs.shape != (self.dim,):
            raise ProblemDefinitionError(f"{source}: rhs has length {self.rhs.size}, expected {self.dim}")
        self.polynomial = polynomial
        self.source = source
        try:
            self._lu = A0Factorization(self.coefficients[0])
        except ProblemDefinitionError as exc:
            raise ProblemDefinitionError(f"{source}: {exc}") from None

    @property
    def max_order(self) -> int:
        return len(self.coefficients) - 1

    def _missing(self, order):
        raise ProblemDefinitionError(
            f"{self.source}: derivative order {order} requested but only orders 0..{self.max_order} are stored"
        )

    def solve_A0(self, y):
        return self._lu.solve(y)

    def deriv_apply(self, order, y):
        if order <= self.max_order:
            return self.coefficients[order] @ np.asarray(y, dtype=complex)
        if self.polynomial:
            return np.zeros(self.dim, dtype=complex)
        self._missing(order)

    def eval_apply(self, mu, y):
        y = np.asarray(y, dtype=complex)
        acc = np.zeros(self.dim, dtype=complex)
        for i, A in enumerate(self.coefficients):
            acc += mu**i / math.factorial(i) * (A @ y)
        return acc

    def assemble(self, mu):
        acc = None
        for i, A in enumerate(self.coefficients):
            term = (mu**i / math.factorial(i)) * A
            acc = term if acc is None else acc + term
        return sp.csc_matrix(acc) if sp.issparse(acc) else acc


class GenericLowRankProblem(GenericProblem, LowRankTaylorProblem):
    """Generic problem with ``A^{(i)}(0) = U F^{(i)}(0) V^T`` for ``i > s``.

    ``F_derivs[k]`` holds ``F^{(s+1+k)}(0)``; ``coefficients`` hold orders
    ``0..s`` (which may themselves include low-rank contributions).
    """

    def __init__(self, coefficients, rhs, s, U, V, F_derivs, source="<memory>"):
        super().__init__(coefficients, rhs, polynomial=False, source=source)
        if len(self.coefficients) != s + 1:
            raise ProblemDefinitionError(
                f"{source}: low-rank tail with s={s} needs exactly s+1 coefficient matrices"
            )
        self.s = int(s)
        self.U = np.asarray(U.toarray() if sp.issparse(U) else U, dtype=complex)
        self.V = np.asarray(V.toarray() if sp.issparse(V) else V, dtype=complex)
        self.rank = self.U.shape[1]
        if self.U.shape != (self.dim, self.rank) or self.V.shape != self.U.shape:
            raise ProblemDefinitionError(f"{source}: U and V must both be {self.dim} x p")
        self.F_derivs = [np.asarray(F.toarray() if sp.issparse(F) else F, dtype=complex) for F in F_derivs]
        for F in self.F_derivs:
            if F.shape != (self.rank, self.rank):
                raise ProblemDefinitionError(f"{source}: F derivatives must be {self.rank} x {self.rank}")

    @property
    def max_order(self) -> int:
        return self.s + len(self.F_derivs)

    def _F(self, order):
        if order > self.max_order:
            self._missing(order)
        return self.F_derivs[order - self.s - 1]

    def U_apply(self, order, z):
        return self.U @ (self._F(order) @ z)

    def Vt_apply(self, y):
        return self.V.T @ y

    def deriv_apply(self, order, y):
        if order <= self.s:
            return self.coefficients[order] @ np.asarray(y, dtype=complex)
        return self.U_apply(order, self.Vt_apply(y))

    def eval_apply(self, mu, y):
        acc = super().eval_apply(mu, y)
        Vty = self.Vt_apply(np.asarray(y, dtype=complex))
        for k, F in enumerate(self.F_derivs):
            i = self.s + 1 + k
            acc += mu**i / math.factorial(i) * (self.U @ (F @ Vty))
        return acc

    def assemble(self, mu):
        acc = super().assemble(mu)
        extra = np.zeros((self.rank, self.rank), dtype=complex)
        for k, F in enumerate(self.F_derivs):
            i = self.s + 1 + k
            extra += mu**i / math.factorial(i) * F
        tail = self.U @ extra @ self.V.T
        return sp.csc_matrix(acc + tail) if sp.issparse(acc) else acc + tail


def _read_mm(path: Path, base: Path):
    full = path if path.is_absolute() else base / path
    if not full.exists():
        raise ProblemFileError(f"{full}: file not found")
    try:
        data = scipy.io.mmread(str(full))
    except (ValueError, OSError) as exc:
        raise ProblemFileError(f"{full}: cannot read Matrix Market data ({exc})") from None
    return data


def load_generic(manifest_path) -> GenericProblem:
    """Load a problem from a JSON manifest of Matrix Market files.

    Manifest fields: ``n``, ``rhs``, ``coefficients`` (list of paths), optional
    ``polynomial`` (bool) and ``lowrank`` (``{s, U, V, F_derivs}``).  Relative
    paths are resolved against the manifest's directory.
    """
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except FileNotFoundError:
        raise ProblemFileError(f"{manifest_path}: manifest not found") from None
    except json.JSONDecodeError as exc:
        raise ProblemDefinitionError(f"{manifest_path}: invalid JSON ({exc})") from None
    base = manifest_path.parent
    for key in ("n", "rhs", "coefficients"):
        if key not in manifest:
            raise ProblemDefinitionError(f"{manifest_path}: missing field '{key}'")
    n = int(manifest["n"])
    coeffs = []
    for p in manifest["coefficients"]:
        A = _read_mm(Path(p), base)
        if A.shape != (n, n):
            raise ProblemDefinitionError(f"{base / p}: shape {A.shape}, expected {(n, n)}")
        coeffs.append(A)
    rhs = np.asarray(_read_mm(Path(manifest["rhs"]), base))
    if sp.issparse(rhs):
        rhs = rhs.toarray()
    if rhs.size != n:
        raise ProblemDefinitionError(f"{base / manifest['rhs']}: rhs has {rhs.size} entries, expected {n}")
    source = str(manifest_path)
    lowrank = manifest.get("lowrank")
    if lowrank:
        U = _read_mm(Path(lowrank["U"]), base)
        V = _read_mm(Path(lowrank["V"]), base)
        Fs = [_read_mm(Path(p), base) for p in lowrank.get("F_derivs", [])]
        return GenericLowRankProblem(coeffs, rhs.ravel(), int(lowrank["s"]), U, V, Fs, source=source)
    return GenericProblem(coeffs, rhs.ravel(), polynomial=bool(manifest.get("polynomial", False)), source=source)


def write_generic(directory, coefficients, rhs, polynomial: bool = False, lowrank: dict | None = None) -> Path:
    """Write a manifest plus Matrix Market files readable by :func:`load_generic`."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    def dump(name, M):
        M = sp.coo_matrix(M) if sp.issparse(M) else np.atleast_2d(np.asarray(M))
        if M.ndim == 2 and M.shape[0] == 1 and name == "rhs":
            M = M.T
        scipy.io.mmwrite(str(directory / name), M, precision=17)
        return name + ".mtx"

    manifest = {
        "n": int(np.asarray(rhs).size),
        "rhs": dump("rhs", np.asarray(rhs).reshape(-1, 1)),
        "coefficients": [dump(f"A{i}", A) for i, A in enumerate(coefficients)],
    }
    if polynomial:
        manifest["polynomial"] = True
    if lowrank:
        manifest["lowrank"] = {
            "s": int(lowrank["s"]),
            "U": dump("U", lowrank["U"]),
            "V": dump("V", lowrank["V"]),
            "F_derivs": [dump(f"F{lowrank['s'] + 1 + k}", F) for k, F in enumerate(lowrank["F_derivs"])],
        }
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def taylor_coefficients(problem: TaylorProblem, max_order: int) -> list[np.ndarray]:
    """Dense derivative matrices ``A^{(i)}(0)`` for ``i = 0..max_order``."""
    eye = np.eye(problem.dim, dtype=complex)
    return [
        np.column_stack([problem.deriv_apply(i, eye[:, k]) for k in range(problem.dim)])
        for i in range(max_order + 1)
    ]
