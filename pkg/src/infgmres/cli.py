"""Command-line driver.

Subcommands write CSV to ``--out`` (or stdout); diagnostics go to stderr.

Exit codes: 0 success, 1 bad configuration, 2 some mu did not converge,
3 file I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import dataclass, field

import numpy as np

from .convergence import (
    gelfand_limit_check,
    gelfand_test_matrix,
    observed_factor,
    predict_bound,
    spectrum_ritz,
)
from .exceptions import InfGMRESError, ProblemFileError, UndefinedFactorError
from .krylov import arnoldi_build
from .problems import build_delay, build_helmholtz1d, load_generic
from .solver import sweep

EXIT_OK, EXIT_CONFIG, EXIT_NOT_CONVERGED, EXIT_IO = 0, 1, 2, 3


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    subcommand: str
    problem: str = "delay"
    n: int = 100
    variant: str = "full"
    mu_values: list = field(default_factory=list)
    tol: float = 1e-12
    max_iters: int = 200
    outliers: list = field(default_factory=lambda: [0])
    seed: int = 0
    out_path: str | None = None
    ritz_steps: int = 100
    k_max: int = 200
    size: int = 6


def _fmt(x) -> str:
    return repr(float(x))


def parse_mu(args) -> list[complex]:
    mus: list[complex] = []
    if args.mu:
        for tok in args.mu.split(","):
            tok = tok.strip()
            if tok:
                try:
                    mus.append(complex(tok.replace(" ", "")))
                except ValueError:
                    raise ConfigError(f"cannot parse mu value {tok!r}") from None
    if args.mu_range:
        parts = args.mu_range.split(":")
        if len(parts) != 3:
            raise ConfigError("--mu-range expects start:stop:count")
        try:
            start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            raise ConfigError(f"cannot parse --mu-range {args.mu_range!r}") from None
        if count < 1:
            raise ConfigError("--mu-range count must be positive")
        mus.extend(complex(v) for v in np.linspace(start, stop, count))
    if args.mu_imag:
        mus = [mu + 1j * args.mu_imag for mu in mus]
    if not mus:
        raise ConfigError("no mu values given (use --mu or --mu-range)")
    if not all(np.isfinite(mu) for mu in mus):
        raise ConfigError("mu values must be finite")
    return mus


def make_problem(cfg: RunConfig):
    name = cfg.problem
    if name == "delay":
        problem = build_delay(cfg.n, seed=cfg.seed)
    elif name == "helmholtz1d":
        problem = build_helmholtz1d(cfg.n)
    elif name.startswith("generic:"):
        problem = load_generic(name.split(":", 1)[1])
    else:
        raise ConfigError(f"unknown problem {name!r}")
    if cfg.variant == "lowrank" and not problem.is_lowrank:
        raise ConfigError(f"problem {name!r} has no low-rank tail; the lowrank variant is unavailable")
    return problem


def run_sweep(cfg: RunConfig, out) -> int:
    problem = make_problem(cfg)
    res = sweep(problem, cfg.mu_values, cfg.tol, cfg.max_iters, cfg.variant)
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["mu_re", "mu_im", "iterations", "true_residual", "ls_residual", "converged", "wall_time_s"])
    for i, mu in enumerate(res.mu_values):
        w.writerow([
            _fmt(mu.real), _fmt(mu.imag), res.iterations[i], _fmt(res.true_residuals[i]),
            _fmt(res.ls_residuals[i] / res.c_norm), int(res.converged[i]), f"{res.wall_times[i]:.6f}",
        ])
    return EXIT_OK if res.all_converged else EXIT_NOT_CONVERGED


def _spectrum(problem, cfg: RunConfig, count: int):
    steps = max(count, min(cfg.ritz_steps, cfg.max_iters))
    fac = arnoldi_build(problem, steps, cfg.variant)
    return spectrum_ritz(fac, min(fac.m, max(count, 1)))


def run_convergence(cfg: RunConfig, out) -> int:
    problem = make_problem(cfg)
    res = sweep(problem, cfg.mu_values, cfg.tol, cfg.max_iters, cfg.variant)
    spec = _spectrum(problem, cfg, max(cfg.outliers) + 1)
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["mu_re", "mu_im", "k", "true_residual", "ls_residual"] + [f"bound_j{j}" for j in cfg.outliers])
    summary = []
    for i, mu in enumerate(res.mu_values):
        factors = [predict_bound(spec, mu, j).factor for j in cfg.outliers]
        true_h = res.true_history[i]
        ls_h = np.asarray(res.ls_history[i]) / res.c_norm
        for k in range(1, len(true_h)):
            w.writerow([_fmt(mu.real), _fmt(mu.imag), k, _fmt(true_h[k]), _fmt(ls_h[k])]
                       + [_fmt(f**k) for f in factors])
        try:
            rho = observed_factor(ls_h)
        except UndefinedFactorError:
            rho = float("nan")
        summary.append((mu, rho))
    for mu, rho in summary:
        out.write(f"# observed_rho,{_fmt(mu.real)},{_fmt(mu.imag)},{_fmt(rho)}\n")
    return EXIT_OK if res.all_converged else EXIT_NOT_CONVERGED


def run_bound(cfg: RunConfig, out) -> int:
    problem = make_problem(cfg)
    res = sweep(problem, cfg.mu_values, cfg.tol, cfg.max_iters, cfg.variant)
    spec = _spectrum(problem, cfg, max(cfg.outliers) + 1)
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["mu_re", "mu_im", "j", "gamma_abs", "predicted_factor", "observed_rho"])
    for i, mu in enumerate(res.mu_values):
        try:
            rho = observed_factor(np.asarray(res.ls_history[i]) / res.c_norm)
        except UndefinedFactorError:
            rho = float("nan")
        for j in cfg.outliers:
            pred = predict_bound(spec, mu, j)
            w.writerow([_fmt(mu.real), _fmt(mu.imag), j, _fmt(abs(spec.gammas[j])), _fmt(pred.factor), _fmt(rho)])
    return EXIT_OK if res.all_converged else EXIT_NOT_CONVERGED


def run_gelfand(cfg: RunConfig, out) -> int:
    A, spectrum = gelfand_test_matrix(cfg.size, cfg.seed)
    j = cfg.outliers[0]
    if j >= len(spectrum):
        raise ConfigError(f"outlier count {j} too large for a {cfg.size}x{cfg.size} test matrix")
    values = gelfand_limit_check(A, j, cfg.k_max, spectrum[:j])
    target = abs(spectrum[j])
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["k", "value", "target"])
    for k, v in values:
        w.writerow([k, _fmt(v), _fmt(target)])
    return EXIT_OK


COMMANDS = {"sweep": run_sweep, "convergence": run_convergence, "bound": run_bound, "gelfand": run_gelfand}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="infgmres", description="Infinite GMRES for A(mu) x = b over many mu.")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for name in ("sweep", "convergence", "bound"):
        p = sub.add_parser(name)
        p.add_argument("--problem", default="delay", help="delay | helmholtz1d | generic:<manifest.json>")
        p.add_argument("--n", type=int, default=100)
        p.add_argument("--variant", choices=("full", "lowrank", "tensor"), default="full")
        p.add_argument("--mu", help="comma-separated values, complex allowed (e.g. 0.1,0.2+0.1j)")
        p.add_argument("--mu-range", help="start:stop:count (linearly spaced, real)")
        p.add_argument("--mu-imag", type=float, default=0.0, help="imaginary part added to every mu")
        p.add_argument("--tol", type=float, default=1e-12)
        p.add_argument("--max-iters", type=int, default=200)
        p.add_argument("--outliers", default="0", help="comma-separated outlier counts j")
        p.add_argument("--ritz-steps", type=int, default=100, help="Arnoldi steps for the Ritz spectrum")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="output CSV path (default: stdout)")
    g = sub.add_parser("gelfand")
    g.add_argument("--outliers", default="2", help="number j of annihilated dominant eigenvalues")
    g.add_argument("--k-max", type=int, default=200)
    g.add_argument("--size", type=int, default=6)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    return parser


def config_from_args(args) -> RunConfig:
    try:
        outliers = [int(t) for t in args.outliers.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse --outliers {args.outliers!r}") from None
    if not outliers or min(outliers) < 0:
        raise ConfigError("--outliers needs nonnegative integers")
    cfg = RunConfig(subcommand=args.subcommand, outliers=outliers, seed=args.seed, out_path=args.out)
    if args.subcommand == "gelfand":
        cfg.k_max, cfg.size = args.k_max, args.size
        if cfg.k_max < 1 or cfg.size < 2:
            raise ConfigError("--k-max must be >= 1 and --size >= 2")
        return cfg
    cfg.problem, cfg.n, cfg.variant = args.problem, args.n, args.variant
    cfg.tol, cfg.max_iters, cfg.ritz_steps = args.tol, args.max_iters, args.ritz_steps
    if cfg.tol <= 0 or cfg.max_iters < 1 or cfg.n < 1:
        raise ConfigError("--tol, --max-iters and --n must be positive")
    cfg.mu_values = parse_mu(args)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"infgmres: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    buf = io.StringIO()
    try:
        code = COMMANDS[cfg.subcommand](cfg, buf)
    except ConfigError as exc:
        print(f"infgmres: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ProblemFileError, OSError) as exc:
        print(f"infgmres: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except InfGMRESError as exc:
        print(f"infgmres: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if cfg.out_path:
            with open(cfg.out_path, "w", newline="") as fh:
                fh.write(buf.getvalue())
        else:
            sys.stdout.write(buf.getvalue())
    except OSError as exc:
        print(f"infgmres: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    if code == EXIT_NOT_CONVERGED:
        print("infgmres: some mu values did not converge", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
