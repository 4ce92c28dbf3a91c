"""Command-line front end: polynomial I/O, pipelines, experiments, verification.

Commands: sos-norm, approx, feasible, bounds, figure, verify.  Solver
tolerances come from (in increasing precedence) built-in defaults, the
key=value file named by SOS_APPROX_CONFIG, and command-line flags.  Output
files are written atomically (temp file + rename); identical inputs and
seeds produce byte-identical outputs.

Exit codes: 0 success, 1 failed verification, 2 usage/parse error,
3 input not a sum of squares, 4 solver failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor

from . import approx as approx_mod
from . import linalg, poly, sdp
from .gram import square_basis
from .poly import COMMUTATIVE, FREE, Polynomial, sum_of_monomial_squares

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_SOLVER = 4

CONFIG_ENV = "SOS_APPROX_CONFIG"
FIGURE_HEADER = "d,sos_norm,sqrt_dim_bound,identity_trace"


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_polynomial(path: str) -> Polynomial:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise CliError(EXIT_USAGE, f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_USAGE,
                       f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    try:
        return poly.from_dict(data)
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError(EXIT_USAGE, f"{path}: {exc}") from exc


def _homogeneous_basis(p: Polynomial):
    if not p:
        return square_basis(p.flavor, p.n_vars, 0)
    if not p.is_homogeneous() or p.degree() % 2 != 0:
        raise CliError(EXIT_USAGE,
                       "input must be homogeneous of even degree")
    return square_basis(p.flavor, p.n_vars, p.degree() // 2)


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def solver_options(args: argparse.Namespace) -> sdp.SolverOptions:
    mapping: dict[str, str] = {}
    config_path = os.environ.get(CONFIG_ENV)
    if config_path:
        try:
            mapping.update(sdp.parse_config_file(config_path))
        except (OSError, ValueError) as exc:
            raise CliError(EXIT_USAGE, f"config file: {exc}") from exc
    for key in ("tol_primal", "tol_gap", "max_iter"):
        value = getattr(args, key, None)
        if value is not None:
            mapping[key] = str(value)
    try:
        return sdp.SolverOptions.from_mapping(mapping)
    except ValueError as exc:
        raise CliError(EXIT_USAGE, str(exc)) from exc


def _free_closed_form(p: Polynomial, basis) -> float:
    return float(sum(p.coefficient(w[::-1] + w) for w in basis.terms).real)


def cmd_sos_norm(args: argparse.Namespace) -> int:
    p = _load_polynomial(args.input)
    basis = _homogeneous_basis(p)
    options = solver_options(args)
    value, sol = sdp.sos_norm(p, basis, options)
    report = {
        "value": value,
        "status": sol.status.value,
        "duality_gap": sol.gap,
        "dual_lower_bound": sol.dual_objective,
        "primal_residual": sol.primal_residual,
        "iterations": sol.iterations,
        "method": "sdp",
    }
    if p.flavor == FREE and sol.status is not sdp.SolveStatus.INFEASIBLE:
        closed = _free_closed_form(p, basis)
        report.update(value=closed, method="closed-form (free)",
                      solver_value=value)
    if sol.status is sdp.SolveStatus.INFEASIBLE:
        report["certificate"] = {
            "values": list(sol.certificate.values),
            "objective": sol.certificate.objective,
            "psd_margin": sol.certificate.psd_margin,
        }
        _emit(args, report)
        print("infeasible: not a sum of squares from the homogeneous basis",
              file=sys.stderr)
        return EXIT_INFEASIBLE
    if sol.status is not sdp.SolveStatus.OPTIMAL:
        _emit(args, report)
        print(f"solver did not converge: {sol.message}", file=sys.stderr)
        return EXIT_SOLVER
    _emit(args, report)
    return EXIT_OK


def _emit(args: argparse.Namespace, report: dict) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if getattr(args, "output", None):
        _atomic_write(args.output, text + "\n")


def cmd_approx(args: argparse.Namespace) -> int:
    if args.eps is None or args.eps <= 0:
        raise CliError(EXIT_USAGE, "--eps must be a positive number")
    p = _load_polynomial(args.input)
    options = solver_options(args)
    try:
        if p.flavor == FREE:
            cert = approx_mod.approximate_free(p, args.eps, options)
        else:
            cert = approx_mod.approximate_sphere(p, args.eps, options)
    except approx_mod.NotSosError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (sdp.SolverError, linalg.NonConvergenceError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    _atomic_write(args.output, cert.to_json() + "\n")
    with open(args.output, "r", encoding="utf-8") as fh:
        reread = approx_mod.SosCertificate.from_dict(json.load(fh))
    problems = reread.verify(sample_points=args.resolution or 0)
    summary = {
        "squares": cert.rank,
        "allowed_rank": cert.allowed_rank,
        "error": cert.error,
        "norm": cert.norm,
        "eps": cert.eps,
        "sos_norm_value": cert.sos_norm_value,
        "output": args.output,
        "verified": not problems,
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    if problems:
        for issue in problems:
            print(f"verification failed: {issue}", file=sys.stderr)
        return EXIT_VERIFY_FAILED
    return EXIT_OK


def cmd_feasible(args: argparse.Namespace) -> int:
    p = _load_polynomial(args.input)
    basis = _homogeneous_basis(p)
    options = solver_options(args)
    try:
        result = sdp.sos_feasible(p, basis, options)
    except sdp.SolverError as exc:
        print(f"inconclusive: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    report: dict = {"feasible": result.feasible, "iterations": result.iterations,
                    "residual": result.residual}
    if result.feasible:
        report["witness"] = linalg.hermitian_to_dict(result.witness, drop_tol=1e-12)
    else:
        report["certificate"] = {
            "values": list(result.certificate.values),
            "objective": result.certificate.objective,
            "psd_margin": result.certificate.psd_margin,
        }
    _emit(args, report)
    return EXIT_OK if result.feasible else EXIT_INFEASIBLE


def cmd_bounds(args: argparse.Namespace) -> int:
    if args.eps is None or args.eps <= 0:
        raise CliError(EXIT_USAGE, "--eps must be a positive number")
    if args.sos_norm_value is not None:
        value = args.sos_norm_value
        flavor, n, d = args.flavor, args.n, args.d
        if None in (flavor, n, d):
            raise CliError(EXIT_USAGE,
                           "--flavor, --n and --d are required with --sos-norm-value")
    elif args.input:
        p = _load_polynomial(args.input)
        basis = _homogeneous_basis(p)
        value, sol = sdp.sos_norm(p, basis, solver_options(args))
        if sol.status is not sdp.SolveStatus.OPTIMAL:
            print(f"solver failure: {sol.message}", file=sys.stderr)
            return EXIT_SOLVER if sol.status is sdp.SolveStatus.MAX_ITER else EXIT_INFEASIBLE
        flavor, n, d = p.flavor, p.n_vars, basis.degree
    else:
        raise CliError(EXIT_USAGE, "provide --sos-norm-value or --input")
    report = approx_mod.bound_report(flavor, n, d, args.eps, value)
    _emit(args, report.to_dict())
    return EXIT_OK


def _figure_row(n: int, d: int, options: sdp.SolverOptions) -> tuple[int, float]:
    p = sum_of_monomial_squares(n, d)
    basis = square_basis(COMMUTATIVE, n, d)
    value, sol = sdp.sos_norm(p, basis, options)
    if sol.status is not sdp.SolveStatus.OPTIMAL:
        raise sdp.SolverError(f"d={d}: {sol.status.value}: {sol.message}", sol)
    return d, value


def cmd_figure(args: argparse.Namespace) -> int:
    n = args.n or 3
    d_max = args.d_max or 8
    options = solver_options(args)
    jobs = max(1, args.jobs or 1)
    results: dict[int, float] = {}
    failures: list[str] = []

    def run(d: int):
        try:
            _, value = _figure_row(n, d, options)
            results[d] = value
        except (sdp.SolverError, linalg.NonConvergenceError) as exc:
            failures.append(f"d={d}: {exc}")
            results[d] = math.nan

    if jobs == 1:
        for d in range(1, d_max + 1):
            run(d)
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(run, range(1, d_max + 1)))
    lines = [FIGURE_HEADER]
    for d in range(1, d_max + 1):
        bound = math.sqrt(math.comb(2 * d + n - 1, n - 1))
        trace = math.comb(d + n - 1, n - 1)
        lines.append(f"{d},{results[d]!r},{bound!r},{trace}")
    text = "\n".join(lines) + "\n"
    if args.output:
        _atomic_write(args.output, text)
    else:
        sys.stdout.write(text)
    for failure in failures:
        print(f"row failed: {failure}", file=sys.stderr)
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    from .verify import run_property_suite

    seed = args.seed if args.seed is not None else 20240901
    options = solver_options(args)
    results = run_property_suite(seed, options,
                                 resolution=args.resolution or 1000)
    report = {name: {"passed": ok, "detail": detail}
              for name, ok, detail in results}
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    if getattr(args, "output", None):
        _atomic_write(args.output, json.dumps(report, indent=2, sort_keys=True) + "\n")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_VERIFY_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sos-approx",
        description="Approximate sums of Hermitian squares with small "
                    "Pythagoras number")
    sub = parser.add_subparsers(dest="command", required=True)

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--tol-primal", dest="tol_primal", type=float,
                        help="constraint residual tolerance (relative)")
    solver.add_argument("--tol-gap", dest="tol_gap", type=float,
                        help="duality gap tolerance (relative)")
    solver.add_argument("--max-iter", dest="max_iter", type=int,
                        help="solver iteration cap")

    ps = sub.add_parser("sos-norm", parents=[solver],
                        help="minimal Gram trace of a polynomial")
    ps.add_argument("--input", required=True, help="polynomial JSON file")
    ps.add_argument("--output", help="write the JSON report here")
    ps.set_defaults(func=cmd_sos_norm)

    pa = sub.add_parser("approx", parents=[solver],
                        help="approximate by a short sum of squares")
    pa.add_argument("--input", required=True)
    pa.add_argument("--output", required=True, help="certificate JSON file")
    pa.add_argument("--eps", type=float, required=True)
    pa.add_argument("--resolution", type=int, default=2000,
                    help="sphere sample size for certificate re-check")
    pa.set_defaults(func=cmd_approx)

    pf = sub.add_parser("feasible", parents=[solver],
                        help="test membership in the cone of squares")
    pf.add_argument("--input", required=True)
    pf.add_argument("--output")
    pf.set_defaults(func=cmd_feasible)

    pb = sub.add_parser("bounds", parents=[solver],
                        help="dimension counts and square-count bounds")
    pb.add_argument("--flavor", choices=[COMMUTATIVE, FREE])
    pb.add_argument("--n", type=int)
    pb.add_argument("--d", type=int)
    pb.add_argument("--eps", type=float, required=True)
    pb.add_argument("--sos-norm-value", dest="sos_norm_value", type=float)
    pb.add_argument("--input", help="compute the sos-norm of this polynomial instead")
    pb.add_argument("--output")
    pb.set_defaults(func=cmd_bounds)

    pg = sub.add_parser("figure", parents=[solver],
                        help="sos-norm growth experiment (CSV)")
    pg.add_argument("--n", type=int, default=3)
    pg.add_argument("--d-max", dest="d_max", type=int, default=8,
                    help="last degree row; values beyond 8 can take much longer")
    pg.add_argument("--output")
    pg.add_argument("--jobs", type=int, default=1,
                    help="parallel row workers")
    pg.set_defaults(func=cmd_figure)

    pv = sub.add_parser("verify", parents=[solver],
                        help="run the cross-module property suite")
    pv.add_argument("--seed", type=int)
    pv.add_argument("--resolution", type=int)
    pv.add_argument("--output")
    pv.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except approx_mod.NotSosError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except sdp.SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
