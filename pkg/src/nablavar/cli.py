"""Command-line interface: ``nablavar <command> [options]``.

Exit codes: 0 success, 2 usage error, 3 domain error, 4 failed verification.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time

import numpy as np

from . import duality
from .errors import DomainError, NablavarError, ParseError, ProblemFileError, UsageError
from .expr import parse
from .problem import dump_problem, load_problem, sample_candidate, values_candidate
from .report import Report, digest
from .reproduce import REPRODUCTIONS, format_poly
from .solver import SolveOptions, direct_minimize, solve_q_system, stationary_scan_1d
from .variational import el_residual, eval_components

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_FAILED = 0, 2, 3, 4

log = logging.getLogger("nablavar")


def _range(text: str):
    try:
        lo, hi = (float(s) for s in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {text!r}") from None
    if not hi > lo:
        raise argparse.ArgumentTypeError("range needs LO < HI")
    return lo, hi


def _values(text: str):
    try:
        return [float(s) for s in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected numbers separated by commas, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", choices=("text", "machine"), default="text")
    common.add_argument("--tol", type=float, default=1e-10, help="residual tolerance (default 1e-10)")
    common.add_argument("--max-iter", type=int, default=500)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--starts", type=int, default=16)
    common.add_argument("--fd", action="store_true", help="finite-difference partials")
    common.add_argument("--timing", action="store_true", help="include wall time in the report")
    common.add_argument("-v", "--verbose", action="store_true")

    problem = argparse.ArgumentParser(add_help=False)
    problem.add_argument("--problem", required=True, metavar="PATH")

    candidate = argparse.ArgumentParser(add_help=False)
    grp = candidate.add_mutually_exclusive_group()
    grp.add_argument("--candidate", metavar="EXPR", help="trajectory as an expression in t")
    grp.add_argument("--values", type=_values, metavar="V1,V2,...",
                     help="trajectory values (whole scale or [a, b])")

    ap = argparse.ArgumentParser(prog="nablavar",
                                 description="Composed nabla variational problems on time scales.")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("eval", parents=[common, problem, candidate], help="component integrals and H")
    p = sub.add_parser("residual", parents=[common, problem, candidate],
                       help="Euler-Lagrange and natural boundary residuals")
    p.add_argument("--check", action="store_true", help="fail (exit 4) unless residuals <= --tol")
    p = sub.add_parser("solve", parents=[common, problem], help="find an extremal")
    p.add_argument("--method", choices=("newton", "bfgs"), default="newton")
    p.add_argument("--sense", choices=("min", "max"), default="min", help="bfgs only")
    p = sub.add_parser("scan1d", parents=[common, problem], help="scan dL/dm for one free value")
    p.add_argument("--range", type=_range, default=(-10.0, 10.0), metavar="LO:HI",
                   help="write negative bounds as --range=-10:10")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--free-point", type=float, default=None)
    p = sub.add_parser("solve-q", parents=[common], help="multi-start Newton for a Q system")
    p.add_argument("--eq", action="append", required=True, metavar="EXPR",
                   help="residual in q1..qn (repeat once per equation)")
    p.add_argument("--guard", action="append", default=[], metavar="EXPR",
                   help="expression that must not vanish at a root")
    p.add_argument("--range", type=_range, default=(-10.0, 10.0), metavar="LO:HI",
                   help="start box per coordinate")
    sub.add_parser("dualize", parents=[common, problem], help="print the dual problem")
    p = sub.add_parser("check-duality", parents=[common], help="run the duality checks")
    p.add_argument("--random", type=int, default=1000, metavar="N")
    p.add_argument("--problem", metavar="PATH", help="also check this problem and its guess")
    p = sub.add_parser("reproduce", parents=[common], help="rerun a worked example")
    p.add_argument("example", choices=sorted(REPRODUCTIONS))
    return ap


def _options(args, **extra) -> SolveOptions:
    return SolveOptions(tol=args.tol, max_iter=args.max_iter, starts=args.starts, seed=args.seed,
                        finite_difference=args.fd, **extra)


def _digest(args, pf=None) -> str:
    skip = {"output", "timing", "verbose"}
    echo = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    return digest(json.dumps(echo, sort_keys=True, default=str), pf.source if pf else "")


def _candidate(args, pf):
    if args.candidate is not None:
        return sample_candidate(args.candidate, pf.scale)
    if args.values is not None:
        return values_candidate(args.values, pf.problem())
    guess = pf.guess_function()
    if guess is None:
        raise UsageError("no candidate: pass --candidate or --values, or add a guess section")
    return guess


def _problem(args):
    pf = load_problem(args.problem)
    p = pf.problem()
    if args.fd:
        p = p.with_fd(1e-6)
    return pf, p


def _num(x) -> str:
    return "%.17g" % x


def _el_lines(rep, report: Report):
    report.say("F: " + ", ".join(f"F{i + 1} = {_num(F)}" for i, F in enumerate(rep.F)))
    report.say("H'(F): " + ", ".join(_num(w) for w in rep.H_grad))
    report.say("EL residual on (sigma(a), b]:")
    for t, r in zip(rep.points, rep.residual):
        report.say(f"  t = {_num(t):>24}  residual = {_num(r)}")
    if rep.left_bc is not None:
        report.say(f"left natural boundary residual: {_num(rep.left_bc)}")
    if rep.right_bc is not None:
        report.say(f"right natural boundary residual: {_num(rep.right_bc)}")
    report.say(f"max |residual|: {_num(rep.max_abs())}")


def cmd_eval(args, report):
    pf, p = _problem(args)
    x = _candidate(args, pf)
    F = eval_components(p, x)
    L = float(p.functional.outer(np.array(F)))
    report.results = {"F": list(F), "H": L}
    for i, v in enumerate(F):
        report.say(f"F{i + 1} = {_num(v)}")
    report.say(f"H(F) = {_num(L)}")
    return EXIT_OK


def cmd_residual(args, report):
    pf, p = _problem(args)
    rep = el_residual(p, _candidate(args, pf))
    report.results = rep.as_dict()
    _el_lines(rep, report)
    if args.check:
        report.passed = rep.max_abs() <= args.tol
        return EXIT_OK if report.passed else EXIT_FAILED
    return EXIT_OK


def cmd_solve(args, report):
    pf, p = _problem(args)
    res = direct_minimize(p, _options(args, method=args.method, sense=args.sense),
                          x0=pf.guess_function())
    report.results = res.as_dict()
    report.say(f"status: {res.status} ({res.message})")
    report.say(f"iterations: {res.iterations}")
    if res.classification:
        report.say(f"Hessian: {res.classification}")
    if res.value is not None:
        report.say(f"H(F) = {_num(res.value)}")
    if res.floor is not None:
        report.say(f"residual floor: {_num(res.floor)}")
    if res.report is not None:
        _el_lines(res.report, report)
    if res.solution is not None:
        report.say("solution:")
        for t, v in zip(res.solution.points, res.solution.values):
            report.say(f"  x({_num(t)}) = {_num(v)}")
    report.passed = res.converged
    if res.status == "domain-error":
        return EXIT_DOMAIN
    return EXIT_OK if res.converged else EXIT_FAILED


def cmd_scan1d(args, report):
    pf, p = _problem(args)
    lo, hi = args.range
    scan = stationary_scan_1d(p, lo, hi, args.samples, args.free_point, _options(args))
    report.results = scan.as_dict()
    report.say(f"free value at t = {_num(scan.free_point)}; {scan.samples} samples on [{lo:g}, {hi:g}]")
    if scan.polynomial is not None:
        disc = "" if scan.discriminant is None else f", discriminant {scan.discriminant:.10g}"
        report.say(f"dL/dm = {format_poly(scan.polynomial)}{disc}")
    for a, b in scan.excluded:
        report.say(f"excluded (functional undefined): [{_num(a)}, {_num(b)}]")
    if scan.roots:
        for r in scan.roots:
            m = r.solution.values[p.free_slice().start]
            report.say(f"stationary point m = {_num(m)} ({r.classification}), "
                       f"residual {_num(r.report.max_abs())}")
    else:
        report.say("no stationary point")
    report.say(f"min |dL/dm| over the samples: {_num(scan.floor)}")
    return EXIT_OK


def cmd_solve_q(args, report):
    names = tuple(f"q{i}" for i in range(1, len(args.eq) + 1))
    exprs = [parse(e, names) for e in args.eq]
    guards = [parse(g, names) for g in args.guard]
    lo, hi = args.range
    opts = SolveOptions(tol=args.tol, max_iter=args.max_iter, starts=args.starts,
                        seed=args.seed, box=(lo, hi))
    res = solve_q_system(exprs, opts, guards=guards, names=names)
    report.results = res.as_dict()
    report.say(f"verdict: {res.verdict}")
    for r in res.roots:
        report.say("root (" + ", ".join(_num(v) for v in r["q"]) + f"), residual {_num(r['residual'])}")
    for r in res.excluded:
        report.say("excluded (" + ", ".join(_num(v) for v in r["q"]) + f") by {r['guard']}")
    report.say(f"starts abandoned: {len(res.abandoned)} of {res.starts}")
    if res.scan_min is not None:
        report.say(f"grid minimum of max|residual| over the box: {_num(res.scan_min)} "
                   f"(floor {_num(res.scan_floor)})")
    return EXIT_FAILED if res.verdict == "inconclusive" else EXIT_OK


def cmd_dualize(args, report):
    pf, p = _problem(args)
    dp = duality.dual_problem(p)
    report.results = dp.describe()
    report.say("# dual problem: forward (delta) calculus on the reflected scale")
    report.say(f"# scale provenance: {dp.scale.provenance}")
    report.say(dump_problem(dp).rstrip("\n"))
    return EXIT_OK


def cmd_check_duality(args, report):
    reports = duality.random_suite(args.random, args.seed)
    if args.problem:
        pf, p = _problem(args)
        x = pf.guess_function()
        if x is None:
            raise UsageError("--problem needs a guess section to supply the trajectory")
        reports["problem-el"] = duality.check_el_duality(p, x)
    report.results = {k: r.as_dict() for k, r in reports.items()}
    for name, r in reports.items():
        kind = "relative" if r.relative else "absolute"
        report.say(f"{name:>12}: {r.cases} cases, max discrepancy {r.max_discrepancy:.3e} "
                   f"({kind}, tolerance {r.tolerance:g}) {'ok' if r.passed else 'FAILED'}")
    report.passed = all(r.passed for r in reports.values())
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_reproduce(args, report):
    checks, lines, data = REPRODUCTIONS[args.example](_options(args))
    report.results = {"example": args.example, "checks": [c.as_dict() for c in checks], "data": data}
    for line in lines:
        report.say(line)
    for c in checks:
        report.say(f"[{'pass' if c.passed else 'FAIL'}] {c.name}: {c.value} ({c.bound})")
    report.passed = all(c.passed for c in checks)
    return EXIT_OK if report.passed else EXIT_FAILED


COMMANDS = {
    "eval": cmd_eval, "residual": cmd_residual, "solve": cmd_solve, "scan1d": cmd_scan1d,
    "solve-q": cmd_solve_q, "dualize": cmd_dualize, "check-duality": cmd_check_duality,
    "reproduce": cmd_reproduce,
}


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=stderr)
    pf_source = None
    if getattr(args, "problem", None):
        try:
            pf_source = load_problem(args.problem)
        except NablavarError:
            pf_source = None
    report = Report(args.command, _digest(args, pf_source))
    t0 = time.perf_counter()
    try:
        code = COMMANDS[args.command](args, report)
    except (ProblemFileError, ParseError, UsageError) as exc:
        print(f"nablavar: error: {exc}", file=stderr)
        return EXIT_USAGE
    except DomainError as exc:
        print(f"nablavar: domain error: {exc}", file=stderr)
        return EXIT_DOMAIN
    if args.timing:
        report.wall_time = time.perf_counter() - t0
    stdout.write(report.machine() if args.output == "machine" else report.text())
    return code


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
