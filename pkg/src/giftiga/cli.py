"""Command line entry point: ``giftiga <subcommand> ...``.

Exit codes: 0 success, 1 acceptance violation (only with ``--check``),
2 usage error (bad arguments or unknown names).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .geometry import build_named_geometry
from .harness import (
    records_to_csv,
    run_adaptive,
    run_convergence,
    run_divergence_case,
    run_patch_tests,
)
from .problems import build_solution_space, exact_problem, problem_names

__all__ = ["main", "build_parser"]

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


_PLOT_SCRIPT = '''"""Plot {title}; run with python3 after installing matplotlib."""
import csv
import os

import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
with open(os.path.join(here, "{csv}")) as fh:
    rows = list(csv.DictReader(fh))
x = [float(r["{xcol}"]) for r in rows]
y = [float(r["{ycol}"]) for r in rows]
plt.loglog(x, y, "o-")
plt.xlabel("{xcol}")
plt.ylabel("{ycol}")
plt.title("{title}")
plt.grid(True, which="both", ls=":")
plt.savefig(os.path.join(here, "{png}"), dpi=150)
'''


def _write_outputs(out, stem, csv_text, args, xcol, ycol, title):
    os.makedirs(out, exist_ok=True)
    csv_name = stem + ".csv"
    with open(os.path.join(out, csv_name), "w") as fh:
        fh.write(csv_text)
    with open(os.path.join(out, "plot_" + stem + ".py"), "w") as fh:
        fh.write(_PLOT_SCRIPT.format(title=title, csv=csv_name, xcol=xcol, ycol=ycol, png=stem + ".png"))
    config = {k: v for k, v in vars(args).items() if k != "func"}
    with open(os.path.join(out, "config.json"), "w") as fh:
        json.dump(config, fh, indent=2, sort_keys=True)


def _cmd_patch_tests(args):
    results = run_patch_tests()
    lines = ["label,geometry,solution,expect,laplace,elasticity,ref_laplace,ref_elasticity,match"]
    print("%-14s %-6s %12s %12s  %s" % ("test", "expect", "laplace", "elasticity", "match"))
    for r in results:
        want = "pass" if r.expect_pass else "fail"
        print("%-14s %-6s %12.4e %12.4e  %s" % (r.label, want, r.laplace, r.elasticity, "yes" if r.matches else "NO"))
        ref = ["" if v is None else repr(v) for v in r.reference]
        lines.append(
            "%s,%s,%s,%s,%.10e,%.10e,%s,%s,%d"
            % (r.label, r.geometry, r.solution, want, r.laplace, r.elasticity, ref[0], ref[1], r.matches)
        )
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "patch_tests.csv"), "w") as fh:
            fh.write("\n".join(lines) + "\n")
        with open(os.path.join(args.out, "config.json"), "w") as fh:
            json.dump({k: v for k, v in vars(args).items() if k != "func"}, fh, indent=2, sort_keys=True)
    ok = all(r.matches for r in results)
    print("%d/%d pairs match the expected pass/fail pattern" % (sum(r.matches for r in results), len(results)))
    return EXIT_OK if ok or not args.check else EXIT_CHECK_FAILED


def _cmd_convergence(args):
    try:
        problem = exact_problem(args.problem)
        geo = build_named_geometry(args.geometry)
        space = build_solution_space(args.solution, geo)
    except (KeyError, ValueError) as exc:
        raise UsageError(str(exc).strip('"')) from None
    if args.levels < 1:
        raise UsageError("--levels must be at least 1")
    records = run_convergence(problem, geo, space, args.levels, start=args.start)
    text = records_to_csv(records)
    sys.stdout.write(text)
    if args.out:
        stem = "convergence_%s_%s_%s" % (args.problem, args.geometry, args.solution)
        _write_outputs(args.out, stem, text, args, "h", "l2_rel_err", "%s: %s / %s" % (args.problem, args.geometry, args.solution))
    if args.check and len(records) >= 2:
        want = min(space.degrees) + 1
        got = records[-1].rate
        print("terminal rate %.3f, expected %d +- %.2f" % (got, want, args.rate_tol))
        if abs(got - want) > args.rate_tol:
            return EXIT_CHECK_FAILED
    return EXIT_OK


def _cmd_adaptive(args):
    if args.problem != "annulus-peak":
        raise UsageError("adaptive refinement is available for the annulus-peak problem only")
    if args.steps < 0:
        raise UsageError("--steps must be nonnegative")
    if not 0 <= args.eps < 100:
        raise UsageError("--eps must lie in [0, 100)")
    result = run_adaptive(args.problem, args.steps, args.eps, args.tol)
    text = result.to_csv()
    sys.stdout.write(text)
    if args.out:
        _write_outputs(args.out, "adaptive_" + args.problem, text, args, "ndof", "l2_rel_err", "adaptive PHT: " + args.problem)
        for h in result.history:
            with open(os.path.join(args.out, "tmesh_step%02d.txt" % h.step), "w") as fh:
                fh.write(h.tmesh)
    if args.check:
        errs = [h.l2_rel_err for h in result.history]
        if any(b > a for a, b in zip(errs, errs[1:])):
            print("exact error increased during refinement")
            return EXIT_CHECK_FAILED
    return EXIT_OK


def _cmd_divergence(args):
    mis = run_divergence_case(args.levels, aligned=False, start=args.start)
    ali = run_divergence_case(args.levels, aligned=True, start=args.start)
    print("# misaligned knots (Bdiv22)")
    sys.stdout.write(records_to_csv(mis))
    print("# aligned control (B22)")
    sys.stdout.write(records_to_csv(ali))
    if args.out:
        _write_outputs(args.out, "divergence_misaligned", records_to_csv(mis), args, "h", "l2_rel_err", "misaligned knots")
        _write_outputs(args.out, "divergence_aligned", records_to_csv(ali), args, "h", "l2_rel_err", "aligned knots")
    if args.check:
        ok = mis[-1].rate < 2.5 and abs(ali[-1].rate - 3.0) <= 0.2
        print("misaligned terminal rate %.3f (< 2.5), aligned %.3f (3 +- 0.2): %s"
              % (mis[-1].rate, ali[-1].rate, "ok" if ok else "violated"))
        if not ok:
            return EXIT_CHECK_FAILED
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="giftiga", description="GIFT solver experiments")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("patch-tests", help="run the 19 patch-test pairs")
    s.add_argument("--check", action="store_true", help="exit 1 unless every pair matches its expected pattern")
    s.add_argument("--out", help="directory for CSV output")
    s.set_defaults(func=_cmd_patch_tests)

    s = sub.add_parser("convergence", help="uniform refinement study")
    s.add_argument("--problem", required=True, help="one of: " + ", ".join(problem_names()))
    s.add_argument("--geometry", required=True)
    s.add_argument("--solution", required=True)
    s.add_argument("--levels", type=int, required=True)
    s.add_argument("--start", type=int, default=1, help="midpoint refinements applied before level 0")
    s.add_argument("--out", help="directory for CSV, plot script and config")
    s.add_argument("--check", action="store_true", help="exit 1 unless the terminal rate is min degree + 1")
    s.add_argument("--rate-tol", type=float, default=0.2)
    s.set_defaults(func=_cmd_convergence)

    s = sub.add_parser("adaptive", help="adaptive PHT refinement")
    s.add_argument("--problem", default="annulus-peak")
    s.add_argument("--steps", type=int, default=4)
    s.add_argument("--eps", type=float, default=5.0, help="percentage of cells pre-marked")
    s.add_argument("--tol", type=float, default=0.0, help="stop when the estimated error drops below this")
    s.add_argument("--out")
    s.add_argument("--check", action="store_true", help="exit 1 if the exact error ever increases")
    s.set_defaults(func=_cmd_adaptive)

    s = sub.add_parser("divergence", help="misaligned-knot plate case plus aligned control")
    s.add_argument("--levels", type=int, default=6)
    s.add_argument("--start", type=int, default=1)
    s.add_argument("--out")
    s.add_argument("--check", action="store_true")
    s.set_defaults(func=_cmd_divergence)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print("giftiga: error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
