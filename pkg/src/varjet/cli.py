"""Command-line entry point: ``varjet derive | check | simulate``."""
from __future__ import annotations

import argparse
import json
import os
import random
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import checks, dsl, fuzz, var_calc
from .jet_expr import DegenerateExpressionError, Problem, ProblemError, UnsupportedTierError

EXIT_PARSE, EXIT_DERIVE, EXIT_IDENTITY, EXIT_DEGENERATE, EXIT_INIT = 1, 2, 3, 4, 5
TARGETS = ("el", "jacobi", "l1", "l2", "momenta", "emt") + tuple(
    f"ibp:{v}" for v in var_calc.IBP_VARIANTS)


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def load_problem(path: str) -> Problem:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_PARSE) from None
    try:
        return dsl.parse_problem(text, Path(path).stem)
    except ProblemError as exc:
        raise CliError(f"{path}:{exc}", EXIT_PARSE) from None


def _idx(index) -> str:
    return "".join(str(i) for i in index)


def derive_entries(p: Problem, what: str) -> list:
    """``(label, Expr)`` pairs for one derivation target."""
    names = p.field_names
    if what == "el":
        return list(zip(names, var_calc.euler_lagrange(p)))
    if what == "jacobi":
        return list(zip(names, var_calc.jacobi_direct(p)))
    if what == "l1":
        return [("L1", var_calc.l1(p))]
    if what == "l2":
        return [("L2", var_calc.l2(p))]
    if what == "momenta":
        mom = var_calc.momenta(p)
        out = []
        for sym, table in (("pi", mom.pi), ("N", mom.N), ("p", mom.p), ("n", mom.n)):
            for (A, idx), e in sorted(table.items()):
                out.append((f"{sym}[{names[A]}]^{_idx(idx if isinstance(idx, tuple) else (idx,))}", e))
        return out
    if what == "emt":
        H = var_calc.energy_momentum(p)
        return [(f"H^{mu}_{nu}", H[mu, nu]) for mu in range(p.n) for nu in range(p.n)]
    if what.lower().startswith("ibp:"):
        form = var_calc.ibp_form(p, what[4:])
        return [("bulk", form.bulk)] + [(f"current^{mu}", c)
                                        for mu, c in enumerate(form.current)]
    raise CliError(f"unknown target {what!r}; choose from {', '.join(TARGETS)}", EXIT_DERIVE)


def cmd_derive(args) -> int:
    p = load_problem(args.file)
    try:
        entries = derive_entries(p, args.what)
    except (ValueError, UnsupportedTierError, DegenerateExpressionError) as exc:
        raise CliError(f"derivation failed: {exc}", EXIT_DERIVE) from None
    if args.format == "json":
        doc = {"problem": p.name, "what": args.what,
               "fields": [{"field": label, "expr": dsl.format_expr(e, "sexp")}
                          for label, e in entries]}
        print(json.dumps(doc, indent=2))
    else:
        for label, e in entries:
            print(f"{label}: {dsl.format_expr(e, args.format, p.field_names)}")
    return 0


def cmd_check(args) -> int:
    seed = int(os.environ.get("VARJET_SEED", "0"))
    failed = False
    if args.random:
        rng = random.Random(seed)
        for i in range(args.random):
            p = fuzz.random_problem(rng, name=f"random{i}")
            results = checks.run_suite(p, seed=seed + i)
            bad = [r for r in results if not r.ok]
            failed |= bool(bad)
            label = f"random[{i}] {dsl.format_expr(p.lagrangian, 'plain', p.field_names)}"
            if bad:
                for r in bad:
                    print(f"FAIL {label}: {r.name}" + (f" ({r.detail})" if r.detail else ""))
            else:
                print(f"PASS {label}")
    if args.file:
        for path in args.file:
            p = load_problem(path)
            for r in checks.run_suite(p, seed=seed):
                failed |= not r.ok
                print(f"{r.line()} [{p.name}]")
    if not args.file and not args.random:
        raise CliError("nothing to check: give a problem file or --random K", EXIT_PARSE)
    return EXIT_IDENTITY if failed else 0


def _parse_params(items: Sequence[str]) -> dict:
    out = {}
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep:
            raise CliError(f"--param expects name=value, got {item!r}", EXIT_PARSE)
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise CliError(f"bad value in --param {item!r}", EXIT_PARSE) from None
    return out


def _read_init(source: str) -> object:
    text = Path(source).read_text(encoding="utf-8") if os.path.isfile(source) else source
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"--init is not valid JSON: {exc}", EXIT_INIT) from None


def cmd_simulate(args) -> int:
    from . import numerics  # scipy is only needed for simulation

    p = load_problem(args.file)
    params = _parse_params(args.param)
    unknown = set(params) - set(p.parameters)
    if unknown:
        raise CliError(f"unknown parameter(s): {', '.join(sorted(unknown))}", EXIT_PARSE)
    try:
        system = numerics.build_ode(p, numerics.lagrangian_equations(p, args.doubled), params)
    except numerics.DegenerateSystemError as exc:
        raise CliError(str(exc), EXIT_DEGENERATE) from None
    except numerics.UnboundAtomError as exc:
        raise CliError(str(exc), EXIT_INIT) from None
    except (ValueError, ArithmeticError) as exc:
        raise CliError(f"cannot build the equations of motion: {exc}", EXIT_DERIVE) from None

    init = _read_init(args.init) if args.init else {}
    if isinstance(init, list):
        if len(init) != system.dim:
            raise CliError(f"--init list needs {system.dim} values: {', '.join(system.names)}",
                           EXIT_INIT)
        y0 = [float(v) for v in init]
    elif isinstance(init, dict):
        missing = [n for n in system.names if n not in init]
        if missing:
            raise CliError(f"missing initial data for: {', '.join(missing)}", EXIT_INIT)
        y0 = [float(init[n]) for n in system.names]
    else:
        raise CliError("--init must be a JSON object or list", EXIT_INIT)

    try:
        traj = numerics.integrate(system, y0, args.t0, args.t1, args.dt)
        extra = {}
        if args.doubled:
            report = numerics.conservation_check(p, traj, system, params)
            extra["H00"] = report.energy
            print(f"drift {report.drift:.6e} (H00 at t0 = {report.energy[0]:.17g})",
                  file=sys.stderr)
    except numerics.DegenerateSystemError as exc:
        raise CliError(str(exc), EXIT_DEGENERATE) from None
    except numerics.InapplicableError as exc:
        raise CliError(str(exc), EXIT_DERIVE) from None
    except (ValueError, ArithmeticError) as exc:
        raise CliError(f"integration failed: {exc}", EXIT_DERIVE) from None

    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            traj.to_csv(fh, extra)
    else:
        traj.to_csv(sys.stdout, extra)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="varjet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    d = sub.add_parser("derive", help="print a derived expression")
    d.add_argument("file")
    d.add_argument("--what", default="el", metavar="TARGET",
                   help="one of " + ", ".join(TARGETS))
    d.add_argument("--format", default="plain", choices=("plain", "latex", "json"))
    d.set_defaults(func=cmd_derive)

    c = sub.add_parser("check", help="run the exact identity suite")
    c.add_argument("file", nargs="*")
    c.add_argument("--random", type=int, default=0, metavar="K",
                   help="also check K random Lagrangians (seed from VARJET_SEED)")
    c.set_defaults(func=cmd_check)

    s = sub.add_parser("simulate", help="integrate a one-dimensional problem with RK4")
    s.add_argument("file")
    s.add_argument("--t0", type=float, default=0.0)
    s.add_argument("--t1", type=float, default=10.0)
    s.add_argument("--dt", type=float, default=1e-3)
    s.add_argument("--init", help="JSON object (column name -> value), list, or file path")
    s.add_argument("--doubled", action="store_true",
                   help="integrate fields and deformations together and report H^0_0")
    s.add_argument("--param", action="append", metavar="NAME=VALUE")
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"varjet: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
