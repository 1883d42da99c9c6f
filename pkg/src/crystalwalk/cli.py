"""Command-line entry point.

Exit codes: 0 success, 1 validation failure, 2 computational error,
64 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
import time
import warnings
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import __version__
from ._jsonio import dumps, format_float
from .albanese import LatticeAnalysis, analyze, export_realization
from .errors import CrystalWalkError, GraphFormatError, ParameterError
from .heat_kernel import (a1_numeric, admissible, exact_transition, lclt_ratio, lclt_sup_error,
                          transition_series)
from .lattice_core import BUILTIN_KEYS, QuotientGraph, build_builtin, read_graph, save_graph, validate
from .montecarlo import clt_report, fourth_moment_constant, sample_paths
from .perturbation import a1_terms, eigen_derivatives

SCHEMA = "crystalwalk/1"
EXIT_OK, EXIT_INVALID, EXIT_COMPUTE, EXIT_USAGE = 0, 1, 2, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---- argument helpers -------------------------------------------------------

def parse_params(text: str | None) -> dict[str, float]:
    out: dict[str, float] = {}
    if not text:
        return out
    for item in text.split(","):
        if not item.strip():
            continue
        if "=" not in item:
            raise UsageError(f"malformed --params entry {item!r} (expected key=value)")
        key, val = (s.strip() for s in item.split("=", 1))
        try:
            out[key] = float(Fraction(val))
        except (ValueError, ZeroDivisionError):
            raise UsageError(f"cannot parse value for {key!r}: {val!r}") from None
    return out


def parse_ints(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def parse_floats(text: str) -> list[float]:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def parse_window(text: str, dim: int) -> list[tuple[int, int]]:
    parts = [p for p in text.split(",") if p.strip()]
    if len(parts) == 1 and dim > 1:
        parts = parts * dim
    if len(parts) != dim:
        raise UsageError(f"window needs {dim} ranges lo:hi, got {text!r}")
    out = []
    for p in parts:
        lo, sep, hi = p.partition(":")
        try:
            out.append((int(lo), int(hi if sep else lo)))
        except ValueError:
            raise UsageError(f"malformed window range {p!r}") from None
    return out


def _cell(text: str | None, dim: int) -> tuple[int, ...]:
    if not text:
        return (0,) * dim
    cell = tuple(parse_ints(text))
    if len(cell) != dim:
        raise UsageError(f"cell {text!r} must have {dim} coordinates")
    return cell


def load_source(args) -> QuotientGraph:
    if args.input and args.lattice:
        raise UsageError("give exactly one of --lattice or --input")
    if args.input:
        return read_graph(args.input)
    if not args.lattice:
        raise UsageError("a lattice source is required (--lattice NAME or --input PATH)")
    return build_builtin(args.lattice, parse_params(args.params))


def _report(args, payload: dict, started: float) -> dict:
    config = {k: v for k, v in vars(args).items() if k != "func"}
    return {"schema": SCHEMA, "version": __version__, "command": args.command,
            "config": config, "wall_time_s": time.perf_counter() - started, **payload}


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _cell_text(cell) -> str:
    return "[" + ",".join(str(int(c)) for c in cell) + "]"


def _analysis(args, g: QuotientGraph, refine: bool = True) -> LatticeAnalysis:
    return analyze(g, refine=refine, search_depth=args.depth)


def analysis_payload(A: LatticeAnalysis) -> dict:
    ref = A.refinement
    return {
        "period": {"K": A.period_K, "K0": ref.quotient_period_K0},
        "refinement": {**ref.sidecar(), "coset_reps": [list(c) for c in ref.coset_reps]},
        "analysed_graph": save_graph(A.graph),
        "measure": A.measure.as_dict(),
        "measure_residual": A.measure.residual,
        "asymptotic_direction": A.rho,
        "realization": {"base_vertex": A.realization.base_vertex,
                        "positions": {v: A.realization.positions[i]
                                      for i, v in enumerate(A.graph.vertices)},
                        "residual": A.realization.residual},
        "gram": A.albanese.gram,
        "metric": A.albanese.metric,
        "volume": A.albanese.volume,
        "embedding": A.albanese.embedding,
    }


# ---- commands -----------------------------------------------------------------

def cmd_validate(args, started):
    g = load_source(args)
    rep = validate(g)
    _emit(dumps(_report(args, {"valid": rep.ok, "violations": rep.violations}, started)) + "\n",
          args.output)
    return EXIT_OK if rep.ok else EXIT_INVALID


def cmd_analyze(args, started):
    g = load_source(args)
    A = _analysis(args, g, refine=not args.no_refine)
    payload = {"graph": save_graph(g), **analysis_payload(A)}
    _emit(dumps(_report(args, payload, started)) + "\n", args.output)
    return EXIT_OK


def cmd_realize(args, started):
    g = load_source(args)
    A = _analysis(args, g, refine=args.refine)
    window = parse_window(args.window, A.dim)
    points, edges = export_realization(A, window)
    axes = ["x", "y", "z"] + [f"x{i}" for i in range(4, A.dim + 1)]
    header = ["vertex", "cell"] + axes[:A.dim]
    rows = [[v, _cell_text(c)] + [format_float(x) for x in xs] for v, c, xs in points]
    if args.format == "json":
        payload = {"points": [{"vertex": v, "cell": list(c), "coords": xs} for v, c, xs in points],
                   "edges": edges}
        _emit(dumps(_report(args, payload, started)) + "\n", args.output)
        return EXIT_OK
    if args.output:
        os.makedirs(args.output, exist_ok=True)
        _emit(_csv(header, rows), os.path.join(args.output, "points.csv"))
        _emit(_csv(["from_row", "to_row"], edges), os.path.join(args.output, "edges.csv"))
    else:
        _emit(_csv(header, rows), None)
    return EXIT_OK


def cmd_heat(args, started):
    g = load_source(args)
    A = _analysis(args, g, refine=not args.no_refine)
    start = A.resolve_vertex(args.start or A.graph.base_vertex)
    table = exact_transition(A, start, args.n)
    if args.format == "json":
        payload = {"n": args.n, "start": start, "total_mass": table.total(),
                   "mass": [{"vertex": v, "cell": list(t), "p": p} for v, t, p in table.items()]}
        _emit(dumps(_report(args, payload, started)) + "\n", args.output)
    else:
        rows = [[v, *t, format_float(p)] for v, t, p in table.items()]
        header = ["vertex"] + [f"cell_{i + 1}" for i in range(A.dim)] + ["p"]
        _emit(_csv(header, rows), args.output)
    return EXIT_OK


def cmd_lclt(args, started):
    g = load_source(args)
    A = _analysis(args, g)
    start = A.resolve_vertex(args.start or A.graph.base_vertex)
    x = (start, (0,) * A.dim)
    y = (A.resolve_vertex(args.target or start), _cell(args.target_cell, A.dim))
    window = parse_window(args.window, A.dim)
    series = []
    for table in transition_series(A, start, parse_ints(args.n_list)):
        n = table.n
        u = lclt_ratio(A, n, x, y, table) if admissible(A, n, x, y) else None
        series.append({"n": n, "U_n": u, "sup_error": lclt_sup_error(A, n, window, start, table)})
    if args.format == "csv":
        rows = [[s["n"], "" if s["U_n"] is None else format_float(s["U_n"]),
                 format_float(s["sup_error"])] for s in series]
        _emit(_csv(["n", "U_n", "sup_error"], rows), args.output)
    else:
        _emit(dumps(_report(args, {"series": series}, started)) + "\n", args.output)
    return EXIT_OK


def _default_n_list(A: LatticeAnalysis, x, y) -> list[int]:
    K = A.period_K
    r = (A.labels[y[0]] - A.labels[x[0]]) % K
    return [n + (r - n) % K for n in (64, 128, 256)]


def cmd_a1(args, started):
    g = load_source(args)
    A = _analysis(args, g)
    x = (A.resolve_vertex(args.x or A.graph.base_vertex), _cell(args.x_cell, A.dim))
    y = (A.resolve_vertex(args.y or x[0]), _cell(args.y_cell, A.dim))
    n_list = parse_ints(args.n_list) if args.n_list else _default_n_list(A, x, y)

    def y_of_n(n):
        shift = np.rint(n * A.rho).astype(int)
        return (y[0], tuple(int(a + b) for a, b in zip(y[1], shift)))

    n_ref = max(n_list)
    record: dict = {"coordinates": {"x": [x[0], list(x[1])], "y": [y[0], list(y[1])],
                                    "n": n_ref, "z": A.displacement(x, y_of_n(n_ref), n_ref),
                                    "frame": "albanese-orthonormal"}}
    residuals: dict = {}
    if args.mode in ("analytic", "both"):
        P = eigen_derivatives(A)
        derived = a1_terms(A, P, x, y_of_n(n_ref), n_ref)
        printed = a1_terms(A, P, x, y_of_n(n_ref), n_ref, form="printed")
        record["a1_analytic"] = derived.value
        record["a1_analytic_terms"] = derived.terms
        record["a1_printed_form"] = printed.value
        residuals["linear_systems"] = P.system_residual
        residuals["side_conditions"] = P.side_residuals
        residuals["lambda3_routes"] = float(np.abs(P.lam3 - P.lam3_phi).max())
    if args.mode in ("numeric", "both"):
        zs = [A.displacement(x, y_of_n(n), n) for n in n_list]
        residuals["z_spread"] = float(max(np.abs(z - zs[0]).max() for z in zs))
        with warnings.catch_warnings(record=True):
            warnings.simplefilter("always")
            est = a1_numeric(A, x, None, n_list, y_of_n=y_of_n)
        record["a1_numeric"] = est.value
        record["numeric"] = {"method": est.method, "n_list": list(est.n_list),
                             "U_n": list(est.u_values), "f_n": list(est.f_values),
                             "warning": est.warning}
        residuals["numeric_fit"] = est.residual
    if args.mode == "both":
        record["difference"] = record["a1_analytic"] - record["a1_numeric"]
    record["residuals"] = residuals
    _emit(dumps(_report(args, record, started)) + "\n", args.output)
    return EXIT_OK


def cmd_clt(args, started):
    g = load_source(args)
    A = _analysis(args, g)
    mode = {"first": "first_kind", "second": "second_kind"}[args.mode]
    S = sample_paths(A, args.n, parse_floats(args.t), args.paths, args.seed, mode)
    rep = clt_report(S, A, mode)
    payload = {"report": rep.as_dict(), "fourth_moment_constant": fourth_moment_constant(S)}
    _emit(dumps(_report(args, payload, started)) + "\n", args.output)
    if args.samples:
        rows = []
        for i, t in enumerate(S.t_values):
            for k in range(S.n_paths):
                rows.append([format_float(t), k] + [format_float(v) for v in S.scaled_points[i, k]])
        header = ["t", "path"] + [f"x{i + 1}" for i in range(A.dim)]
        _emit(_csv(header, rows), args.samples)
    return EXIT_OK


# ---- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="crystalwalk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p):
        p.add_argument("--lattice", choices=sorted(BUILTIN_KEYS))
        p.add_argument("--params", help="k=v,... e.g. alpha=0.25,alpha_p=0.25")
        p.add_argument("--input", help="quotient-graph JSON document")
        p.add_argument("--output", help="output path (default stdout)")
        p.add_argument("--depth", type=int, help="lifted-period search depth")

    p = sub.add_parser("validate", help="check graph invariants")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("analyze", help="period, refinement, measure and Albanese geometry")
    common(p)
    p.add_argument("--no-refine", action="store_true")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("realize", help="export the standard realization")
    common(p)
    p.add_argument("--window", default="0:0", help="lo:hi per dimension, comma separated")
    p.add_argument("--refine", action="store_true", help="realize the refined quotient")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(func=cmd_realize)

    p = sub.add_parser("heat", help="exact n-step transition table")
    common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--start")
    p.add_argument("--no-refine", action="store_true")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(func=cmd_heat)

    p = sub.add_parser("lclt", help="LCLT ratio and sup-error series")
    common(p)
    p.add_argument("--n-list", default="16,64,200")
    p.add_argument("--start")
    p.add_argument("--target")
    p.add_argument("--target-cell")
    p.add_argument("--window", default="-3:3",
                   help="lo:hi per dimension around n·ρ; use --window=-2:2 for negative bounds")
    p.add_argument("--format", choices=["csv", "json"], default="json")
    p.set_defaults(func=cmd_lclt)

    p = sub.add_parser("a1", help="analytic and/or numeric a1")
    common(p)
    p.add_argument("--mode", choices=["analytic", "numeric", "both"], default="both")
    p.add_argument("--x")
    p.add_argument("--x-cell")
    p.add_argument("--y")
    p.add_argument("--y-cell")
    p.add_argument("--n-list")
    p.set_defaults(func=cmd_a1)

    p = sub.add_parser("clt", help="Monte Carlo CLT check")
    common(p)
    p.add_argument("--mode", choices=["first", "second"], default="first")
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--t", default="0.25,0.5,1")
    p.add_argument("--paths", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", help="optional per-sample CSV path")
    p.set_defaults(func=cmd_clt)
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    started = time.perf_counter()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("a subcommand is required")
        return args.func(args, started)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GraphFormatError, ParameterError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (CrystalWalkError, np.linalg.LinAlgError, ArithmeticError, MemoryError) as exc:
        print(f"computational error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
