"""Command-line interface: ``gradcode <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 infeasible parameters,
4 cap exceeded in strict mode, 1 anything else.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Iterable, Sequence

from .codes import (
    BIBD_CATALOG,
    EncodingMatrix,
    build,
    descriptor_from_dict,
    descriptor_from_json,
    descriptor_label,
    descriptor_to_dict,
    validate,
)
from .errors import CapExceeded, ConfigError, GradCodeError, Infeasible, InternalInconsistency, NumericalFailure
from .probbibd import DECODERS as MC_DECODERS
from .probbibd import expected_error_mc, solve_distribution
from .sim import REDUNDANCY_TOLERANCE, fractional_redundancy, redundancy_mismatch, report_csv, report_json, run_experiment
from .worstcase import CURVE_COLUMNS, error_curve

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_CAP = 4

COMPARE_COLUMNS = ("fraction_straggled", "code", "s", "measured_error", "method", "formula_or_bound",
                   "bound_name", "fractional_redundancy", "redundancy_mismatch")
MC_COLUMNS = ("n", "k", "l", "lambda", "s", "trials", "decoder", "mean", "stderr", "bound")


def parse_descriptor(text: str):
    """A catalog name, a path to a JSON file, or inline JSON."""
    if text in BIBD_CATALOG:
        return descriptor_from_dict(text)
    path = Path(text)
    if not text.lstrip().startswith(("{", "\"")) and path.is_file():
        return descriptor_from_json(path.read_text())
    return descriptor_from_json(text)


def parse_s_values(spec: str | None, n: int) -> list[int]:
    """'all', 'a-b', comma lists; entries with a decimal point are fractions of n."""
    if spec is None or spec == "all":
        return list(range(n + 1))
    out: list[int] = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part[1:]:
                lo, hi = part.split("-", 1)
                out.extend(range(int(lo), int(hi) + 1))
            elif "." in part:
                out.append(int(round(float(part) * n)))
            else:
                out.append(int(part))
        except ValueError:
            raise ConfigError(f"cannot parse straggler count {part!r}") from None
    seen = []
    for s in out:
        if not 0 <= s <= n:
            raise ConfigError(f"straggler count {s} outside [0, {n}]")
        if s not in seen:
            seen.append(s)
    return seen


def _fmt(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v


def render(rows: Sequence[dict], columns: Sequence[str], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(list(rows), indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for row in rows:
        w.writerow({key: _fmt(row.get(key, "")) for key in columns})
    return buf.getvalue()


def _write(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_construct(args) -> int:
    desc = parse_descriptor(args.descriptor)
    g = build(desc)
    report = validate(g).to_dict()
    report["descriptor"] = descriptor_to_dict(desc)
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.output:
        _write(g.to_text(), args.output)
        _write(text, args.report or args.output + ".report.json")
    else:
        sys.stdout.write(g.to_text())
        if args.report:
            _write(text, args.report)
        else:
            sys.stderr.write(text)
    return EXIT_OK


def _load_matrix_or_descriptor(text: str) -> EncodingMatrix:
    path = Path(text)
    if path.is_file():
        content = path.read_text()
        if content.lstrip().startswith("{"):
            return build(descriptor_from_json(content))
        return EncodingMatrix.from_text(content)
    return build(parse_descriptor(text))


def cmd_validate(args) -> int:
    g = _load_matrix_or_descriptor(args.target)
    _write(json.dumps(validate(g).to_dict(), indent=2, sort_keys=True) + "\n", args.output)
    return EXIT_OK


def _curve_rows(desc, s_spec, args) -> list[dict]:
    g = build(desc)
    s_values = parse_s_values(s_spec, g.n)
    recs = error_curve(g, s_values, method=args.method, trials=args.trials, seed=args.seed,
                       cap=args.cap, descriptor=desc, strict=args.strict,
                       exact=args.exact)
    rows = [rec.row() for rec in recs]
    if any(rec.downgraded for rec in recs):
        print("warning: some rows exceeded the subset cap and were sampled instead", file=sys.stderr)
    return rows


def cmd_error_curve(args) -> int:
    desc = parse_descriptor(args.descriptor)
    rows = _curve_rows(desc, args.s, args)
    _write(render(rows, CURVE_COLUMNS, args.format), args.output)
    return EXIT_OK


def compare_rows(descs: Sequence, s_spec: str | None, args, tolerance: float = REDUNDANCY_TOLERANCE) -> list[dict]:
    fr = [fractional_redundancy(build(d)) for d in descs]
    mismatch = redundancy_mismatch(fr, tolerance)
    rows = []
    for desc, red in zip(descs, fr):
        for row in _curve_rows(desc, s_spec, args):
            rows.append({
                "fraction_straggled": row["fraction_straggled"],
                "code": descriptor_label(desc),
                "s": row["s"],
                "measured_error": row["measured_error"],
                "method": row["method"],
                "formula_or_bound": row["formula_or_bound"],
                "bound_name": row["bound_name"],
                "fractional_redundancy": red,
                "redundancy_mismatch": mismatch,
            })
    rows.sort(key=lambda r: (r["fraction_straggled"], r["code"]))
    return rows


def cmd_compare(args) -> int:
    descs = [parse_descriptor(d) for d in args.descriptors]
    rows = compare_rows(descs, args.s, args, args.tolerance)
    if rows and rows[0]["redundancy_mismatch"]:
        print("warning: codes differ in fractional redundancy by more than "
              f"{args.tolerance}; the comparison is not matched", file=sys.stderr)
    _write(render(rows, COMPARE_COLUMNS, args.format), args.output)
    return EXIT_OK


def cmd_mc_expected(args) -> int:
    dist = solve_distribution(args.n, args.k, args.l, args.lam)
    s_values = parse_s_values(args.s, args.n)
    rows = []
    for s in s_values:
        res = expected_error_mc(dist, args.k, s, args.trials, args.seed, args.decoder)
        rows.append({"n": args.n, "k": args.k, "l": args.l, "lambda": args.lam, "s": s, "trials": args.trials,
                     "decoder": args.decoder, "mean": res.mean, "stderr": res.stderr, "bound": res.bound})
    _write(render(rows, MC_COLUMNS, args.format), args.output)
    return EXIT_OK


def cmd_simulate(args) -> int:
    path = Path(args.config)
    text = path.read_text() if path.is_file() else args.config
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config JSON: {exc}") from None
    report = run_experiment(config)
    if args.output:
        Path(args.output + ".json").write_text(report_json(report) + "\n")
        Path(args.output + ".csv").write_text(report_csv(report))
    elif args.format == "csv":
        sys.stdout.write(report_csv(report))
    else:
        sys.stdout.write(report_json(report) + "\n")
    if report["redundancy_mismatch"]:
        print("warning: codes differ in fractional redundancy", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, search: bool = True) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("-o", "--output", default=None, help="output path (default: stdout)")
    if search:
        p.add_argument("--trials", type=int, default=10_000, help="random straggler sets per s when sampling")
        p.add_argument("--cap", type=int, default=None, help="max straggler sets to enumerate (env GRADCODE_CAP)")
        p.add_argument("--strict", action="store_true", help="fail with exit code 4 instead of sampling over the cap")
        p.add_argument("--method", choices=("auto", "exhaustive", "sampled"), default="auto")
        p.add_argument("--exact", action="store_true", help="rational arithmetic for exhaustive rows")
        p.add_argument("--s", default=None, help="straggler counts: 'all', '0-7', '1,3,5' or fractions like '0.25'")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gradcode", description="Gradient codes under worst-case stragglers.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("construct", help="build an encoding matrix and its validation report")
    p.add_argument("descriptor", help="catalog name, JSON descriptor, or path to one")
    p.add_argument("-o", "--output", default=None)
    p.add_argument("--report", default=None, help="report path (default: <output>.report.json or stderr)")
    p.set_defaults(func=cmd_construct)

    p = sub.add_parser("validate", help="report weights and intersections of a matrix file or descriptor")
    p.add_argument("target")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("error-curve", help="worst-case error against the closed form per straggler count")
    p.add_argument("descriptor")
    _common(p)
    p.set_defaults(func=cmd_error_curve)

    p = sub.add_parser("compare", help="joint error curves keyed by fraction of stragglers")
    p.add_argument("descriptors", nargs="+")
    p.add_argument("--tolerance", type=float, default=REDUNDANCY_TOLERANCE,
                   help="largest fractional-redundancy gap still considered matched")
    _common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("mc-expected", help="Monte-Carlo expected error of a probabilistic BIBD code")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--l", type=int, required=True)
    p.add_argument("--lambda", dest="lam", type=int, required=True)
    p.add_argument("--s", default=None)
    p.add_argument("--decoder", choices=MC_DECODERS, default="optimal")
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_mc_expected)

    p = sub.add_parser("simulate", help="coded gradient descent from a JSON config")
    p.add_argument("config", help="JSON text or path")
    p.add_argument("-o", "--output", default=None, help="prefix for <prefix>.json and <prefix>.csv")
    p.add_argument("--format", choices=("csv", "json"), default="json")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Iterable[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(None if argv is None else list(argv))
    if args.command == "compare" and len(args.descriptors) < 2:
        parser.error("compare needs at least two descriptors")
    if getattr(args, "trials", 1) < 1:
        parser.error("--trials must be positive")
    try:
        return args.func(args)
    except CapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except Infeasible as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NumericalFailure, InternalInconsistency) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except GradCodeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
