"""Command-line front end: ``blin <command> ...``.

Exit codes: 0 success, 2 I/O or parse failure, 3 insufficient data,
4 validation failure, 5 strict-mode diagnostic failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import warnings

import numpy as np

from . import diagnostics as dg
from . import files, pipeline
from .belief import BeliefWarning, slots
from .errors import DataError, DiagnosticError, InsufficientDataError, ModelError, SpecificationError
from .exchangeable import gaussian_residual_spec, monte_carlo_fourth_moments, sample_covariance

EXIT_OK, EXIT_IO, EXIT_DATA, EXIT_INVALID, EXIT_STRICT = 0, 2, 3, 4, 5


def _fmt_matrix(mat, indent: str = "  ") -> str:
    mat = np.asarray(mat, dtype=float)
    return "\n".join(indent + " ".join(f"{x:12.4f}" for x in row) for row in mat)


def _emit(args, text: str) -> None:
    if getattr(args, "out", None):
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dump(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


def _tolerances(items) -> pipeline.Tolerances:
    names = {f.name for f in dataclasses.fields(pipeline.Tolerances)}
    values = {}
    problems = []
    for item in items or []:
        name, _, raw = item.partition("=")
        if name not in names:
            problems.append(f"unknown tolerance {name!r}; known: {', '.join(sorted(names))}")
            continue
        try:
            val = float(raw)
        except ValueError:
            problems.append(f"tolerance {name} has non-numeric value {raw!r}")
            continue
        if not val > 0:
            problems.append(f"tolerance {name} must be positive, got {raw}")
            continue
        values[name] = val
    if problems:
        raise SpecificationError("; ".join(problems), problems)
    return pipeline.Tolerances(**values)


def _seed(args) -> int | None:
    env = os.environ.get("BLIN_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise SpecificationError(f"BLIN_SEED must be an integer, got {env!r}") from None
    return args.seed


def _load_problem(args, tol: pipeline.Tolerances) -> pipeline.Problem:
    sf = files.load_spec(args.spec)
    s, n = sf.s, sf.n
    if args.data:
        batch = files.read_data(args.data)
        s = sample_covariance(batch)
        n = batch.n
    if args.n is not None:
        n = args.n
    if s is None:
        raise SpecificationError("no sample covariance: give --data or field 's' in the spec file")
    if n is None:
        raise SpecificationError("sample size unknown: give --n, --data or field 'n' in the spec file")
    return pipeline.build_problem(sf.spec, s, n, strict=args.strict, tol=tol, arcs=sf.arcs)


def cmd_sample_cov(args) -> int:
    batch = files.read_data(args.data)
    S = sample_covariance(batch)
    if args.format == "json":
        _emit(args, _dump({"n": batch.n, "r": batch.r, "sample_covariance": S.tolist()}))
    else:
        _emit(args, f"n = {batch.n}, r = {batch.r}\nsample covariance (divisor n-1):\n{_fmt_matrix(S)}\n")
    return EXIT_OK


def cmd_normal_spec(args) -> int:
    ev = files.read_matrix(args.ev)
    vp = files.read_matrix(args.vprime) if args.vprime else None
    frag = gaussian_residual_spec(ev, vp, strict=args.strict)
    doc = {
        "r": ev.shape[0],
        "v": frag.v.tolist(),
        "u": frag.u.tolist(),
        "v_prime": frag.v_prime.tolist(),
        "metadata": frag.metadata,
    }
    if args.mc_draws:
        seed = _seed(args)
        est, se = monte_carlo_fourth_moments(ev, args.mc_draws, seed)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(se > 0, np.abs(est - frag.u) / se, 0.0)
        doc["monte_carlo"] = {
            "draws": args.mc_draws,
            "seed": seed,
            "estimate": est.tolist(),
            "standard_error": se.tolist(),
            "max_abs_z": float(np.max(z)),
        }
    if args.format == "json":
        _emit(args, _dump(doc))
        return EXIT_OK
    pairs = ", ".join(f"({i + 1},{j + 1})" for i, j in slots(ev.shape[0]))
    lines = [
        f"Gaussian residual specification, r = {ev.shape[0]}",
        f"slot-pair order: {pairs}",
        "u = Cov(U, U):",
        _fmt_matrix(frag.u),
        "v = v_prime + u:",
        _fmt_matrix(frag.v),
        f"method: {frag.metadata['method']} ({frag.metadata['identity']})",
    ]
    if "monte_carlo" in doc:
        mc = doc["monte_carlo"]
        lines.append(f"Monte Carlo check: {mc['draws']} draws, seed {mc['seed']}, max |z| = {mc['max_abs_z']:.3f}")
    _emit(args, "\n".join(lines) + "\n")
    return EXIT_OK


def _adjust_text(report: dict) -> list[str]:
    lines = [
        f"r = {report['r']}, n = {report['n']}",
        "prior E(V):",
        _fmt_matrix(report["prior_expectation"]),
        "sample covariance S:",
        _fmt_matrix(report["sample_covariance"]),
    ]
    for adj in report["adjustments"]:
        eig = adj["eigen"]
        cond = eig["condition_number"]
        lines += [
            "",
            f"E_{adj['collection']}(V)    resolution {adj['resolution']:.6f}",
            _fmt_matrix(adj["matrix"]),
            "  eigenvalues: " + " ".join(f"{x:.4f}" for x in eig["eigenvalues"])
            + (f"   condition number {cond:.4g}" if cond is not None else "   condition number inf"),
        ]
        if eig["flagged"]:
            lines.append("  WARNING: negative eigenvalues; prior beliefs may conflict with the data")
    return lines


def _strict_check(args, report: dict) -> int:
    flagged = [a["collection"] for a in report["adjustments"] if a["eigen"]["flagged"]]
    if args.strict and flagged:
        print(f"error: negative eigenvalues in adjusted matrices for {', '.join(flagged)}", file=sys.stderr)
        return EXIT_STRICT
    return EXIT_OK


def cmd_adjust(args) -> int:
    tol = _tolerances(args.tol)
    choices = pipeline.parse_choices(args.collections)
    problem = _load_problem(args, tol)
    report = pipeline.run_adjust(problem, choices, tol)
    _emit(args, _dump(report) if args.format == "json" else "\n".join(_adjust_text(report)) + "\n")
    return _strict_check(args, report)


def cmd_resolve(args) -> int:
    tol = _tolerances(args.tol)
    choices = pipeline.parse_choices(args.collections)
    report = pipeline.run_resolve(_load_problem(args, tol), choices, tol)
    if args.format == "json":
        _emit(args, _dump(report))
        return EXIT_OK
    lines = [f"{'projection space':<22}{'res(V)':>10}{'+':>10}{'res(V_I)':>10}{'+':>10}"]
    for step in report["steps"]:
        lines.append(
            f"{' + '.join(step['collections']):<22}{step['resolution_V']:>10.4f}{step['increment_V']:>10.4f}"
            f"{step['resolution_V_I']:>10.4f}{step['increment_V_I']:>10.4f}"
        )
    _emit(args, "\n".join(lines) + "\n")
    return EXIT_OK


def _diagnose_report(args, tol) -> dict:
    choices = pipeline.parse_choices(args.collections)
    problem = _load_problem(args, tol)
    g_ref = files.read_matrix(args.g_ref) if args.g_ref else None
    return pipeline.run_diagnose(problem, choices, g_ref, strict=False, tol=tol)


def _fmt_ratio(x) -> str:
    return "undefined" if x is None else f"{x:.4f}"


def cmd_diagnose(args) -> int:
    tol = _tolerances(args.tol)
    report = _diagnose_report(args, tol)
    if args.format == "json":
        _emit(args, _dump(report))
    else:
        lines = _adjust_text(report) + ["", "stepwise adjustment of V:"]
        for step in report["stepwise"]:
            b = step["bearing"]
            ind = step["independence_V_S"]
            lines += [
                f"  by {' + '.join(step['collections'])}: resolution {step['resolution_V']:.4f} "
                f"(+{step['increment_V']:.4f}), V_I resolution {step['resolution_V_I']:.4f}",
                f"    bearing size {b['size']:.4f}, expected {b['expected_size']:.4f}, "
                f"ratio {_fmt_ratio(b['size_ratio'])} [{b['interpretation']}]",
                f"    (V - E_D V, S - E_D S) = {ind['inner_product']:.6g}"
                + ("  (conditionally independent)" if ind["independent"] else ""),
            ]
        lines.append("")
        lines.append("bearing of each collection alone:")
        for lab, b in report["collection_bearings"].items():
            lines.append(
                f"  {lab}: size {b['size']:.4f}, expected {b['expected_size']:.4f}, "
                f"ratio {_fmt_ratio(b['size_ratio'])} [{b['interpretation']}]"
            )
        for w in report["warnings"]:
            lines.append(f"WARNING: {w}")
        _emit(args, "\n".join(lines) + "\n")
    return _strict_check(args, report)


def cmd_diagram(args) -> int:
    tol = _tolerances(args.tol)
    arcs = None
    if args.report:
        report = files.read_report(args.report)
    elif args.spec:
        report = _diagnose_report(args, tol)
        arcs = files.load_spec(args.spec).arcs
    else:
        raise SpecificationError("diagram needs upstream results: give --report FILE or --spec FILE")
    model = pipeline.diagram_model(report, arcs)
    _emit(args, dg.diagram_export(model))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blin", description="Bayes linear adjustment of covariance matrices")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help="write output to FILE instead of stdout"):
        p.add_argument("--format", choices=("text", "json"), default="text")
        p.add_argument("--out", metavar="FILE", help=out_help)
        p.add_argument("--strict", action="store_true", help="treat advisory problems as failures")
        p.add_argument("--seed", type=int, default=None, help="random seed (BLIN_SEED overrides)")
        p.add_argument("--tol", action="append", metavar="NAME=VALUE", help="override a tolerance")

    def problem_args(p, spec_required=True):
        p.add_argument("--spec", required=spec_required, metavar="FILE", help="JSON specification file")
        p.add_argument("--data", metavar="FILE", help="CSV data; overrides 's' and 'n' in the spec")
        p.add_argument("--n", type=int, default=None, help="sample size override")
        p.add_argument("--collections", default="s,i,c", help="subset of s,i,c (default: s,i,c)")
        p.add_argument("--g-ref", dest="g_ref", metavar="FILE", help="reference matrix for bearings")

    p = sub.add_parser("sample-cov", help="sample covariance matrix of a CSV file")
    p.add_argument("--data", required=True, metavar="FILE")
    common(p)
    p.set_defaults(func=cmd_sample_cov)

    p = sub.add_parser("normal-spec", help="Gaussian-consistent residual fourth moments")
    p.add_argument("--ev", required=True, metavar="FILE", help="residual covariance matrix (JSON or CSV)")
    p.add_argument("--vprime", metavar="FILE", help="Cov(V, V) over slot pairs (JSON or CSV)")
    p.add_argument("--mc-draws", type=int, default=0, help="also check against N Monte Carlo draws")
    common(p)
    p.set_defaults(func=cmd_normal_spec)

    for name, func, text in (
        ("adjust", cmd_adjust, "adjusted expectations of V"),
        ("resolve", cmd_resolve, "stepwise resolutions of V and V_I"),
        ("diagnose", cmd_diagnose, "bearings, size ratios and independence checks"),
    ):
        p = sub.add_parser(name, help=text)
        problem_args(p)
        common(p)
        p.set_defaults(func=func)

    p = sub.add_parser("diagram", help="DOT influence diagram")
    problem_args(p, spec_required=False)
    p.add_argument("--report", metavar="FILE", help="JSON report from 'diagnose --format json'")
    common(p, "write DOT to FILE instead of stdout")
    p.set_defaults(func=cmd_diagram)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", BeliefWarning)
        try:
            code = args.func(args)
        except files.ParseError as exc:
            print(f"error: {exc}", file=sys.stderr)
            code = EXIT_IO
        except InsufficientDataError as exc:
            print(f"error: {exc}", file=sys.stderr)
            code = EXIT_DATA
        except DataError as exc:
            print(f"error: {exc}", file=sys.stderr)
            code = EXIT_IO
        except (SpecificationError, ModelError) as exc:
            violations = getattr(exc, "violations", [str(exc)])
            print("error: specification is invalid:", file=sys.stderr)
            for v in violations:
                print(f"  - {v}", file=sys.stderr)
            code = EXIT_INVALID
        except DiagnosticError as exc:
            print(f"error: {exc}", file=sys.stderr)
            code = EXIT_STRICT
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            code = EXIT_IO
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
