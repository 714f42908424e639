"""Command-line front-end.

Subcommands: gen-mixed, verify, verify-mixed, normalize, approximate,
compose, distance, constants, oracle.  Every invocation is deterministic
given its flags and seeds: reports are key=value lines on stdout (or one
JSON object with --json), map files are written only to --out, and exit
codes are 0 success, 1 usage or parse error, 2 validation failure,
3 budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from fractions import Fraction

from . import mapfile
from .errors import BudgetExceededError, TreeQIError, ValidationFailure
from .mixed_builder import MixedPolicy, build_mixed, verify_mixed_structure
from .oracle import oracle_measure
from .qi_map import (
    DEFAULT_MAX_PAIRS,
    PairSource,
    check_geodesic_image,
    check_same_depth,
    coarse_surjectivity_radius,
    compose,
    is_order_preserving,
    sup_distance,
    verify_map,
)
from .tree_core import DEFAULT_VERTEX_BUDGET, TreeShape, format_address
from .transforms import (
    PromiseWarning,
    approximate_by_mixed,
    constants,
    normalize_order_preserving,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_BUDGET = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); the contract wants 1
        raise UsageError(message)


def _parse_C(text: str) -> Fraction:
    try:
        c = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"--C must be a rational like 2 or 5/2 or 2.5, got {text!r}") from None
    if c < 1:
        raise UsageError("--C must be >= 1")
    return c


def _parse_pairs(text: str, seed: int) -> PairSource:
    if text == "exhaustive":
        return PairSource.exhaustive()
    if text.startswith("sampled:"):
        try:
            count = int(text.removeprefix("sampled:"))
        except ValueError:
            raise UsageError(f"bad --pairs value {text!r}") from None
        if count < 0:
            raise UsageError("sample count must be >= 0")
        return PairSource.sampled(count, seed)
    raise UsageError(f"--pairs must be 'exhaustive' or 'sampled:<n>', got {text!r}")


def _policy(args) -> MixedPolicy:
    if args.policy == "minimal":
        return MixedPolicy.minimal()
    if args.policy == "deepest":
        return MixedPolicy.deepest_feasible()
    return MixedPolicy.random(args.seed)


def _emit(lines: list[str], json_dict: dict | None, as_json: bool) -> None:
    if as_json and json_dict is not None:
        print(json.dumps(json_dict, sort_keys=True, separators=(",", ":")))
    else:
        for ln in lines:
            print(ln)


def _collect_warnings(record) -> list[str]:
    return [f"warning={w.message}" for w in record if issubclass(w.category, PromiseWarning)]


def cmd_gen_mixed(args) -> int:
    shape = TreeShape(args.degree)
    m, trace = build_mixed(shape, args.D, args.levels, _policy(args), budget=args.max_vertices)
    mapfile.write_map_file(m, args.out)
    if args.trace_out:
        mapfile.write_trace_file(trace, args.trace_out)
    lines = [
        f"wrote={args.out}",
        f"degree={shape.degree}",
        f"D={args.D}",
        f"levels={args.levels}",
        f"radius={m.domain_radius}",
        f"policy={trace.policy}",
        f"vertices={len(m.domain)}",
    ]
    _emit(
        lines,
        {
            "wrote": str(args.out),
            "degree": shape.degree,
            "D": args.D,
            "levels": args.levels,
            "radius": m.domain_radius,
            "policy": trace.policy,
            "vertices": len(m.domain),
        },
        args.json,
    )
    return EXIT_OK


def cmd_verify(args) -> int:
    m = mapfile.parse_map_file(args.infile, args.max_vertices)
    source = _parse_pairs(args.pairs, args.seed)
    candidate = _parse_C(args.C) if args.C is not None else None
    report = verify_map(
        m,
        source,
        candidate_C=candidate,
        target_radius=args.target_radius,
        max_pairs=DEFAULT_MAX_PAIRS,
        budget=args.max_vertices,
    )
    if candidate is not None:
        # the candidate constant also gates the geodesic-image coverage and,
        # for order-preserving maps, the same-depth nesting property
        extra = check_geodesic_image(m, candidate, source)
        if report.order_preserving:
            extra.extend(check_same_depth(m, candidate))
        report.violations.extend(extra)
        report.violations_total += len(extra)
    _emit(report.to_lines("verify"), report.to_json_dict("verify"), args.json)
    return EXIT_OK


def cmd_verify_mixed(args) -> int:
    m = mapfile.parse_map_file(args.infile, args.max_vertices)
    report = verify_mixed_structure(m, args.D)
    _emit(report.to_lines(), report.to_json_dict(), args.json)
    return EXIT_OK if report.passed else EXIT_VALIDATION


def cmd_normalize(args) -> int:
    f = mapfile.parse_map_file(args.infile, args.max_vertices)
    c = _parse_C(args.C)
    with warnings.catch_warnings(record=True) as record:
        warnings.simplefilter("always", PromiseWarning)
        g = normalize_order_preserving(f, c)
    mapfile.write_map_file(g, args.out)
    bound = 3 * c**3 + 2 * c
    sup = sup_distance(f, g)
    ok, _ = is_order_preserving(g)
    lines = [
        f"wrote={args.out}",
        f"C={c}",
        f"bound={bound}",
        f"sup_distance={sup}",
        f"order_preserving={'true' if ok else 'false'}",
    ]
    warn_lines = _collect_warnings(record)
    lines.extend(warn_lines)
    _emit(
        lines,
        {
            "wrote": str(args.out),
            "C": str(c),
            "bound": str(bound),
            "sup_distance": sup,
            "order_preserving": ok,
            "warnings": [str(w.message) for w in record],
        },
        args.json,
    )
    return EXIT_OK


def cmd_approximate(args) -> int:
    g = mapfile.parse_map_file(args.infile, args.max_vertices)
    c = _parse_C(args.C)
    with warnings.catch_warnings(record=True) as record:
        warnings.simplefilter("always", PromiseWarning)
        f, bundle, trace = approximate_by_mixed(g, c, args.D_override)
    mapfile.write_map_file(f, args.out)
    if args.trace_out:
        mapfile.write_trace_file(trace, args.trace_out)
    sup = sup_distance(f, g)
    lines = [
        f"wrote={args.out}",
        f"C={bundle.C}",
        f"K={bundle.K_samedepth}",
        f"D_guaranteed={bundle.D_guaranteed}",
        f"D_used={bundle.D_used}",
        f"levels={f.domain_radius // bundle.D_used}",
        f"covered_radius={f.domain_radius}",
        f"final_bound={bundle.final_bound}",
        f"sup_distance={sup}",
        "validation=pass",
    ]
    lines.extend(_collect_warnings(record))
    _emit(
        lines,
        {
            "wrote": str(args.out),
            "bundle": bundle.to_json_dict(),
            "covered_radius": f.domain_radius,
            "sup_distance": sup,
            "validation": "pass",
            "warnings": [str(w.message) for w in record],
        },
        args.json,
    )
    return EXIT_OK


def cmd_compose(args) -> int:
    outer = mapfile.parse_map_file(args.a, args.max_vertices)
    inner = mapfile.parse_map_file(args.b, args.max_vertices)
    m = compose(outer, inner)
    mapfile.write_map_file(m, args.out)
    lines = [f"wrote={args.out}", f"effective_radius={m.domain_radius}"]
    _emit(lines, {"wrote": str(args.out), "effective_radius": m.domain_radius}, args.json)
    return EXIT_OK


def cmd_distance(args) -> int:
    a = mapfile.parse_map_file(args.a, args.max_vertices)
    b = mapfile.parse_map_file(args.b, args.max_vertices)
    sup = sup_distance(a, b)
    radius = min(a.domain_radius, b.domain_radius)
    _emit(
        [f"sup_distance={sup}", f"radius={radius}"],
        {"sup_distance": sup, "radius": radius},
        args.json,
    )
    return EXIT_OK


def cmd_constants(args) -> int:
    c = _parse_C(args.C)
    bundle = constants(c, args.D_override)
    _emit([bundle.to_line()], bundle.to_json_dict(), args.json)
    return EXIT_OK


def cmd_oracle(args) -> int:
    m = mapfile.parse_map_file(args.infile, args.max_vertices)
    candidate = _parse_C(args.C) if args.C is not None else None
    report = oracle_measure(m, candidate_C=candidate)
    tr = m.domain_radius if args.target_radius is None else args.target_radius
    report.coarse_surjectivity_radius = coarse_surjectivity_radius(m, tr)
    report.target_radius = tr
    ok, wit = is_order_preserving(m)
    report.order_preserving = ok
    report.order_violation = wit
    _emit(report.to_lines("oracle"), report.to_json_dict("oracle"), args.json)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="treeqi", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, infile=False, out=False, ab=False):
        p.add_argument("--max-vertices", type=int, default=DEFAULT_VERTEX_BUDGET)
        p.add_argument("--json", action="store_true")
        if infile:
            p.add_argument("--in", dest="infile", required=True)
        if out:
            p.add_argument("--out", required=True)
        if ab:
            p.add_argument("--a", required=True)
            p.add_argument("--b", required=True)

    p = sub.add_parser("gen-mixed", help="build a mixed-subtree map")
    p.add_argument("--degree", type=int, required=True)
    p.add_argument("--D", type=int, required=True)
    p.add_argument("--levels", type=int, required=True)
    p.add_argument("--policy", choices=["minimal", "random", "deepest"], default="random")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace-out", dest="trace_out")
    common(p, out=True)
    p.set_defaults(func=cmd_gen_mixed)

    p = sub.add_parser("verify", help="measure constants and coarse surjectivity")
    p.add_argument("--pairs", default="exhaustive")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--C", default=None)
    p.add_argument("--target-radius", dest="target_radius", type=int, default=None)
    common(p, infile=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("verify-mixed", help="check the mixed-construction invariants")
    p.add_argument("--D", type=int, required=True)
    common(p, infile=True)
    p.set_defaults(func=cmd_verify_mixed)

    p = sub.add_parser("normalize", help="order-preserving normalization")
    p.add_argument("--C", required=True)
    common(p, infile=True, out=True)
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("approximate", help="approximate by a mixed-subtree map")
    p.add_argument("--C", required=True)
    p.add_argument("--D-override", dest="D_override", type=int, default=None)
    p.add_argument("--trace-out", dest="trace_out")
    common(p, infile=True, out=True)
    p.set_defaults(func=cmd_approximate)

    p = sub.add_parser("compose", help="compose two maps (a after b)")
    common(p, ab=True, out=True)
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("distance", help="sup distance between two maps")
    common(p, ab=True)
    p.set_defaults(func=cmd_distance)

    p = sub.add_parser("constants", help="derived constants for a promised C")
    p.add_argument("--C", required=True)
    p.add_argument("--D-override", dest="D_override", type=int, default=None)
    common(p)
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("oracle", help="brute-force reference measurement")
    p.add_argument("--C", default=None)
    p.add_argument("--target-radius", dest="target_radius", type=int, default=None)
    common(p, infile=True)
    p.set_defaults(func=cmd_oracle)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationFailure as e:
        print(f"validation=fail kind={e.kind} level={_opt(e.level)} class={_opt_addr(e.image)}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except BudgetExceededError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except TreeQIError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


def _opt(x) -> str:
    return "-" if x is None else str(x)


def _opt_addr(v) -> str:
    return "-" if v is None else format_address(v)


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
