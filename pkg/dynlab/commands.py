"""Analysis subcommands of the dynlab CLI."""

import argparse
import json
import logging
import sys
from typing import Any, Dict, List, Sequence

import numpy as np
from tqdm import tqdm

from . import __version__
from .attractor_decomposer import (
    A1,
    A2,
    A3,
    conservative_kernel,
    decompose,
    equidistributed,
    ergodic_components,
    survey,
)
from .chain_lab import chain_stats, check_chain, check_half_pullback, depth, pull_back
from .config import RunConfig
from .errors import BudgetExhaustedError, PreconditionError
from .families import MAIN_PARAM, PARAM_RANGES, family_names, make_map
from .map_model import Interval, MapSpec, load_map, map_to_dict, validate
from .orbit_engine import (
    BASIC_SET,
    FEIGENBAUM,
    HOMTERVAL,
    LIMIT_CYCLE,
    OrbitContext,
    classify_orbit,
    doubling_thresholds,
)
from .report_store import ReportStore, format_number, to_jsonable

logger = logging.getLogger(__name__)

SCAN_HEADER = ["param", "attractor_class", "period", "components", "kernel_measure"]

_CLASS_OF_TAG = {LIMIT_CYCLE: A1, HOMTERVAL: A1, BASIC_SET: A2, FEIGENBAUM: A3}


def setup_subparsers(subparsers, common: argparse.ArgumentParser):
    """Set up the analysis subcommand parsers."""

    validate_parser = subparsers.add_parser(
        "validate", parents=[common], help="Check a map file against the map-class invariants"
    )
    validate_parser.add_argument("map_file", help="JSON map definition")

    classify_parser = subparsers.add_parser(
        "classify", parents=[common], help="Classify the fate of orbits"
    )
    classify_parser.add_argument("map_file", help="JSON map definition")
    classify_parser.add_argument("x", nargs="*", type=float, help="Initial points")
    classify_parser.add_argument(
        "--random", type=int, metavar="N", help="Classify N equidistributed random points"
    )

    pullback_parser = subparsers.add_parser(
        "pullback", parents=[common], help="Pull a target interval back along an orbit"
    )
    pullback_parser.add_argument("map_file", help="JSON map definition")
    pullback_parser.add_argument("x", type=float, help="Base point")
    pullback_parser.add_argument("n", type=int, help="Orbit length")
    pullback_parser.add_argument("lo", type=float, help="Left end of the target interval")
    pullback_parser.add_argument("hi", type=float, help="Right end of the target interval")

    decompose_parser = subparsers.add_parser(
        "decompose", parents=[common], help="Decompose the global attractor"
    )
    decompose_parser.add_argument("map_file", help="JSON map definition")

    recurrence_parser = subparsers.add_parser(
        "recurrence", parents=[common], help="Estimate the conservative kernel"
    )
    recurrence_parser.add_argument("map_file", help="JSON map definition")

    scan_parser = subparsers.add_parser(
        "scan", parents=[common], help="Sweep a family parameter and tabulate attractors"
    )
    scan_parser.add_argument("family", choices=family_names(), help="Map family")
    scan_parser.add_argument("--param", help="Parameter to sweep (defaults to the family's main one)")
    scan_parser.add_argument(
        "--range", nargs=2, type=float, metavar=("LO", "HI"), required=True, help="Parameter range"
    )
    scan_parser.add_argument("--steps", type=int, default=100, help="Number of parameter values")
    scan_parser.add_argument(
        "--fixed", nargs="*", default=[], metavar="NAME=VALUE", help="Other family parameters"
    )
    scan_parser.add_argument(
        "--levels", type=int, default=4, help="Doubling thresholds to cross-check by bisection"
    )


def handle_command(args: argparse.Namespace, config: RunConfig):
    """Dispatch a parsed subcommand."""
    if not getattr(args, "command", None):
        print("❌ Error: No command specified. Use --help for usage.", file=sys.stderr)
        sys.exit(2)
        return

    handlers = {
        "validate": cmd_validate,
        "classify": cmd_classify,
        "pullback": cmd_pullback,
        "decompose": cmd_decompose,
        "recurrence": cmd_recurrence,
        "scan": cmd_scan,
    }
    handler = handlers.get(args.command)
    if handler is None:
        print(f"❌ Unknown command: {args.command}", file=sys.stderr)
        sys.exit(2)
        return
    handler(args, config)


# Output helpers


def _emit(command: str, config: RunConfig, report: Any) -> None:
    """Write the report to --out, or print it as JSON on stdout."""
    config_dict = config.to_dict()
    if config.out:
        store = ReportStore(config.out, __version__)
        path = store.save_report(command, config_dict, report)
        print(f"✅ Report written to {path}", file=sys.stderr)
        return
    data = {"command": command, "version": __version__, "config": to_jsonable(config_dict), "report": to_jsonable(report)}
    print(json.dumps(data, indent=2, sort_keys=True))


def _emit_csv(name: str, config: RunConfig, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    if not config.out:
        return
    path = ReportStore(config.out, __version__).save_csv(name, header, rows)
    print(f"✅ CSV written to {path}", file=sys.stderr)


def _context(map: MapSpec, config: RunConfig) -> OrbitContext:
    return OrbitContext.build(map, config.p_max, max_iter=config.budget)


# Commands


def cmd_validate(args: argparse.Namespace, config: RunConfig):
    """Validate a map file; exit 1 when any invariant fails."""
    map = load_map(args.map_file)
    report = validate(map, config.tolerances.num)
    _emit("validate", config, {"map": map_to_dict(map), "validation": report.to_dict()})
    if not report.passed:
        for check in report.failed:
            print(f"❌ {check.name}: {check.message}", file=sys.stderr)
        sys.exit(1)
        return
    print(f"✅ {map.name}: all {len(report.checks)} checks passed", file=sys.stderr)


def classify_points(map: MapSpec, xs: Sequence[float], config: RunConfig) -> List[Dict[str, Any]]:
    context = _context(map, config)
    records = []
    for x in xs:
        try:
            fate = classify_orbit(
                map, float(x), config.budget, context=context, cascade_min=config.cascade_min,
                tol_cycle=config.tolerances.cycle, tol_mult=config.tolerances.mult,
            )
            record = {"x": float(x), **fate.to_dict()}
        except BudgetExhaustedError as e:
            record = {"x": float(x), "tag": "budget_exhausted", "evidence": e.evidence, "steps": config.budget}
        records.append(record)
    return records


def cmd_classify(args: argparse.Namespace, config: RunConfig):
    map = load_map(args.map_file)
    xs = list(args.x)
    if args.random:
        xs.extend(equidistributed(map, args.random, np.random.default_rng(config.seed)).tolist())
    if not xs:
        print("❌ Error: give initial points or --random N", file=sys.stderr)
        sys.exit(2)
        return
    outside = [x for x in xs if not map.in_domain(x, config.tolerances.num)]
    if outside:
        print(f"❌ Error: points outside M: {outside}", file=sys.stderr)
        sys.exit(2)
        return
    records = classify_points(map, xs, config)
    tags: Dict[str, int] = {}
    for record in records:
        tags[record["tag"]] = tags.get(record["tag"], 0) + 1
    _emit("classify", config, {"map": map_to_dict(map), "counts": tags, "records": records})


def pullback_report(map: MapSpec, x: float, n: int, I: Interval) -> Dict[str, Any]:
    chain = pull_back(map, x, n, I)
    return {
        "chain": chain.to_record(),
        "stats": chain_stats(chain).to_dict(),
        "check": check_chain(map, chain).to_dict(),
        "depth": depth(map, x, n, I).to_record(),
        "half_pullback": {side: check_half_pullback(map, x, n, I, side) for side in ("a", "b")},
    }


def cmd_pullback(args: argparse.Namespace, config: RunConfig):
    map = load_map(args.map_file)
    if args.lo >= args.hi:
        print(f"❌ Error: empty target interval [{args.lo}, {args.hi}]", file=sys.stderr)
        sys.exit(2)
        return
    report = pullback_report(map, args.x, args.n, Interval(args.lo, args.hi))
    _emit("pullback", config, {"map": map_to_dict(map), **report})


def cmd_decompose(args: argparse.Namespace, config: RunConfig):
    """Decompose; failed clauses are reported, not turned into an exit code."""
    map = load_map(args.map_file)
    report = decompose(map, config)
    _emit("decompose", config, {"map": map_to_dict(map), "decomposition": report.to_dict()})
    rows = [
        [k, a.klass, a.period, a.support.measure, a.realm_measure, a.RL_measure, a.component]
        for k, a in enumerate(report.attractors)
    ]
    _emit_csv("decompose_attractors", config,
              ["attractor", "klass", "period", "support_measure", "realm_measure", "RL_measure", "component"], rows)
    if report.recurrence is not None:
        header, cells = report.recurrence.csv_rows()
        _emit_csv("decompose_recurrence", config, header, cells)
    for name, check in report.decomposition_checks.items():
        mark = "✅" if check.get("passed") else "⚠️"
        print(f"{mark} {name}", file=sys.stderr)


def cmd_recurrence(args: argparse.Namespace, config: RunConfig):
    map = load_map(args.map_file)
    report = decompose(map, config)
    recurrence = report.recurrence
    _emit("recurrence", config, {"map": map_to_dict(map), "recurrence": recurrence.to_dict()})
    header, rows = recurrence.csv_rows()
    _emit_csv("recurrence", config, header, rows)


def _parse_fixed(items: Sequence[str]) -> Dict[str, float]:
    fixed = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep:
            raise PreconditionError(f"--fixed expects NAME=VALUE, got {item!r}")
        fixed[name] = float(value)
    return fixed


def scan_row(map: MapSpec, value: float, config: RunConfig) -> List[Any]:
    """Attractor class of the critical orbit, limit-cycle period, component count and kernel measure."""
    context = _context(map, config)
    start = map.clamp(float(map.f(map.extrema[0]))) if map.extrema else map.hull.midpoint
    try:
        fate = classify_orbit(map, start, config.budget, context=context, cascade_min=config.cascade_min)
        klass = _CLASS_OF_TAG.get(fate.tag, "")
    except BudgetExhaustedError:
        klass = "budget_exhausted"
    period = min((c.period for c in context.limit_cycles), default=None)
    samples = survey(
        map, config.n_samples, config.budget, burn_in=config.burn_in,
        signature_grid=config.signature_grid(map), lambda_grid=config.lambda_grid(map),
        context=context, seed=config.seed, threads=config.threads,
    )
    components = ergodic_components(map, component_min=config.component_min, samples=samples)
    kernel = conservative_kernel(
        map, config.n_samples, config.budget, config.r_min,
        grid=config.recurrence_grid(map), context=context, seed=config.seed,
    )
    return [value, klass, period, len(components), kernel.kernel_estimate.measure]


def scan_thresholds(rows: Sequence[Sequence[Any]]) -> List[Dict[str, Any]]:
    """Midpoints where the limit-cycle period doubles between neighbouring rows."""
    found = []
    for prev, cur in zip(rows[:-1], rows[1:]):
        if prev[2] and cur[2] and cur[2] == 2 * prev[2]:
            found.append({"period": cur[2], "param": 0.5 * (prev[0] + cur[0]), "bracket": [prev[0], cur[0]]})
    return found


def cmd_scan(args: argparse.Namespace, config: RunConfig):
    fixed = _parse_fixed(args.fixed)
    param = args.param or MAIN_PARAM.get(args.family)
    if param is None:
        print(f"❌ Error: family {args.family} needs --param", file=sys.stderr)
        sys.exit(2)
        return
    lo, hi = args.range
    if args.steps <= 0 or lo > hi:
        values = []
    elif args.steps == 1:
        values = [lo]
    else:
        values = np.linspace(lo, hi, args.steps).tolist()
    rows = []
    for value in tqdm(values, desc=f"scan {args.family}", unit="param"):
        try:
            map = make_map(args.family, **{**fixed, param: value})
        except ValueError as e:
            logger.warning(f"skipping {param}={value}: {e}")
            continue
        rows.append(scan_row(map, value, config))

    report: Dict[str, Any] = {
        "family": args.family,
        "param": param,
        "fixed": fixed,
        "rows": len(rows),
        "scan_thresholds": scan_thresholds(rows),
    }
    if args.family in PARAM_RANGES and param == MAIN_PARAM[args.family] and args.levels > 0:
        try:
            report["bisection_thresholds"] = doubling_thresholds(args.family, args.levels, fixed)
        except ValueError as e:
            logger.warning(f"bisection cross-check failed: {e}")
            report["bisection_thresholds"] = []
    if config.out:
        _emit_csv("scan", config, SCAN_HEADER, rows)
        _emit("scan", config, report)
        return
    # without --out the CSV is the stdout payload
    print(",".join(SCAN_HEADER))
    for row in rows:
        print(",".join(format_number(v) for v in row))

