"""Command line interface: ``repins {gen,solve,sweep,compare}``.

Exit codes: 0 success, 1 infeasible target, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import bench
from .analytic import NoConverge, RefineParams
from .delay import meets_target, total_delay
from .dp import DPConfig, Infeasible, dp_min_power, width_library, width_range
from .net import NetValidationError, candidate_grid, dump_net, load_net, tech_from_dict
from .rip import RipInfeasible, RipParams, refine_only, rip

EXIT_OK, EXIT_INFEASIBLE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _width_spec(text: str) -> tuple[float, float, float]:
    try:
        lo, hi, step = (float(p) for p in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected MIN:MAX:STEP, got {text!r}") from None
    return lo, hi, step


def _positive(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="repins", description="Low-power repeater insertion for two-pin nets.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a random net")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--count", type=int, default=1, help="generate seeds seed..seed+count-1 into the --out directory")
    g.add_argument("--tech", type=Path, help="tech JSON (default: the shipped parameters)")
    g.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("solve", help="solve one net at one timing target")
    s.add_argument("--net", type=Path, required=True)
    tgt = s.add_mutually_exclusive_group(required=True)
    tgt.add_argument("--target-ratio", type=_positive, help="target as a multiple of the reference minimum delay")
    tgt.add_argument("--target-sec", type=_positive, help="absolute target in seconds")
    s.add_argument("--mode", choices=("rip", "dp", "refine"), default="rip")
    s.add_argument("--dp-widths", type=_width_spec, metavar="MIN:MAX:STEP", help="dp mode width range (default 10:400:10)")
    s.add_argument("--dp-lib-size", type=int, metavar="N", help="dp mode library of N widths (with --dp-gran)")
    s.add_argument("--dp-gran", type=_positive, metavar="G", help="dp mode library granularity (with --dp-lib-size)")
    s.add_argument("--loc-step", type=_positive, metavar="UM", help="candidate spacing for dp mode, or the coarse DP in rip/refine (default 200)")
    s.add_argument("--refine-step", type=_positive, metavar="UM", help="repeater movement step (default 25)")
    s.add_argument("--eps0", type=_positive, help="relative width improvement that stops refinement (default 1e-3)")
    s.add_argument("--out", type=Path, required=True)

    w = sub.add_parser("sweep", help="run strategies over a directory of nets")
    w.add_argument("--nets", type=Path, required=True, help="directory of net JSON files")
    w.add_argument("--strategies", required=True, help="comma list, e.g. rip,dp:10:400:10,dplib:10:20")
    w.add_argument("--targets", type=int, default=20, help="timing targets per net (default 20)")
    w.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    w.add_argument("--dp-bound", action="store_true", help="use target-aware bound pruning in every DP")
    w.add_argument("--out", type=Path, required=True)

    c = sub.add_parser("compare", help="summarize a sweep report")
    c.add_argument("--report", type=Path, required=True)
    c.add_argument("--baseline", default="rip")
    c.add_argument("--summary", type=Path, required=True)
    return p


# ---------------------------------------------------------------------------


def cmd_gen(args) -> int:
    if args.count < 1:
        raise UsageError("--count must be >= 1")
    tech = bench.DEFAULT_TECH
    if args.tech is not None:
        tech = tech_from_dict(json.loads(args.tech.read_text()))
    if args.count == 1:
        dump_net(bench.gen_net(bench.GenParams(seed=args.seed)), tech, args.out)
        return EXIT_OK
    args.out.mkdir(parents=True, exist_ok=True)
    for seed in range(args.seed, args.seed + args.count):
        dump_net(bench.gen_net(bench.GenParams(seed=seed)), tech, args.out / f"net_{seed:04d}.json")
    return EXIT_OK


def _dp_widths(args) -> tuple[float, ...]:
    if args.dp_lib_size is not None or args.dp_gran is not None:
        if args.dp_widths is not None:
            raise UsageError("--dp-widths cannot be combined with --dp-lib-size/--dp-gran")
        if args.dp_lib_size is None or args.dp_gran is None:
            raise UsageError("--dp-lib-size and --dp-gran must be given together")
        return width_library(args.dp_lib_size, args.dp_gran, 10.0)
    lo, hi, step = args.dp_widths or (10.0, 400.0, 10.0)
    return width_range(lo, hi, step)


def _rip_params(args) -> RipParams:
    refine = RefineParams()
    if args.refine_step is not None:
        refine = replace(refine, step=args.refine_step)
    if args.eps0 is not None:
        refine = replace(refine, eps0=args.eps0)
    params = RipParams(refine=refine)
    if args.loc_step is not None:
        params = replace(params, coarse_loc_step=args.loc_step)
    return params


def solution_record(sol, feasible: bool, trace, runtime: float) -> dict:
    return {
        "repeaters": [{"x_um": x, "width_u": w} for x, w in zip(sol.positions, sol.widths)] if sol else [],
        "delay_s": sol.delay if sol else None,
        "total_width_u": sol.total_width if sol else None,
        "feasible": feasible,
        "stage_trace": [_clean(r.as_dict()) for r in trace],
        "runtime_s": runtime,
    }


def cmd_solve(args) -> int:
    net, tech = load_net(args.net)
    if args.mode != "dp" and (args.dp_widths or args.dp_lib_size or args.dp_gran):
        raise UsageError("--dp-widths/--dp-lib-size/--dp-gran only apply to --mode dp")
    if args.target_sec is not None:
        tau_t = args.target_sec
    else:
        tau_t = args.target_ratio * bench.compute_tau_min(tech, net)
    start = time.perf_counter()
    sol, trace, feasible = None, [], False
    try:
        if args.mode == "dp":
            widths = _dp_widths(args)
            cfg = DPConfig(widths, tuple(candidate_grid(net, args.loc_step or 200.0)))
            sol = dp_min_power(tech, net, cfg, tau_t)
        else:
            runner = rip if args.mode == "rip" else refine_only
            outcome = runner(tech, net, tau_t, _rip_params(args))
            sol, trace = outcome.solution, outcome.stage_trace
    except RipInfeasible as exc:
        trace = exc.stage_trace
        logging.getLogger("repins").info("%s", exc)
    except (Infeasible, NoConverge) as exc:
        logging.getLogger("repins").info("%s", exc)
    runtime = time.perf_counter() - start
    if sol is not None:
        delay = total_delay(tech, net, sol)
        sol = replace(sol, delay=delay)
        feasible = meets_target(delay, tau_t)
    record = solution_record(sol, feasible, trace, runtime)
    record["target_s"] = tau_t
    args.out.write_text(json.dumps(record, indent=2) + "\n")
    if not feasible:
        print(f"infeasible: no {args.mode} solution meets {tau_t:.6g} s", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_sweep(args) -> int:
    specs = [s.strip() for s in args.strategies.split(",") if s.strip()]
    if not specs:
        raise UsageError("--strategies is empty")
    for s in specs:
        try:
            bench.parse_strategy(s)
        except ValueError as exc:
            raise UsageError(f"--strategies: {exc}") from None
    if args.targets < 2:
        raise UsageError("--targets must be >= 2")
    if not args.nets.is_dir():
        raise UsageError(f"--nets: not a directory: {args.nets}")
    files = sorted(args.nets.glob("*.json"))
    if not files:
        raise UsageError(f"--nets: no .json files in {args.nets}")
    items = []
    for f in files:
        net, tech = load_net(f)
        items.append((f.stem, net, tech))
    report = bench.sweep_many(items, specs, args.targets, max(1, args.jobs), args.dp_bound)
    args.out.write_text(report.to_csv())
    return EXIT_OK


def _clean(obj):
    """Replace non-finite floats by None so the output is strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def cmd_compare(args) -> int:
    rows = bench.read_csv(args.report)
    if not any(r.strategy == args.baseline for r in rows):
        raise UsageError(f"--baseline: no rows for strategy {args.baseline!r}")
    summary = bench.summarize(rows, args.baseline)
    args.summary.write_text(json.dumps(_clean(summary), indent=2) + "\n")
    print(f"{'strategy':<20} {'d_mean%':>8} {'d_max%':>8} {'V':>6} {'speedup':>8}")
    for name, st in summary["strategies"].items():
        print(
            f"{name:<20} {st['delta_mean']:8.2f} {st['delta_max']:8.2f} "
            f"{st['violations_mean']:6.2f} {st['speedup']:8.1f}"
        )
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "sweep": cmd_sweep, "compare": cmd_compare}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NetValidationError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
