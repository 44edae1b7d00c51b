"""Command-line front end: run, validate, oracle, export-trace."""

import argparse
import sys
from pathlib import Path

from .contacts import TraceError, read_trace
from .harness import run_matrix, write_trace_file
from .mobility import write_position_trace
from .oracle import foremost_journey
from .scenario import ScenarioError, build_world, load_scenario, scenario_hash


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="oppbench",
        description="Benchmark store-carry-forward routing protocols over one fair scenario.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute the protocol x TTL x seed matrix")
    p_run.add_argument("scenario", help="scenario file or bundled name (mau-default, mau-mini)")
    p_run.add_argument("--protocols", nargs="+", help="protocol subset to run")
    p_run.add_argument("--ttls", nargs="+", type=int, help="TTL values (s, or hops in hop mode)")
    p_run.add_argument("--seeds", nargs="+", type=int, help="seed subset to run")
    p_run.add_argument("--jobs", type=int, default=1, help="parallel cell workers")
    p_run.add_argument("--out", default="out", help="output directory")
    p_run.add_argument(
        "--no-trace-cache",
        action="store_true",
        help="recompute mobility per cell instead of replaying a per-seed trace",
    )
    p_run.add_argument(
        "--export-cells",
        action="store_true",
        help="dump each cell's consumed contact trace and traffic plan",
    )
    p_run.add_argument(
        "--check-invariants",
        action="store_true",
        help="enable copy-budget / buffer / TTL instrumentation (fails loudly)",
    )

    p_val = sub.add_parser("validate", help="parse a scenario and print the resolved audit")
    p_val.add_argument("scenario")

    p_orc = sub.add_parser("oracle", help="earliest-arrival journey bound over a trace")
    p_orc.add_argument("trace", help="contact trace file")
    p_orc.add_argument("src", type=int)
    p_orc.add_argument("dst", type=int)
    p_orc.add_argument("depart", type=int, help="departure time (ms)")
    p_orc.add_argument("ttl", type=int, help="lifetime budget (ms)")

    p_exp = sub.add_parser("export-trace", help="generate and dump the contact substrate")
    p_exp.add_argument("scenario")
    p_exp.add_argument("--seed", type=int, required=True)
    p_exp.add_argument("--out", help="trace file path (default: contacts-seed<S>.trace)")
    p_exp.add_argument("--positions", help="also dump sampled node positions to this file")
    p_exp.add_argument(
        "--position-period-s", type=int, default=60, help="position sample period"
    )
    p_exp.add_argument("--map", dest="map_out", help="also dump the resolved map to this file")

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except (ScenarioError, TraceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "validate":
        return _cmd_validate(args)
    if args.command == "oracle":
        return _cmd_oracle(args)
    if args.command == "export-trace":
        return _cmd_export(args)
    raise AssertionError(args.command)


def _cmd_run(args) -> int:
    scenario, warnings = load_scenario(args.scenario)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    result = run_matrix(
        scenario,
        Path(args.out),
        protocols=args.protocols,
        ttls=args.ttls,
        seeds=args.seeds,
        jobs=args.jobs,
        cache_traces=not args.no_trace_cache,
        export_cells=args.export_cells,
        check_invariants=args.check_invariants,
        progress=print,
    )
    print(f"wrote {result.report_path} and {result.summary_path}")
    if result.failures:
        print(f"{len(result.failures)} cell(s) failed; see report header", file=sys.stderr)
        return 1
    return 0


def _cmd_validate(args) -> int:
    scenario, warnings = load_scenario(args.scenario)
    print(f"scenario_hash={scenario_hash(scenario)}")
    print(f"nodes={scenario.n_nodes} (people={scenario.n_people}, buses={scenario.n_buses}, "
          f"police={scenario.police_nodes}, rwp={scenario.rwp_nodes})")
    print(f"duration_s={scenario.duration_s} warmup_s={scenario.warmup_s} "
          f"seeds={len(scenario.seeds)}")
    print(f"protocols={','.join(scenario.protocols)} ttl_mode={scenario.ttl_mode} "
          f"ttls={scenario.ttl_values()}")
    for w in warnings:
        print(f"warning: {w}")
    print("ok" if not warnings else f"ok with {len(warnings)} warning(s)")
    return 0


def _cmd_oracle(args) -> int:
    with open(args.trace, encoding="utf-8") as fh:
        n_nodes, events = read_trace(fh)
    if not (0 <= args.src < n_nodes and 0 <= args.dst < n_nodes):
        print("error: src/dst outside the trace's node range", file=sys.stderr)
        return 2
    if args.src == args.dst:
        print("error: src and dst must differ", file=sys.stderr)
        return 2
    arrival = foremost_journey(events, args.src, args.dst, args.depart, args.ttl)
    if arrival is None:
        print("unreachable")
    else:
        print(f"arrival {arrival}")
    return 0


def _cmd_export(args) -> int:
    scenario, warnings = load_scenario(args.scenario)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    out = Path(args.out) if args.out else Path(f"contacts-seed{args.seed}.trace")
    count = write_trace_file(scenario, args.seed, out)
    print(f"wrote {count} contact events to {out}")
    if args.map_out:
        from .scenario import build_map
        from .worldmap import write_map

        with open(args.map_out, "w", encoding="utf-8", newline="\n") as fh:
            write_map(build_map(scenario), fh)
        print(f"wrote map to {args.map_out}")
    if args.positions:
        world = build_world(scenario, args.seed)
        with open(args.positions, "w", encoding="utf-8", newline="\n") as fh:
            write_position_trace(
                world, scenario.duration_ms, args.position_period_s * 1000, fh
            )
        print(f"wrote position samples to {args.positions}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
