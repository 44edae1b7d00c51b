"""The run matrix: every (protocol, TTL, seed) cell over one fair substrate.

Within a seed index the contact trace and the traffic plan are generated
once and shared by all protocol/TTL cells, which both enforces fairness and
avoids recomputing mobility.  Reports embed the resolved scenario hash and
any guideline warnings so results stay traceable to their exact config.
"""

import heapq
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .contacts import ContactScanner, iter_trace_events, read_trace_header, write_trace
from .metrics import (
    REPORT_HEADER,
    SUMMARY_HEADER,
    RunReport,
    report_row,
    summarize_cell,
    summary_row,
)
from .scenario import Scenario, build_world, scenario_hash, validate_scenario
from .simulation import Simulation
from .workload import TrafficPlan, generate_plan, write_plan

log = logging.getLogger(__name__)


def collect_contacts(scenario: Scenario, seed: int, sink) -> int:
    """Generate the seed's contact stream without routing; feed events to sink."""
    world = build_world(scenario, seed)
    scanner = ContactScanner(world, scenario.link_config())
    duration = scenario.duration_ms
    count = 0
    for ev in scanner.initial_scan(0):
        sink(ev)
        count += 1
    heap: list[tuple[int, int, int]] = []
    seq = 0
    for node, t in world.initial_wakeups():
        heap.append((t, seq, node))
        seq += 1
    heapq.heapify(heap)
    for t_batch in range(scanner.window_ms, duration + 1, scanner.window_ms):
        while heap and heap[0][0] <= t_batch:
            t, _, node = heapq.heappop(heap)
            for nxt_node, nxt_t in world.transition(node, t):
                heapq.heappush(heap, (nxt_t, seq, nxt_node))
                seq += 1
        for ev in scanner.scan_batch(t_batch):
            sink(ev)
            count += 1
    return count


def write_trace_file(scenario: Scenario, seed: int, path: Path) -> int:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"NODES {scenario.n_nodes}\n")

        def sink(ev):
            fh.write(f"CONN {ev.time} {ev.a} {ev.b} {'up' if ev.up else 'down'}\n")

        count = collect_contacts(scenario, seed, sink)
    tmp.replace(path)
    return count


def plan_for(scenario: Scenario) -> TrafficPlan:
    return generate_plan(
        scenario.traffic_seed,
        scenario.n_nodes,
        scenario.duration_ms,
        scenario.traffic_rate_per_day,
        tuple(scenario.traffic_size_bytes),
        scenario.traffic_pairs,
    )


def run_cell(
    scenario: Scenario,
    protocol: str,
    ttl_value: int,
    seed: int,
    trace_path: Path | None = None,
    check_invariants: bool = False,
    cell_dir: Path | None = None,
) -> RunReport:
    """Execute one matrix cell; optionally export its consumed substrate."""
    plan = plan_for(scenario)
    hop_mode = scenario.ttl_mode == "hops"
    kwargs = dict(
        n_nodes=scenario.n_nodes,
        protocol=protocol,
        link=scenario.link_config(),
        buffer_capacity=scenario.buffer_bytes,
        plan=plan,
        duration_ms=scenario.duration_ms,
        warmup_ms=scenario.warmup_ms,
        ttl_ms=None if hop_mode else ttl_value * 1000,
        hop_limit=ttl_value if hop_mode else None,
        settings=scenario.protocol_settings(),
        delete_delivered=scenario.delete_delivered,
        cost_mode=scenario.cost_mode,
        check_invariants=check_invariants,
        keep_contacts=cell_dir is not None,
        seed=seed,
    )
    if trace_path is not None:
        with open(trace_path, encoding="utf-8") as fh:
            n = read_trace_header(fh)
            if n != scenario.n_nodes:
                raise ValueError(
                    f"trace has {n} nodes but the scenario defines {scenario.n_nodes}"
                )
            sim = Simulation(contact_events=iter_trace_events(fh, n), **kwargs)
            report = sim.run()
    else:
        sim = Simulation(world=build_world(scenario, seed), **kwargs)
        report = sim.run()
    if sim.recorder.violations:
        raise AssertionError(
            f"invariant violations in cell ({protocol},{ttl_value},{seed}): "
            + "; ".join(sim.recorder.violations[:5])
        )
    if cell_dir is not None:
        cell_dir.mkdir(parents=True, exist_ok=True)
        stem = f"{protocol}-ttl{ttl_value}-seed{seed}"
        with open(cell_dir / f"{stem}.trace", "w", encoding="utf-8", newline="\n") as fh:
            write_trace(fh, scenario.n_nodes, sim.recorder.contacts)
        with open(cell_dir / f"{stem}.plan", "w", encoding="utf-8", newline="\n") as fh:
            write_plan(plan, fh)
    return report


@dataclass(slots=True)
class MatrixResult:
    reports: list[RunReport]
    failures: list[tuple[str, int, int, str]]
    report_path: Path
    summary_path: Path


def _cell_worker(args):
    scenario, protocol, ttl_value, seed, trace_path, check, cell_dir = args
    try:
        report = run_cell(scenario, protocol, ttl_value, seed, trace_path, check, cell_dir)
        return (protocol, ttl_value, seed, report, None)
    except Exception as exc:  # per-cell failure: recorded, matrix continues
        return (protocol, ttl_value, seed, None, f"{type(exc).__name__}: {exc}")


def run_matrix(
    scenario: Scenario,
    out_dir: Path,
    protocols: list[str] | None = None,
    ttls: list[int] | None = None,
    seeds: list[int] | None = None,
    jobs: int = 1,
    cache_traces: bool = True,
    export_cells: bool = False,
    check_invariants: bool = False,
    progress=None,
) -> MatrixResult:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    protocols = protocols or scenario.protocols
    ttls = ttls or scenario.ttl_values()
    seeds = seeds or scenario.seeds
    say = progress or (lambda msg: log.info(msg))
    trace_paths: dict[int, Path | None] = {}
    for seed in seeds:
        if cache_traces:
            path = out_dir / f"contacts-seed{seed}.trace"
            if not path.exists():
                say(f"generating contact trace for seed {seed}")
                count = write_trace_file(scenario, seed, path)
                say(f"  seed {seed}: {count} contact events")
            trace_paths[seed] = path
        else:
            trace_paths[seed] = None
    cell_dir = out_dir / "cells" if export_cells else None
    cells = [
        (scenario, protocol, ttl, seed, trace_paths[seed], check_invariants, cell_dir)
        for protocol in protocols
        for ttl in ttls
        for seed in seeds
    ]
    results = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for res in pool.map(_cell_worker, cells):
                results.append(res)
                _report_progress(say, res)
    else:
        for cell in cells:
            res = _cell_worker(cell)
            results.append(res)
            _report_progress(say, res)
    order = {
        (protocol, ttl, seed): idx
        for idx, (_, protocol, ttl, seed, *_rest) in enumerate(cells)
    }
    results.sort(key=lambda r: order[(r[0], r[1], r[2])])
    reports = [r[3] for r in results if r[3] is not None]
    failures = [(r[0], r[1], r[2], r[4]) for r in results if r[4] is not None]
    sc_hash = scenario_hash(scenario)
    warnings = validate_scenario(scenario)
    header_lines = [
        "# oppbench report v1",
        f"# scenario_hash={sc_hash}",
        f"# cost_mode={scenario.cost_mode}",
        f"# rng={scenario.rng_algorithm}",
        f"# ttl_mode={scenario.ttl_mode}",
    ]
    header_lines += [f"# warning={w}" for w in warnings]
    header_lines += [f"# failed_cell={p},{t},{s}: {msg}" for p, t, s, msg in failures]
    report_path = out_dir / "reports.csv"
    with open(report_path, "w", encoding="utf-8", newline="\n") as fh:
        for line in header_lines:
            fh.write(line + "\n")
        fh.write(REPORT_HEADER + "\n")
        for report in reports:
            fh.write(report_row(report) + "\n")
    summary_path = out_dir / "summary.csv"
    summaries = []
    with open(summary_path, "w", encoding="utf-8", newline="\n") as fh:
        for line in header_lines:
            fh.write(line + "\n")
        fh.write(SUMMARY_HEADER + "\n")
        for protocol in protocols:
            for ttl in ttls:
                group = [r for r in reports if r.protocol == protocol and r.ttl_s == ttl]
                if group:
                    cell = summarize_cell(group)
                    summaries.append(cell)
                    fh.write(summary_row(cell) + "\n")
    emit_plots(summaries, out_dir / "plots", ttl_mode=scenario.ttl_mode)
    return MatrixResult(reports, failures, report_path, summary_path)


def _report_progress(say, res) -> None:
    protocol, ttl, seed, report, err = res
    if err is not None:
        say(f"cell ({protocol}, ttl={ttl}, seed={seed}) FAILED: {err}")
    else:
        say(
            f"cell ({protocol}, ttl={ttl}, seed={seed}): "
            f"created={report.created} delivered={report.delivered} "
            f"transmissions={report.transmissions}"
        )


METRIC_PLOTS = (
    ("delivery", "delivery probability", "delivery_mean", "delivery_ci"),
    ("cost", "copies per delivered message", "cost_mean", "cost_ci"),
    ("latency", "mean latency (s)", "latency_mean", "latency_ci"),
)


def emit_plots(summaries, plot_dir: Path, ttl_mode: str = "time") -> list[Path]:
    """Write gnuplot scripts plus data files: metric vs TTL, one series per protocol."""
    plot_dir = Path(plot_dir)
    plot_dir.mkdir(parents=True, exist_ok=True)
    protocols = []
    for cell in summaries:
        if cell.protocol not in protocols:
            protocols.append(cell.protocol)
    xlabel = "TTL (hops)" if ttl_mode == "hops" else "TTL (s)"
    written = []
    for name, ylabel, mean_attr, ci_attr in METRIC_PLOTS:
        series = []
        for protocol in protocols:
            rows = []
            for cell in summaries:
                if cell.protocol != protocol:
                    continue
                mean = getattr(cell, mean_attr)
                if mean is None:
                    continue
                ci = getattr(cell, ci_attr) or 0.0
                rows.append((cell.ttl_s, mean, ci))
            if rows:
                dat = plot_dir / f"{name}_{protocol}.dat"
                with open(dat, "w", encoding="utf-8", newline="\n") as fh:
                    fh.write(f"# ttl mean ci_halfwidth ({protocol})\n")
                    for ttl, mean, ci in rows:
                        fh.write(f"{ttl} {mean:.6f} {ci:.6f}\n")
                series.append((protocol, dat.name))
        gp = plot_dir / f"{name}.gp"
        with open(gp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("set terminal pngcairo size 900,600\n")
            fh.write(f"set output '{name}.png'\n")
            fh.write(f"set xlabel '{xlabel}'\n")
            fh.write(f"set ylabel '{ylabel}'\n")
            if ttl_mode == "time":
                fh.write("set logscale x\n")
            fh.write("set key outside right\n")
            fh.write("set grid\n")
            if series:
                parts = [
                    f"'{datname}' using 1:2:3 with yerrorlines title '{protocol}'"
                    for protocol, datname in series
                ]
                fh.write("plot " + ", \\\n     ".join(parts) + "\n")
            else:
                fh.write("set xrange [0:1]\nset yrange [0:1]\nplot NaN notitle\n")
        written.append(gp)
    return written
