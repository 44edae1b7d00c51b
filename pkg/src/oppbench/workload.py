"""Traffic generation: fixed source-destination pairs, jittered message stream.

The plan depends only on the traffic seed, never on protocol or TTL, so a
serialized plan is byte-identical across every cell of the run matrix.
Messages created during warm-up are simulated but excluded from metrics.
"""

from dataclasses import dataclass

from .engine import MS_PER_DAY, SimTime, derive_stream


class PlanError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class PlannedMessage:
    pair: int
    created: SimTime
    size: int
    ttl: SimTime | None = None  # None: the run's swept TTL applies


@dataclass(slots=True)
class TrafficPlan:
    pairs: list[tuple[int, int]]
    messages: list[PlannedMessage]


def generate_plan(
    traffic_seed: int,
    n_nodes: int,
    duration_ms: int,
    rate_per_day: float,
    size_bytes: tuple[int, int],
    pair_count: int,
) -> TrafficPlan:
    if n_nodes < 2:
        raise PlanError("traffic needs at least 2 nodes")
    if pair_count > n_nodes * (n_nodes - 1):
        raise PlanError(f"{pair_count} distinct pairs impossible with {n_nodes} nodes")
    pair_rng = derive_stream(traffic_seed, "traffic.pairs")
    pairs: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    while len(pairs) < pair_count:
        src = pair_rng.integer(0, n_nodes - 1)
        dst = pair_rng.integer(0, n_nodes - 1)
        if src == dst or (src, dst) in seen:
            continue
        seen.add((src, dst))
        pairs.append((src, dst))
    msg_rng = derive_stream(traffic_seed, "traffic.messages")
    mean_gap = MS_PER_DAY / rate_per_day
    messages: list[PlannedMessage] = []
    t = 0.0
    while True:
        t += msg_rng.uniform(0.5 * mean_gap, 1.5 * mean_gap)
        if t >= duration_ms:
            break
        messages.append(
            PlannedMessage(
                pair=msg_rng.integer(0, pair_count - 1),
                created=int(t),
                size=msg_rng.integer(size_bytes[0], size_bytes[1]),
            )
        )
    return TrafficPlan(pairs, messages)


def counted(created: SimTime, warmup_end: SimTime) -> bool:
    """Warm-up messages run through the system but stay out of the metrics."""
    return created >= warmup_end


def write_plan(plan: TrafficPlan, fh) -> None:
    fh.write(f"PAIRS {len(plan.pairs)}\n")
    for src, dst in plan.pairs:
        fh.write(f"PAIR {src} {dst}\n")
    for i, msg in enumerate(plan.messages, 1):
        ttl = "-" if msg.ttl is None else str(msg.ttl)
        fh.write(f"MSG {i} {msg.pair} {msg.created} {msg.size} {ttl}\n")


def read_plan(fh) -> TrafficPlan:
    pairs: list[tuple[int, int]] = []
    messages: list[PlannedMessage] = []
    n_pairs = None
    for lineno, raw in enumerate(fh, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            if parts[0] == "PAIRS":
                n_pairs = int(parts[1])
            elif parts[0] == "PAIR":
                pairs.append((int(parts[1]), int(parts[2])))
            elif parts[0] == "MSG":
                ttl = None if parts[5] == "-" else int(parts[5])
                messages.append(
                    PlannedMessage(int(parts[2]), int(parts[3]), int(parts[4]), ttl)
                )
            else:
                raise PlanError(f"unknown record {parts[0]!r}")
        except (IndexError, ValueError) as exc:
            raise PlanError(f"plan line {lineno}: {exc}") from exc
    if n_pairs is None or n_pairs != len(pairs):
        raise PlanError("pair count mismatch in plan file")
    for i, (src, dst) in enumerate(pairs):
        if src == dst:
            raise PlanError(f"pair {i} has identical endpoints")
    for msg in messages:
        if not 0 <= msg.pair < len(pairs):
            raise PlanError(f"message references unknown pair {msg.pair}")
    return TrafficPlan(pairs, messages)
