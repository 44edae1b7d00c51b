"""Scenario files: line-oriented `section.key = value` with includes.

Unknown keys, contradictory totals, and negative quantities are hard errors;
values outside the benchmark's density/traffic guidelines (node count
100-150, radio range 10-250 m) only produce warnings so exploratory
configurations stay runnable but auditable.
"""

import importlib.resources
from dataclasses import dataclass, field, fields
from pathlib import Path

from .contacts import LinkConfig
from .engine import derive_stream
from .mobility import (
    BusProcess,
    GroupPoints,
    MobilityWorld,
    PatrolProcess,
    PersonParams,
    PersonProcess,
    RandomWaypointProcess,
    RwpParams,
    VehicleParams,
)
from .routing import PROTOCOLS, ProtocolSettings
from .worldmap import Map, build_grid_map, read_map

GUIDELINE_NODES = (100, 150)
GUIDELINE_RANGE_M = (10.0, 250.0)


class ScenarioError(ValueError):
    pass


@dataclass(slots=True)
class Scenario:
    duration_s: int = 1_036_800  # 12 days
    warmup_s: int = 172_800  # 2 days
    seeds: list[int] = field(default_factory=lambda: list(range(1, 11)))
    map_rows: int = 20
    map_cols: int = 20
    map_spacing_m: float = 100.0
    map_seed: int = 7
    map_file: str = ""
    homes_per_group: int = 5
    offices_per_group: int = 2
    meeting_spots_per_group: int = 1
    bus_stops: int = 24
    bus_route_stops: int = 5
    people_sizes: list[int] = field(
        default_factory=lambda: [17, 17, 17, 17, 16, 16, 16, 16]
    )
    person_speed_mps: list[float] = field(default_factory=lambda: [0.8, 1.4])
    work_start_s: list[int] = field(default_factory=lambda: [25_200, 32_400])
    work_hours_s: int = 28_800
    office_pause_s: list[int] = field(default_factory=lambda: [60, 14_400])
    activity_prob: float = 0.5
    activity_s: list[int] = field(default_factory=lambda: [3_600, 7_200])
    ride_buses: bool = True
    bus_groups: int = 8
    buses_per_group: int = 2
    bus_speed_mps: list[float] = field(default_factory=lambda: [7.0, 10.0])
    bus_pause_s: list[int] = field(default_factory=lambda: [10, 30])
    police_nodes: int = 2
    police_speed_mps: list[float] = field(default_factory=lambda: [7.0, 10.0])
    police_pause_s: list[int] = field(default_factory=lambda: [100, 300])
    rwp_nodes: int = 0
    rwp_speed_mps: list[float] = field(default_factory=lambda: [0.8, 1.4])
    rwp_pause_max_s: int = 120
    total_nodes: int = 0  # optional cross-check; 0 means derive
    range_m: float = 100.0
    bitrate_bps: int = 11_000_000
    beacon_ms: int = 100
    buffer_bytes: int = 2_000_000
    traffic_rate_per_day: float = 500.0
    traffic_size_bytes: list[int] = field(default_factory=lambda: [1_000, 100_000])
    traffic_pairs: int = 50
    traffic_seed: int = 1
    protocols: list[str] = field(default_factory=lambda: list(PROTOCOLS))
    ttl_s: list[int] = field(
        default_factory=lambda: [3_600, 21_600, 86_400, 172_800, 345_600, 604_800, 1_814_400]
    )
    ttl_mode: str = "time"
    ttl_hops: list[int] = field(default_factory=lambda: [3, 5, 10])
    delete_delivered: bool = False
    cost_mode: str = "include_delivered"
    rng_algorithm: str = "philox"
    prophet_p_init: float = 0.75
    prophet_beta: float = 0.25
    prophet_gamma: float = 0.98
    prophet_time_unit_s: int = 30
    snw_copies: int = 10
    snw_mode: str = "binary"
    bubble_familiar_s: int = 900
    bubble_k: int = 5
    bubble_window_s: int = 21_600

    @property
    def duration_ms(self) -> int:
        return self.duration_s * 1000

    @property
    def warmup_ms(self) -> int:
        return self.warmup_s * 1000

    @property
    def n_people(self) -> int:
        return sum(self.people_sizes)

    @property
    def n_buses(self) -> int:
        return self.bus_groups * self.buses_per_group

    @property
    def n_nodes(self) -> int:
        return self.n_people + self.n_buses + self.police_nodes + self.rwp_nodes

    @property
    def people_groups(self) -> int:
        return len(self.people_sizes)

    def link_config(self) -> LinkConfig:
        return LinkConfig(self.range_m, self.bitrate_bps, self.beacon_ms)

    def protocol_settings(self) -> ProtocolSettings:
        return ProtocolSettings(
            prophet_p_init=self.prophet_p_init,
            prophet_beta=self.prophet_beta,
            prophet_gamma=self.prophet_gamma,
            prophet_time_unit_ms=self.prophet_time_unit_s * 1000,
            snw_copies=self.snw_copies,
            bubble_familiar_ms=self.bubble_familiar_s * 1000,
            bubble_k=self.bubble_k,
            bubble_window_ms=self.bubble_window_s * 1000,
        )

    def ttl_values(self) -> list[int]:
        return list(self.ttl_hops) if self.ttl_mode == "hops" else list(self.ttl_s)


# key in file -> (Scenario field, value parser)

def _int(v: str) -> int:
    return int(v)


def _float(v: str) -> float:
    return float(v)


def _bool(v: str) -> bool:
    if v.lower() in ("true", "yes", "1", "on"):
        return True
    if v.lower() in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _str(v: str) -> str:
    return v


def _int_list(v: str) -> list[int]:
    return [int(x) for x in v.split(",") if x.strip() != ""]


def _float_list(v: str) -> list[float]:
    return [float(x) for x in v.split(",") if x.strip() != ""]


def _str_list(v: str) -> list[str]:
    return [x.strip() for x in v.split(",") if x.strip() != ""]


KEYS = {
    "sim.duration_s": ("duration_s", _int),
    "sim.warmup_s": ("warmup_s", _int),
    "sim.seeds": ("seeds", _int_list),
    "map.rows": ("map_rows", _int),
    "map.cols": ("map_cols", _int),
    "map.spacing_m": ("map_spacing_m", _float),
    "map.seed": ("map_seed", _int),
    "map.file": ("map_file", _str),
    "map.homes_per_group": ("homes_per_group", _int),
    "map.offices_per_group": ("offices_per_group", _int),
    "map.meeting_spots_per_group": ("meeting_spots_per_group", _int),
    "map.bus_stops": ("bus_stops", _int),
    "map.bus_route_stops": ("bus_route_stops", _int),
    "groups.people_sizes": ("people_sizes", _int_list),
    "groups.person_speed_mps": ("person_speed_mps", _float_list),
    "groups.work_start_s": ("work_start_s", _int_list),
    "groups.work_hours_s": ("work_hours_s", _int),
    "groups.office_pause_s": ("office_pause_s", _int_list),
    "groups.activity_prob": ("activity_prob", _float),
    "groups.activity_s": ("activity_s", _int_list),
    "groups.ride_buses": ("ride_buses", _bool),
    "groups.bus_groups": ("bus_groups", _int),
    "groups.buses_per_group": ("buses_per_group", _int),
    "groups.bus_speed_mps": ("bus_speed_mps", _float_list),
    "groups.bus_pause_s": ("bus_pause_s", _int_list),
    "groups.police_nodes": ("police_nodes", _int),
    "groups.police_speed_mps": ("police_speed_mps", _float_list),
    "groups.police_pause_s": ("police_pause_s", _int_list),
    "groups.rwp_nodes": ("rwp_nodes", _int),
    "groups.rwp_speed_mps": ("rwp_speed_mps", _float_list),
    "groups.rwp_pause_max_s": ("rwp_pause_max_s", _int),
    "groups.total": ("total_nodes", _int),
    "link.range_m": ("range_m", _float),
    "link.bitrate_bps": ("bitrate_bps", _int),
    "link.beacon_ms": ("beacon_ms", _int),
    "buffer.capacity_bytes": ("buffer_bytes", _int),
    "traffic.rate_per_day": ("traffic_rate_per_day", _float),
    "traffic.size_bytes": ("traffic_size_bytes", _int_list),
    "traffic.pairs": ("traffic_pairs", _int),
    "traffic.seed": ("traffic_seed", _int),
    "run.protocols": ("protocols", _str_list),
    "run.ttl_s": ("ttl_s", _int_list),
    "run.ttl_mode": ("ttl_mode", _str),
    "run.ttl_hops": ("ttl_hops", _int_list),
    "routing.delete_delivered": ("delete_delivered", _bool),
    "routing.cost_mode": ("cost_mode", _str),
    "rng.algorithm": ("rng_algorithm", _str),
    "prophet.p_init": ("prophet_p_init", _float),
    "prophet.beta": ("prophet_beta", _float),
    "prophet.gamma": ("prophet_gamma", _float),
    "prophet.time_unit_s": ("prophet_time_unit_s", _int),
    "snw.copies": ("snw_copies", _int),
    "snw.l": ("snw_copies", _int),  # alias
    "snw.mode": ("snw_mode", _str),
    "bubble.familiar_s": ("bubble_familiar_s", _int),
    "bubble.k": ("bubble_k", _int),
    "bubble.window_s": ("bubble_window_s", _int),
}


def _parse_lines(lines, base: Path | None, raw: dict, depth: int = 0) -> None:
    if depth > 8:
        raise ScenarioError("include nesting too deep")
    for lineno, line in enumerate(lines, 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if text.startswith("include "):
            inc = text.split(None, 1)[1].strip()
            path = (base / inc) if base is not None else Path(inc)
            if not path.exists():
                raise ScenarioError(f"line {lineno}: include {inc!r} not found")
            with open(path, encoding="utf-8") as fh:
                _parse_lines(fh, path.parent, raw, depth + 1)
            continue
        if "=" not in text:
            raise ScenarioError(f"line {lineno}: expected `key = value`, got {text!r}")
        key, value = (part.strip() for part in text.split("=", 1))
        if key not in KEYS:
            raise ScenarioError(f"line {lineno}: unknown key {key!r}")
        raw[key] = value


def bundled_scenario_path(name: str) -> Path:
    res = importlib.resources.files("oppbench").joinpath(f"data/{name}.scen")
    if not res.is_file():
        raise ScenarioError(f"no bundled scenario named {name!r}")
    return Path(str(res))


def load_scenario(source) -> tuple[Scenario, list[str]]:
    """Parse and validate; returns (scenario, guideline warnings)."""
    path = Path(source)
    if not path.exists() and path.suffix == "" and "/" not in str(source):
        path = bundled_scenario_path(str(source))
    if not path.exists():
        raise ScenarioError(f"scenario file {source!r} not found")
    raw: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        _parse_lines(fh, path.parent, raw)
    sc = Scenario()
    for key, value in raw.items():
        attr, parser = KEYS[key]
        try:
            setattr(sc, attr, parser(value))
        except ValueError as exc:
            raise ScenarioError(f"key {key}: {exc}") from exc
    return sc, validate_scenario(sc)


def validate_scenario(sc: Scenario) -> list[str]:
    """Hard errors raise; guideline deviations come back as warnings."""
    def positive(name, v):
        if v <= 0:
            raise ScenarioError(f"{name} must be positive, got {v}")

    positive("sim.duration_s", sc.duration_s)
    if sc.warmup_s < 0 or sc.warmup_s >= sc.duration_s:
        raise ScenarioError("warm-up must be non-negative and shorter than the run")
    if not sc.seeds:
        raise ScenarioError("sim.seeds must list at least one seed")
    positive("link.range_m", sc.range_m)
    positive("link.bitrate_bps", sc.bitrate_bps)
    positive("link.beacon_ms", sc.beacon_ms)
    positive("buffer.capacity_bytes", sc.buffer_bytes)
    positive("traffic.rate_per_day", sc.traffic_rate_per_day)
    positive("traffic.pairs", sc.traffic_pairs)
    for name, pair in (
        ("groups.person_speed_mps", sc.person_speed_mps),
        ("groups.bus_speed_mps", sc.bus_speed_mps),
        ("groups.police_speed_mps", sc.police_speed_mps),
        ("groups.rwp_speed_mps", sc.rwp_speed_mps),
        ("traffic.size_bytes", sc.traffic_size_bytes),
        ("groups.office_pause_s", sc.office_pause_s),
        ("groups.activity_s", sc.activity_s),
        ("groups.bus_pause_s", sc.bus_pause_s),
        ("groups.police_pause_s", sc.police_pause_s),
        ("groups.work_start_s", sc.work_start_s),
    ):
        if len(pair) != 2 or pair[0] > pair[1]:
            raise ScenarioError(f"{name} must be `min,max` with min <= max")
        if pair[0] < 0:
            raise ScenarioError(f"{name} must be non-negative")
    if any(s <= 0 for s in sc.people_sizes):
        raise ScenarioError("groups.people_sizes entries must be positive")
    if sc.bus_groups < 0 or sc.buses_per_group < 0 or sc.police_nodes < 0 or sc.rwp_nodes < 0:
        raise ScenarioError("group counts must be non-negative")
    if sc.bus_groups > 0 and sc.buses_per_group == 0:
        raise ScenarioError("bus groups configured but groups.buses_per_group is 0")
    if sc.bus_groups > 0 and sc.bus_route_stops < 2:
        raise ScenarioError("map.bus_route_stops must be at least 2")
    if sc.bus_groups > 0 and sc.bus_stops < 2:
        raise ScenarioError("bus groups need at least 2 map.bus_stops")
    if sc.total_nodes and sc.total_nodes != sc.n_nodes:
        raise ScenarioError(
            f"groups.total={sc.total_nodes} but group sizes sum to {sc.n_nodes}"
        )
    for proto in sc.protocols:
        if proto not in PROTOCOLS:
            raise ScenarioError(f"unknown protocol {proto!r} in run.protocols")
    if sc.ttl_mode not in ("time", "hops"):
        raise ScenarioError("run.ttl_mode must be `time` or `hops`")
    if not sc.ttl_values():
        raise ScenarioError("the TTL sweep list is empty")
    if any(t <= 0 for t in sc.ttl_values()):
        raise ScenarioError("TTL values must be positive")
    if sc.cost_mode not in ("include_delivered", "exclude_delivered"):
        raise ScenarioError("routing.cost_mode must be include_delivered or exclude_delivered")
    if sc.snw_mode != "binary":
        raise ScenarioError("snw.mode supports only `binary`")
    if sc.rng_algorithm != "philox":
        raise ScenarioError("rng.algorithm supports only `philox`")
    if sc.snw_copies < 1:
        raise ScenarioError("snw.copies must be at least 1")
    if not 0.0 <= sc.activity_prob <= 1.0:
        raise ScenarioError("groups.activity_prob must be in [0,1]")
    for name, v in (
        ("prophet.p_init", sc.prophet_p_init),
        ("prophet.beta", sc.prophet_beta),
        ("prophet.gamma", sc.prophet_gamma),
    ):
        if not 0.0 <= v <= 1.0:
            raise ScenarioError(f"{name} must be in [0,1]")
    warnings = []
    if not GUIDELINE_NODES[0] <= sc.n_nodes <= GUIDELINE_NODES[1]:
        warnings.append(
            f"node total {sc.n_nodes} outside density guideline "
            f"{GUIDELINE_NODES[0]}-{GUIDELINE_NODES[1]}"
        )
    if not GUIDELINE_RANGE_M[0] <= sc.range_m <= GUIDELINE_RANGE_M[1]:
        warnings.append(
            f"radio range {sc.range_m:g} m outside guideline "
            f"{GUIDELINE_RANGE_M[0]:g}-{GUIDELINE_RANGE_M[1]:g} m"
        )
    return warnings


def scenario_hash(sc: Scenario) -> str:
    """Stable digest of the fully resolved configuration."""
    import hashlib

    parts = []
    for f in fields(Scenario):
        parts.append(f"{f.name}={getattr(sc, f.name)!r}")
    return hashlib.sha256(";".join(parts).encode("utf-8")).hexdigest()[:16]


def build_map(sc: Scenario) -> Map:
    if sc.map_file:
        with open(sc.map_file, encoding="utf-8") as fh:
            return read_map(fh)
    counts = {
        "homes": sc.homes_per_group * sc.people_groups,
        "offices": sc.offices_per_group * sc.people_groups,
        "meeting_spots": sc.meeting_spots_per_group * sc.people_groups,
        "bus_stops": sc.bus_stops if sc.bus_groups > 0 else 0,
    }
    rng = derive_stream(sc.map_seed, "map")
    try:
        return build_grid_map(sc.map_rows, sc.map_cols, sc.map_spacing_m, rng, counts)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc


def build_world(sc: Scenario, seed: int, m: Map | None = None) -> MobilityWorld:
    """Assemble node processes in canonical id order: people, buses, police, rwp."""
    m = m or build_map(sc)
    person_params = PersonParams(
        speed=tuple(sc.person_speed_mps),
        work_start_s=tuple(sc.work_start_s),
        work_hours_s=sc.work_hours_s,
        office_pause_s=tuple(sc.office_pause_s),
        activity_prob=sc.activity_prob,
        activity_s=tuple(sc.activity_s),
        ride_buses=sc.ride_buses and sc.bus_groups > 0,
    )
    bus_params = VehicleParams(speed=tuple(sc.bus_speed_mps), pause_s=tuple(sc.bus_pause_s))
    police_params = VehicleParams(speed=tuple(sc.police_speed_mps), pause_s=tuple(sc.police_pause_s))
    rwp_params = RwpParams(speed=tuple(sc.rwp_speed_mps), pause_max_s=sc.rwp_pause_max_s)
    processes = []
    node_id = 0
    for g, size in enumerate(sc.people_sizes):
        points = GroupPoints(
            homes=_slice(m.points["homes"], g, sc.homes_per_group),
            offices=_slice(m.points["offices"], g, sc.offices_per_group),
            meeting_spots=_slice(m.points["meeting_spots"], g, sc.meeting_spots_per_group),
        )
        for _ in range(size):
            rng = derive_stream(seed, f"mobility.node.{node_id}")
            processes.append(PersonProcess(node_id, rng, m, person_params, points, seed))
            node_id += 1
    route_rng = derive_stream(sc.map_seed, "map.busroutes")
    for g in range(sc.bus_groups):
        stops = route_rng.sample(m.points["bus_stops"], min(sc.bus_route_stops, len(m.points["bus_stops"])))
        for j in range(sc.buses_per_group):
            rng = derive_stream(seed, f"mobility.node.{node_id}")
            start = (j * len(stops)) // sc.buses_per_group
            processes.append(BusProcess(node_id, rng, m, stops, bus_params, start))
            node_id += 1
    for _ in range(sc.police_nodes):
        rng = derive_stream(seed, f"mobility.node.{node_id}")
        processes.append(
            PatrolProcess(node_id, rng, m, police_params, tuple(sc.police_pause_s))
        )
        node_id += 1
    for _ in range(sc.rwp_nodes):
        rng = derive_stream(seed, f"mobility.node.{node_id}")
        processes.append(RandomWaypointProcess(node_id, rng, m, rwp_params))
        node_id += 1
    return MobilityWorld(m, processes)


def _slice(points: list[int], group: int, per_group: int) -> list[int]:
    chunk = points[group * per_group : (group + 1) * per_group]
    if not chunk:
        raise ScenarioError("not enough named map points for all groups")
    return chunk
