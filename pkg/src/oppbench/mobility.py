"""Movement models: map patrols, bus lines, working-day routines, random waypoint.

Each node's trajectory is a chain of constant-velocity legs (pauses are
zero-velocity legs).  A leg transition picks the next leg from the model's
state machine; positions at arbitrary times come from vectorized linear
interpolation over the current legs.  All draws use per-node labeled
streams, so traces never depend on routing behavior.
"""

import math
from dataclasses import dataclass

import numpy as np

from .engine import MS_PER_DAY, MS_PER_SECOND, RngStream, SimTime, derive_stream
from .worldmap import Map, dijkstra, shortest_path

HOUR_MS = 3_600_000

PHASE_HOME = "home"
PHASE_TO_OFFICE = "to-office"
PHASE_OFFICE = "office"
PHASE_TO_ACTIVITY = "to-activity"
PHASE_ACTIVITY = "activity"
PHASE_TO_HOME = "to-home"


@dataclass(frozen=True, slots=True)
class Leg:
    t0: SimTime
    t1: SimTime
    p0: tuple[float, float]
    p1: tuple[float, float]

    @property
    def paused(self) -> bool:
        return self.p0 == self.p1


@dataclass(slots=True)
class PersonParams:
    speed: tuple[float, float] = (0.8, 1.4)
    work_start_s: tuple[int, int] = (7 * 3600, 9 * 3600)
    work_hours_s: int = 8 * 3600
    office_pause_s: tuple[int, int] = (60, 4 * 3600)
    activity_prob: float = 0.5
    activity_s: tuple[int, int] = (3600, 2 * 3600)
    ride_buses: bool = True


@dataclass(slots=True)
class VehicleParams:
    speed: tuple[float, float] = (7.0, 10.0)
    pause_s: tuple[int, int] = (10, 30)


@dataclass(slots=True)
class RwpParams:
    speed: tuple[float, float] = (0.8, 1.4)
    pause_max_s: int = 120


@dataclass(slots=True)
class DailySchedule:
    home: int
    office: int
    work_start: SimTime
    evening_activity: bool
    activity_spot: int
    activity_ms: int


@dataclass(slots=True)
class GroupPoints:
    homes: list[int]
    offices: list[int]
    meeting_spots: list[int]


def plan_day(
    node_id: int,
    day: int,
    seed: int,
    params: PersonParams,
    home: int,
    office: int,
    meeting_spots: list[int],
) -> DailySchedule:
    """Draw one day's routine from a stream keyed by (node, day)."""
    rng = derive_stream(seed, f"mobility.plan.{node_id}.{day}")
    start_rel = rng.integer(params.work_start_s[0], params.work_start_s[1])
    activity = rng.random() < params.activity_prob
    spot = rng.choice(meeting_spots) if meeting_spots else home
    dur_ms = rng.integer(params.activity_s[0], params.activity_s[1]) * MS_PER_SECOND
    return DailySchedule(
        home=home,
        office=office,
        work_start=day * MS_PER_DAY + start_rel * MS_PER_SECOND,
        evening_activity=activity,
        activity_spot=spot,
        activity_ms=dur_ms,
    )


def _move_leg(t0: SimTime, p0, p1, speed: float) -> Leg:
    dist = math.dist(p0, p1)
    dur = max(1, math.ceil(dist / speed * MS_PER_SECOND))
    return Leg(t0, t0 + dur, p0, p1)


@dataclass(slots=True)
class Trip:
    path: list[int]
    idx: int
    dest: int
    dest_dist: list[float]
    speed: float
    next_phase: str


class NodeProcess:
    """One node's movement state machine."""

    kind = "node"
    max_speed = 0.0

    def __init__(self, node_id: int, rng: RngStream):
        self.node_id = node_id
        self.rng = rng
        self.leg: Leg | None = None

    def start(self, world: "MobilityWorld") -> Leg:
        raise NotImplementedError

    def on_leg_end(self, now: SimTime, world: "MobilityWorld") -> list[tuple[int, SimTime]]:
        raise NotImplementedError


class PatrolProcess(NodeProcess):
    """Shortest-path map patrol: random vertex targets with pauses between trips."""

    kind = "police"

    def __init__(self, node_id, rng, m: Map, params: VehicleParams, pause_s: tuple[int, int]):
        super().__init__(node_id, rng)
        self.map = m
        self.params = params
        self.pause_s = pause_s
        self.max_speed = params.speed[1]
        self.vertex = rng.integer(0, m.n_vertices - 1)
        self.path: list[int] = []
        self.path_idx = 0
        self.speed = 0.0

    def _pause(self, now: SimTime) -> Leg:
        dur = self.rng.integer(self.pause_s[0], self.pause_s[1]) * MS_PER_SECOND
        p = self.map.vertices[self.vertex]
        return Leg(now, now + dur, p, p)

    def start(self, world) -> Leg:
        self.leg = self._pause(0)
        return self.leg

    def _next_edge(self, now: SimTime) -> Leg:
        a = self.path[self.path_idx]
        b = self.path[self.path_idx + 1]
        return _move_leg(now, self.map.vertices[a], self.map.vertices[b], self.speed)

    def on_leg_end(self, now, world):
        if self.path_idx + 1 < len(self.path):
            self.path_idx += 1
            self.vertex = self.path[self.path_idx]
        if self.path_idx + 1 >= len(self.path):
            if self.path:
                self.path = []
                self.leg = self._pause(now)
            else:
                target = self.vertex
                while target == self.vertex and self.map.n_vertices > 1:
                    target = self.rng.integer(0, self.map.n_vertices - 1)
                self.path = shortest_path(self.map, self.vertex, target)
                self.path_idx = 0
                self.speed = self.rng.uniform(*self.params.speed)
                self.leg = self._next_edge(now)
        else:
            self.leg = self._next_edge(now)
        world.set_leg(self.node_id, self.leg)
        return [(self.node_id, self.leg.t1)]


class BusProcess(NodeProcess):
    """Cyclic bus line over the map's bus stops, pausing at each stop."""

    kind = "bus"

    def __init__(self, node_id, rng, m: Map, route: list[int], params: VehicleParams,
                 start_stop: int = 0):
        super().__init__(node_id, rng)
        if len(route) < 2:
            raise ValueError("bus route needs at least 2 stops")
        self.map = m
        self.route = route
        self.params = params
        self.max_speed = params.speed[1]
        self.seg_paths = [
            shortest_path(m, route[i], route[(i + 1) % len(route)]) for i in range(len(route))
        ]
        self.stop_idx = start_stop % len(route)
        self.path: list[int] = []
        self.path_idx = 0
        self.speed = 0.0
        self.riders: list["PersonProcess"] = []

    @property
    def stop_vertex(self) -> int:
        return self.route[self.stop_idx]

    def _pause(self, now: SimTime) -> Leg:
        dur = self.rng.integer(self.params.pause_s[0], self.params.pause_s[1]) * MS_PER_SECOND
        p = self.map.vertices[self.stop_vertex]
        return Leg(now, now + dur, p, p)

    def start(self, world) -> Leg:
        self.leg = self._pause(0)
        world.bus_paused(self, self.stop_vertex)
        return self.leg

    def _set_leg(self, world, leg: Leg) -> None:
        self.leg = leg
        world.set_leg(self.node_id, leg)
        for rider in self.riders:
            rider.leg = leg
            world.set_leg(rider.node_id, leg)

    def on_leg_end(self, now, world):
        wakeups: list[tuple[int, SimTime]] = []
        if self.path:
            self.path_idx += 1
            if self.path_idx + 1 >= len(self.path):
                # Arrived at the next stop: pause, drop riders bound for it.
                self.stop_idx = (self.stop_idx + 1) % len(self.route)
                self.path = []
                self._set_leg(world, self._pause(now))
                world.bus_paused(self, self.stop_vertex)
                for rider in [r for r in self.riders if r.alight_at == self.stop_vertex]:
                    self.riders.remove(rider)
                    wakeups.extend(rider.alight(now, self.stop_vertex, world))
            else:
                a, b = self.path[self.path_idx], self.path[self.path_idx + 1]
                self._set_leg(
                    world, _move_leg(now, self.map.vertices[a], self.map.vertices[b], self.speed)
                )
        else:
            # Pause over: leave the stop and drive the next segment.
            world.bus_departed(self, self.stop_vertex)
            self.path = self.seg_paths[self.stop_idx]
            self.path_idx = 0
            self.speed = self.rng.uniform(*self.params.speed)
            if len(self.path) < 2:
                # Degenerate segment (consecutive equal stops): skip ahead.
                self.stop_idx = (self.stop_idx + 1) % len(self.route)
                self.path = []
                self._set_leg(world, self._pause(now))
                world.bus_paused(self, self.stop_vertex)
            else:
                a, b = self.path[0], self.path[1]
                self._set_leg(
                    world, _move_leg(now, self.map.vertices[a], self.map.vertices[b], self.speed)
                )
        wakeups.append((self.node_id, self.leg.t1))
        return wakeups


class PersonProcess(NodeProcess):
    """Working-day routine: home, office (8 h), optional evening activity, home.

    Walking trips may hop on a bus paused at a bus stop when one of its stops
    is strictly closer to the walker's destination.
    """

    kind = "person"

    def __init__(self, node_id, rng, m: Map, params: PersonParams, points: GroupPoints,
                 seed: int):
        super().__init__(node_id, rng)
        self.map = m
        self.params = params
        self.points = points
        self.seed = seed
        self.max_speed = params.speed[1]
        assign = derive_stream(seed, f"mobility.assign.{node_id}")
        self.home = assign.choice(points.homes)
        self.office = assign.choice(points.offices)
        self.day = 0
        self.schedule = self._plan(0)
        self.phase = PHASE_HOME
        self.vertex = self.home
        self.trip: Trip | None = None
        self.work_end: SimTime = 0
        self.riding: BusProcess | None = None
        self.alight_at: int | None = None

    def _plan(self, day: int) -> DailySchedule:
        return plan_day(
            self.node_id, day, self.seed, self.params,
            self.home, self.office, self.points.meeting_spots,
        )

    def start(self, world) -> Leg:
        p = self.map.vertices[self.home]
        self.leg = Leg(0, max(0, self.schedule.work_start), p, p)
        return self.leg

    def _begin_trip(self, now: SimTime, dest: int, next_phase: str, world) -> list[tuple[int, SimTime]]:
        dist = dijkstra(self.map, dest)
        self.trip = Trip(
            path=shortest_path(self.map, self.vertex, dest),
            idx=0,
            dest=dest,
            dest_dist=dist,
            speed=self.rng.uniform(*self.params.speed),
            next_phase=next_phase,
        )
        return self._at_vertex(now, world)

    def _at_vertex(self, now: SimTime, world) -> list[tuple[int, SimTime]]:
        trip = self.trip
        v = self.vertex
        if v == trip.dest:
            self.trip = None
            return self._enter(trip.next_phase, now, world)
        if self.params.ride_buses:
            bus, stop = world.best_ride(v, trip.dest_dist)
            if bus is not None:
                self.riding = bus
                self.alight_at = stop
                bus.riders.append(self)
                self.leg = Leg(now, bus.leg.t1, bus.leg.p1, bus.leg.p1)
                world.set_leg(self.node_id, self.leg)
                return []  # the bus now drives this node's legs
        a, b = trip.path[trip.idx], trip.path[trip.idx + 1]
        self.leg = _move_leg(now, self.map.vertices[a], self.map.vertices[b], trip.speed)
        world.set_leg(self.node_id, self.leg)
        return [(self.node_id, self.leg.t1)]

    def alight(self, now: SimTime, vertex: int, world) -> list[tuple[int, SimTime]]:
        self.riding = None
        self.alight_at = None
        self.vertex = vertex
        trip = self.trip
        trip.path = shortest_path(self.map, vertex, trip.dest)
        trip.idx = 0
        return self._at_vertex(now, world)

    def _office_pause(self, now: SimTime, world) -> list[tuple[int, SimTime]]:
        lo, hi = self.params.office_pause_s
        dur = self.rng.integer(lo, hi) * MS_PER_SECOND
        end = min(now + dur, self.work_end)
        p = self.map.vertices[self.office]
        self.leg = Leg(now, end, p, p)
        world.set_leg(self.node_id, self.leg)
        return [(self.node_id, self.leg.t1)]

    def _enter(self, phase: str, now: SimTime, world) -> list[tuple[int, SimTime]]:
        self.phase = phase
        if phase == PHASE_OFFICE:
            self.work_end = now + self.params.work_hours_s * MS_PER_SECOND
            return self._office_pause(now, world)
        if phase == PHASE_ACTIVITY:
            p = self.map.vertices[self.vertex]
            self.leg = Leg(now, now + self.schedule.activity_ms, p, p)
            world.set_leg(self.node_id, self.leg)
            return [(self.node_id, self.leg.t1)]
        if phase == PHASE_HOME:
            self.day += 1
            self.schedule = self._plan(self.day)
            p = self.map.vertices[self.home]
            self.leg = Leg(now, max(now, self.schedule.work_start), p, p)
            world.set_leg(self.node_id, self.leg)
            return [(self.node_id, self.leg.t1)]
        raise AssertionError(f"unexpected phase {phase!r}")

    def on_leg_end(self, now, world):
        if self.riding is not None:
            return []  # stale wakeup from before boarding
        if self.trip is not None:
            self.trip.idx += 1
            self.vertex = self.trip.path[self.trip.idx]
            return self._at_vertex(now, world)
        if self.phase == PHASE_HOME:
            self.phase = PHASE_TO_OFFICE
            return self._begin_trip(now, self.schedule.office, PHASE_OFFICE, world)
        if self.phase == PHASE_OFFICE:
            if now < self.work_end:
                return self._office_pause(now, world)
            if self.schedule.evening_activity:
                self.phase = PHASE_TO_ACTIVITY
                return self._begin_trip(now, self.schedule.activity_spot, PHASE_ACTIVITY, world)
            self.phase = PHASE_TO_HOME
            return self._begin_trip(now, self.schedule.home, PHASE_HOME, world)
        if self.phase == PHASE_ACTIVITY:
            self.phase = PHASE_TO_HOME
            return self._begin_trip(now, self.schedule.home, PHASE_HOME, world)
        raise AssertionError(f"unexpected phase {self.phase!r} at leg end")


class RandomWaypointProcess(NodeProcess):
    """Free-space random waypoint inside the map bounds (validation scenarios)."""

    kind = "rwp"

    def __init__(self, node_id, rng, m: Map, params: RwpParams):
        super().__init__(node_id, rng)
        self.params = params
        self.max_speed = params.speed[1]
        x0, y0, x1, y1 = m.bounds()
        self.bounds = (x0, y0, x1, y1)
        self.pos = (rng.uniform(x0, x1), rng.uniform(y0, y1))
        self.moving = False

    def _random_point(self) -> tuple[float, float]:
        x0, y0, x1, y1 = self.bounds
        return (self.rng.uniform(x0, x1), self.rng.uniform(y0, y1))

    def start(self, world) -> Leg:
        dur = self.rng.integer(0, self.params.pause_max_s) * MS_PER_SECOND
        self.leg = Leg(0, dur, self.pos, self.pos)
        return self.leg

    def on_leg_end(self, now, world):
        if self.moving:
            self.moving = False
            dur = self.rng.integer(0, self.params.pause_max_s) * MS_PER_SECOND
            self.leg = Leg(now, now + dur, self.pos, self.pos)
        else:
            target = self._random_point()
            speed = self.rng.uniform(*self.params.speed)
            self.moving = True
            self.leg = _move_leg(now, self.pos, target, speed)
            self.pos = target
        world.set_leg(self.node_id, self.leg)
        return [(self.node_id, self.leg.t1)]


class MobilityWorld:
    """All node processes plus the vectorized per-leg position table."""

    def __init__(self, m: Map, processes: list[NodeProcess]):
        self.map = m
        self.processes = processes
        n = len(processes)
        self.t0 = np.zeros(n, dtype=np.int64)
        self.t1 = np.ones(n, dtype=np.int64)
        self.p0 = np.zeros((n, 2), dtype=np.float64)
        self.p1 = np.zeros((n, 2), dtype=np.float64)
        self.max_speed = max((p.max_speed for p in processes), default=0.0)
        self._paused_buses: dict[int, list[BusProcess]] = {}
        # Legs replaced since the last contact scan, for mid-batch lookups.
        self.history: list[tuple[int, int, int, float, float, float, float]] = []
        for proc in processes:
            leg = proc.start(self)
            self.set_leg(proc.node_id, leg)

    @property
    def n_nodes(self) -> int:
        return len(self.processes)

    def set_leg(self, node_id: int, leg: Leg) -> None:
        self.history.append(
            (
                node_id,
                int(self.t0[node_id]),
                int(self.t1[node_id]),
                float(self.p0[node_id, 0]),
                float(self.p0[node_id, 1]),
                float(self.p1[node_id, 0]),
                float(self.p1[node_id, 1]),
            )
        )
        self.t0[node_id] = leg.t0
        self.t1[node_id] = max(leg.t1, leg.t0 + 1)
        self.p0[node_id] = leg.p0
        self.p1[node_id] = leg.p1

    def position_of_at(self, node_id: int, t: SimTime) -> tuple[float, float]:
        """Position of one node at ``t``, consulting replaced legs if needed."""
        if t >= self.t0[node_id]:
            frac = min(1.0, (t - self.t0[node_id]) / (self.t1[node_id] - self.t0[node_id]))
            x = self.p0[node_id, 0] + (self.p1[node_id, 0] - self.p0[node_id, 0]) * frac
            y = self.p0[node_id, 1] + (self.p1[node_id, 1] - self.p0[node_id, 1]) * frac
            return (float(x), float(y))
        for nid, t0, t1, x0, y0, x1, y1 in reversed(self.history):
            if nid == node_id and t0 <= t:
                frac = min(1.0, max(0.0, (t - t0) / max(1, t1 - t0)))
                return (x0 + (x1 - x0) * frac, y0 + (y1 - y0) * frac)
        return (float(self.p0[node_id, 0]), float(self.p0[node_id, 1]))

    def initial_wakeups(self) -> list[tuple[int, SimTime]]:
        return [
            (p.node_id, p.leg.t1) for p in self.processes
            if not (isinstance(p, PersonProcess) and p.riding is not None)
        ]

    def transition(self, node_id: int, now: SimTime) -> list[tuple[int, SimTime]]:
        return self.processes[node_id].on_leg_end(now, self)

    def positions_at(self, t: SimTime) -> np.ndarray:
        frac = (t - self.t0) / (self.t1 - self.t0)
        np.clip(frac, 0.0, 1.0, out=frac)
        return self.p0 + (self.p1 - self.p0) * frac[:, None]

    # Bus stop registry used by the boarding rule.

    def bus_paused(self, bus: BusProcess, vertex: int) -> None:
        self._paused_buses.setdefault(vertex, []).append(bus)

    def bus_departed(self, bus: BusProcess, vertex: int) -> None:
        buses = self._paused_buses.get(vertex, [])
        if bus in buses:
            buses.remove(bus)

    def best_ride(self, vertex: int, dest_dist: list[float]) -> tuple[BusProcess | None, int]:
        """Lowest-id paused bus at ``vertex`` with a stop strictly nearer the goal."""
        best_bus, best_stop = None, -1
        for bus in sorted(self._paused_buses.get(vertex, []), key=lambda b: b.node_id):
            stops = sorted(bus.route, key=lambda s: (dest_dist[s], s))
            stop = stops[0]
            if stop != vertex and dest_dist[stop] < dest_dist[vertex]:
                best_bus, best_stop = bus, stop
                break
        return best_bus, best_stop


def drive(world: MobilityWorld, until_ms: SimTime, observer=None) -> None:
    """Standalone mobility loop (tests and trace export; no contacts, no routing)."""
    import heapq

    heap: list[tuple[SimTime, int, int]] = []
    seq = 0
    for node, t in world.initial_wakeups():
        heap.append((t, seq, node))
        seq += 1
    heapq.heapify(heap)
    while heap and heap[0][0] <= until_ms:
        t, _, node = heapq.heappop(heap)
        for nxt_node, nxt_t in world.transition(node, t):
            heapq.heappush(heap, (nxt_t, seq, nxt_node))
            seq += 1
        if observer is None:
            world.history.clear()
        else:
            observer(t, node)


def write_position_trace(world: MobilityWorld, until_ms: SimTime, period_ms: int, fh) -> None:
    """Sampled `time_ms node_id x y` dump for offline inspection."""
    times = list(range(0, until_ms + 1, period_ms))
    cursor = {"i": 0}

    def sample_up_to(t_now, _node=None):
        while cursor["i"] < len(times) and times[cursor["i"]] <= t_now:
            t = times[cursor["i"]]
            for node in range(world.n_nodes):
                x, y = world.position_of_at(node, t)
                fh.write(f"{t} {node} {x:.2f} {y:.2f}\n")
            cursor["i"] += 1
        world.history.clear()

    drive(world, until_ms, observer=sample_up_to)
    sample_up_to(until_ms)
