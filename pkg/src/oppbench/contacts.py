"""Contact detection, transfer timing, and the contact-trace file format.

Contacts are discovered by beacon scans: every beacon period the pairwise
distances over interpolated positions are compared against the radio range
(inclusive).  Scans are processed in batches; only pairs whose distance can
plausibly cross the range inside a batch are re-evaluated at every beacon
instant, the rest provably keep their state.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .engine import MS_PER_SECOND, SimTime
from .mobility import MobilityWorld


class TraceError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class ContactEvent:
    time: SimTime
    a: int
    b: int
    up: bool


@dataclass(slots=True)
class LinkConfig:
    range_m: float = 100.0
    bitrate_bps: int = 11_000_000
    beacon_ms: int = 100


def transfer_duration_ms(size_bytes: int, link: LinkConfig) -> int:
    """Half-duplex transfer time at ms resolution, rounded up."""
    if size_bytes <= 0:
        raise ValueError("message size must be positive")
    return -(-size_bytes * 8 * MS_PER_SECOND // link.bitrate_bps)


class ContactScanner:
    """Incremental beacon scanning over a MobilityWorld.

    Scans are evaluated in batches of roughly one second: distances at the
    batch boundaries bound which pairs can cross the range inside the window
    (relative displacement is capped by the nodes' top speeds), and only that
    band is re-evaluated at every beacon instant.  Emitted events carry the
    exact beacon timestamps; the driving simulation applies a whole batch at
    the window's end, so contact state changes take effect at most one batch
    window after their timestamp.
    """

    def __init__(self, world: MobilityWorld, link: LinkConfig, batch_target_ms: int = 1000):
        self.world = world
        self.link = link
        n = world.n_nodes
        self.n = n
        ii, jj = np.triu_indices(n, 1)
        self.ii = ii
        self.jj = jj
        self.in_range = np.zeros(len(ii), dtype=bool)
        self._d_prev = np.zeros(len(ii))
        per_batch = max(1, batch_target_ms // link.beacon_ms)
        self.window_ms = per_batch * link.beacon_ms
        self._last_scan: SimTime = 0

    def initial_scan(self, t: SimTime = 0) -> list[ContactEvent]:
        pos = self.world.positions_at(t)
        d = pdist(pos) if self.n > 1 else np.zeros(0)
        self.in_range = d <= self.link.range_m
        self._d_prev = d
        self._last_scan = t
        self.world.history.clear()
        return [
            ContactEvent(t, int(self.ii[k]), int(self.jj[k]), True)
            for k in np.flatnonzero(self.in_range)
        ]

    def _positions_matrix(self, times: np.ndarray) -> np.ndarray:
        """Node positions at each time in the current window, history-aware."""
        w = self.world
        span = np.maximum(w.t1 - w.t0, 1)
        frac = (times[:, None] - w.t0[None, :]) / span[None, :]
        np.clip(frac, 0.0, 1.0, out=frac)
        pos = w.p0[None, :, :] + (w.p1 - w.p0)[None, :, :] * frac[:, :, None]
        if w.history:
            for node, t0h, t1h, x0, y0, x1, y1 in w.history:  # chronological
                mask = (times >= t0h) & (times <= t1h) & (times < w.t0[node])
                if mask.any():
                    fr = np.clip((times[mask] - t0h) / max(1, t1h - t0h), 0.0, 1.0)
                    pos[mask, node, 0] = x0 + (x1 - x0) * fr
                    pos[mask, node, 1] = y0 + (y1 - y0) * fr
        return pos

    def scan_batch(self, t_end: SimTime) -> list[ContactEvent]:
        """Evaluate all beacon instants in (last_scan, t_end]; return state changes."""
        world = self.world
        rng_m = self.link.range_m
        pos_end = world.positions_at(t_end)
        d_end = pdist(pos_end) if self.n > 1 else np.zeros(0)
        window_s = (t_end - self._last_scan) / MS_PER_SECOND
        delta = 2.0 * world.max_speed * window_s
        lo = np.minimum(self._d_prev, d_end) - delta
        hi = np.maximum(self._d_prev, d_end) + delta
        band = np.flatnonzero((lo <= rng_m) & (rng_m <= hi))
        events: list[ContactEvent] = []
        if band.size:
            times = np.arange(
                self._last_scan + self.link.beacon_ms, t_end + 1, self.link.beacon_ms,
                dtype=np.float64,
            )
            bi = self.ii[band]
            bj = self.jj[band]
            pos = self._positions_matrix(times)
            diff = pos[:, bi, :] - pos[:, bj, :]
            d_band = np.sqrt((diff * diff).sum(axis=2))
            st = d_band <= rng_m  # (k, nband)
            st[-1] = d_end[band] <= rng_m  # keep endpoint rule identical to pdist
            trail = np.vstack([self.in_range[band][None, :], st])
            step_idx, pair_idx = np.nonzero(trail[1:] != trail[:-1])
            for s, p in zip(step_idx.tolist(), pair_idx.tolist()):
                pair = int(band[p])
                events.append(
                    ContactEvent(
                        int(times[s]), int(self.ii[pair]), int(self.jj[pair]), bool(st[s, p])
                    )
                )
            self.in_range[band] = st[-1]
        self._d_prev = d_end
        self._last_scan = t_end
        world.history.clear()
        return events


def write_trace(fh, n_nodes: int, events) -> None:
    """Canonical contact-trace dump: `NODES n` header then CONN records."""
    fh.write(f"NODES {n_nodes}\n")
    for ev in events:
        kind = "up" if ev.up else "down"
        fh.write(f"CONN {ev.time} {ev.a} {ev.b} {kind}\n")


def read_trace_header(fh) -> int:
    """Consume lines up to and including the NODES header; return node count."""
    for lineno, raw in enumerate(fh, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] != "NODES":
            raise TraceError(f"line {lineno}: expected NODES header, got {parts[0]!r}")
        try:
            n_nodes = int(parts[1])
        except (IndexError, ValueError) as exc:
            raise TraceError(f"line {lineno}: malformed NODES header") from exc
        if n_nodes < 2:
            raise TraceError(f"line {lineno}: need at least 2 nodes")
        return n_nodes
    raise TraceError("missing NODES header")


def iter_trace_events(fh, n_nodes: int):
    """Validate and yield CONN records lazily (memory stays flat on big traces)."""
    state: dict[tuple[int, int], bool] = {}
    last_t = -1
    for lineno, raw in enumerate(fh, 2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] != "CONN":
            raise TraceError(f"line {lineno}: unknown record {parts[0]!r}")
        try:
            t = int(parts[1])
            a = int(parts[2])
            b = int(parts[3])
            kind = parts[4]
        except (IndexError, ValueError) as exc:
            raise TraceError(f"line {lineno}: malformed CONN record") from exc
        if kind not in ("up", "down"):
            raise TraceError(f"line {lineno}: contact kind must be up or down")
        if not (0 <= a < n_nodes and 0 <= b < n_nodes):
            raise TraceError(f"line {lineno}: node id out of range")
        if a >= b:
            raise TraceError(f"line {lineno}: node pair must satisfy a < b")
        if t < 0:
            raise TraceError(f"line {lineno}: negative time")
        if t < last_t:
            raise TraceError(f"line {lineno}: events not time-ordered")
        up = kind == "up"
        if state.get((a, b), False) == up:
            raise TraceError(f"line {lineno}: up/down does not alternate for pair {a},{b}")
        state[(a, b)] = up
        last_t = t
        yield ContactEvent(t, a, b, up)


def read_trace(fh) -> tuple[int, list[ContactEvent]]:
    """Parse and validate a whole contact trace; raises TraceError with line numbers."""
    n_nodes = read_trace_header(fh)
    return n_nodes, list(iter_trace_events(fh, n_nodes))


def contact_intervals(events, horizon: SimTime | None = None):
    """Collapse an event stream into per-pair [up, down) intervals.

    Contacts still open at the end of the stream extend to ``horizon``
    (or forever when None).
    """
    open_at: dict[tuple[int, int], SimTime] = {}
    intervals: list[tuple[SimTime, SimTime | None, int, int]] = []
    for ev in events:
        key = (ev.a, ev.b)
        if ev.up:
            open_at[key] = ev.time
        else:
            intervals.append((open_at.pop(key), ev.time, ev.a, ev.b))
    for (a, b), t_up in sorted(open_at.items(), key=lambda kv: (kv[1], kv[0])):
        intervals.append((t_up, horizon, a, b))
    intervals.sort(key=lambda iv: (iv[0], iv[2], iv[3]))
    return intervals
