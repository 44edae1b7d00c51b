"""Earliest-arrival journeys over timed contacts: the delivery-time bound.

Assumes zero transfer time and infinite buffers, so no protocol can beat it;
unthrottled flooding should match it.  A contact is usable from its `up`
instant (inclusive) until its `down` instant (exclusive), mirroring the
simulator's abort-on-down transfer semantics.
"""

import heapq
import math

from .contacts import ContactEvent, contact_intervals
from .engine import SimTime

UNREACHABLE = None


def _earliest_arrivals(events, src: int, depart: SimTime, deadline) -> dict[int, SimTime]:
    by_node: dict[int, list[tuple[SimTime, SimTime | None, int]]] = {}
    for t_up, t_down, a, b in contact_intervals(events):
        by_node.setdefault(a, []).append((t_up, t_down, b))
        by_node.setdefault(b, []).append((t_up, t_down, a))
    arrival = {src: depart}
    heap: list[tuple[SimTime, int]] = [(depart, src)]
    while heap:
        t, u = heapq.heappop(heap)
        if t > arrival.get(u, math.inf):
            continue
        for t_up, t_down, v in by_node.get(u, ()):
            hop_at = max(t, t_up)
            if t_down is not None and hop_at >= t_down:
                continue  # contact already over once we hold the message
            if hop_at > deadline:
                continue
            if hop_at < arrival.get(v, math.inf):
                arrival[v] = hop_at
                heapq.heappush(heap, (hop_at, v))
    return arrival


def foremost_journey(
    events: list[ContactEvent],
    src: int,
    dst: int,
    depart: SimTime,
    ttl: SimTime | None = None,
) -> SimTime | None:
    """Earliest time a message departing ``src`` at ``depart`` can reach ``dst``.

    Returns None when no time-respecting contact sequence delivers within
    ``depart + ttl``.
    """
    if src == dst:
        raise ValueError("journey endpoints must differ")
    deadline = math.inf if ttl is None else depart + ttl
    return _earliest_arrivals(events, src, depart, deadline).get(dst)


def reachable_set(
    events: list[ContactEvent], src: int, depart: SimTime, ttl: SimTime | None = None
) -> dict[int, SimTime]:
    """Arrival time for every node a flood from ``src`` can reach in time."""
    deadline = math.inf if ttl is None else depart + ttl
    arrival = _earliest_arrivals(events, src, depart, deadline)
    arrival.pop(src)
    return arrival
