import math
import random

import pytest

from oppbench.contacts import ContactEvent
from oppbench.oracle import foremost_journey, reachable_set


def up(t, a, b):
    return ContactEvent(t, a, b, True)


def down(t, a, b):
    return ContactEvent(t, a, b, False)


def spread_oracle(events, src, depart, ttl=None):
    """Independent reference: instantaneous flooding closure at event times.

    Possession can only change at the departure instant or when a contact
    comes up, so evaluating the closure over active edges at those times
    finds every earliest arrival.
    """
    deadline = math.inf if ttl is None else depart + ttl
    intervals = []
    open_at = {}
    for ev in sorted(events, key=lambda e: (e.time, e.a, e.b)):
        if ev.up:
            open_at[(ev.a, ev.b)] = ev.time
        else:
            intervals.append((open_at.pop((ev.a, ev.b)), ev.time, ev.a, ev.b))
    for (a, b), t0 in open_at.items():
        intervals.append((t0, math.inf, a, b))
    times = sorted({depart} | {t0 for t0, *_ in intervals if t0 >= depart})
    arrival = {src: depart}
    for t in times:
        if t > deadline:
            break
        active = [(a, b) for t0, t1, a, b in intervals if t0 <= t < t1]
        changed = True
        while changed:
            changed = False
            for a, b in active:
                for x, y in ((a, b), (b, a)):
                    if arrival.get(x, math.inf) <= t and arrival.get(y, math.inf) > t:
                        arrival[y] = t
                        changed = True
    arrival.pop(src, None)
    return arrival


def test_single_hop_at_contact_instant():
    events = [up(5, 0, 1)]
    assert foremost_journey(events, 0, 1, depart=0) == 5


def test_time_respecting_order_enforced():
    # The second leg closes before the first opens: unreachable.
    events = [up(3, 1, 2), down(4, 1, 2), up(5, 0, 1)]
    assert foremost_journey(events, 0, 2, depart=0) is None


def test_contact_unusable_at_down_instant():
    events = [up(2, 0, 1), down(6, 0, 1)]
    assert foremost_journey(events, 0, 1, depart=6) is None
    assert foremost_journey(events, 0, 1, depart=5) == 5


def test_ttl_bounds_arrival():
    events = [up(50, 0, 1)]
    assert foremost_journey(events, 0, 1, depart=0, ttl=49) is None
    assert foremost_journey(events, 0, 1, depart=0, ttl=50) == 50


def test_waiting_on_a_relay():
    events = [up(10, 0, 1), down(20, 0, 1), up(30, 1, 2), down(40, 1, 2)]
    assert foremost_journey(events, 0, 2, depart=0) == 30


def test_existing_contact_usable_at_departure():
    events = [up(0, 0, 1)]
    assert foremost_journey(events, 0, 1, depart=7) == 7


def test_same_endpoints_rejected():
    with pytest.raises(ValueError):
        foremost_journey([], 3, 3, 0)


from conftest import random_trace


@pytest.mark.parametrize("trace_seed", range(25))
def test_foremost_matches_spread_oracle(trace_seed):
    rng = random.Random(9000 + trace_seed)
    events = random_trace(rng)
    for src in range(3):
        expected = spread_oracle(events, src, depart=0)
        got = reachable_set(events, src, depart=0)
        assert got == expected
        for dst in range(6):
            if dst == src:
                continue
            assert foremost_journey(events, src, dst, 0) == expected.get(dst)


@pytest.mark.parametrize("trace_seed", range(8))
def test_foremost_matches_spread_oracle_with_ttl(trace_seed):
    rng = random.Random(40 + trace_seed)
    events = random_trace(rng)
    ttl = 900_000
    for src in range(2):
        expected = spread_oracle(events, src, depart=10_000, ttl=ttl)
        got = reachable_set(events, src, depart=10_000, ttl=ttl)
        assert got == expected
