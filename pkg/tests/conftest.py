"""Shared helpers: synthetic traces and hand-computed metric fixtures."""

import random

import pytest

from oppbench.contacts import ContactEvent, LinkConfig
from oppbench.simulation import Simulation
from oppbench.workload import PlannedMessage, TrafficPlan

MICRO_LINK = LinkConfig(range_m=100.0, bitrate_bps=11_000_000, beacon_ms=100)


def up(t, a, b):
    return ContactEvent(t, a, b, True)


def down(t, a, b):
    return ContactEvent(t, a, b, False)


def random_trace(rng: random.Random, n_nodes=6, n_contacts=20):
    """Alternation-valid random contact trace with generous contact durations."""
    by_pair = {}
    tries = 0
    while sum(len(v) for v in by_pair.values()) < n_contacts and tries < 2000:
        tries += 1
        a = rng.randrange(n_nodes)
        b = rng.randrange(n_nodes)
        if a == b:
            continue
        a, b = min(a, b), max(a, b)
        t0 = rng.randrange(0, 3000) * 1000
        t1 = t0 + rng.randrange(60, 600) * 1000
        slots = by_pair.setdefault((a, b), [])
        if any(not (t1 < s0 or s1 < t0) for s0, s1 in slots):
            continue
        slots.append((t0, t1))
    events = []
    for (a, b), slots in by_pair.items():
        for t0, t1 in slots:
            events.append(up(t0, a, b))
            events.append(down(t1, a, b))
    events.sort(key=lambda e: (e.time, e.a, e.b))
    return events


def replay_simulation(events, plan, **kw):
    defaults = dict(
        n_nodes=4,
        protocol="epidemic",
        link=MICRO_LINK,
        buffer_capacity=2_000_000,
        plan=plan,
        duration_ms=200_000,
        ttl_ms=10**9,
        contact_events=list(events),
        check_invariants=True,
    )
    defaults.update(kw)
    return Simulation(**defaults)


def delivery_half_fixture():
    """4 messages, 2 deliverable: delivery probability exactly 0.5."""
    plan = TrafficPlan(
        pairs=[(0, 1), (2, 3)],
        messages=[
            PlannedMessage(0, 0, 1000),
            PlannedMessage(0, 1000, 1000),
            PlannedMessage(1, 0, 1000),
            PlannedMessage(1, 1000, 1000),
        ],
    )
    events = [up(10_000, 0, 1), down(90_000, 0, 1)]
    return events, plan


def cost_five_fixture():
    """One delivery over two hops plus three dead-end replicas: cost 5."""
    plan = TrafficPlan(
        pairs=[(0, 3), (2, 3)],
        messages=[
            PlannedMessage(0, 0, 1000, ttl=25_000),
            PlannedMessage(1, 28_000, 1000),
            PlannedMessage(1, 28_000, 1000),
            PlannedMessage(1, 28_000, 1000),
        ],
    )
    events = [
        up(10_000, 0, 1), down(15_000, 0, 1),
        up(20_000, 1, 3), down(25_000, 1, 3),
        up(30_000, 0, 2), down(35_000, 0, 2),
    ]
    return events, plan


def latency_20s_fixture():
    """First-delivery latencies of exactly 30 s, 20 s, 10 s (mean 20 s)."""
    plan = TrafficPlan(
        pairs=[(0, 1), (2, 3)],
        messages=[
            PlannedMessage(0, 10_001, 1000),
            PlannedMessage(0, 20_002, 1000),
            PlannedMessage(1, 25_001, 1000),
        ],
    )
    events = [up(35_000, 2, 3), up(40_000, 0, 1)]
    return events, plan


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance checks")
