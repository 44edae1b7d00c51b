"""One simulation run: mobility or trace replay, contacts, transfers, routing.

All four protocols run over the exact same contact substrate for a given
scenario and seed: contact generation never reads routing state, transfers
never influence mobility, and every random draw comes from a labeled stream.
"""

import heapq
import itertools
from dataclasses import dataclass, field

from .contacts import ContactEvent, ContactScanner, LinkConfig, transfer_duration_ms
from .engine import (
    BEACON_SCAN,
    MESSAGE_CREATION,
    METRICS_SNAPSHOT,
    MOBILITY_UPDATE,
    MS_PER_HOUR,
    TRANSFER_COMPLETE,
    TTL_EXPIRY,
    Engine,
    SimTime,
)
from .messages import Buffer, Carried, Message
from .metrics import COST_INCLUDE, RunReport
from .mobility import MobilityWorld
from .routing import ProtocolSettings, Router, make_router
from .workload import TrafficPlan, counted


@dataclass(slots=True)
class Node:
    id: int
    buffer: Buffer
    router: Router
    delivered_ids: set[int] = field(default_factory=set)
    links: dict[int, "Link"] = field(default_factory=dict)


class Link:
    """Serial per-pair transfer queue alive for the duration of one contact."""

    __slots__ = ("a", "b", "epoch", "up_since", "queue", "busy", "_seq")

    def __init__(self, a: int, b: int, epoch: int, now: SimTime):
        self.a = a
        self.b = b
        self.epoch = epoch
        self.up_since = now
        self.queue: list[tuple[int, SimTime, int, int, int]] = []
        self.busy = False
        self._seq = itertools.count()

    def enqueue(self, direct: bool, created: SimTime, msg_id: int, sender: int) -> None:
        heapq.heappush(
            self.queue, (0 if direct else 1, created, msg_id, next(self._seq), sender)
        )


class Recorder:
    """Metrics accounting plus optional invariant instrumentation."""

    def __init__(
        self,
        warmup_end: SimTime,
        snw_limit: int | None,
        check_invariants: bool = False,
        keep_contacts: bool = False,
        contact_sink=None,
    ):
        self.warmup_end = warmup_end
        self.snw_limit = snw_limit  # None: protocol has no copy budget to enforce
        self.check = check_invariants
        self.contacts: list[ContactEvent] | None = [] if keep_contacts else None
        self.contact_sink = contact_sink
        self.created = 0
        self.delivered: dict[int, int] = {}  # msg id -> latency_ms (first delivery)
        self.delivered_hops: dict[int, int] = {}
        self.transmissions = 0
        self.drops_buffer = 0
        self.drops_ttl = 0
        self.violations: list[str] = []
        self._copy_total: dict[int, int] = {}
        self._replicas: dict[int, int] = {}

    def counted(self, msg: Message) -> bool:
        return counted(msg.created, self.warmup_end)

    def contact(self, ev: ContactEvent) -> None:
        if self.contacts is not None:
            self.contacts.append(ev)
        if self.contact_sink is not None:
            self.contact_sink(ev)

    def message_created(self, msg: Message) -> None:
        if self.counted(msg):
            self.created += 1

    def transmission(self, msg: Message, now: SimTime) -> None:
        if self.check and not msg.alive(now):
            self.violations.append(f"t={now}: expired message {msg.id} transferred")
        if self.counted(msg):
            self.transmissions += 1

    def delivery(self, msg: Message, now: SimTime, hops: int) -> None:
        if not self.counted(msg):
            return
        if msg.id not in self.delivered:
            self.delivered[msg.id] = now - msg.created
            self.delivered_hops[msg.id] = hops

    def _check_copy_bound(self, msg_id: int) -> None:
        if self.check and self.snw_limit is not None:
            if self._copy_total[msg_id] > self.snw_limit:
                self.violations.append(
                    f"copy budget of message {msg_id} reached {self._copy_total[msg_id]}"
                )
            if self._replicas[msg_id] > self.snw_limit:
                self.violations.append(
                    f"message {msg_id} has {self._replicas[msg_id]} replicas"
                )

    def replica_added(self, msg_id: int, copies: int) -> None:
        self._copy_total[msg_id] = self._copy_total.get(msg_id, 0) + copies
        self._replicas[msg_id] = self._replicas.get(msg_id, 0) + 1
        self._check_copy_bound(msg_id)

    def replica_removed(self, msg_id: int, copies: int) -> None:
        self._copy_total[msg_id] -= copies
        self._replicas[msg_id] -= 1

    def copies_changed(self, msg_id: int, delta: int) -> None:
        self._copy_total[msg_id] += delta
        self._check_copy_bound(msg_id)

    def buffer_checked(self, node_id: int, buf: Buffer, now: SimTime) -> None:
        if self.check and buf.used > buf.capacity:
            self.violations.append(f"t={now}: buffer of node {node_id} at {buf.used} bytes")


class Simulation:
    def __init__(
        self,
        *,
        n_nodes: int,
        protocol: str,
        link: LinkConfig,
        buffer_capacity: int,
        plan: TrafficPlan,
        duration_ms: SimTime,
        warmup_ms: SimTime = 0,
        ttl_ms: SimTime | None = None,
        hop_limit: int | None = None,
        settings: ProtocolSettings | None = None,
        world: MobilityWorld | None = None,
        contact_events=None,
        delete_delivered: bool = False,
        cost_mode: str = COST_INCLUDE,
        check_invariants: bool = False,
        keep_contacts: bool = False,
        contact_sink=None,
        event_log=None,
        seed: int = 0,
    ):
        if (world is None) == (contact_events is None):
            raise ValueError("exactly one of world / contact_events is required")
        if ttl_ms is None and hop_limit is None:
            raise ValueError("a time TTL or a hop limit is required")
        self.n_nodes = n_nodes
        self.protocol = protocol
        self.link_cfg = link
        self.plan = plan
        self.duration_ms = duration_ms
        self.ttl_ms = ttl_ms
        self.hop_limit = hop_limit
        self.settings = settings or ProtocolSettings()
        self.world = world
        self.delete_delivered = delete_delivered
        self.cost_mode = cost_mode
        self.seed = seed
        self.engine = Engine(event_log=event_log)
        self.recorder = Recorder(
            warmup_end=warmup_ms,
            snw_limit=self.settings.snw_copies if protocol == "snw" else None,
            check_invariants=check_invariants,
            keep_contacts=keep_contacts,
            contact_sink=contact_sink,
        )
        self.nodes = [
            Node(i, Buffer(buffer_capacity), make_router(protocol, i, self.settings))
            for i in range(n_nodes)
        ]
        self.links: dict[tuple[int, int], Link] = {}
        self._epoch = itertools.count(1)
        self._msgs: dict[int, Message] = {}
        self._replay = iter(contact_events) if contact_events is not None else None
        self._replay_next: ContactEvent | None = None
        self.scanner = (
            ContactScanner(world, link) if world is not None else None
        )
        eng = self.engine
        eng.register(MESSAGE_CREATION, self._on_message_creation)
        eng.register(BEACON_SCAN, self._on_beacon_scan)
        eng.register(MOBILITY_UPDATE, self._on_mobility_update)
        eng.register(TRANSFER_COMPLETE, self._on_transfer_complete)
        eng.register(TTL_EXPIRY, self._on_ttl_expiry)
        eng.register(METRICS_SNAPSHOT, lambda ev: None)

    # --- setup -----------------------------------------------------------

    def _schedule_initial(self) -> None:
        eng = self.engine
        for idx, planned in enumerate(self.plan.messages):
            if planned.created < self.duration_ms:
                eng.schedule_at(planned.created, MESSAGE_CREATION, idx)
        if self.world is not None:
            for node, t in self.world.initial_wakeups():
                if t <= self.duration_ms:
                    eng.schedule_at(t, MOBILITY_UPDATE, node)
            eng.schedule_at(0, BEACON_SCAN, None)
        else:
            self._replay_next = next(self._replay, None)
            self._schedule_replay_chunk()
        for t in range(MS_PER_HOUR, self.duration_ms + 1, MS_PER_HOUR):
            eng.schedule_at(t, TTL_EXPIRY, None)
        eng.schedule_at(self.duration_ms, METRICS_SNAPSHOT, None)

    def _schedule_replay_chunk(self) -> None:
        if self._replay_next is not None and self._replay_next.time <= self.duration_ms:
            self.engine.schedule_at(self._replay_next.time, BEACON_SCAN, "replay")

    def run(self) -> RunReport:
        self._schedule_initial()
        self.engine.run_until(self.duration_ms)
        ttl_s = (
            self.ttl_ms // 1000 if self.ttl_ms is not None else self.hop_limit
        )
        rec = self.recorder
        return RunReport(
            protocol=self.protocol,
            ttl_s=ttl_s,
            seed=self.seed,
            created=rec.created,
            delivered=len(rec.delivered),
            transmissions=rec.transmissions,
            latencies_ms=sorted(rec.delivered.values()),
            cost_mode=self.cost_mode,
        )

    # --- event handlers ---------------------------------------------------

    def _on_message_creation(self, ev) -> None:
        now = self.engine.now
        planned = self.plan.messages[ev.payload]
        src, dst = self.plan.pairs[planned.pair]
        ttl = planned.ttl if planned.ttl is not None else self.ttl_ms
        msg = Message(
            id=ev.payload + 1,
            src=src,
            dst=dst,
            size=planned.size,
            created=now,
            ttl=None if self.hop_limit is not None else ttl,
            hop_limit=self.hop_limit,
        )
        self._msgs[msg.id] = msg
        self.recorder.message_created(msg)
        node = self.nodes[src]
        carried = Carried(msg, hops=0, copies=node.router.initial_copies(), arrived=now)
        accepted, evicted = node.buffer.insert(carried, now)
        self._account_drops(evicted, now)
        if accepted:
            self.recorder.replica_added(msg.id, carried.copies)
            self.recorder.buffer_checked(node.id, node.buffer, now)
            self._offer_to_links(node, carried, exclude=None)

    def _on_beacon_scan(self, ev) -> None:
        now = self.engine.now
        if self.scanner is not None:
            if ev.payload is None and now == 0:
                changes = self.scanner.initial_scan(0)
            else:
                changes = self.scanner.scan_batch(now)
            next_t = now + self.scanner.window_ms
            if next_t <= self.duration_ms:
                self.engine.schedule_at(next_t, BEACON_SCAN, "batch")
        else:
            changes = []
            while self._replay_next is not None and self._replay_next.time == now:
                changes.append(self._replay_next)
                self._replay_next = next(self._replay, None)
            self._schedule_replay_chunk()
        for change in changes:
            self._apply_contact(change, now)

    def _on_mobility_update(self, ev) -> None:
        now = self.engine.now
        for node, t in self.world.transition(ev.payload, now):
            if t <= self.duration_ms:
                self.engine.schedule_at(t, MOBILITY_UPDATE, node)

    def _on_ttl_expiry(self, ev) -> None:
        now = self.engine.now
        for node in self.nodes:
            for carr in node.buffer.drop_expired(now):
                self.recorder.replica_removed(carr.msg.id, carr.copies)
                self.recorder.drops_ttl += 1

    # --- contacts and transfers -------------------------------------------

    def _apply_contact(self, change: ContactEvent, now: SimTime) -> None:
        self.recorder.contact(change)
        a, b = change.a, change.b
        node_a, node_b = self.nodes[a], self.nodes[b]
        if change.up:
            link = Link(a, b, next(self._epoch), now)
            self.links[(a, b)] = link
            node_a.links[b] = link
            node_b.links[a] = link
            node_a.router.pair_up(node_a, node_b, now)
            self._exchange(link, node_a, node_b, now)
            self._exchange(link, node_b, node_a, now)
            self._start_next(link, now)
        else:
            link = self.links.pop((a, b), None)
            if link is None:
                return
            node_a.links.pop(b, None)
            node_b.links.pop(a, None)
            node_a.router.pair_down(node_a, node_b, now - link.up_since, now)
            link.epoch = -1  # invalidates any in-flight transfer

    def _exchange(self, link: Link, sender: Node, receiver: Node, now: SimTime) -> None:
        offers = []
        for carried in sender.buffer:
            if not carried.msg.alive(now):
                continue
            if sender.router.should_offer(carried, receiver, now):
                direct = carried.msg.dst == receiver.id
                offers.append((0 if direct else 1, carried.msg.created, carried.msg.id))
        offers.sort()
        for direct_rank, created, msg_id in offers:
            link.enqueue(direct_rank == 0, created, msg_id, sender.id)

    def _offer_to_links(self, node: Node, carried: Carried, exclude: int | None) -> None:
        now = self.engine.now
        for peer_id in sorted(node.links):
            if peer_id == exclude:
                continue
            peer = self.nodes[peer_id]
            if node.router.should_offer(carried, peer, now):
                link = node.links[peer_id]
                link.enqueue(carried.msg.dst == peer.id, carried.msg.created, carried.msg.id, node.id)
                self._start_next(link, now)

    def _start_next(self, link: Link, now: SimTime) -> None:
        if link.busy:
            return
        while link.queue:
            _, _, msg_id, _, sender_id = heapq.heappop(link.queue)
            sender = self.nodes[sender_id]
            receiver = self.nodes[link.b if sender_id == link.a else link.a]
            carried = sender.buffer.get(msg_id)
            if carried is None or not carried.msg.alive(now):
                continue
            if not sender.router.should_offer(carried, receiver, now):
                continue
            duration = transfer_duration_ms(carried.msg.size, self.link_cfg)
            completes = now + duration
            if not carried.msg.alive(completes):
                continue  # would expire in flight; never start it
            link.busy = True
            self.engine.schedule_at(
                completes, TRANSFER_COMPLETE, (link.a, link.b, link.epoch, msg_id, sender_id)
            )
            return

    def _on_transfer_complete(self, ev) -> None:
        now = self.engine.now
        a, b, epoch, msg_id, sender_id = ev.payload
        link = self.links.get((a, b))
        if link is None or link.epoch != epoch:
            return  # contact dropped mid-transfer: nothing delivered
        link.busy = False
        sender = self.nodes[sender_id]
        receiver = self.nodes[b if sender_id == a else a]
        carried = sender.buffer.get(msg_id)
        if (
            carried is not None
            and carried.msg.alive(now)
            and sender.router.should_offer(carried, receiver, now)
        ):
            self._commit_transfer(sender, receiver, carried, now)
        self._start_next(link, now)

    def _commit_transfer(self, sender: Node, receiver: Node, carried: Carried, now: SimTime) -> None:
        msg = carried.msg
        rec = self.recorder
        rec.transmission(msg, now)
        if msg.dst == receiver.id:
            receiver.delivered_ids.add(msg.id)
            rec.delivery(msg, now, carried.hops + 1)
            if self.delete_delivered:
                removed = sender.buffer.remove(msg.id)
                if removed is not None:
                    rec.replica_removed(msg.id, removed.copies)
            return
        give = sender.router.copies_to_give(carried)
        new_carried = Carried(msg, hops=carried.hops + 1, copies=give, arrived=now)
        accepted, evicted = receiver.buffer.insert(new_carried, now)
        self._account_drops(evicted, now)
        if accepted:
            before = carried.copies
            sender.router.on_relayed(carried, receiver.id, now)
            rec.copies_changed(msg.id, carried.copies - before)
            rec.replica_added(msg.id, new_carried.copies)
            rec.buffer_checked(receiver.id, receiver.buffer, now)
            self._offer_to_links(receiver, new_carried, exclude=sender.id)

    def _account_drops(self, evicted: list[Carried], now: SimTime) -> None:
        for carr in evicted:
            self.recorder.replica_removed(carr.msg.id, carr.copies)
            if carr.msg.alive(now):
                self.recorder.drops_buffer += 1
            else:
                self.recorder.drops_ttl += 1
