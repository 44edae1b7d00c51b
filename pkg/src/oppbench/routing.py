"""The four store-carry-forward routers behind one replication interface.

Every router answers the same questions: which buffered messages to offer a
peer (destination-bound messages always go first) and how many copy tokens
the receiver gets.  Routers are pure per-node state machines; all mutation
happens through the contact/transfer notifications.
"""

from dataclasses import dataclass

from .engine import SimTime
from .messages import Carried

PROTOCOLS = ("epidemic", "prophet", "snw", "bubble")


# --- PROPHET rule arithmetic (kept as standalone functions for testing) ---

def prophet_direct_update(p_old: float, p_init: float = 0.75) -> float:
    return p_old + (1.0 - p_old) * p_init


def prophet_age(p_old: float, gamma: float, k: int) -> float:
    if k <= 0:
        return p_old
    return p_old * gamma**k


def prophet_transitive(p_ac_old: float, p_ab: float, p_bc: float, beta: float = 0.25) -> float:
    return p_ac_old + (1.0 - p_ac_old) * p_ab * p_bc * beta


def prophet_forwards(p_self_dst: float, p_peer_dst: float) -> bool:
    return p_peer_dst > p_self_dst


def snw_split(copies: int) -> tuple[int, int]:
    """Binary spray: (keep, give).  A single copy stays put (wait phase)."""
    if copies <= 1:
        return copies, 0
    give = copies // 2
    return copies - give, give


@dataclass(slots=True)
class ProtocolSettings:
    prophet_p_init: float = 0.75
    prophet_beta: float = 0.25
    prophet_gamma: float = 0.98
    prophet_time_unit_ms: int = 30_000
    snw_copies: int = 10
    bubble_familiar_ms: int = 900_000
    bubble_k: int = 5
    bubble_window_ms: int = 21_600_000


class Router:
    """Base: direct delivery always wins; relaying is protocol-specific."""

    name = "base"

    def __init__(self, node_id: int, settings: ProtocolSettings):
        self.node_id = node_id
        self.settings = settings

    def initial_copies(self) -> int:
        return 1

    def should_offer(self, carried: Carried, peer, now: SimTime) -> bool:
        msg = carried.msg
        if peer.buffer.has(msg.id) or msg.id in peer.delivered_ids:
            return False
        if msg.hop_limit is not None and carried.hops >= msg.hop_limit:
            return False
        if msg.dst == peer.id:
            return True
        return self.wants_relay(carried, peer, now)

    def wants_relay(self, carried: Carried, peer, now: SimTime) -> bool:
        raise NotImplementedError

    def copies_to_give(self, carried: Carried) -> int:
        return 1

    def on_relayed(self, carried: Carried, peer_id: int, now: SimTime) -> None:
        """Sender-side bookkeeping after a completed relay transfer."""

    # Contact hooks are invoked once per pair (on the lower node's router)
    # and must update both endpoints symmetrically.

    def pair_up(self, a_node, b_node, now: SimTime) -> None:
        pass

    def pair_down(self, a_node, b_node, duration_ms: int, now: SimTime) -> None:
        pass


class EpidemicRouter(Router):
    """Summary-vector flooding: replicate everything the peer misses."""

    name = "epidemic"

    def wants_relay(self, carried, peer, now):
        return True


class SprayWaitRouter(Router):
    """Copy-budgeted flooding: binary spray, then carry until the destination."""

    name = "snw"

    def initial_copies(self) -> int:
        return self.settings.snw_copies

    def wants_relay(self, carried, peer, now):
        return carried.copies > 1

    def copies_to_give(self, carried):
        return snw_split(carried.copies)[1]

    def on_relayed(self, carried, peer_id, now):
        carried.copies = snw_split(carried.copies)[0]


class ProphetRouter(Router):
    """Delivery-predictability routing: encounter, aging, and transitive updates."""

    name = "prophet"

    def __init__(self, node_id, settings):
        super().__init__(node_id, settings)
        self.p: dict[int, float] = {}
        self.last_aged: SimTime = 0

    def age_to(self, now: SimTime) -> None:
        unit = self.settings.prophet_time_unit_ms
        k = (now - self.last_aged) // unit
        if k > 0:
            factor = self.settings.prophet_gamma ** k
            for dst in self.p:
                self.p[dst] *= factor
            self.last_aged += k * unit

    def predictability(self, dst: int, now: SimTime) -> float:
        self.age_to(now)
        return self.p.get(dst, 0.0)

    def _encounter(self, peer_id: int, peer_table: dict[int, float]) -> None:
        p_init = self.settings.prophet_p_init
        beta = self.settings.prophet_beta
        self.p[peer_id] = prophet_direct_update(self.p.get(peer_id, 0.0), p_init)
        p_ab = self.p[peer_id]
        for dst in sorted(peer_table):
            if dst == self.node_id:
                continue
            self.p[dst] = prophet_transitive(self.p.get(dst, 0.0), p_ab, peer_table[dst], beta)

    def pair_up(self, a_node, b_node, now):
        ra: ProphetRouter = a_node.router
        rb: ProphetRouter = b_node.router
        ra.age_to(now)
        rb.age_to(now)
        table_a = dict(ra.p)  # pre-encounter snapshots keep the update symmetric
        table_b = dict(rb.p)
        ra._encounter(b_node.id, table_b)
        rb._encounter(a_node.id, table_a)

    def wants_relay(self, carried, peer, now):
        dst = carried.msg.dst
        return prophet_forwards(
            self.predictability(dst, now), peer.router.predictability(dst, now)
        )


class BubbleRouter(Router):
    """Social forwarding: dynamic communities plus windowed encounter centrality."""

    name = "bubble"

    def __init__(self, node_id, settings):
        super().__init__(node_id, settings)
        self.contact_ms: dict[int, int] = {}
        self.familiar: set[int] = set()
        self.community: set[int] = {node_id}
        self.window_start: SimTime = 0
        self.window_peers: set[int] = set()
        self._global_scores: list[int] = []
        self._local_scores: list[int] = []

    def roll_windows(self, now: SimTime) -> None:
        window = self.settings.bubble_window_ms
        while now >= self.window_start + window:
            self._global_scores.append(len(self.window_peers))
            self._local_scores.append(len(self.window_peers & self.community))
            self.window_peers = set()
            self.window_start += window

    def global_centrality(self, now: SimTime) -> float:
        self.roll_windows(now)
        return sum(self._global_scores) / len(self._global_scores) if self._global_scores else 0.0

    def local_centrality(self, now: SimTime) -> float:
        self.roll_windows(now)
        return sum(self._local_scores) / len(self._local_scores) if self._local_scores else 0.0

    def _accumulate(self, peer_id: int, peer_familiar: set[int], duration_ms: int) -> None:
        self.contact_ms[peer_id] = self.contact_ms.get(peer_id, 0) + duration_ms
        if self.contact_ms[peer_id] >= self.settings.bubble_familiar_ms:
            self.familiar.add(peer_id)
            self.community.add(peer_id)
        elif len(peer_familiar & self.community) >= self.settings.bubble_k - 1:
            self.community.add(peer_id)

    def pair_up(self, a_node, b_node, now):
        ra: BubbleRouter = a_node.router
        rb: BubbleRouter = b_node.router
        ra.roll_windows(now)
        rb.roll_windows(now)
        ra.window_peers.add(b_node.id)
        rb.window_peers.add(a_node.id)

    def pair_down(self, a_node, b_node, duration_ms, now):
        ra: BubbleRouter = a_node.router
        rb: BubbleRouter = b_node.router
        ra.roll_windows(now)
        rb.roll_windows(now)
        fam_a = set(ra.familiar)
        fam_b = set(rb.familiar)
        ra._accumulate(b_node.id, fam_b, duration_ms)
        rb._accumulate(a_node.id, fam_a, duration_ms)

    def wants_relay(self, carried, peer, now):
        dst = carried.msg.dst
        peer_router = peer.router
        in_self = dst in self.community
        in_peer = dst in peer_router.community
        if in_peer and not in_self:
            return True
        if in_self and not in_peer:
            return False
        if in_self:  # both inside the destination community: local rank
            return peer_router.local_centrality(now) > self.local_centrality(now)
        return peer_router.global_centrality(now) > self.global_centrality(now)


ROUTER_CLASSES = {
    "epidemic": EpidemicRouter,
    "prophet": ProphetRouter,
    "snw": SprayWaitRouter,
    "bubble": BubbleRouter,
}


def make_router(protocol: str, node_id: int, settings: ProtocolSettings) -> Router:
    try:
        cls = ROUTER_CLASSES[protocol]
    except KeyError:
        raise ValueError(f"unknown protocol {protocol!r}; expected one of {PROTOCOLS}") from None
    return cls(node_id, settings)
