"""Messages and per-node buffers with the drop policy under study.

The buffer evicts expired messages first, then oldest arrivals (FIFO) until
the incoming message fits.  Eviction order is protocol-independent so no
router gets a hidden advantage from storage behavior.
"""

from dataclasses import dataclass

from .engine import SimTime


@dataclass(frozen=True, slots=True)
class Message:
    id: int
    src: int
    dst: int
    size: int
    created: SimTime
    ttl: SimTime | None  # None when lifetime is hop-limited instead
    hop_limit: int | None = None

    def alive(self, now: SimTime) -> bool:
        """Time-to-live check, inclusive at the boundary."""
        return self.ttl is None or now <= self.created + self.ttl

    @property
    def expires(self) -> SimTime | None:
        return None if self.ttl is None else self.created + self.ttl


@dataclass(slots=True)
class Carried:
    """One node's replica of a message with its local relay state."""

    msg: Message
    hops: int = 0
    copies: int = 1
    arrived: SimTime = 0


class Buffer:
    """Capacity-bounded message store with evict-expired-then-oldest policy."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.used = 0
        self._store: dict[int, Carried] = {}

    def __len__(self) -> int:
        return len(self._store)

    def __iter__(self):
        return iter(self._store.values())

    def has(self, msg_id: int) -> bool:
        return msg_id in self._store

    def get(self, msg_id: int) -> Carried | None:
        return self._store.get(msg_id)

    def ids(self) -> set[int]:
        return set(self._store.keys())

    def remove(self, msg_id: int) -> Carried | None:
        carried = self._store.pop(msg_id, None)
        if carried is not None:
            self.used -= carried.msg.size
        return carried

    def drop_expired(self, now: SimTime) -> list[Carried]:
        dead = [c for c in self._store.values() if not c.msg.alive(now)]
        for c in dead:
            self.remove(c.msg.id)
        return dead

    def insert(self, carried: Carried, now: SimTime) -> tuple[bool, list[Carried]]:
        """Store a replica, evicting to make room.

        Returns (accepted, evicted).  A message larger than the whole buffer
        is rejected; a duplicate id is a caller bug.
        """
        msg = carried.msg
        if msg.id in self._store:
            raise ValueError(f"duplicate message id {msg.id} in buffer")
        dropped = self.drop_expired(now)
        if msg.size > self.capacity:
            return False, dropped
        while self.used + msg.size > self.capacity:
            oldest = next(iter(self._store))
            dropped.append(self.remove(oldest))
        self._store[msg.id] = carried
        self.used += msg.size
        return True, dropped
