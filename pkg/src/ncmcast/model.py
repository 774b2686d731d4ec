"""Sub-queue model of the multicast transmitter.

User sets are carried internally as bitmasks (bit ``u - 1`` set means user
``u`` is a member) and exposed as ``frozenset`` of 1-based user ids.
"""

from __future__ import annotations

import copy
import itertools
from collections import deque
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Iterable, NamedTuple

MAX_USERS = 16

UserSet = frozenset


def mask_of(users: Iterable[int]) -> int:
    mask = 0
    for u in users:
        u = int(u)
        if u < 1:
            raise ValueError(f"user ids are 1-based, got {u}")
        mask |= 1 << (u - 1)
    return mask


def users_of(mask: int) -> frozenset[int]:
    return frozenset(u + 1 for u in range(mask.bit_length()) if mask >> u & 1)


def _cyclic_intervals(n: int, k: int) -> list[tuple[int, ...]]:
    out = []
    for start in range(n):
        members = tuple(sorted((start + j) % n + 1 for j in range(k)))
        if members not in out:
            out.append(members)
    return out


@dataclass(frozen=True)
class Layout:
    """Fixed numbering of the ``2**n - 1`` sub-queues for ``n`` users.

    Index 0 is the full user set.  The remaining non-empty sets follow in
    decreasing cardinality; within a cardinality the cyclic intervals
    ``{s, s+1, ...}`` come first (by start user), then the other sets in
    lexicographic order.  For three users this gives
    ``{1,2,3}, {1,2}, {2,3}, {1,3}, {1}, {2}, {3}``.
    """

    n_users: int
    masks: tuple[int, ...]
    index_of: dict[int, int] = field(repr=False, compare=False)

    @property
    def m(self) -> int:
        return len(self.masks)

    @property
    def full_mask(self) -> int:
        return (1 << self.n_users) - 1

    def index_set(self, index: int) -> frozenset[int]:
        if not 0 <= index < len(self.masks):
            raise IndexError(f"sub-queue index {index} out of range [0, {len(self.masks) - 1}]")
        return users_of(self.masks[index])


@lru_cache(maxsize=None)
def layout(n_users: int) -> Layout:
    if not 1 <= n_users <= MAX_USERS:
        raise ValueError(f"n_users must be in [1, {MAX_USERS}], got {n_users}")
    users = range(1, n_users + 1)
    masks = [mask_of(users)]
    for k in range(n_users - 1, 0, -1):
        ordered = _cyclic_intervals(n_users, k)
        seen = set(ordered)
        ordered += [c for c in itertools.combinations(users, k) if c not in seen]
        masks.extend(mask_of(c) for c in ordered)
    return Layout(n_users, tuple(masks), {mk: i for i, mk in enumerate(masks)})


def index_set_of(index: int, n_users: int) -> frozenset[int]:
    """Return the user index set served by sub-queue ``index``."""
    return layout(n_users).index_set(index)


@dataclass(frozen=True, slots=True)
class Packet:
    id: int
    arrival_slot: int
    deadline_slot: int | None = None

    def age(self, slot: int) -> int:
        return slot - self.arrival_slot


@dataclass
class SubQueue:
    index: int
    index_set: frozenset[int]
    packets: deque = field(default_factory=deque)

    def __len__(self) -> int:
        return len(self.packets)


@dataclass(frozen=True)
class ReceptionOutcome:
    """Users whose one-bit feedback acknowledged this slot's coded packet."""

    received: frozenset[int]

    @property
    def mask(self) -> int:
        return mask_of(self.received)


class Event(NamedTuple):
    kind: str  # "leave", "move" or "stay"
    packet_id: int
    src: int
    dst: int | None


class QueueSystem:
    """The transmitter's ``M`` FIFO sub-queues.

    ``backlog`` is the occupancy vector Q.  Mutation goes through
    :meth:`enqueue`, :meth:`transmit` and :meth:`drop_expired`, which keep the
    running counters (total, delivered, dropped) in step with the deques.
    """

    def __init__(self, n_users: int):
        self.layout = layout(n_users)
        self.n_users = n_users
        self.sub_queues = [
            SubQueue(i, users_of(mk)) for i, mk in enumerate(self.layout.masks)
        ]
        self._queues = [sq.packets for sq in self.sub_queues]
        self.total = 0
        self.arrived = 0
        self.delivered = 0
        self.dropped = 0

    @property
    def m(self) -> int:
        return self.layout.m

    @property
    def backlog(self) -> list[int]:
        return [len(q) for q in self._queues]

    def copy(self) -> QueueSystem:
        # packets are immutable, so fresh deques are a full copy
        new = copy.copy(self)
        new.sub_queues = [replace(sq, packets=deque(sq.packets))
                          for sq in self.sub_queues]
        new._queues = [sq.packets for sq in new.sub_queues]
        return new

    def enqueue(self, packet: Packet, index: int = 0) -> None:
        self._queues[index].append(packet)
        self.total += 1
        self.arrived += 1

    def head(self, index: int) -> Packet | None:
        q = self._queues[index]
        return q[0] if q else None

    def transmit(self, participating: Iterable[int], received_mask: int,
                 events: list | None = None) -> int:
        """Apply one slot's feedback to the heads of ``participating``.

        Returns the number of packets that left the system.  Empty
        participants contribute nothing.  If ``events`` is a list, one
        :class:`Event` per contributing packet is appended to it.
        """
        masks = self.layout.masks
        queues = self._queues
        seen = 0
        for i in participating:
            if masks[i] & seen:
                raise ValueError(f"participating sub-queues overlap at index {i}")
            seen |= masks[i]
        left = 0
        index_of = self.layout.index_of
        for i in participating:
            q = queues[i]
            if not q:
                continue
            failed = masks[i] & ~received_mask
            if failed == masks[i]:
                if events is not None:
                    events.append(Event("stay", q[0].id, i, None))
                continue
            pkt = q.popleft()
            if failed == 0:
                left += 1
                if events is not None:
                    events.append(Event("leave", pkt.id, i, None))
            else:
                dst = index_of[failed]
                queues[dst].append(pkt)
                if events is not None:
                    events.append(Event("move", pkt.id, i, dst))
        self.total -= left
        self.delivered += left
        return left

    def drop_expired(self, slot: int, deadline: int) -> int:
        """Remove every packet whose age is at least ``deadline``."""
        cutoff = slot - deadline
        dropped = 0
        for idx, q in enumerate(self._queues):
            if q and any(p.arrival_slot <= cutoff for p in q):
                keep = deque(p for p in q if p.arrival_slot > cutoff)
                dropped += len(q) - len(keep)
                self._queues[idx] = keep
                self.sub_queues[idx].packets = keep
        self.total -= dropped
        self.dropped += dropped
        return dropped

    def replay(self, events: Iterable[Event]) -> None:
        """Re-apply a recorded event log to this state."""
        for ev in events:
            if ev.kind == "stay":
                continue
            pkt = self._queues[ev.src].popleft()
            if pkt.id != ev.packet_id:
                raise ValueError(f"event log out of sync at packet {ev.packet_id}")
            if ev.kind == "leave":
                self.total -= 1
                self.delivered += 1
            else:
                self._queues[ev.dst].append(pkt)

    def snapshot(self) -> tuple:
        return tuple(tuple(p.id for p in q) for q in self._queues)


def relocate(q: QueueSystem, participating: Iterable[int],
             outcome: ReceptionOutcome) -> list[Event]:
    """Move, drop or keep each participating head packet according to feedback.

    ``q`` is updated in place; the returned event list replays the change.
    """
    events: list[Event] = []
    q.transmit(list(participating), outcome.mask, events)
    return events


def total_backlog(q: QueueSystem) -> int:
    return sum(q.backlog)


class UncodedQueue:
    """Single FIFO for the uncoded ARQ baseline.

    The head packet is retransmitted until every user has acknowledged it;
    ``pending`` is the mask of users still missing the head.
    """

    def __init__(self, n_users: int):
        self.n_users = n_users
        self.full_mask = (1 << n_users) - 1
        self.packets: deque = deque()
        self.pending = self.full_mask
        self.arrived = 0
        self.delivered = 0
        self.dropped = 0

    @property
    def total(self) -> int:
        return len(self.packets)

    @property
    def backlog(self) -> list[int]:
        return [len(self.packets)]

    def enqueue(self, packet: Packet) -> None:
        self.packets.append(packet)
        self.arrived += 1

    def head(self) -> Packet | None:
        return self.packets[0] if self.packets else None

    def transmit(self, received_mask: int) -> int:
        if not self.packets:
            return 0
        self.pending &= ~received_mask
        if self.pending:
            return 0
        self.packets.popleft()
        self.pending = self.full_mask
        self.delivered += 1
        return 1

    def drop_expired(self, slot: int, deadline: int) -> int:
        cutoff = slot - deadline
        if not self.packets or not any(p.arrival_slot <= cutoff for p in self.packets):
            return 0
        head = self.packets[0]
        keep = deque(p for p in self.packets if p.arrival_slot > cutoff)
        dropped = len(self.packets) - len(keep)
        if not keep or keep[0] is not head:
            self.pending = self.full_mask
        self.packets = keep
        self.dropped += dropped
        return dropped
