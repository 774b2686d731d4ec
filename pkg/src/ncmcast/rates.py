"""Expected per-slot arrivals and departures of every sub-queue under a
schedule, with a brute-force cross-check over all reception outcomes."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .model import Packet, QueueSystem, layout, mask_of, users_of
from .schedules import Schedule

LEAVE = frozenset()


@dataclass
class RateVector:
    a: np.ndarray
    d: np.ndarray


def _fail_prob(source: int, failed: int, eps) -> float:
    p = 1.0
    u = 0
    while source >> u:
        if source >> u & 1:
            p *= eps[u] if failed >> u & 1 else 1.0 - eps[u]
        u += 1
    return p


def _submasks(mask: int):
    sub = mask
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & mask


def transition_distribution(index_set, eps) -> dict[frozenset, float]:
    """Where a transmitted head packet with intended users ``index_set`` ends up.

    Keys are the set F of intended users that failed: ``LEAVE`` (empty set)
    means delivered to everyone, ``F == index_set`` means it stays put, any
    other F is the sub-queue it moves to.
    """
    src = index_set if isinstance(index_set, int) else mask_of(index_set)
    if src == 0:
        raise ValueError("index set must be non-empty")
    return {users_of(f): _fail_prob(src, f, eps) for f in _submasks(src)}


def expected_rates(schedule: Schedule, occupancy, eps, lam: float) -> RateVector:
    eps = [float(e) for e in eps]
    lay = layout(len(eps))
    m = lay.m
    a = np.zeros(m)
    d = np.zeros(m)
    for i in schedule.parts:
        if not occupancy[i]:
            continue
        src = lay.masks[i]
        d[i] = 1.0 - _fail_prob(src, src, eps)
        for f in _submasks(src):
            if f and f != src:
                a[lay.index_of[f]] += _fail_prob(src, f, eps)
    a[0] += lam
    return RateVector(a, d)


def brute_force_rates(schedule: Schedule, occupancy, eps, lam: float) -> RateVector:
    """Same contract as :func:`expected_rates`, by enumerating all 2**N
    feedback patterns and running the relocation rule on each."""
    eps = [float(e) for e in eps]
    n = len(eps)
    if n > 8:
        raise ValueError("brute force limited to N <= 8")
    base = QueueSystem(n)
    for i in schedule.parts:
        if occupancy[i]:
            base.enqueue(Packet(i, 0), i)
    m = base.m
    a = np.zeros(m)
    d = np.zeros(m)
    before = np.array(base.backlog)
    for bits in itertools.product((0, 1), repeat=n):
        prob = 1.0
        received = 0
        for u, ok in enumerate(bits):
            prob *= (1.0 - eps[u]) if ok else eps[u]
            received |= ok << u
        if prob == 0.0:
            continue
        q = base.copy()
        events = []
        q.transmit(schedule.parts, received, events)
        for ev in events:
            if ev.kind in ("leave", "move"):
                d[ev.src] += prob
            if ev.kind == "move":
                a[ev.dst] += prob
        assert np.array_equal(np.array(q.backlog), before - _onehot_sum(events, m))
    a[0] += lam
    return RateVector(a, d)


def _onehot_sum(events, m):
    net = np.zeros(m, dtype=int)
    for ev in events:
        if ev.kind == "stay":
            continue
        net[ev.src] += 1
        if ev.kind == "move":
            net[ev.dst] -= 1
    return net
