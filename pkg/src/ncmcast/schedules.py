"""Network-coding schedules: selections of sub-queues whose index sets
partition the full user set."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .model import layout, mask_of

DEFAULT_CAP = 8


@dataclass(frozen=True)
class Schedule:
    id: int
    parts: tuple[int, ...]


def _set_partitions(n: int):
    # restricted growth strings: a[i] <= max(a[:i]) + 1
    a = [0] * n

    def rec(i, top):
        if i == n:
            blocks = [[] for _ in range(top + 1)]
            for user, b in enumerate(a):
                blocks[b].append(user + 1)
            yield blocks
            return
        for b in range(top + 2):
            a[i] = b
            yield from rec(i + 1, max(top, b))

    yield from rec(1, 0)


@lru_cache(maxsize=None)
def _enumerate(n_users: int) -> tuple[Schedule, ...]:
    lay = layout(n_users)
    keyed = []
    for blocks in _set_partitions(n_users):
        parts = tuple(sorted(lay.index_of[mask_of(b)] for b in blocks))
        keyed.append(((parts != (0,), -len(parts), parts), parts))
    keyed.sort()
    return tuple(Schedule(j, parts) for j, (_, parts) in enumerate(keyed))


def enumerate_schedules(n_users: int, cap: int = DEFAULT_CAP) -> list[Schedule]:
    """All Bell(n_users) schedules in a fixed order.

    The full-set schedule comes first, then schedules with more parts before
    fewer, ties broken by the sorted part list.  For three users this is
    exactly S_0..S_4 of the classic table.
    """
    if n_users < 1:
        raise ValueError("n_users must be >= 1")
    if n_users > cap:
        raise ValueError(
            f"n_users={n_users} exceeds the schedule cap {cap}: the number of "
            f"schedules grows as Bell(N) and every one is scored each slot; "
            f"raise cap explicitly to accept the cost")
    return list(_enumerate(n_users))


def incidence_matrix(schedules: list[Schedule], m: int) -> np.ndarray:
    inc = np.zeros((len(schedules), m), dtype=np.int8)
    for row, s in enumerate(schedules):
        inc[row, list(s.parts)] = 1
    return inc
