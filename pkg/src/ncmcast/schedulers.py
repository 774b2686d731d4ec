"""Per-slot scheduling policies: ARQ, LPS, LyS and LyS with an age penalty."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .model import Packet, QueueSystem, UncodedQueue, layout
from .rates import _fail_prob, _submasks, expected_rates
from .schedules import DEFAULT_CAP, Schedule, enumerate_schedules, incidence_matrix

KINDS = ("arq", "lps", "lys", "lys-beta")
DV_MODES = ("reduced", "full")
AGE_SIGNS = ("prioritize-aged", "literal")
LPS_REFRESH = ("static", "per-slot")
CHANNEL_VIEWS = ("current", "mean")

DEFAULT_BETA = 0.5


@dataclass(frozen=True)
class SchedulerConfig:
    kind: str = "lys"
    beta: float | None = None
    dv_mode: str = "reduced"
    age_sign: str = "prioritize-aged"
    lps_refresh: str = "static"
    channel_view: str = "current"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scheduler kind {self.kind!r}")
        if self.dv_mode not in DV_MODES:
            raise ValueError(f"unknown dv_mode {self.dv_mode!r}")
        if self.age_sign not in AGE_SIGNS:
            raise ValueError(f"unknown age_sign {self.age_sign!r}")
        if self.lps_refresh not in LPS_REFRESH:
            raise ValueError(f"unknown lps_refresh {self.lps_refresh!r}")
        if self.channel_view not in CHANNEL_VIEWS:
            raise ValueError(f"unknown channel_view {self.channel_view!r}")
        if self.beta is not None:
            if self.kind != "lys-beta":
                raise ValueError("beta requires kind 'lys-beta'")
            if self.beta < 0:
                raise ValueError("beta must be >= 0")

    @property
    def effective_beta(self) -> float:
        if self.kind != "lys-beta":
            return 0.0
        return DEFAULT_BETA if self.beta is None else self.beta

    @property
    def age_sigma(self) -> float:
        return -1.0 if self.age_sign == "prioritize-aged" else 1.0


@dataclass
class Decision:
    schedule: Schedule | None  # None means the slot is idle
    dv_values: np.ndarray | None = None

    @property
    def idle(self) -> bool:
        return self.schedule is None


class ScheduleTable:
    """Schedules of one user count plus the lookups the scorer needs."""

    def __init__(self, n_users: int, cap: int = DEFAULT_CAP):
        self.n_users = n_users
        self.layout = layout(n_users)
        self.schedules = enumerate_schedules(n_users, cap)
        self.parts = [s.parts for s in self.schedules]
        self.incidence = incidence_matrix(self.schedules, self.layout.m).astype(float)
        # python loops beat numpy overhead for a handful of schedules
        self.vectorized = len(self.schedules) > 16
        self.member = np.array(
            [[m >> u & 1 for u in range(n_users)] for m in self.layout.masks], dtype=bool)

    def service_probs(self, eps) -> list[float]:
        """Per sub-queue chance that a transmitted head packet leaves it."""
        e = np.asarray(eps, dtype=float)
        return (1.0 - np.where(self.member, e, 1.0).prod(axis=1)).tolist()

    def service_probs_block(self, eps_block: np.ndarray) -> list[list[float]]:
        e = np.where(self.member[None, :, :], eps_block[:, None, :], 1.0)
        return (1.0 - e.prod(axis=2)).tolist()

    def transitions(self, eps) -> list[list[tuple[int, float]]]:
        """For each source sub-queue, the (destination, probability) moves."""
        eps = [float(e) for e in eps]
        idx = self.layout.index_of
        out = []
        for src in self.layout.masks:
            out.append([(idx[f], _fail_prob(src, f, eps))
                        for f in _submasks(src) if f and f != src])
        return out


@lru_cache(maxsize=16)
def schedule_table(n_users: int, cap: int = DEFAULT_CAP) -> ScheduleTable:
    return ScheduleTable(n_users, cap)


def score_schedules(table: ScheduleTable, Q, d, lam: float, *, full: bool = False,
                    trans=None, ages=None, beta: float = 0.0, sigma: float = -1.0):
    """Decision value of every schedule for backlog ``Q``.

    ``d`` are the per-sub-queue service probabilities under the channel the
    scheduler sees.  Every schedule is charged ``Q_0 * lam`` for the external
    arrivals.  Reduced mode then credits only the schedule's own departures;
    full mode also charges the expected growth of destination sub-queues.
    ``ages`` (head-of-line ages) add ``sigma * beta * oldest`` when beta > 0.
    """
    m = len(Q)
    w = [0.0] * m
    # external arrivals land in q_0 whatever is scheduled
    const = Q[0] * lam
    if full:
        for i in range(m):
            if Q[i]:
                s = -Q[i] * d[i]
                for k, pk in trans[i]:
                    s += Q[k] * pk
                w[i] = s
    else:
        for i in range(m):
            if Q[i]:
                w[i] = -Q[i] * d[i]
    penalty = beta and ages is not None
    if table.vectorized:
        dv = table.incidence @ np.asarray(w) + const
        if penalty:
            age = np.asarray([ages[i] if Q[i] else 0 for i in range(m)], dtype=float)
            oldest = (table.incidence * age).max(axis=1)
            dv = dv + sigma * beta * oldest
        return dv.tolist()
    dv = []
    for parts in table.parts:
        v = const
        for i in parts:
            v += w[i]
        if penalty:
            oldest = 0
            for i in parts:
                if Q[i] and ages[i] > oldest:
                    oldest = ages[i]
            v += sigma * beta * oldest
        dv.append(v)
    return dv


def pick(table: ScheduleTable, Q, dv) -> int:
    """Index of the minimizing schedule (lowest id on ties), or -1 for idle."""
    j = min(range(len(dv)), key=dv.__getitem__)
    for i in table.parts[j]:
        if Q[i]:
            return j
    return -1


def dv_reduced(schedule: Schedule, Q, eps, lam: float) -> float:
    """Q_0 * lam minus the schedule's backlog-weighted departures.

    Moves out of a participant never land in another participant (their
    index sets are disjoint), so the only arrival term is the external one.
    """
    occ = [q > 0 for q in Q]
    rv = expected_rates(schedule, occ, eps, lam)
    return float(Q[0] * lam - sum(Q[i] * rv.d[i] for i in schedule.parts))


def dv_full(schedule: Schedule, Q, eps, lam: float) -> float:
    """sum over all sub-queues of Q_k a_k minus the schedule's Q_i d_i."""
    occ = [q > 0 for q in Q]
    rv = expected_rates(schedule, occ, eps, lam)
    Qa = np.asarray(Q, dtype=float)
    return float(Qa @ rv.a - sum(Q[i] * rv.d[i] for i in schedule.parts))


def head_ages(state: QueueSystem, slot: int) -> list[int]:
    return [slot - q.packets[0].arrival_slot if q.packets else 0 for q in state.sub_queues]


def _decide(state: QueueSystem, eps, lam, cfg: SchedulerConfig, slot, beta) -> Decision:
    table = schedule_table(state.n_users)
    Q = state.backlog
    full = cfg.dv_mode == "full"
    trans = table.transitions(eps) if full else None
    ages = head_ages(state, slot) if beta else None
    dv = score_schedules(table, Q, table.service_probs(eps), lam, full=full,
                         trans=trans, ages=ages, beta=beta, sigma=cfg.age_sigma)
    if not any(Q):
        return Decision(None, np.asarray(dv))
    j = pick(table, Q, dv)
    return Decision(table.schedules[j] if j >= 0 else None, np.asarray(dv))


def decide_lys(state: QueueSystem, eps, lam: float, cfg: SchedulerConfig = SchedulerConfig()) -> Decision:
    """Transmit the schedule with the smallest decision value."""
    return _decide(state, eps, lam, cfg, 0, 0.0)


def decide_lys_beta(state: QueueSystem, eps, lam: float, slot: int,
                    cfg: SchedulerConfig = SchedulerConfig("lys-beta")) -> Decision:
    """Decision value plus a penalty on the oldest head-of-line age of each
    schedule; under ``prioritize-aged`` the age lowers the score."""
    return _decide(state, eps, lam, cfg, slot, cfg.effective_beta)


def decide_lps(state: QueueSystem, p, rng: np.random.Generator) -> Decision:
    """Draw schedule j with probability p_j; idle if its sub-queues are empty."""
    p = np.asarray(p, dtype=float)
    if abs(p.sum() - 1.0) > 1e-6 or (p < -1e-12).any():
        raise ValueError(f"schedule probabilities must form a distribution, sum={p.sum()}")
    table = schedule_table(state.n_users)
    j = lps_index(np.cumsum(p).tolist(), rng.random())
    s = table.schedules[j]
    if not any(state.sub_queues[i].packets for i in s.parts):
        return Decision(None)
    return Decision(s)


def lps_index(cdf: list[float], u: float) -> int:
    for j, c in enumerate(cdf):
        if u < c:
            return j
    return len(cdf) - 1


def decide_arq(state: UncodedQueue) -> Packet | None:
    """The uncoded baseline always resends the FIFO head (None when empty)."""
    return state.head()
