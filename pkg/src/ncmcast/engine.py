"""Slotted simulation loop, stability test, lambda_max bisection and sweeps."""

from __future__ import annotations

import dataclasses
import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .channel import FADING, ChannelModel
from .lp import solve_stability
from .model import Packet, QueueSystem, UncodedQueue
from .schedulers import SchedulerConfig, lps_index, pick, schedule_table, score_schedules

log = logging.getLogger(__name__)

DEFAULT_SLOTS = 200_000


@dataclass(frozen=True)
class SimConfig:
    n_users: int
    channel: ChannelModel
    lam: float
    scheduler: SchedulerConfig = SchedulerConfig()
    deadline: int | None = None
    slots: int = DEFAULT_SLOTS
    seed: int = 0
    warmup_fraction: float = 0.5

    def __post_init__(self):
        if self.channel.n_users != self.n_users:
            raise ValueError(f"channel describes {self.channel.n_users} users, expected {self.n_users}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must be in [0, 1], got {self.lam}")
        if self.slots < 1:
            raise ValueError("slots must be >= 1")
        if self.deadline is not None and self.deadline < 1:
            raise ValueError("deadline must be >= 1")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValueError("warmup_fraction must be in [0, 1)")

    def replace(self, **kw) -> SimConfig:
        return dataclasses.replace(self, **kw)


@dataclass
class Metrics:
    slots: int
    arrived: int
    delivered: int
    dropped: int
    idle_slots: int
    backlog_trace: np.ndarray
    lyapunov_trace: np.ndarray
    schedule_trace: np.ndarray
    delivered_trace: np.ndarray
    dropped_trace: np.ndarray
    queue_trace: np.ndarray | None = field(default=None, repr=False)

    @property
    def avg_total_backlog(self) -> float:
        return float(self.backlog_trace.mean())

    @property
    def in_system(self) -> int:
        return int(self.backlog_trace[-1])

    @property
    def throughput_pct(self) -> float:
        return 100.0 * self.delivered / self.arrived if self.arrived else 0.0

    @property
    def drop_pct(self) -> float:
        return 100.0 * self.dropped / self.arrived if self.arrived else 0.0

    @property
    def throughput_per_slot(self) -> float:
        return self.delivered / self.slots

    def trace_hash(self) -> str:
        h = hashlib.sha256()
        for arr in (self.backlog_trace, self.lyapunov_trace, self.schedule_trace,
                    self.delivered_trace, self.dropped_trace):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def summary(self) -> dict:
        return {
            "slots": self.slots,
            "arrived": self.arrived,
            "delivered": self.delivered,
            "dropped": self.dropped,
            "in_system": self.in_system,
            "idle_slots": self.idle_slots,
            "avg_total_backlog": self.avg_total_backlog,
            "throughput_pct": self.throughput_pct,
            "drop_pct": self.drop_pct,
            "throughput_per_slot": self.throughput_per_slot,
            "trace_sha256": self.trace_hash(),
        }


class _Traces:
    def __init__(self, T, m, record_queues):
        self.backlog = np.zeros(T, dtype=np.int64)
        self.lyap = np.zeros(T, dtype=float)
        self.sched = np.zeros(T, dtype=np.int32)
        self.deliv = np.zeros(T, dtype=np.int32)
        self.drop = np.zeros(T, dtype=np.int32)
        self.queues = np.zeros((T, m), dtype=np.int32) if record_queues else None


def run(cfg: SimConfig, record_queues: bool = False) -> Metrics:
    """Simulate ``cfg.slots`` slots.  Per slot: deadline drops, Bernoulli
    arrival into q_0, scheduling decision, reception draw, relocation."""
    if cfg.scheduler.kind == "arq":
        return _run_arq(cfg, record_queues)
    return _run_coded(cfg, record_queues)


def _channel(cfg):
    return dataclasses.replace(cfg.channel, seed=cfg.seed)


def _run_coded(cfg: SimConfig, record_queues: bool) -> Metrics:
    n = cfg.n_users
    T = cfg.slots
    lam = cfg.lam
    H = cfg.deadline
    sc = cfg.scheduler
    ch = _channel(cfg)
    fading = ch.mode == FADING
    table = schedule_table(n)
    schedules_parts = table.parts
    state = QueueSystem(n)
    queues = state._queues
    m = state.m
    tr = _Traces(T, m, record_queues)

    arrivals = rngmod.BlockDraws(rngmod.stream(cfg.seed, rngmod.ARRIVALS))
    chan = rngmod.BlockDraws(rngmod.stream(cfg.seed, rngmod.CHANNEL), width=n)
    kind = sc.kind
    full = sc.dv_mode == "full"
    beta = sc.effective_beta
    sigma = sc.age_sigma
    use_mean = sc.channel_view == "mean" or not fading
    mean_eps = ch.mean_eps().tolist()
    sched_d = table.service_probs(mean_eps)
    sched_trans = table.transitions(mean_eps) if full else None

    lps_draws = None
    if kind == "lps":
        lps_draws = rngmod.BlockDraws(rngmod.stream(cfg.seed, rngmod.LPS))
        per_slot_lp = sc.lps_refresh == "per-slot" and fading
        sol = solve_stability(n, mean_eps, min(lam, 1 - 1e-9))
        lps_cdf = np.cumsum(sol.p).tolist()

    eps_row = mean_eps
    eps_rows = None
    d_rows = None
    pid = 0
    idle = 0
    for t in range(T):
        if fading:
            off = t % rngmod.CHUNK
            if off == 0:
                block = ch.eps_block(t // rngmod.CHUNK)
                eps_rows = block.tolist()
                if not use_mean:
                    d_rows = table.service_probs_block(block)
            eps_row = eps_rows[off]
        dropped_now = 0
        if H is not None and state.total:
            dropped_now = state.drop_expired(t, H)
        if arrivals.next() < lam:
            pid += 1
            state.enqueue(Packet(pid, t, t + H if H is not None else None))
        u = chan.next()

        j = -1
        if state.total:
            Q = [len(q) for q in queues]
            if kind == "lps":
                if per_slot_lp:
                    lps_cdf = np.cumsum(solve_stability(n, eps_row, min(lam, 1 - 1e-9)).p).tolist()
                j = lps_index(lps_cdf, lps_draws.next())
                for i in schedules_parts[j]:
                    if Q[i]:
                        break
                else:
                    j = -1
            else:
                if use_mean:
                    d, trans = sched_d, sched_trans
                else:
                    d = d_rows[off]
                    trans = table.transitions(eps_row) if full else None
                ages = None
                if beta:
                    ages = [t - q[0].arrival_slot if q else 0 for q in queues]
                dv = score_schedules(table, Q, d, lam, full=full, trans=trans,
                                     ages=ages, beta=beta, sigma=sigma)
                j = pick(table, Q, dv)
        elif kind == "lps":
            lps_draws.next()

        left = 0
        if j >= 0:
            received = 0
            for k in range(n):
                if u[k] >= eps_row[k]:
                    received |= 1 << k
            left = state.transmit(schedules_parts[j], received)
        else:
            idle += 1
        tot = state.total
        tr.backlog[t] = tot
        tr.sched[t] = j
        tr.deliv[t] = left
        tr.drop[t] = dropped_now
        if tot:
            tr.lyap[t] = 0.5 * sum(len(q) ** 2 for q in queues)
        if record_queues:
            tr.queues[t] = [len(q) for q in queues]

    return Metrics(T, state.arrived, state.delivered, state.dropped, idle,
                   tr.backlog, tr.lyap, tr.sched, tr.deliv, tr.drop, tr.queues)


def _run_arq(cfg: SimConfig, record_queues: bool) -> Metrics:
    n = cfg.n_users
    T = cfg.slots
    lam = cfg.lam
    H = cfg.deadline
    ch = _channel(cfg)
    fading = ch.mode == FADING
    state = UncodedQueue(n)
    tr = _Traces(T, 1, record_queues)
    arrivals = rngmod.BlockDraws(rngmod.stream(cfg.seed, rngmod.ARRIVALS))
    chan = rngmod.BlockDraws(rngmod.stream(cfg.seed, rngmod.CHANNEL), width=n)
    eps_row = ch.mean_eps().tolist()
    pid = 0
    idle = 0
    for t in range(T):
        if fading:
            off = t % rngmod.CHUNK
            if off == 0:
                eps_rows = ch.eps_block(t // rngmod.CHUNK).tolist()
            eps_row = eps_rows[off]
        dropped_now = 0
        if H is not None and state.packets:
            dropped_now = state.drop_expired(t, H)
        if arrivals.next() < lam:
            pid += 1
            state.enqueue(Packet(pid, t, t + H if H is not None else None))
        u = chan.next()
        left = 0
        if state.packets:
            received = 0
            for k in range(n):
                if u[k] >= eps_row[k]:
                    received |= 1 << k
            left = state.transmit(received)
            tr.sched[t] = 0
        else:
            idle += 1
            tr.sched[t] = -1
        tot = len(state.packets)
        tr.backlog[t] = tot
        tr.lyap[t] = 0.5 * tot * tot
        tr.deliv[t] = left
        tr.drop[t] = dropped_now
        if record_queues:
            tr.queues[t, 0] = tot
    return Metrics(T, state.arrived, state.delivered, state.dropped, idle,
                   tr.backlog, tr.lyap, tr.sched, tr.deliv, tr.drop, tr.queues)


MIN_STABILITY_TRACE = 10_000


def is_stable(trace, warmup_fraction: float = 0.5, *, window: int = 1000,
              slope_tol: float = 1e-3, level_frac: float = 0.05) -> tuple[bool, float]:
    """Finite-horizon stability verdict for a total-backlog trace.

    The post-warmup trace is averaged over windows of ``window`` slots; the
    least-squares slope of those averages (packets/slot) must stay below
    ``slope_tol`` and the last window average below ``level_frac * len(trace)``.
    """
    trace = np.asarray(trace, dtype=float)
    T = len(trace)
    if T < MIN_STABILITY_TRACE:
        raise ValueError(f"trace too short for a stability verdict ({T} < {MIN_STABILITY_TRACE})")
    tail = trace[int(warmup_fraction * T):]
    n_win = max(2, len(tail) // window)
    w = len(tail) // n_win
    avgs = tail[: n_win * w].reshape(n_win, w).mean(axis=1)
    centers = (np.arange(n_win) + 0.5) * w
    slope = float(np.polyfit(centers, avgs, 1)[0])
    return bool(slope < slope_tol and avgs[-1] < level_frac * T), slope


def _stable_run(cfg: SimConfig) -> bool:
    return is_stable(run(cfg).backlog_trace, cfg.warmup_fraction)[0]


def _map(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def stable_vote(cfg: SimConfig, seeds: int = 3, threads: int = 1) -> bool:
    """Majority verdict over ``seeds`` replicate runs (stops once decided)."""
    cfgs = [cfg.replace(seed=rngmod.derive_seed(cfg.seed, r)) for r in range(seeds)]
    need = seeds // 2 + 1
    if threads > 1:
        return sum(_map(_stable_run, cfgs, threads)) >= need
    yes = no = 0
    for c in cfgs:
        if _stable_run(c):
            yes += 1
        else:
            no += 1
        if yes >= need or no >= need:
            break
    return yes >= need


def estimate_lambda_max(base_cfg: SimConfig, tolerance: float = 0.01, seeds: int = 3,
                        threads: int = 1, lo: float = 0.0, hi: float = 1.0) -> float:
    """Bisection on the arrival rate for the largest stable load."""
    if tolerance < 0.01:
        raise ValueError("tolerance must be >= 0.01")
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        ok = stable_vote(base_cfg.replace(lam=mid), seeds, threads)
        log.debug("lambda=%.4f stable=%s", mid, ok)
        if ok:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


SWEEP_PARAMS = ("lambda", "eps", "deadline", "beta")


def apply_param(cfg: SimConfig, parameter: str, value) -> SimConfig:
    if parameter == "lambda":
        return cfg.replace(lam=float(value))
    if parameter == "deadline":
        return cfg.replace(deadline=None if value is None else int(value))
    if parameter == "beta":
        sc = dataclasses.replace(cfg.scheduler, kind="lys-beta", beta=float(value))
        return cfg.replace(scheduler=sc)
    if parameter == "eps":
        ch = cfg.channel
        if np.ndim(value) == 0:
            value = (float(value),) * cfg.n_users
        value = tuple(float(v) for v in value)
        if ch.mode == FADING:
            # uniform on [0, 2 * mean] keeps the stated mean
            ch = dataclasses.replace(ch, eps_range=tuple((0.0, 2 * v) for v in value))
        else:
            ch = dataclasses.replace(ch, eps=value)
        return cfg.replace(channel=ch)
    raise ValueError(f"unknown sweep parameter {parameter!r}; expected one of {SWEEP_PARAMS}")


@dataclass
class SweepPoint:
    parameter: str
    value: object
    runs: list[Metrics]

    def mean(self, attr: str) -> float:
        return float(np.mean([getattr(r, attr) for r in self.runs]))

    def row(self) -> dict:
        val = self.value
        if isinstance(val, (tuple, list)):
            val = ";".join(str(v) for v in val)
        return {
            "parameter": self.parameter,
            "value": val,
            "seeds": len(self.runs),
            "avg_total_backlog": self.mean("avg_total_backlog"),
            "drop_pct": self.mean("drop_pct"),
            "throughput_pct": self.mean("throughput_pct"),
            "throughput_per_slot": self.mean("throughput_per_slot"),
            "arrived": sum(r.arrived for r in self.runs),
            "delivered": sum(r.delivered for r in self.runs),
            "dropped": sum(r.dropped for r in self.runs),
            "idle_slots": sum(r.idle_slots for r in self.runs),
        }


def sweep(base_cfg: SimConfig, parameter: str, grid, seeds: int = 1,
          threads: int = 1) -> list[SweepPoint]:
    """One seed-averaged point per grid value.

    Replicate ``r`` uses the same derived seed at every grid point, so
    neighbouring points share arrival and channel sample paths.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("sweep grid is empty")
    if seeds == 1:
        replicate_seeds = [base_cfg.seed]
    else:
        replicate_seeds = [rngmod.derive_seed(base_cfg.seed, r) for r in range(seeds)]
    cfgs = [apply_param(base_cfg, parameter, v).replace(seed=s)
            for v in grid for s in replicate_seeds]
    results = _map(run, cfgs, threads)
    return [SweepPoint(parameter, v, results[k * seeds:(k + 1) * seeds])
            for k, v in enumerate(grid)]
