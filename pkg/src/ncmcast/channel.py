"""Independent per-user erasure channels, fixed or uniformly fading."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import rng as rngmod
from .model import ReceptionOutcome, users_of, mask_of

FIXED = "fixed"
FADING = "uniform-fading"


@dataclass(frozen=True)
class ChannelModel:
    mode: str = FIXED
    eps: tuple[float, ...] = ()
    eps_range: tuple[tuple[float, float], ...] = ()
    seed: int = 0

    def __post_init__(self):
        if self.mode == FIXED:
            if not self.eps:
                raise ValueError("fixed channel needs eps")
            for i, e in enumerate(self.eps):
                if not 0.0 <= e < 1.0:
                    raise ValueError(f"eps[{i}]={e} outside [0, 1)")
        elif self.mode == FADING:
            if not self.eps_range:
                raise ValueError("fading channel needs eps_range")
            for i, (lo, hi) in enumerate(self.eps_range):
                if not (0.0 <= lo <= hi < 1.0):
                    raise ValueError(f"eps_range[{i}]=({lo}, {hi}) must satisfy 0 <= lo <= hi < 1")
        else:
            raise ValueError(f"unknown channel mode {self.mode!r}")

    @property
    def n_users(self) -> int:
        return len(self.eps) if self.mode == FIXED else len(self.eps_range)

    def mean_eps(self) -> np.ndarray:
        if self.mode == FIXED:
            return np.array(self.eps, dtype=float)
        return np.array([(lo + hi) / 2 for lo, hi in self.eps_range])

    def eps_block(self, chunk: int) -> np.ndarray:
        """Error rates for slots ``chunk*CHUNK .. (chunk+1)*CHUNK - 1``."""
        if self.mode == FIXED:
            return np.broadcast_to(np.array(self.eps, dtype=float), (rngmod.CHUNK, self.n_users))
        return _fading_chunk(self.seed, self.eps_range, chunk)

    def eps_at(self, slot: int) -> np.ndarray:
        return eps_at(self, slot)


@lru_cache(maxsize=64)
def _fading_chunk(seed: int, ranges: tuple, chunk: int) -> np.ndarray:
    lo = np.array([r[0] for r in ranges])
    hi = np.array([r[1] for r in ranges])
    gen = rngmod.stream(seed, rngmod.FADING, chunk)
    out = lo + (hi - lo) * gen.random((rngmod.CHUNK, len(ranges)))
    out.setflags(write=False)
    return out


def eps_at(ch: ChannelModel, slot: int) -> np.ndarray:
    """Per-user erasure probabilities in force during ``slot``."""
    if slot < 0:
        raise ValueError("slot must be >= 0")
    if ch.mode == FIXED:
        return np.array(ch.eps, dtype=float)
    return ch.eps_block(slot // rngmod.CHUNK)[slot % rngmod.CHUNK].copy()


def sample_outcome(eps, intended, rng: np.random.Generator) -> ReceptionOutcome:
    """Draw which of the ``intended`` users receive the slot's packet.

    One uniform is consumed per user regardless of ``intended`` so the
    stream stays aligned across schedules.
    """
    eps = np.asarray(eps, dtype=float)
    u = rng.random(len(eps))
    got = mask_of(int(i) + 1 for i in np.flatnonzero(u >= eps))
    want = intended if isinstance(intended, int) else mask_of(intended)
    return ReceptionOutcome(users_of(got & want))
