"""YAML run configuration: parsing, validation, defaults and echo."""

from __future__ import annotations

from dataclasses import dataclass

import yaml

from .channel import FADING, FIXED, ChannelModel
from .engine import DEFAULT_SLOTS, SimConfig
from .schedulers import (AGE_SIGNS, CHANNEL_VIEWS, DEFAULT_BETA, DV_MODES, KINDS,
                         LPS_REFRESH, SchedulerConfig)
from .schedules import DEFAULT_CAP

TOP_KEYS = {"n_users", "lambda", "seed", "slots", "deadline", "warmup_fraction",
            "channel", "scheduler", "eps"}
CHANNEL_KEYS = {"mode", "eps", "eps_range"}
SCHEDULER_KEYS = {"kind", "beta", "dv_mode", "age_sign", "lps_refresh", "channel_view"}


class ConfigError(ValueError):
    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


@dataclass(frozen=True)
class RunSpec:
    sim: SimConfig
    out: str | None = None
    threads: int = 1


def _num(v, path, lo=None, hi=None, lo_open=False, hi_open=False, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(path, f"expected an integer, got {v!r}")
    if lo is not None and (v < lo or (lo_open and v == lo)):
        raise ConfigError(path, f"{v} below {'(' if lo_open else '['}{lo}")
    if hi is not None and (v > hi or (hi_open and v == hi)):
        raise ConfigError(path, f"{v} outside [{lo}, {hi}{')' if hi_open else ']'}")
    return int(v) if integer else float(v)


def _check_keys(d, allowed, path):
    if not isinstance(d, dict):
        raise ConfigError(path or "<root>", f"expected a mapping, got {type(d).__name__}")
    for k in d:
        if k not in allowed:
            where = f"{path}.{k}" if path else str(k)
            raise ConfigError(where, "unknown key")


def _eps_list(v, path):
    if not isinstance(v, (list, tuple)) or not v:
        raise ConfigError(path, "expected a non-empty list")
    return tuple(_num(e, f"{path}[{i}]", 0.0, 1.0, hi_open=True) for i, e in enumerate(v))


def build(doc: dict) -> SimConfig:
    """Validate a config mapping and fill defaults."""
    doc = dict(doc or {})
    _check_keys(doc, TOP_KEYS, "")
    ch = doc.get("channel") or {}
    if "eps" in doc:
        if "eps" in ch:
            raise ConfigError("eps", "given both at top level and under channel")
        ch = {**ch, "eps": doc["eps"]}
    _check_keys(ch, CHANNEL_KEYS, "channel")
    mode = ch.get("mode", FADING if "eps_range" in ch else FIXED)
    if mode not in (FIXED, FADING):
        raise ConfigError("channel.mode", f"expected '{FIXED}' or '{FADING}', got {mode!r}")
    eps = ()
    ranges = ()
    if mode == FIXED:
        if "eps_range" in ch:
            raise ConfigError("channel.eps_range", "only valid with mode uniform-fading")
        if "eps" not in ch:
            raise ConfigError("channel.eps", "required for a fixed channel")
        eps = _eps_list(ch["eps"], "channel.eps")
        n_from_channel = len(eps)
    else:
        if "eps" in ch:
            raise ConfigError("channel.eps", "fading channels take eps_range")
        raw = ch.get("eps_range")
        if not isinstance(raw, (list, tuple)) or not raw:
            raise ConfigError("channel.eps_range", "expected a non-empty list of [lo, hi]")
        out = []
        for i, pair in enumerate(raw):
            p = f"channel.eps_range[{i}]"
            if not isinstance(pair, (list, tuple)) or len(pair) != 2:
                raise ConfigError(p, "expected [lo, hi]")
            lo = _num(pair[0], f"{p}[0]", 0.0, 1.0, hi_open=True)
            hi = _num(pair[1], f"{p}[1]", 0.0, 1.0, hi_open=True)
            if lo > hi:
                raise ConfigError(p, "lo must not exceed hi")
            out.append((lo, hi))
        ranges = tuple(out)
        n_from_channel = len(ranges)

    n = _num(doc.get("n_users", n_from_channel), "n_users", 1, DEFAULT_CAP, integer=True)
    if n != n_from_channel:
        raise ConfigError("channel", f"describes {n_from_channel} users but n_users={n}")

    sc = doc.get("scheduler", {})
    if isinstance(sc, str):
        sc = {"kind": sc}
    _check_keys(sc, SCHEDULER_KEYS, "scheduler")
    kind = sc.get("kind", "lys")
    for key, allowed in (("kind", KINDS), ("dv_mode", DV_MODES), ("age_sign", AGE_SIGNS),
                         ("lps_refresh", LPS_REFRESH), ("channel_view", CHANNEL_VIEWS)):
        if key in sc and sc[key] not in allowed:
            raise ConfigError(f"scheduler.{key}", f"expected one of {allowed}, got {sc[key]!r}")
    beta = None
    if "beta" in sc and sc["beta"] is not None:
        if kind != "lys-beta":
            raise ConfigError("scheduler.beta", f"only valid with kind 'lys-beta' (kind is {kind!r})")
        beta = _num(sc["beta"], "scheduler.beta", 0.0)
    elif kind == "lys-beta":
        beta = DEFAULT_BETA
    if "lps_refresh" in sc and kind != "lps":
        raise ConfigError("scheduler.lps_refresh", "only valid with kind 'lps'")
    scheduler = SchedulerConfig(
        kind=kind, beta=beta,
        dv_mode=sc.get("dv_mode", "reduced"),
        age_sign=sc.get("age_sign", "prioritize-aged"),
        lps_refresh=sc.get("lps_refresh", "static"),
        channel_view=sc.get("channel_view", "current"))

    if "lambda" not in doc:
        raise ConfigError("lambda", "required")
    lam = _num(doc["lambda"], "lambda", 0.0, 1.0)
    seed = _num(doc.get("seed", 0), "seed", 0, 2**64 - 1, integer=True)
    slots = _num(doc.get("slots", DEFAULT_SLOTS), "slots", 1, integer=True)
    deadline = doc.get("deadline")
    if deadline is not None:
        deadline = _num(deadline, "deadline", 1, integer=True)
    warm = _num(doc.get("warmup_fraction", 0.5), "warmup_fraction", 0.0, 1.0, hi_open=True)
    channel = ChannelModel(mode, eps, ranges, seed)
    return SimConfig(n, channel, lam, scheduler, deadline, slots, seed, warm)


def parse_config(text: str | None = None, flags: dict | None = None, *,
                 out: str | None = None, threads: int = 1,
                 defaults: dict | None = None) -> RunSpec:
    """Parse a YAML document, apply flag overrides (dotted keys), validate.

    ``defaults`` fills top-level keys still missing after the overrides.
    """
    doc = {}
    if text:
        try:
            doc = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            raise ConfigError("<document>", f"not valid YAML: {e}") from None
        if not isinstance(doc, dict):
            raise ConfigError("<root>", "expected a mapping")
    for key, value in (flags or {}).items():
        if value is None:
            continue
        _set_dotted(doc, key, value)
    for key, value in (defaults or {}).items():
        doc.setdefault(key, value)
    if threads < 1:
        raise ConfigError("threads", "must be >= 1")
    return RunSpec(build(doc), out, threads)


def _set_dotted(doc, key, value):
    parts = key.split(".")
    node = doc
    for p in parts[:-1]:
        cur = node.get(p)
        if isinstance(cur, str) and p == "scheduler":
            cur = {"kind": cur}
        if not isinstance(cur, dict):
            cur = {}
        node[p] = cur
        node = cur
    if parts == ["channel", "eps"] and "eps" in doc:
        doc.pop("eps")
    node[parts[-1]] = value


def effective_config(cfg: SimConfig) -> dict:
    ch = cfg.channel
    channel = {"mode": ch.mode}
    if ch.mode == FIXED:
        channel["eps"] = list(ch.eps)
    else:
        channel["eps_range"] = [list(r) for r in ch.eps_range]
    sc = cfg.scheduler
    scheduler = {"kind": sc.kind}
    if sc.kind == "lys-beta":
        scheduler["beta"] = sc.beta
    scheduler.update(dv_mode=sc.dv_mode, age_sign=sc.age_sign, channel_view=sc.channel_view)
    if sc.kind == "lps":
        scheduler["lps_refresh"] = sc.lps_refresh
    return {
        "n_users": cfg.n_users,
        "lambda": cfg.lam,
        "seed": cfg.seed,
        "slots": cfg.slots,
        "deadline": cfg.deadline,
        "warmup_fraction": cfg.warmup_fraction,
        "channel": channel,
        "scheduler": scheduler,
    }


def dump_config(cfg: SimConfig) -> str:
    return yaml.safe_dump(effective_config(cfg), sort_keys=False)
