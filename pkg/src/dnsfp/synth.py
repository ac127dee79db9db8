"""Seeded synthetic app-launch traces with configurable padding and caching."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from datetime import datetime, timedelta, timezone
from typing import Sequence

import numpy as np

from .trace import C2R, R2C, Dataset, DnsEvent, Protocol, Trace

_EPOCH = datetime(2020, 4, 23, tzinfo=timezone.utc)
BURST_DELAY = (3.0, 80.0)  # ms between queries inside one burst


@dataclass(frozen=True)
class QuerySlot:
    domain: str
    req_size: int
    resp_median: int
    resp_sigma: float  # 0 -> fixed response size
    delay_median: float  # ms from the previous request
    rtt_median: float  # ms until the response
    shared: bool = False


@dataclass(frozen=True)
class Jitter:
    delay_sigma: float = 1.0
    rtt_sigma: float = 0.5


@dataclass(frozen=True)
class AppProfile:
    app_label: str
    queries: tuple[QuerySlot, ...]
    jitter: Jitter = Jitter()

    def __post_init__(self):
        if not self.queries:
            raise ValueError("a profile needs at least one query")
        for q in self.queries:
            if q.req_size < 1 or q.resp_median < 1:
                raise ValueError("sizes must be >= 1 byte")


class PadKind(enum.Enum):
    NONE = "none"
    EDNS = "edns"
    CUSTOM = "custom"


@dataclass(frozen=True)
class PaddingMode:
    kind: PadKind = PadKind.NONE
    block_req: int = 1
    block_resp: int = 1

    def __post_init__(self):
        if self.block_req < 1 or self.block_resp < 1:
            raise ValueError("padding blocks must be >= 1")

    @classmethod
    def none(cls) -> "PaddingMode":
        return cls(PadKind.NONE)

    @classmethod
    def edns(cls) -> "PaddingMode":
        """Queries to multiples of 128 bytes, responses to multiples of 468."""
        return cls(PadKind.EDNS, 128, 468)

    @classmethod
    def custom(cls, block_req: int, block_resp: int) -> "PaddingMode":
        return cls(PadKind.CUSTOM, block_req, block_resp)

    @classmethod
    def parse(cls, text: str) -> "PaddingMode":
        text = text.strip().lower()
        if text == "none":
            return cls.none()
        if text == "edns":
            return cls.edns()
        if text.startswith("custom:"):
            req, resp = text[len("custom:"):].split(",")
            return cls.custom(int(req), int(resp))
        raise ValueError(f"unknown padding mode {text!r}")

    def pad(self, size: int, is_request: bool) -> int:
        if self.kind is PadKind.NONE:
            return size
        block = self.block_req if is_request else self.block_resp
        return -(-size // block) * block


@dataclass(frozen=True)
class CacheMode:
    """Cold cache, or warm with ``rho`` = hit probability of shared-pool queries."""

    warm: bool = False
    rho: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must be in [0, 1]")

    @classmethod
    def cold(cls) -> "CacheMode":
        return cls(False, 0.0)

    @classmethod
    def warm_with(cls, rho: float) -> "CacheMode":
        return cls(True, rho)

    @classmethod
    def parse(cls, text: str) -> "CacheMode":
        text = text.strip().lower()
        if text == "cold":
            return cls.cold()
        if text.startswith("warm:"):
            return cls.warm_with(float(text[5:]))
        raise ValueError(f"unknown cache mode {text!r}")


def _lognormal_int(rng: np.random.Generator, median: float, sigma: float, lo: int = 1, hi: int | None = None) -> int:
    v = median if sigma <= 0 else math.exp(rng.normal(math.log(median), sigma))
    v = max(lo, int(round(v)))
    return min(v, hi) if hi is not None else v


def _log_uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return math.exp(rng.uniform(math.log(lo), math.log(hi)))


def _slot_delay(rng: np.random.Generator, phase_prob: float) -> float:
    # most queries fire in near-parallel bursts; a few open a new launch phase
    if rng.random() < phase_prob:
        return _log_uniform(rng, 60.0, 2500.0)
    return _log_uniform(rng, BURST_DELAY[0], BURST_DELAY[1])


def _random_slot(rng: np.random.Generator, domain: str, shared: bool, phase_prob: float) -> QuerySlot:
    name_len = _lognormal_int(rng, 22, 0.35, lo=6, hi=200)
    req = 12 + name_len + 4 + 11  # header, qname, qtype/qclass, OPT
    resp = _lognormal_int(rng, 170, 0.7, lo=req + 4, hi=1400)
    resp_sigma = float(rng.choice([0.0, 0.0, 0.0, 0.08, 0.2]))
    rtt = _log_uniform(rng, 8.0, 120.0)
    return QuerySlot(domain, req, resp, resp_sigma, _slot_delay(rng, phase_prob), rtt, shared)


def generate_profiles(n_apps: int, seed: int, overlap: float = 0.2, min_queries: int = 13,
                      max_queries: int = 17, pool_size: int = 40, phase_prob: float = 0.15,
                      jitter: Jitter = Jitter(), prefix: str = "A") -> list[AppProfile]:
    """Profiles where a fraction ``overlap`` of each app's query slots comes from a
    shared pool of third-party domains and the rest are unique to the app."""
    if n_apps < 1:
        raise ValueError("n_apps must be >= 1")
    if not 0.0 <= overlap <= 1.0:
        raise ValueError("overlap must be in [0, 1]")
    rng = np.random.default_rng([seed, 0x5EED])
    pool = [_random_slot(rng, f"shared{i}.example", True, phase_prob) for i in range(pool_size)]
    profiles = []
    for a in range(n_apps):
        label = f"{prefix}{a + 1}"
        arng = np.random.default_rng([seed, a])
        n_q = int(arng.integers(min_queries, max_queries + 1))
        n_shared = min(int(round(overlap * n_q)), pool_size)
        slots = [_random_slot(arng, f"{label.lower()}-{i}.example", False, phase_prob)
                 for i in range(n_q - n_shared)]
        for j in arng.choice(pool_size, size=n_shared, replace=False):
            s = pool[int(j)]
            # timing is app-specific even for shared domains
            slots.append(replace(s, delay_median=_slot_delay(arng, phase_prob)))
        order = arng.permutation(len(slots))
        profiles.append(AppProfile(label, tuple(slots[i] for i in order), jitter))
    return profiles


def generate_trace(p: AppProfile, pad: PaddingMode = PaddingMode(), cache: CacheMode = CacheMode(),
                   seed: int | Sequence[int] = 0, trace_id: str | None = None, resolver_id: str = "synthetic",
                   protocol: Protocol = Protocol.DOT, collected_at: str | None = None) -> Trace:
    rng = np.random.default_rng(seed)
    events: list[tuple[int, int, DnsEvent]] = []
    t = 0.0
    issued = 0
    kept = []
    # cache hits use their own stream so the surviving events match the cold trace
    hit_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0]) if cache.warm else None
    for q in p.queries:
        hit = cache.warm and q.shared and hit_rng.random() < cache.rho
        kept.append(not hit)
    if not any(kept):
        kept[0] = True
    for i, (q, keep) in enumerate(zip(p.queries, kept)):
        delay = math.exp(rng.normal(math.log(q.delay_median), p.jitter.delay_sigma))
        rtt = math.exp(rng.normal(math.log(q.rtt_median), p.jitter.rtt_sigma))
        resp = _lognormal_int(rng, q.resp_median, q.resp_sigma, lo=1)
        if i > 0:
            t += delay
        if not keep:
            continue
        t_req = int(math.floor(t))
        t_resp = int(math.floor(t + rtt))
        seq = 2 * issued
        events.append((t_req, seq, DnsEvent(t_req, C2R, pad.pad(q.req_size, True))))
        events.append((t_resp, seq + 1, DnsEvent(t_resp, R2C, pad.pad(resp, False))))
        issued += 1
    events.sort(key=lambda e: (e[0], e[1]))
    t0 = events[0][0]
    evs = tuple(DnsEvent(e.t_ms - t0, e.direction, e.size_bytes) for _, _, e in events)
    return Trace(
        trace_id=trace_id or f"{p.app_label}-0",
        app_label=p.app_label,
        resolver_id=resolver_id,
        protocol=protocol,
        collected_at=collected_at or _EPOCH.strftime("%Y-%m-%dT%H:%M:%SZ"),
        events=evs,
    )


def generate_dataset(profiles: Sequence[AppProfile], traces_per_app: int, pad: PaddingMode = PaddingMode(),
                     cache: CacheMode = CacheMode(), seed: int = 0, resolver_id: str = "synthetic",
                     protocol: Protocol = Protocol.DOT) -> Dataset:
    """``traces_per_app`` traces per profile; trace j of app a is seeded by (seed, a, j)."""
    out = []
    for a, p in enumerate(profiles):
        for j in range(traces_per_app):
            when = _EPOCH + timedelta(hours=j, minutes=a)
            out.append(generate_trace(
                p, pad, cache, seed=[seed, a, j, 0x7A],
                trace_id=f"{p.app_label}-{j}", resolver_id=resolver_id, protocol=protocol,
                collected_at=when.strftime("%Y-%m-%dT%H:%M:%SZ"),
            ))
    return Dataset(out)
