"""Synthetic traffic generation and the per-observer jitter model."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .records import BROADCAST_MAC, ArpOp, NetKind, TraceRecord

DEFAULT_SUBNET = "192.168.0.0/24"
SIGNAL_TAG = "signal"


@dataclass(frozen=True)
class SourcePool:
    """Hosts that emit broadcasts; addresses are 192.168.0.x with matching MACs."""
    size: int = 32
    prefix: bytes = bytes([192, 168, 0])

    def host(self, k: int) -> tuple[bytes, bytes]:
        octet = 10 + k % 240
        return bytes([2, 0, 0, 0, k >> 8 & 0xFF, octet]), self.prefix + bytes([octet])


GATEWAY_MAC = bytes.fromhex("020000000001")
GATEWAY_IP = bytes([192, 168, 0, 1])
REMOTE_IP = bytes([10, 20, 30, 40])


def poi_record(ts: float, k: int, pool: SourcePool) -> TraceRecord:
    link, addr = pool.host(k)
    return TraceRecord(ts, link, BROADCAST_MAC, NetKind.ARP, addr, GATEWAY_IP, ArpOp.REQUEST, 60)


def filler_record(ts: float, k: int, pool: SourcePool) -> TraceRecord:
    link, addr = pool.host(k)
    return TraceRecord(ts, link, GATEWAY_MAC, NetKind.IPV4, addr, REMOTE_IP, None, 1500)


def synth_trace(rate_per_hour: float, duration_s: float, mix: float = 1.0, seed: int = 0,
                pool: SourcePool = SourcePool(), start: float = 0.0) -> list[TraceRecord]:
    """Poisson arrivals; each is a PoI with probability ``mix``, else unicast filler."""
    if rate_per_hour <= 0:
        raise ValueError("rate_per_hour must be positive")
    if not 0.0 <= mix <= 1.0:
        raise ValueError("mix must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    n = rng.poisson(rate_per_hour * duration_s / 3600.0)
    times = np.sort(rng.uniform(start, start + duration_s, n))
    is_poi = rng.random(n) < mix
    hosts = rng.integers(0, pool.size, n)
    return [(poi_record if p else filler_record)(float(ts), int(k), pool)
            for ts, p, k in zip(times, is_poi, hosts)]


def heterogeneous_trace(rate_per_hour: float, duration_s: float, seed: int = 0,
                        burstiness: float = 0.5, pool: SourcePool = SourcePool()) -> list[TraceRecord]:
    """Broadcast-only traffic from a two-state modulated Poisson source.

    A fraction ``burstiness`` of arrivals come in short periodic bursts (a host
    retrying a lookup), the rest are Poisson.  Different seeds and rates give
    recordings whose IPD distributions differ as real networks do.
    """
    rng = np.random.default_rng(seed)
    n = rng.poisson(rate_per_hour * duration_s / 3600.0)
    n_burst_pkts = int(n * burstiness)
    base = rng.uniform(0, duration_s, n - n_burst_pkts)
    retry = rng.uniform(0.5, 2.0)
    size = int(rng.integers(2, 6))
    starts = rng.uniform(0, duration_s, max(1, n_burst_pkts // size))
    bursts = (starts[:, None] + retry * np.arange(size)[None, :]).ravel()[:n_burst_pkts]
    times = np.sort(np.concatenate([base, bursts[bursts < duration_s]]))
    hosts = rng.integers(0, pool.size, times.size)
    return [poi_record(float(ts), int(k), pool) for ts, k in zip(times, hosts)]


# --------------------------------------------------------------------------
# Jitter

@dataclass(frozen=True)
class JitterModel:
    delay_mean: float = 0.0
    delay_std: float = 0.0
    reorder_window: float = 0.0
    drop_prob: float = 0.0

    def __post_init__(self) -> None:
        for name in ("delay_mean", "delay_std", "reorder_window", "drop_prob"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.drop_prob >= 1:
            raise ValueError("drop_prob must be < 1")

    @property
    def is_identity(self) -> bool:
        return not (self.delay_mean or self.delay_std or self.reorder_window or self.drop_prob)

    def sample_delays(self, rng: np.random.Generator, n: int) -> np.ndarray:
        d = np.full(n, self.delay_mean, dtype=float)
        if self.delay_std > 0:
            d = d + rng.normal(0.0, self.delay_std, n)
            # truncate at zero by redrawing the negative tail
            bad = d < 0
            while bad.any():
                d[bad] = self.delay_mean + rng.normal(0.0, self.delay_std, int(bad.sum()))
                bad = d < 0
        if self.reorder_window > 0:
            d = d + rng.uniform(0.0, self.reorder_window, n)
        return d


@dataclass(frozen=True)
class Preset:
    name: str
    rate_per_hour: float
    jitter: JitterModel


PRESETS = {
    "home": Preset("home", 7300.0, JitterModel(2.1e-5, 2.1e-5)),
    "university": Preset("university", 2100.0, JitterModel(9.1e-3, 9.1e-3)),
    "smarthome": Preset("smarthome", 12700.0, JitterModel(9.1e-3, 9.1e-3)),
}


def perceive(trace: list[TraceRecord], model: JitterModel, rng: np.random.Generator
             ) -> tuple[list[TraceRecord], np.ndarray]:
    """One observer's view plus the original index of each surviving record."""
    n = len(trace)
    if model.is_identity or n == 0:
        return list(trace), np.arange(n)
    keep = rng.random(n) >= model.drop_prob
    delays = model.sample_delays(rng, n)
    idx = np.flatnonzero(keep)
    ts = np.array([trace[i].ts for i in idx]) + delays[idx]
    order = np.argsort(ts, kind="stable")
    return [trace[idx[j]].with_ts(float(ts[j])) for j in order], idx[order]


def apply_jitter(trace: list[TraceRecord], model: JitterModel, seed: int = 0
                 ) -> tuple[list[TraceRecord], list[TraceRecord]]:
    rng = np.random.default_rng(seed)
    cs, _ = perceive(trace, model, rng)
    cr, _ = perceive(trace, model, rng)
    return cs, cr


def count_reorderings(original_idx: np.ndarray) -> int:
    """Adjacent inversions of the original order in a perceived view."""
    return int(np.sum(np.diff(original_idx) < 0))
