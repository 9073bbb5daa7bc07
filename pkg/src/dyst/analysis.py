"""Distance/bandwidth analysis of channel variants.

Closed-form expectations, a Monte-Carlo engine driven by an AES counter
stream, Pareto-front extraction and a few sizing helpers.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .bitcore import (ZERO_KEY, BitVec, ChecksumKind, ChecksumType,
                      ConfigError, checksum_table, mask_array,
                      prf_stream_values)
from .codec import BitChunk, ExtCodecConfig


class Mode(str, enum.Enum):
    BASIC = "basic"
    EXT = "ext"


@dataclass(frozen=True, order=True)
class VariantSpec:
    mode: Mode
    h: int
    c: int = 0
    t: int = 0
    checksum: ChecksumType | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.h < 1:
            raise ConfigError("h must be >= 1")
        if self.mode is Mode.BASIC:
            object.__setattr__(self, "c", 0)
            object.__setattr__(self, "t", 0)
            object.__setattr__(self, "checksum", None)
            return
        if self.checksum is None:
            raise ConfigError("an extended variant needs a checksum kind")
        object.__setattr__(self, "checksum", ChecksumType(self.checksum))
        self.codec_config()  # validates c, t and checksum width

    @classmethod
    def basic(cls, h: int) -> "VariantSpec":
        return cls(Mode.BASIC, h)

    @classmethod
    def ext(cls, h: int, c: int, t: int, checksum: ChecksumType | str = ChecksumType.SHA3) -> "VariantSpec":
        return cls(Mode.EXT, h, c, t, ChecksumType(checksum))

    @property
    def payload_bits(self) -> int:
        return self.h - self.c

    def codec_config(self) -> ExtCodecConfig:
        if self.mode is not Mode.EXT:
            raise ConfigError("basic variants have no codec configuration")
        return ExtCodecConfig(self.h, self.c, self.t, ChecksumKind(self.checksum, self.c))

    def label(self) -> str:
        if self.mode is Mode.BASIC:
            return f"basic(h={self.h})"
        return f"ext(h={self.h},c={self.c},t={self.t},{self.checksum.value})"


@dataclass(frozen=True)
class VariantPoint:
    variant: VariantSpec
    distance: float
    bandwidth: float


# --------------------------------------------------------------------------
# closed form

def t_count(h: int, t: int) -> int:
    if not 0 <= t <= h:
        raise ConfigError(f"need 0 <= t <= h, got h={h}, t={t}")
    return sum(math.comb(h, j) for j in range(t + 1))


def p_match_exact(h: int, t: int) -> Fraction:
    return Fraction(t_count(h, t), 1 << h)


def p_match(h: int, t: int) -> float:
    """Probability that at most ``t`` of ``h`` uniform bits miss a fixed target."""
    return float(p_match_exact(h, t))


def u_first_fit(h: int, t: int, c: int) -> float:
    """Chance that the intended message is the first checksum fit."""
    if c < 1:
        raise ConfigError("c must be >= 1")
    T = t_count(h, t)
    q = 2.0 ** -c
    hit = -math.expm1(T * math.log1p(-q))
    return hit / (T * q)


def variant_point(v: VariantSpec) -> VariantPoint:
    if v.mode is Mode.BASIC:
        return VariantPoint(v, float(1 << v.h), v.h / float(1 << v.h))
    p = p_match(v.h, v.t) * u_first_fit(v.h, v.t, v.c)
    return VariantPoint(v, 1.0 / p, v.payload_bits * p)


def dominates(a: VariantPoint, b: VariantPoint) -> bool:
    """True if ``a`` is at least as good on both axes and better on one."""
    return (a.distance >= b.distance and a.bandwidth >= b.bandwidth
            and (a.distance > b.distance or a.bandwidth > b.bandwidth))


def pareto_front(points: Sequence[VariantPoint]) -> list[VariantPoint]:
    """Non-dominated points (both axes maximised), in input order.

    Identical points do not dominate each other and are all kept.
    """
    if not points:
        raise ValueError("pareto_front needs at least one point")
    order = sorted(range(len(points)),
                   key=lambda i: (-points[i].distance, -points[i].bandwidth))
    keep = [False] * len(points)
    best_bw = -math.inf          # best bandwidth among strictly larger distances
    i = 0
    while i < len(order):
        j = i
        d = points[order[i]].distance
        while j < len(order) and points[order[j]].distance == d:
            j += 1
        group = order[i:j]
        top = points[group[0]].bandwidth   # group sorted by bandwidth desc
        for k in group:
            bw = points[k].bandwidth
            keep[k] = bw == top and bw > best_bw
        best_bw = max(best_bw, top)
        i = j
    return [p for p, k in zip(points, keep) if k]


@dataclass(frozen=True)
class TransmissionCost:
    signals: int
    expected_pois: float
    signal_share: float


def transmission_cost(message_bits: int, v: VariantSpec) -> TransmissionCost:
    if message_bits < 1:
        raise ValueError("message must have at least one bit")
    signals = -(-message_bits // v.payload_bits)
    pois = signals * variant_point(v).distance
    return TransmissionCost(signals, pois, signals / (signals + pois))


@dataclass(frozen=True)
class RtcpSizing:
    h: int
    poi_count: int
    pointer_bits: int
    suggested_h: int | None


def rtcp_candidate(rate_bps: float, interval_s: float, h: int) -> tuple[int, int]:
    """(PoIs per sender-report interval, index bits) for ``h``-bit pieces."""
    T = math.floor(rate_bps * interval_s / (2 * h))
    if T < 1:
        raise ValueError(f"h={h} leaves no PoI per interval")
    return T, math.ceil(math.log2(T)) if T > 1 else 0


def rtcp_sizing(rate_bps: float, interval_s: float, h: int | None = None) -> RtcpSizing:
    if rate_bps <= 0 or interval_s <= 0:
        raise ValueError("rate and interval must be positive")
    suggested = None
    for cand in range(1, 129):
        try:
            _, bits = rtcp_candidate(rate_bps, interval_s, cand)
        except ValueError:
            continue
        if bits <= cand / 4:
            suggested = cand
            break
    if h is None:
        if suggested is None:
            raise ValueError("no h in 1..128 gives a short enough index")
        h = suggested
    T, bits = rtcp_candidate(rate_bps, interval_s, h)
    return RtcpSizing(h, T, bits, suggested)


# --------------------------------------------------------------------------
# Monte-Carlo

TABLE_MAX_H = 28


@dataclass(frozen=True)
class MonteCarloResult:
    variant: VariantSpec
    samples: int
    messages: int
    signals: int
    seed: int = 0

    @property
    def distance(self) -> float:
        """Hashes per signal; ``inf`` when nothing was signalled."""
        if self.signals == 0:
            return math.inf
        return self.samples * self.messages / self.signals

    @property
    def bandwidth(self) -> float:
        return self.variant.payload_bits / self.distance


def key_from_seed(seed: int) -> bytes:
    return seed.to_bytes(16, "big")


@lru_cache(maxsize=32)
def _codewords(kind: ChecksumType, payload_bits: int, c: int) -> np.ndarray:
    table = checksum_table(ChecksumKind(kind, c), payload_bits).astype(np.int64)
    return (np.arange(1 << payload_bits, dtype=np.int64) << c) | table


def _mask_weights(masks: np.ndarray) -> np.ndarray:
    return np.bitwise_count(masks).astype(np.uint8)


def first_fits(ys: np.ndarray, kind: ChecksumType, h: int, c: int, t_max: int
               ) -> tuple[np.ndarray, np.ndarray]:
    """First-fit message and mask weight for every hash value in ``ys``.

    Runs the canonical near-miss search once up to ``t_max``; the first fit
    under a smaller ``t`` is the same fit when its weight is <= t, else none.
    Missing fits are reported as message -1, weight 255.
    """
    from . import _kernels

    payload = h - c
    masks = mask_array(h, t_max).astype(np.int64)
    weights = _mask_weights(masks.astype(np.uint64))
    ys = np.asarray(ys, dtype=np.int64)
    if h <= TABLE_MAX_H:
        needed = np.zeros(1 << h, dtype=np.bool_)
        needed[ys] = True
        ff, wt = _kernels.first_fit_table(_codewords(kind, payload, c), masks, weights,
                                          h, needed, int(needed.sum()))
        return ff[ys].astype(np.int64), wt[ys]
    table = checksum_table(ChecksumKind(kind, c), payload).astype(np.int64)
    return _kernels.first_fit_scan(ys.astype(np.uint64), masks.astype(np.uint64),
                                   weights, table, c)


def _count_hits(values: np.ndarray, targets: np.ndarray) -> int:
    """How many entries of ``values`` equal some target (with multiplicity)."""
    s = np.sort(values)
    return int((np.searchsorted(s, targets, "right") - np.searchsorted(s, targets, "left")).sum())


def _stream(key: bytes, h: int, n: int) -> np.ndarray:
    return prf_stream_values(key, h, n).astype(np.int64)


def monte_carlo_panel(v: VariantSpec, samples: int, key: bytes = ZERO_KEY,
                      messages: Sequence[int] | np.ndarray = (0,), *,
                      stream: np.ndarray | None = None, seed: int = 0) -> MonteCarloResult:
    """Signal count over a PRF hash stream, summed over a panel of messages."""
    if samples < 1:
        raise ValueError("need at least one sample")
    targets = np.asarray(messages, dtype=np.int64)
    ys = _stream(key, v.h, samples) if stream is None else stream
    if v.mode is Mode.BASIC:
        hits = _count_hits(ys, targets)
    else:
        msg, wt = first_fits(ys, v.checksum, v.h, v.c, v.t)
        hits = _count_hits(msg[wt <= v.t], targets)
    return MonteCarloResult(v, samples, len(targets), hits, seed)


def monte_carlo_variant(v: VariantSpec, samples: int, key: bytes = ZERO_KEY,
                        message: BitChunk | BitVec | None = None) -> MonteCarloResult:
    """Run the sender gate for one fixed message chunk over ``samples`` PRF hashes."""
    if message is None:
        value = 0
    else:
        payload = message.payload if isinstance(message, BitChunk) else message
        if payload.length != v.payload_bits:
            raise ValueError(f"message chunk has {payload.length} bits, expected {v.payload_bits}")
        value = payload.value
    return monte_carlo_panel(v, samples, key, [value])


def message_panel(payload_bits: int, size: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.integers(0, 1 << payload_bits, size=size, dtype=np.int64)


def simulate_variants(variants: Iterable[VariantSpec], samples: int, seed: int = 0,
                      panel_size: int = 256) -> dict[VariantSpec, MonteCarloResult]:
    """Monte-Carlo every variant, sharing work between related variants.

    The hash stream for key ``key_from_seed(seed)`` is generated once at 64
    bits and truncated per ``h``.  Extended variants that differ only in
    ``t`` share one first-fit pass.
    """
    variants = list(variants)
    key = key_from_seed(seed)
    base = prf_stream_values(key, 64, samples)
    groups: dict[tuple, list[VariantSpec]] = {}
    for v in variants:
        gk = (v.mode.value, v.h, v.c, v.checksum.value if v.checksum else "")
        groups.setdefault(gk, []).append(v)
    out: dict[VariantSpec, MonteCarloResult] = {}
    for gk in sorted(groups):
        members = groups[gk]
        v0 = members[0]
        ys = (base >> np.uint64(64 - v0.h)).astype(np.int64)
        panel = message_panel(v0.payload_bits, panel_size, seed)
        if v0.mode is Mode.BASIC:
            for v in members:
                out[v] = MonteCarloResult(v, samples, panel_size, _count_hits(ys, panel), seed)
            continue
        msg, wt = first_fits(ys, v0.checksum, v0.h, v0.c, max(v.t for v in members))
        for v in members:
            hits = _count_hits(msg[wt <= v.t], panel)
            out[v] = MonteCarloResult(v, samples, panel_size, hits, seed)
    return out


# --------------------------------------------------------------------------
# grids

def standard_grid(basic_h: Iterable[int] = range(14, 21),
               payload_bits: Iterable[int] = range(14, 19),
               c_values: Iterable[int] = range(6, 11),
               t_values: Iterable[int] = range(1, 6),
               checksums: Iterable[ChecksumType] = (ChecksumType.SHA3, ChecksumType.CRC8,
                                                    ChecksumType.ADHOC),
               ) -> tuple[list[VariantSpec], list[tuple]]:
    """Variants of the standard sweep plus the (checksum, h, c, t) triples skipped as invalid."""
    variants = [VariantSpec.basic(h) for h in basic_h]
    skipped = []
    c_values, t_values = list(c_values), list(t_values)
    for ck in checksums:
        ck = ChecksumType(ck)
        for m in payload_bits:
            for c in c_values:
                for t in t_values:
                    try:
                        variants.append(VariantSpec.ext(m + c, c, t, ck))
                    except ConfigError as exc:
                        skipped.append((ck.value, m + c, c, t, str(exc)))
    return variants, skipped


@dataclass
class SweepRow:
    variant: VariantSpec
    analytic: VariantPoint
    mc: list[MonteCarloResult] = field(default_factory=list)
    on_front: bool = False

    def mc_point(self) -> VariantPoint | None:
        if not self.mc:
            return None
        signals = sum(r.signals for r in self.mc)
        if signals == 0:
            return None
        trials = sum(r.samples * r.messages for r in self.mc)
        d = trials / signals
        return VariantPoint(self.variant, d, self.variant.payload_bits / d)


def sweep(variants: Sequence[VariantSpec], mc_samples: int = 0, seeds: Sequence[int] = (0, 1),
          mc_max_distance: float = 1e5, panel_size: int = 256,
          use_mc_for_front: bool = False) -> list[SweepRow]:
    """Evaluate a grid analytically and, optionally, by simulation.

    Simulation is limited to variants whose analytic distance does not
    exceed ``mc_max_distance``; further out the sample holds too few signals.
    """
    rows = [SweepRow(v, variant_point(v)) for v in variants]
    if mc_samples:
        todo = [r.variant for r in rows if r.analytic.distance <= mc_max_distance]
        for s in seeds:
            res = simulate_variants(todo, mc_samples, seed=s, panel_size=panel_size)
            for r in rows:
                if r.variant in res:
                    r.mc.append(res[r.variant])
    pts = []
    for r in rows:
        p = r.mc_point() if use_mc_for_front else None
        pts.append(p or r.analytic)
    front = {id(p) for p in pareto_front(pts)}
    for r, p in zip(rows, pts):
        r.on_front = id(p) in front
    return rows
