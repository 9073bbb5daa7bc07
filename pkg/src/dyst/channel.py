"""Covert sender and receiver state machines and the trace-driven channel run."""
from __future__ import annotations

import enum
import hashlib
import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .analysis import Mode, VariantSpec
from .bitcore import (BitVec, ConfigError, HashAlgorithm, HashSpec, derive_hash,
                      prf_stream_values)
from .codec import BitChunk, ext_first_fit, ext_sender_gate, join_chunks, split_message
from .traffic import (BROADCAST_MAC, SIGNAL_TAG, ArpOp, JitterModel, NetKind, PoIPolicy,
                      TraceRecord, classify_poi, perceive)

TRANSCRIPT_SCHEMA = "dyst-transcript/1"
FRAC_LOW, FRAC_HIGH = 0.05, 0.95
SENDER_MAC = bytes.fromhex("02000000cafe")
SENDER_IP = bytes([192, 168, 0, 250])
SIGNAL_TARGET_IP = bytes([192, 168, 0, 254])


class PointerEncoding(str, enum.Enum):
    STORAGE = "storage"   # log2(n) side bits carried with the signal
    DELAY = "delay"       # signal delayed by one of n distinguishable offsets


@dataclass(frozen=True)
class ChannelConfig:
    variant: VariantSpec
    hash: HashSpec
    poi: PoIPolicy
    robust: bool = False
    D: float = 0.0
    R: float = 0.0
    pointers: int = 1
    frac_filter: bool = True
    chunk_bits: int | None = None
    pointer_encoding: PointerEncoding = PointerEncoding.STORAGE
    delay_step: float = 0.05
    signal_lag: float = 0.0
    horizon: float = 60.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "pointer_encoding", PointerEncoding(self.pointer_encoding))
        if self.hash.h != self.variant.h:
            raise ConfigError(f"hash width {self.hash.h} differs from variant h={self.variant.h}")
        if self.robust and not (self.D > 0 and self.R > 0):
            raise ConfigError("robust mode needs D > 0 and R > 0")
        if self.pointers < 1:
            raise ConfigError("pointers must be >= 1")
        if self.pointers > 1 and self.variant.mode is not Mode.BASIC:
            raise ConfigError("multiple pointers are defined for the basic variant only")
        if self.chunk_bits is not None and self.pointers == 1 \
                and self.chunk_bits != self.variant.payload_bits:
            raise ConfigError("chunk_bits must equal the variant payload for a single pointer")
        if self.chunk_bits is not None and not 1 <= self.chunk_bits <= 96:
            raise ConfigError("chunk_bits must lie in 1..96")
        if self.horizon <= 0 or self.signal_lag < 0 or self.delay_step <= 0:
            raise ConfigError("horizon and delay_step must be positive, signal_lag >= 0")

    @property
    def chunk_width(self) -> int:
        return self.chunk_bits or self.variant.payload_bits

    @property
    def pointer_bits(self) -> int:
        return pointer_bits(self.pointers)


def pointer_bits(n: int) -> int:
    """Side bits needed to name one of ``n`` pointers; a lone signal is one bit."""
    return max(1, math.ceil(math.log2(n)))


@dataclass(frozen=True)
class PoIEvent:
    ts: float
    hash_input: bytes | None
    hash: BitVec | None
    ordinal: int = 0

    @property
    def skipped(self) -> bool:
        return self.hash is None


@dataclass(frozen=True)
class SignalEvent:
    ts: float
    pointer_index: int = 0
    poi_ts: float = 0.0
    chunk_index: int = 0


@dataclass
class SenderState:
    chunks: deque
    current: BitChunk | None = None
    last_poi_ts: float | None = None
    last_input: bytes | None = None
    pending: tuple[PoIEvent, int] | None = None
    eligible: int = 0
    observed: int = 0

    @classmethod
    def for_chunks(cls, chunks: Iterable[BitChunk]) -> "SenderState":
        q = deque(chunks)
        return cls(q, q[0] if q else None)

    def advance(self) -> None:
        self.chunks.popleft()
        self.current = self.chunks[0] if self.chunks else None


@dataclass
class ReceiverState:
    poi_log: deque = field(default_factory=deque)
    decoded: list = field(default_factory=list)
    failures: int = 0


# --------------------------------------------------------------------------
# hashing of observed packets

def frac_skipped(ts: float) -> bool:
    frac = ts - math.floor(ts)
    return frac < FRAC_LOW or frac > FRAC_HIGH


def poi_hash_input(rec: TraceRecord, observer_ts: float, frac_filter: bool = True) -> bytes | None:
    """Source address bytes followed by the ASCII integer second, or None when filtered."""
    if frac_filter and frac_skipped(observer_ts):
        return None
    src = rec.link_src if rec.net_kind is NetKind.ARP or rec.net_src is None else rec.net_src
    return src + str(math.floor(observer_ts)).encode("ascii")


def hash_input(spec: HashSpec, data: bytes) -> BitVec:
    if spec.algorithm is HashAlgorithm.AES_COUNTER_PRF and len(data) > 16:
        data = hashlib.sha3_256(data).digest()[:16]
    return derive_hash(spec, data)


def make_poi_event(rec: TraceRecord, cfg: ChannelConfig, ordinal: int = 0) -> PoIEvent:
    data = poi_hash_input(rec, rec.ts, cfg.frac_filter)
    return PoIEvent(rec.ts, data, None if data is None else hash_input(cfg.hash, data), ordinal)


def prf_poi_events(key: bytes, h: int, n: int, rate_per_hour: float, seed: int = 0
                   ) -> list[PoIEvent]:
    """PoIs at Poisson times whose hashes come straight from the AES counter stream."""
    rng = np.random.default_rng(seed)
    ts = np.cumsum(rng.exponential(3600.0 / rate_per_hour, n))
    vals = prf_stream_values(key, h, n)
    return [PoIEvent(float(t), i.to_bytes(16, "big"), BitVec(int(v), h), i)
            for i, (t, v) in enumerate(zip(ts, vals))]


# --------------------------------------------------------------------------
# gates

@lru_cache(maxsize=4096)
def pointer_targets(payload: BitVec, n: int, spec: HashSpec) -> tuple[BitVec, ...]:
    base = payload.to_bytes()
    return tuple(hash_input(spec, base + i.to_bytes(4, "big")) for i in range(n))


def match_targets(targets: Sequence[BitVec], poi_hash: BitVec) -> int | None:
    for i, target in enumerate(targets):
        if target == poi_hash:
            return i
    return None


@lru_cache(maxsize=4096)
def _target_index(payload: BitVec, n: int, spec: HashSpec) -> dict[int, int]:
    index: dict[int, int] = {}
    for i, target in enumerate(pointer_targets(payload, n, spec)):
        index.setdefault(target.value, i)
    return index


def multi_pointer_gate(chunk: BitChunk, poi_hash: BitVec, n: int, spec: HashSpec) -> int | None:
    """Smallest pointer index whose target hash equals the PoI hash."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    return _target_index(chunk.payload, n, spec).get(poi_hash.value)


def sender_gate(chunk: BitChunk, poi: PoIEvent, cfg: ChannelConfig) -> int | None:
    """Pointer index to signal for ``poi`` under the current chunk, if any."""
    if cfg.pointers > 1:
        return multi_pointer_gate(chunk, poi.hash, cfg.pointers, cfg.hash)
    if cfg.variant.mode is Mode.BASIC:
        return 0 if poi.hash == chunk.payload else None
    return 0 if ext_sender_gate(poi.hash, chunk, cfg.variant.codec_config()) else None


def _signal_ts(poi: PoIEvent, index: int, cfg: ChannelConfig) -> float:
    ts = poi.ts + (cfg.D if cfg.robust else cfg.signal_lag)
    if cfg.pointers > 1 and cfg.pointer_encoding is PointerEncoding.DELAY:
        ts += index * cfg.delay_step
    return ts


def _emit(state: SenderState, poi: PoIEvent, index: int, cfg: ChannelConfig) -> SignalEvent:
    ev = SignalEvent(_signal_ts(poi, index, cfg), index, poi.ts, state.current.index)
    state.advance()
    return ev


def sender_step(state: SenderState, poi: PoIEvent, cfg: ChannelConfig) -> SignalEvent | None:
    """Feed one PoI (in sender-view order); returns a signal when one is due.

    In robust mode a matching PoI is held until D seconds pass without another
    PoI.  Filtered PoIs still count as neighbours for that isolation test.
    """
    out = None
    prev_ts, prev_input = state.last_poi_ts, state.last_input
    state.last_poi_ts, state.last_input = poi.ts, poi.hash_input
    state.observed += 1

    if state.pending is not None:
        held, index = state.pending
        state.pending = None
        if poi.ts - held.ts > cfg.D:
            out = _emit(state, held, index, cfg)

    if state.current is None or poi.skipped:
        return out
    if cfg.robust and prev_ts is not None and poi.ts - prev_ts <= cfg.D:
        return out
    # identical input twice in a row (same host, same second) would make the
    # receiver's choice ambiguous if the two arrive swapped
    if poi.hash_input == prev_input:
        return out
    state.eligible += 1
    index = sender_gate(state.current, poi, cfg)
    if index is None:
        return out
    if cfg.robust:
        state.pending = (poi, index)
        return out
    return _emit(state, poi, index, cfg)


def sender_flush(state: SenderState, cfg: ChannelConfig) -> SignalEvent | None:
    """End of input: a held PoI is isolated by definition."""
    if state.pending is None:
        return None
    held, index = state.pending
    state.pending = None
    return _emit(state, held, index, cfg)


# --------------------------------------------------------------------------
# receiver

class ChunkDictionary:
    """Receiver-side inversion of multi-pointer targets over a known chunk alphabet."""

    def __init__(self, width: int, n: int, spec: HashSpec, alphabet: Iterable[int] | None = None):
        if alphabet is None:
            if width > 16:
                raise ConfigError("full chunk alphabet only supported up to 16 bits")
            alphabet = range(1 << width)
        self.table: dict[tuple[int, int], list[int]] = {}
        for v in alphabet:
            for i, target in enumerate(pointer_targets(BitVec(v, width), n, spec)):
                self.table.setdefault((target.value, i), []).append(v)
        self.width = width

    def lookup(self, poi_hash: BitVec, index: int) -> BitVec | None:
        hits = self.table.get((poi_hash.value, index))
        return BitVec(hits[0], self.width) if hits else None


def _prune(state: ReceiverState, now: float, horizon: float) -> None:
    log = state.poi_log
    while len(log) > 1 and log[0].ts < now - horizon:
        log.popleft()


def _decode(poi: PoIEvent, sig: SignalEvent, cfg: ChannelConfig,
            dictionary: ChunkDictionary | None) -> BitVec | None:
    if cfg.pointers > 1:
        index = sig.pointer_index
        if cfg.pointer_encoding is PointerEncoding.DELAY:
            index = round((sig.ts - poi.ts - cfg.signal_lag) / cfg.delay_step)
            if not 0 <= index < cfg.pointers:
                return None
        return dictionary.lookup(poi.hash, index) if dictionary else None
    if cfg.variant.mode is Mode.BASIC:
        return poi.hash
    fit = ext_first_fit(poi.hash, cfg.variant.codec_config())
    return None if fit is None else fit[0]


def receiver_step(state: ReceiverState, event: PoIEvent | SignalEvent, cfg: ChannelConfig,
                  dictionary: ChunkDictionary | None = None) -> BitChunk | None:
    if isinstance(event, PoIEvent):
        if not event.skipped:
            state.poi_log.append(event)
        _prune(state, event.ts, cfg.horizon)
        return None
    cutoff = event.ts - cfg.R if cfg.robust else event.ts
    chosen = None
    for poi in reversed(state.poi_log):
        if poi.ts <= cutoff:
            chosen = poi
            break
    payload = None if chosen is None else _decode(chosen, event, cfg, dictionary)
    if payload is None:
        state.failures += 1
        state.decoded.append(None)
        return None
    chunk = BitChunk(payload, len(state.decoded))
    state.decoded.append(chunk)
    return chunk


# --------------------------------------------------------------------------
# end-to-end run

@dataclass
class TranscriptReport:
    config: dict
    message_bytes: int
    chunks_total: int
    signals_sent: int
    pois_observed: int
    pois_eligible: int
    decode_failures: int
    chars_correct_pct: float
    chunk_errors: list[int]
    complete: bool
    from_start_s: float | None
    from_first_signal_s: float | None
    chunk_bits: int
    pointer_bits: int
    bits_delivered: int = 0
    mode: str = "dyst"
    decoded_hex: str = ""
    signal_times: list[float] = field(default_factory=list)

    @property
    def utilization(self) -> float:
        return self.pois_eligible / self.pois_observed if self.pois_observed else 0.0

    @property
    def caf(self) -> float:
        return self.chunk_bits / self.pointer_bits

    @property
    def bitrate_per_hour(self) -> float:
        if not self.from_start_s:
            return 0.0
        return self.bits_delivered * 3600.0 / self.from_start_s

    def to_json(self) -> dict:
        d = {k: v for k, v in self.__dict__.items()}
        d["schema"] = TRANSCRIPT_SCHEMA
        d["utilization"] = self.utilization
        d["caf"] = self.caf
        return d

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")

    def summary(self) -> str:
        def hms(s):
            if s is None:
                return "n/a"
            m, sec = divmod(int(round(s)), 60)
            return f"{m // 60:d}:{m % 60:02d}:{sec:02d}"
        return (f"signals {self.signals_sent}/{self.chunks_total}  "
                f"chars correct {self.chars_correct_pct:.1f}%  "
                f"PoI utilization {100 * self.utilization:.1f}%  "
                f"from start {hms(self.from_start_s)}  "
                f"from first signal {hms(self.from_first_signal_s)}"
                + ("" if self.complete else "  [incomplete]"))


def config_to_dict(cfg: ChannelConfig) -> dict:
    v = cfg.variant
    return {
        "variant": {"mode": v.mode.value, "h": v.h, "c": v.c, "t": v.t,
                    "checksum": v.checksum.value if v.checksum else None},
        "hash": {"algorithm": cfg.hash.algorithm.value, "h": cfg.hash.h,
                 "key": cfg.hash.key.hex() if cfg.hash.key else None},
        "poi": {"kind": cfg.poi.kind.value, "subnet": cfg.poi.subnet,
                "flows": [[None if s is None else s.hex(), None if d is None else d.hex()]
                          for s, d in cfg.poi.flows],
                "predicate": cfg.poi.predicate},
        "robust": cfg.robust, "D": cfg.D, "R": cfg.R, "pointers": cfg.pointers,
        "frac_filter": cfg.frac_filter, "chunk_bits": cfg.chunk_width,
        "pointer_encoding": cfg.pointer_encoding.value, "delay_step": cfg.delay_step,
        "signal_lag": cfg.signal_lag, "horizon": cfg.horizon,
    }


def signal_record(ts: float) -> TraceRecord:
    return TraceRecord(ts, SENDER_MAC, BROADCAST_MAC, NetKind.ARP, SENDER_IP,
                       SIGNAL_TARGET_IP, ArpOp.REQUEST, 60, SIGNAL_TAG)


def _policy_excluding_sender(policy: PoIPolicy) -> PoIPolicy:
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return PoIPolicy(policy.kind, policy.subnet, policy.flows, policy.predicate,
                         policy.exclude_link_src | {SENDER_MAC})


def run_sender(events: Iterable[PoIEvent], cfg: ChannelConfig, chunks: Sequence[BitChunk]
               ) -> tuple[list[SignalEvent], SenderState]:
    state = SenderState.for_chunks(chunks)
    signals = []
    for ev in events:
        sig = sender_step(state, ev, cfg)
        if sig is not None:
            signals.append(sig)
        if state.current is None and state.pending is None:
            break
    sig = sender_flush(state, cfg)
    if sig is not None:
        signals.append(sig)
    return signals, state


def _chars_correct(sent: bytes, got: bytes) -> float:
    if not sent:
        return 100.0
    return 100.0 * sum(a == b for a, b in zip(sent, got)) / len(sent)


def run_channel(trace: Sequence[TraceRecord], cfg: ChannelConfig, message: bytes,
                jitter: JitterModel = JitterModel(), seed: int = 0,
                signal_jitter: JitterModel | None = None,
                dictionary: ChunkDictionary | None = None) -> TranscriptReport:
    """Simulate CS and CR on their own jittered views of ``trace``.

    Signals reach CR after a delay drawn from ``signal_jitter`` (defaults to
    the PoI jitter model).
    """
    rng = np.random.default_rng(seed)
    policy = _policy_excluding_sender(cfg.poi)
    cs_view, _ = perceive(list(trace), jitter, rng)
    cr_view, _ = perceive(list(trace), jitter, rng)
    cs_events = (make_poi_event(r, cfg, k)
                 for k, r in enumerate(r for r in cs_view if classify_poi(r, policy)))
    chunks = split_message(message, cfg.chunk_width)
    signals, state = run_sender(cs_events, cfg, chunks)

    sj = jitter if signal_jitter is None else signal_jitter
    delays = sj.sample_delays(rng, len(signals))
    arrivals = [SignalEvent(s.ts + float(d), s.pointer_index, s.poi_ts, s.chunk_index)
                for s, d in zip(signals, delays)]
    if cfg.pointers > 1 and dictionary is None:
        dictionary = ChunkDictionary(cfg.chunk_width, cfg.pointers, cfg.hash)
    # nothing after the last signal can influence decoding
    last = max((a.ts for a in arrivals), default=-math.inf)
    cr_events = [make_poi_event(r, cfg) for r in cr_view
                 if r.ts <= last and classify_poi(r, policy)]
    return _receive_and_report(cfg, message, chunks, signals, arrivals, cr_events, state,
                               trace[0].ts if trace else 0.0, dictionary)


def _receive_and_report(cfg, message, chunks, signals, arrivals, cr_events, state, start,
                        dictionary) -> TranscriptReport:
    # stable merge: a PoI that arrives at the same instant as a signal is seen first
    merged = sorted([(e.ts, 0, k, e) for k, e in enumerate(cr_events)]
                    + [(e.ts, 1, k, e) for k, e in enumerate(arrivals)],
                    key=lambda x: x[:3])
    rx = ReceiverState()
    for _, _, _, ev in merged:
        receiver_step(rx, ev, cfg, dictionary)
    # decoded chunks are matched to sent chunks by arrival order
    got_bits = [c.payload if c is not None else BitVec(0, cfg.chunk_width) for c in rx.decoded]
    got = join_chunks(got_bits, len(message)) if got_bits else b""
    got = got.ljust(len(message), b"\x00")
    errors = [k for k, ch in enumerate(chunks)
              if k >= len(rx.decoded) or rx.decoded[k] is None or rx.decoded[k].payload != ch.payload]
    times = [s.ts for s in signals]
    complete = len(signals) == len(chunks)
    return TranscriptReport(
        config=config_to_dict(cfg),
        message_bytes=len(message),
        chunks_total=len(chunks),
        signals_sent=len(signals),
        pois_observed=state.observed,
        pois_eligible=state.eligible,
        decode_failures=rx.failures,
        chars_correct_pct=_chars_correct(message, got),
        chunk_errors=errors,
        complete=complete,
        from_start_s=(times[-1] - start) if complete and times else None,
        from_first_signal_s=(times[-1] - times[0]) if complete and times else None,
        chunk_bits=cfg.chunk_width,
        pointer_bits=cfg.pointer_bits,
        bits_delivered=cfg.chunk_width * len(signals),
        decoded_hex=got.hex(),
        signal_times=times,
    )


def direct_embedding_baseline(trace: Sequence[TraceRecord], cfg: ChannelConfig,
                              message: bytes) -> TranscriptReport:
    """What a storage channel writing into the same signal packets would deliver.

    The signal slots are those the sender picks on the noiseless trace; each
    slot carries ``pointer_bits`` of covert data directly instead of a pointer.
    """
    policy = _policy_excluding_sender(cfg.poi)
    events = (make_poi_event(r, cfg, k)
              for k, r in enumerate(r for r in trace if classify_poi(r, policy)))
    chunks = split_message(message, cfg.chunk_width)
    signals, state = run_sender(events, cfg, chunks)
    times = [s.ts for s in signals]
    start = trace[0].ts if trace else 0.0
    return TranscriptReport(
        config=config_to_dict(cfg), message_bytes=len(message), chunks_total=len(chunks),
        signals_sent=len(signals), pois_observed=state.observed, pois_eligible=state.eligible,
        decode_failures=0, chars_correct_pct=float("nan"), chunk_errors=[],
        complete=len(signals) == len(chunks),
        from_start_s=(times[-1] - start) if times else None,
        from_first_signal_s=(times[-1] - times[0]) if times else None,
        chunk_bits=cfg.chunk_width, pointer_bits=cfg.pointer_bits,
        bits_delivered=cfg.pointer_bits * len(signals), mode="direct", signal_times=times)


def covert_recording(trace: Sequence[TraceRecord], signals: Iterable[SignalEvent]
                     ) -> list[TraceRecord]:
    """Legitimate trace with the sender's signal packets merged in, as a warden sees it."""
    recs = list(trace) + [signal_record(s.ts) for s in signals]
    recs.sort(key=lambda r: r.ts)
    return recs


def filter_signals(recording: Iterable[TraceRecord]) -> list[TraceRecord]:
    return [r for r in recording if r.tag != SIGNAL_TAG]
