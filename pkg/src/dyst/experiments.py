"""Study builders shared by the CLI and the acceptance suite.

Each study is a pure function of its parameters and seeds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .analysis import VariantSpec
from .bitcore import HashSpec
from .channel import (ChannelConfig, SignalEvent, TranscriptReport, covert_recording,
                      filter_signals, make_poi_event, pointer_bits, prf_poi_events,
                      run_channel, run_sender, _policy_excluding_sender)
from .codec import split_message
from .detect import (KsResult, compressibility_scores, extract_ipds, is_arp_request,
                     ks_two_sample, roc_auc)
from .traffic import (DEFAULT_SUBNET, JitterModel, PoIPolicy, TraceRecord, classify_poi,
                      heterogeneous_trace, synth_trace)

LOCAL_POLICY = PoIPolicy(subnet=DEFAULT_SUBNET)
# time between a matching PoI and the sender's signal on the wire
PROCESSING_DELAY = JitterModel(delay_mean=0.004, delay_std=0.002)


def random_message(nbytes: int, seed: int) -> bytes:
    return bytes(np.random.default_rng(seed).integers(0, 256, nbytes, dtype=np.uint8))


def basic_config(h: int, robust: bool = False, D: float = 0.5, R: float = 0.3,
                 pointers: int = 1, chunk_bits: int | None = None,
                 policy: PoIPolicy = LOCAL_POLICY) -> ChannelConfig:
    return ChannelConfig(VariantSpec.basic(h), HashSpec.sha3(h), policy, robust=robust,
                         D=D if robust else 0.0, R=R if robust else 0.0, pointers=pointers,
                         chunk_bits=chunk_bits)


def sender_signals(trace: Sequence[TraceRecord], cfg: ChannelConfig, message: bytes
                   ) -> list[SignalEvent]:
    """Signals the sender emits on a noiseless view of ``trace``."""
    policy = _policy_excluding_sender(cfg.poi)
    events = (make_poi_event(r, cfg, k)
              for k, r in enumerate(r for r in trace if classify_poi(r, policy)))
    signals, _ = run_sender(events, cfg, split_message(message, cfg.chunk_width))
    return signals


def make_covert(trace: Sequence[TraceRecord], cfg: ChannelConfig, message: bytes, seed: int
                ) -> list[TraceRecord]:
    signals = sender_signals(trace, cfg, message)
    lag = PROCESSING_DELAY.sample_delays(np.random.default_rng(seed), len(signals))
    return covert_recording(trace, [SignalEvent(s.ts + float(d)) for s, d in zip(signals, lag)])


def legit_trace(seed: int, hours: float, rate_range=(3000.0, 12000.0)) -> list[TraceRecord]:
    """One heterogeneous recording: rate and burstiness vary with the seed."""
    rng = np.random.default_rng([seed, 7])
    rate = math.exp(rng.uniform(*np.log(rate_range)))
    return heterogeneous_trace(rate, hours * 3600, seed=seed, burstiness=rng.uniform(0.05, 0.6))


# --------------------------------------------------------------------------
# detection resistance

@dataclass
class DetectionStudy:
    covert_vs_filtered: list[KsResult]
    legit_vs_legit: list[KsResult]
    covert_vs_legit: list[KsResult]
    kappa_covert: list[float]
    kappa_filtered: list[float]
    kappa_ks: KsResult
    signals: list[int] = field(default_factory=list)


def detection_study(recordings: int = 8, hours: float = 6.0, h: int = 8, seed: int = 0,
                    message_bytes: int = 4096) -> DetectionStudy:
    cfg = basic_config(h)
    legit, covert, filtered, sig = [], [], [], []
    for k in range(recordings):
        base = legit_trace(1000 * seed + k, hours)
        cov = make_covert(base, cfg, random_message(message_bytes, seed * 31 + k), seed + k)
        sig.append(len(cov) - len(base))
        covert.append(extract_ipds(cov, is_arp_request))
        filtered.append(extract_ipds(filter_signals(cov), is_arp_request))
        legit.append(extract_ipds(legit_trace(1000 * seed + 500 + k, hours), is_arp_request))
    cvf = [ks_two_sample(c, f) for c, f in zip(covert, filtered)]
    lvl = [ks_two_sample(a, b) for a, b in combinations(legit, 2)]
    cvl = [ks_two_sample(c, l) for c in covert for l in legit]
    kc = [w.kappa for s in covert for w in compressibility_scores(s)]
    kf = [w.kappa for s in filtered for w in compressibility_scores(s)]
    return DetectionStudy(cvf, lvl, cvl, kc, kf, ks_two_sample(kc, kf), sig)


# --------------------------------------------------------------------------
# multi-pointer detectability

@dataclass
class PointerDetectability:
    pointers: int
    auc: float
    kappa_pos: list[float]
    kappa_neg: list[float]
    signal_share: float


def multipointer_detectability(pointer_counts: Sequence[int] = (1, 2, 32, 128, 512),
                               recordings: int = 8, hours: float = 2.0, h: int = 8,
                               seed: int = 0) -> list[PointerDetectability]:
    """AUC of the windowed compressibility score, covert windows ranked against legit ones."""
    neg = [w.kappa for k in range(recordings)
           for w in compressibility_scores(extract_ipds(legit_trace(9000 + 1000 * seed + k, hours)))]
    out = []
    for n in pointer_counts:
        cfg = basic_config(h, pointers=n, chunk_bits=h)
        pos, share = [], []
        for k in range(recordings):
            base = legit_trace(5000 + 1000 * seed + k, hours)
            msg = random_message(int(len(base) * h / 8) + 16, seed * 17 + k)
            cov = make_covert(base, cfg, msg, seed + k)
            share.append((len(cov) - len(base)) / len(cov))
            pos += [w.kappa for w in compressibility_scores(extract_ipds(cov))]
        out.append(PointerDetectability(n, roc_auc(pos, neg), pos, neg, float(np.mean(share))))
    return out


# --------------------------------------------------------------------------
# robustness

@dataclass
class RobustnessStudy:
    plain: TranscriptReport
    robust: TranscriptReport


def robustness_study(message: bytes = b"covert channel!!" * 3, h: int = 8, hours: float = 24.0,
                     rate: float = 7300.0, jitter: JitterModel = JitterModel(2.1e-5, 2.1e-5, 0.3),
                     D: float = 0.5, R: float = 0.3, seed: int = 0) -> RobustnessStudy:
    trace = synth_trace(rate, hours * 3600, seed=seed)
    plain = run_channel(trace, basic_config(h), message, jitter, seed=seed + 1)
    robust = run_channel(trace, basic_config(h, robust=True, D=D, R=R), message, jitter,
                         seed=seed + 1)
    return RobustnessStudy(plain, robust)


# --------------------------------------------------------------------------
# multi-pointer throughput

@dataclass
class ThroughputRow:
    pointers: int
    pointer_bits: int
    chunk_bits: int
    signals: int
    hours: float
    bitrate: float
    baseline_bitrate: float

    @property
    def caf(self) -> float:
        return self.chunk_bits / self.pointer_bits


def multipointer_throughput(chunk_bits: int = 8, h: int | None = None, pois: int = 50000,
                            rate: float = 7300.0, seed: int = 0,
                            pointer_counts: Sequence[int] | None = None) -> list[ThroughputRow]:
    """Sender-side bitrate over a PRF-driven PoI stream for growing pointer counts.

    The baseline writes ``pointer_bits`` of data directly into each of the
    same signal packets.
    """
    h = h or chunk_bits
    if pointer_counts is None:
        pointer_counts = [1 << k for k in range(chunk_bits + 1)]
    events = prf_poi_events(seed.to_bytes(16, "big"), h, pois, rate, seed)
    hours = events[-1].ts / 3600.0
    msg = random_message(pois * chunk_bits // 8 + 1, seed)
    rows = []
    for n in pointer_counts:
        cfg = ChannelConfig(VariantSpec.basic(h), HashSpec.aes(h, seed.to_bytes(16, "big")),
                            LOCAL_POLICY, pointers=n,
                            chunk_bits=chunk_bits if n > 1 or chunk_bits != h else None)
        signals, _ = run_sender(events, cfg, split_message(msg, chunk_bits))
        p = pointer_bits(n)
        rows.append(ThroughputRow(n, p, chunk_bits, len(signals), hours,
                                  chunk_bits * len(signals) / hours, p * len(signals) / hours))
    return rows


# --------------------------------------------------------------------------
# remote feasibility

@dataclass
class FeasibilityStudy:
    durations_s: list[float]
    analytic_s: float

    @property
    def mean_s(self) -> float:
        return float(np.mean(self.durations_s))


def remote_feasibility(message: bytes = b"Hello, World!", rate: float = 12700.0, h: int = 8,
                       runs: int = 20, seed: int = 0,
                       jitter: JitterModel = JitterModel()) -> FeasibilityStudy:
    chunks = len(split_message(message, h))
    analytic = chunks * (1 << h) / rate * 3600.0
    hours = 6 * analytic / 3600.0
    cfg = basic_config(h)
    durs = []
    for k in range(runs):
        rep = run_channel(synth_trace(rate, hours * 3600, seed=seed + k), cfg, message, jitter,
                          seed=seed + k)
        durs.append(rep.from_start_s if rep.complete else math.inf)
    return FeasibilityStudy(durs, analytic)
