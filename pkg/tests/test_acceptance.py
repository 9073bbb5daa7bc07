"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line; the block is repeated in the pytest
terminal summary.  Run alone with ``pytest tests/test_acceptance.py -v``.
"""
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from dyst.analysis import VariantSpec, pareto_front, standard_grid, sweep, variant_point
from dyst.bitcore import ZERO_KEY, BitVec, ChecksumKind, HashSpec, prf_stream_values
from dyst.channel import ChannelConfig, run_channel
from dyst.codec import BitChunk, ExtCodecConfig, ext_first_fit, ext_sender_gate
from dyst.experiments import (LOCAL_POLICY, basic_config, detection_study,
                              multipointer_detectability, multipointer_throughput,
                              random_message, remote_feasibility, robustness_study)
from dyst.traffic import synth_trace
from dyst.traffic.pcap import read_pcap, write_pcap


MC_SAMPLES = 10 ** 7
MC_LIMIT = 1e5


@pytest.fixture(scope="module")
def grid_sweep():
    variants, _ = standard_grid()
    t0 = time.perf_counter()
    rows = sweep(variants, mc_samples=MC_SAMPLES, seeds=(0,), mc_max_distance=MC_LIMIT,
                 use_mc_for_front=True)
    return rows, time.perf_counter() - t0


def test_criterion_01_mc_agreement(grid_sweep, verdict):
    rows, elapsed = grid_sweep
    checked = [r for r in rows if r.analytic.distance <= MC_LIMIT]
    errs = {r.variant: abs(r.mc_point().distance / r.analytic.distance - 1) for r in checked}
    bad = sorted((e, v.label()) for v, e in errs.items() if e > 0.05)
    by_kind = {}
    for v, e in errs.items():
        k = v.checksum.value if v.checksum else "basic"
        by_kind.setdefault(k, []).append(e)
    worst = ", ".join(f"{k} max {max(es):.1%} ({sum(e > 0.05 for e in es)}/{len(es)} over)"
                      for k, es in sorted(by_kind.items()))
    ok = not bad and elapsed < 600
    verdict(1, ok, f"{len(checked)} variants, {elapsed:.0f}s; {worst}"
            + (f"; worst {bad[-1][1]} off by {bad[-1][0]:.1%}" if bad else ""))


def test_criterion_02_pareto(grid_sweep, verdict):
    rows, _ = grid_sweep
    basic = [variant_point(VariantSpec.basic(h)) for h in range(14, 21)]
    basic_ok = pareto_front(basic) == basic
    frac = sum(r.on_front for r in rows) / len(rows)
    analytic = len(pareto_front([r.analytic for r in rows])) / len(rows)
    ok = basic_ok and 0.20 <= frac <= 0.50
    verdict(2, ok, f"basic mutually non-dominated: {basic_ok}; front {frac:.1%} of "
                   f"{len(rows)} variants (analytic-only front {analytic:.1%}); band 20-50%")


def test_criterion_03_match_distribution(verdict):
    n, target = 10 ** 6, 0b10110010
    ys = prf_stream_values(ZERO_KEY, 8, n)
    matching = 8 - np.bitwise_count(ys ^ np.uint64(target)).astype(int)
    observed = np.bincount(matching, minlength=9)
    expected = n * stats.binom.pmf(np.arange(9), 8, 0.5)
    p = stats.chisquare(observed, expected).pvalue
    q = 2.0 ** -8
    exact = observed[8] / n
    z = abs(exact - q) / math.sqrt(q * (1 - q) / n)
    verdict(3, p > 0.01 and z <= 3, f"chi-square p={p:.3f}; P(exact)={exact:.6f} vs "
                                   f"{q:.6f} ({z:.2f} sigma)")


def _e2e(cfg: ChannelConfig, message: bytes, rate: float = 1e4):
    chunks = math.ceil(8 * len(message) / cfg.chunk_width)
    hours = 2.0 * chunks * variant_point(cfg.variant).distance / rate + 0.5
    t0 = time.perf_counter()
    trace = synth_trace(rate, hours * 3600, seed=11)
    rep = run_channel(trace, cfg, message)
    return rep, time.perf_counter() - t0


def test_criterion_04_end_to_end(verdict):
    message = random_message(125, 4)   # 1000 bits
    configs = [basic_config(4), basic_config(8),
               ChannelConfig(VariantSpec.ext(10, 4, 1), HashSpec.sha3(10), LOCAL_POLICY)]
    ok, parts = True, []
    for cfg in configs:
        rep, secs = _e2e(cfg, message)
        good = rep.complete and rep.chars_correct_pct == 100.0 and secs < 60
        ok &= good
        parts.append(f"{cfg.variant.label()} {rep.chars_correct_pct:.1f}% in {secs:.1f}s")
    verdict(4, ok, "; ".join(parts))


def test_criterion_05_robustness(verdict):
    r = robustness_study()
    ratio = r.robust.utilization / r.plain.utilization
    ok = r.robust.chars_correct_pct > r.plain.chars_correct_pct and ratio < 1
    verdict(5, ok, f"accuracy robust {r.robust.chars_correct_pct:.1f}% vs plain "
                   f"{r.plain.chars_correct_pct:.1f}%; utilization ratio {ratio:.2f}")


def test_criterion_06_detection(verdict):
    s = detection_study()
    cvf = [r.p_value for r in s.covert_vs_filtered]
    lvl = [r.p_value for r in s.legit_vs_legit]
    share = np.mean([p > 0.5 for p in cvf])
    ok = share >= 0.9 and min(cvf) > max(lvl) and s.kappa_ks.p_value > 0.05
    verdict(6, ok, f"covert-vs-filtered p>0.5 in {share:.0%} (mean {np.mean(cvf):.3f}, min "
                   f"{min(cvf):.3f}); legit-vs-legit max p {max(lvl):.2e}; kappa KS p "
                   f"{s.kappa_ks.p_value:.3f}")


def test_criterion_07_multipointer_auc(verdict):
    res = {r.pointers: r.auc for r in multipointer_detectability()}
    low = all(abs(a - 0.5) <= 0.1 for n, a in res.items() if n <= 32)
    ok = low and res[512] >= res[128] >= res[32]
    verdict(7, ok, "AUC " + ", ".join(f"n={n}: {a:.3f}" for n, a in sorted(res.items())))


def test_criterion_08_throughput(verdict):
    rows = multipointer_throughput(chunk_bits=8)
    m = 8
    beats = all(r.bitrate > r.baseline_bitrate for r in rows if r.pointer_bits < m)
    caf = all(r.caf == m / r.pointer_bits for r in rows)
    equal = [r for r in rows if r.pointer_bits == m]
    eq = bool(equal) and all(r.bitrate == r.baseline_bitrate for r in equal)
    verdict(8, beats and caf and eq,
            "bitrate/baseline per hour " + ", ".join(
                f"p={r.pointer_bits}: {r.bitrate:.0f}/{r.baseline_bitrate:.0f}" for r in rows))


def test_criterion_09_feasibility(verdict):
    f = remote_feasibility()
    ratio = f.mean_s / f.analytic_s
    verdict(9, 0.5 <= ratio <= 2.0, f"mean {f.mean_s / 60:.1f} min vs analytic "
                                   f"{f.analytic_s / 60:.1f} min (ratio {ratio:.2f})")


def test_criterion_10_golden(tmp_path, verdict):
    golden = Path(__file__).parent / "data" / "arp_request.pcap"
    out = tmp_path / "copy.pcap"
    write_pcap(read_pcap(golden), out)
    pcap_ok = out.read_bytes() == golden.read_bytes()
    cfg = ExtCodecConfig(h=5, c=2, t=1, checksum=ChecksumKind("ones", 2))
    h_i = BitVec.from_str("10111")
    fit = ext_first_fit(h_i, cfg)
    sent = ext_sender_gate(h_i, BitChunk(BitVec.from_str("101")), cfg)
    sibling = ext_sender_gate(h_i, BitChunk(BitVec.from_str("110")), cfg)
    ok = pcap_ok and sent and not sibling and str(fit[0]) == "101"
    verdict(10, ok, f"pcap round trip {'identical' if pcap_ok else 'differs'}; M=101 signal "
                    f"{sent}, M=110 signal {sibling}")
