import math
import struct
import warnings
from pathlib import Path

import numpy as np
import pytest

from dyst.traffic import (BROADCAST_MAC, PRESETS, ArpOp, JitterModel, NetKind, PoIPolicy,
                          TraceError, TraceRecord, UnsupportedFormat, apply_jitter,
                          classify_poi, count_reorderings, ip, load_pcap, mac, perceive,
                          read_jsonl, read_pcap, synth_trace, write_jsonl, write_pcap)

DATA = Path(__file__).parent / "data"
GOLDEN = DATA / "arp_request.pcap"
LB = PoIPolicy(subnet="192.168.0.0/24")


def _swap_endianness(raw: bytes) -> bytes:
    """Re-encode a little-endian microsecond capture as big-endian."""
    out = bytearray(struct.pack(">IHHiIII", *struct.unpack_from("<IHHiIII", raw, 0)))
    off = 24
    while off < len(raw):
        sec, usec, incl, orig = struct.unpack_from("<IIII", raw, off)
        out += struct.pack(">IIII", sec, usec, incl, orig) + raw[off + 16:off + 16 + incl]
        off += 16 + incl
    return bytes(out)


class TestPcap:
    def test_header_only(self, tmp_path):
        p = tmp_path / "empty.pcap"
        p.write_bytes(GOLDEN.read_bytes()[:24])
        assert read_pcap(p) == []

    def test_golden_arp_request(self):
        (rec,) = read_pcap(GOLDEN)
        assert rec.net_kind is NetKind.ARP and rec.arp_op is ArpOp.REQUEST
        assert rec.link_dst == BROADCAST_MAC
        assert rec.link_src == mac("02:00:00:00:00:0a")
        assert rec.net_src == ip("192.168.0.10") and rec.net_dst == ip("192.168.0.1")
        assert rec.ts == pytest.approx(1700000000.25)
        assert rec.length == 60

    def test_writer_reproduces_golden_bytes(self, tmp_path):
        p = tmp_path / "out.pcap"
        write_pcap(read_pcap(GOLDEN), p)
        assert p.read_bytes() == GOLDEN.read_bytes()

    def test_endianness_symmetry(self, tmp_path):
        big = tmp_path / "big.pcap"
        big.write_bytes(_swap_endianness(GOLDEN.read_bytes()))
        assert big.read_bytes()[:4] == bytes.fromhex("a1b2c3d4")
        assert read_pcap(big) == read_pcap(GOLDEN)

    def test_nanosecond_magic(self, tmp_path):
        recs = synth_trace(3600, 60, mix=0.5, seed=3)
        p = tmp_path / "ns.pcap"
        write_pcap(recs, p, nanos=True, endian=">")
        back = read_pcap(p)
        assert [r.ts for r in back] == pytest.approx([r.ts for r in recs], abs=1e-9)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.pcap"
        p.write_bytes(b"\x00" * 24)
        with pytest.raises(UnsupportedFormat):
            read_pcap(p)

    def test_wrong_linktype(self, tmp_path):
        raw = bytearray(GOLDEN.read_bytes())
        raw[20:24] = struct.pack("<I", 105)
        p = tmp_path / "wifi.pcap"
        p.write_bytes(bytes(raw))
        with pytest.raises(UnsupportedFormat):
            read_pcap(p)

    def test_truncated_record(self, tmp_path):
        raw = GOLDEN.read_bytes()
        p = tmp_path / "trunc.pcap"
        p.write_bytes(raw + raw[24:50])
        recs, problems = load_pcap(p)
        assert len(recs) == 1 and problems == 1

    def test_malformed_packet_becomes_other(self, tmp_path):
        raw = bytearray(GOLDEN.read_bytes())
        # cut the ARP body short but keep the record consistent
        frame = raw[40:40 + 20]
        p = tmp_path / "short.pcap"
        p.write_bytes(bytes(raw[:24]) + struct.pack("<IIII", 1, 0, 20, 20) + bytes(frame))
        (rec,) = read_pcap(p)
        assert rec.net_kind is NetKind.OTHER

    def test_roundtrip_through_jsonl(self, tmp_path):
        recs = synth_trace(7200, 120, mix=0.5, seed=11)
        j, pc = tmp_path / "t.jsonl", tmp_path / "t.pcap"
        write_jsonl(recs, j)
        write_pcap(read_jsonl(j), pc)
        back = read_pcap(pc)
        assert len(back) == len(recs)
        for a, b in zip(recs, back):
            assert b.ts == pytest.approx(a.ts, abs=1e-6)
            assert (a.link_src, a.link_dst, a.net_kind, a.net_src, a.net_dst, a.arp_op, a.length) == \
                   (b.link_src, b.link_dst, b.net_kind, b.net_src, b.net_dst, b.arp_op, b.length)


class TestJsonl:
    def test_roundtrip_exact(self, tmp_path):
        recs = synth_trace(3600, 300, mix=0.7, seed=1)
        p = tmp_path / "t.jsonl"
        assert write_jsonl(recs, p) == len(recs)
        assert read_jsonl(p) == recs

    def test_schema_checked(self, tmp_path):
        p = tmp_path / "t.jsonl"
        p.write_text('{"schema": "other/9"}\n')
        with pytest.raises(TraceError):
            read_jsonl(p)

    def test_bad_record(self, tmp_path):
        p = tmp_path / "t.jsonl"
        p.write_text('{"schema": "dyst-trace/1"}\n{"ts": 1}\n')
        with pytest.raises(TraceError):
            read_jsonl(p)


class TestRecordInvariants:
    def test_arp_needs_op(self):
        with pytest.raises(TraceError):
            TraceRecord(0.0, bytes(6), BROADCAST_MAC, NetKind.ARP, bytes(4), bytes(4))

    def test_ip_needs_addresses(self):
        with pytest.raises(TraceError):
            TraceRecord(0.0, bytes(6), bytes(6), NetKind.IPV4)


class TestClassify:
    def test_arp_request_broadcast(self):
        rec = TraceRecord(1.0, bytes(6), BROADCAST_MAC, NetKind.ARP, bytes(4), bytes(4), ArpOp.REQUEST)
        assert classify_poi(rec, LB)

    def test_arp_reply_not_poi(self):
        rec = TraceRecord(1.0, bytes(6), BROADCAST_MAC, NetKind.ARP, bytes(4), bytes(4), ArpOp.REPLY)
        assert not classify_poi(rec, LB)

    def test_ipv6_link_multicast(self):
        rec = TraceRecord(1.0, bytes(6), mac("33:33:00:00:00:01"), NetKind.IPV6,
                          ip("fe80::1"), ip("2001:db8::1"))
        assert classify_poi(rec, LB)

    def test_ipv6_ff0x_destination(self):
        rec = TraceRecord(1.0, bytes(6), bytes(6), NetKind.IPV6, ip("fe80::1"), ip("ff02::1"))
        assert classify_poi(rec, LB)

    def test_ipv4_subnet_broadcast(self):
        rec = TraceRecord(1.0, bytes(6), BROADCAST_MAC, NetKind.IPV4, ip("192.168.0.5"),
                          ip("192.168.0.255"))
        assert classify_poi(rec, LB)

    def test_unicast_ipv4_not_poi(self):
        rec = TraceRecord(1.0, bytes(6), bytes(6), NetKind.IPV4, ip("192.168.0.5"), ip("8.8.8.8"))
        assert not classify_poi(rec, LB)

    def test_missing_subnet_warns_and_disables(self):
        with pytest.warns(UserWarning):
            pol = PoIPolicy()
        rec = TraceRecord(1.0, bytes(6), BROADCAST_MAC, NetKind.IPV4, ip("192.168.0.5"),
                          ip("192.168.0.255"))
        assert not classify_poi(rec, pol)

    def test_remote_path(self):
        pol = PoIPolicy(kind="remote_path", flows=((ip("10.0.0.1"), None),))
        hit = TraceRecord(1.0, bytes(6), bytes(6), NetKind.IPV4, ip("10.0.0.1"), ip("1.1.1.1"))
        miss = TraceRecord(1.0, bytes(6), bytes(6), NetKind.IPV4, ip("10.0.0.2"), ip("1.1.1.1"))
        assert classify_poi(hit, pol) and not classify_poi(miss, pol)

    def test_exclude_sender(self):
        me = mac("02:00:00:00:00:99")
        pol = PoIPolicy(subnet="192.168.0.0/24", exclude_link_src=frozenset({me}))
        rec = TraceRecord(1.0, me, BROADCAST_MAC, NetKind.ARP, bytes(4), bytes(4), ArpOp.REQUEST)
        assert not classify_poi(rec, pol)

    def test_poi_subsequence_ordered(self):
        recs = synth_trace(36000, 60, mix=0.5, seed=2)
        ts = [r.ts for r in recs if classify_poi(r, LB)]
        assert ts == sorted(ts)


class TestSynth:
    def test_poisson_count(self):
        n = len(synth_trace(3600, 3600, seed=7))
        assert abs(n - 3600) <= 3 * 60

    def test_mix_zero(self):
        assert not any(classify_poi(r, LB) for r in synth_trace(3600, 600, mix=0.0, seed=1))

    def test_deterministic(self):
        assert synth_trace(5000, 600, 0.5, seed=4) == synth_trace(5000, 600, 0.5, seed=4)

    def test_sources_vary(self):
        srcs = {r.net_src for r in synth_trace(36000, 60, seed=5)}
        assert len(srcs) > 10

    def test_bad_rate(self):
        with pytest.raises(ValueError):
            synth_trace(0, 10)


class TestJitter:
    def test_identity(self):
        tr = synth_trace(3600, 600, seed=1)
        cs, cr = apply_jitter(tr, JitterModel(), seed=9)
        assert cs == tr and cr == tr

    def test_home_preset_no_reordering(self):
        tr = [TraceRecord(0.1 * i + 0.05, bytes(6), bytes(6)) for i in range(5000)]
        _, order = perceive(tr, PRESETS["home"].jitter, np.random.default_rng(0))
        assert count_reorderings(order) == 0

    def test_drop_half(self):
        n = 20000
        tr = [TraceRecord(float(i), bytes(6), bytes(6)) for i in range(n)]
        cs, cr = apply_jitter(tr, JitterModel(drop_prob=0.5), seed=3)
        band = 3 * math.sqrt(n * 0.25)
        assert abs(len(cs) - n / 2) <= band and abs(len(cr) - n / 2) <= band

    def test_drop_one_rejected(self):
        with pytest.raises(ValueError):
            JitterModel(drop_prob=1.0)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            JitterModel(delay_std=-1)

    def test_delays_nonnegative(self):
        d = JitterModel(0.0, 1.0).sample_delays(np.random.default_rng(0), 10000)
        assert (d >= 0).all()

    def test_preserves_multiset(self):
        tr = synth_trace(36000, 60, seed=8)
        cs, _ = apply_jitter(tr, JitterModel(0.01, 0.05, reorder_window=0.2), seed=1)
        strip = lambda rs: sorted((r.link_src, r.net_src, r.length) for r in rs)
        assert strip(cs) == strip(tr)
        assert [r.ts for r in cs] == sorted(r.ts for r in cs)

    def test_reorder_window_induces_swaps(self):
        tr = synth_trace(36000, 600, seed=8)
        _, order = perceive(tr, JitterModel(reorder_window=0.5), np.random.default_rng(2))
        assert count_reorderings(order) > 0

    def test_deterministic(self):
        tr = synth_trace(36000, 60, seed=8)
        m = JitterModel(0.01, 0.01, 0.1, 0.1)
        assert apply_jitter(tr, m, 5) == apply_jitter(tr, m, 5)
