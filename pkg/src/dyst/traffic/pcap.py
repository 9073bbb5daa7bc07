"""Classic libpcap import/export (Ethernet link type only)."""
from __future__ import annotations

import logging
import struct
from pathlib import Path
from typing import Iterable

from .records import ArpOp, NetKind, TraceError, TraceRecord

log = logging.getLogger(__name__)

LINKTYPE_ETHERNET = 1
_MAGICS = {
    b"\xa1\xb2\xc3\xd4": (">", 1e-6),
    b"\xd4\xc3\xb2\xa1": ("<", 1e-6),
    b"\xa1\xb2\x3c\x4d": (">", 1e-9),
    b"\x4d\x3c\xb2\xa1": ("<", 1e-9),
}
ETH_ARP, ETH_IPV4, ETH_IPV6, ETH_VLAN = 0x0806, 0x0800, 0x86DD, 0x8100


class UnsupportedFormat(TraceError):
    pass


def parse_frame(ts: float, frame: bytes, orig_len: int) -> TraceRecord:
    """Dissect Ethernet plus one network header; anything odd becomes OTHER."""
    if len(frame) < 14:
        return TraceRecord(ts, b"\x00" * 6, b"\x00" * 6, length=orig_len)
    dst, src = frame[0:6], frame[6:12]
    etype = struct.unpack_from("!H", frame, 12)[0]
    off = 14
    if etype == ETH_VLAN and len(frame) >= 18:
        etype = struct.unpack_from("!H", frame, 16)[0]
        off = 18
    body = frame[off:]
    other = TraceRecord(ts, src, dst, length=orig_len)
    if etype == ETH_ARP:
        if len(body) < 8:
            return other
        _, _, hlen, plen, op = struct.unpack_from("!HHBBH", body, 0)
        need = 8 + 2 * hlen + 2 * plen
        if op not in (1, 2) or len(body) < need:
            return other
        spa = body[8 + hlen:8 + hlen + plen]
        tpa = body[8 + 2 * hlen + plen:need]
        return TraceRecord(ts, src, dst, NetKind.ARP, spa, tpa,
                           ArpOp.REQUEST if op == 1 else ArpOp.REPLY, orig_len)
    if etype == ETH_IPV4:
        if len(body) < 20 or body[0] >> 4 != 4:
            return other
        return TraceRecord(ts, src, dst, NetKind.IPV4, body[12:16], body[16:20], None, orig_len)
    if etype == ETH_IPV6:
        if len(body) < 40 or body[0] >> 4 != 6:
            return other
        return TraceRecord(ts, src, dst, NetKind.IPV6, body[8:24], body[24:40], None, orig_len)
    return other


def load_pcap(path: str | Path) -> tuple[list[TraceRecord], int]:
    """Parse a capture; returns the records and the number of problems hit."""
    data = Path(path).read_bytes()
    if len(data) < 24:
        raise UnsupportedFormat(f"{path}: too short for a pcap header")
    try:
        endian, tick = _MAGICS[data[:4]]
    except KeyError:
        raise UnsupportedFormat(f"{path}: unknown magic {data[:4].hex()}") from None
    linktype = struct.unpack_from(endian + "I", data, 20)[0]
    if linktype != LINKTYPE_ETHERNET:
        raise UnsupportedFormat(f"{path}: link type {linktype} is not Ethernet")
    records, problems = [], 0
    off = 24
    rec_hdr = struct.Struct(endian + "IIII")
    while off < len(data):
        if off + 16 > len(data):
            problems += 1
            break
        sec, frac, incl, orig = rec_hdr.unpack_from(data, off)
        off += 16
        if off + incl > len(data):
            problems += 1
            break
        frame = data[off:off + incl]
        off += incl
        records.append(parse_frame(sec + frac * tick, frame, orig))
    return records, problems


def read_pcap(path: str | Path) -> list[TraceRecord]:
    records, problems = load_pcap(path)
    if problems:
        log.warning("%s: truncated capture, kept %d records (%d warnings)",
                    path, len(records), problems)
    return records


def build_frame(rec: TraceRecord) -> bytes:
    """Minimal wire bytes that parse back into ``rec`` (tag excluded)."""
    eth = rec.link_dst + rec.link_src
    if rec.net_kind is NetKind.ARP:
        spa, tpa = rec.net_src or bytes(4), rec.net_dst or bytes(4)
        tha = bytes(6) if rec.arp_op is ArpOp.REQUEST else rec.link_dst
        op = 1 if rec.arp_op is ArpOp.REQUEST else 2
        body = struct.pack("!HHBBH", 1, ETH_IPV4, 6, len(spa), op) + rec.link_src + spa + tha + tpa
        return eth + struct.pack("!H", ETH_ARP) + body
    if rec.net_kind is NetKind.IPV4:
        hdr = struct.pack("!BBHHHBBH", 0x45, 0, 20, 0, 0, 64, 17, 0) + rec.net_src + rec.net_dst
        return eth + struct.pack("!H", ETH_IPV4) + hdr
    if rec.net_kind is NetKind.IPV6:
        hdr = struct.pack("!IHBB", 6 << 28, 0, 59, 255) + rec.net_src + rec.net_dst
        return eth + struct.pack("!H", ETH_IPV6) + hdr
    return eth + struct.pack("!H", 0x88B5)


def write_pcap(records: Iterable[TraceRecord], path: str | Path, *,
               endian: str = "<", nanos: bool = False) -> int:
    magic = 0xA1B23C4D if nanos else 0xA1B2C3D4
    scale = 10**9 if nanos else 10**6
    n = 0
    with open(path, "wb") as fh:
        fh.write(struct.pack(endian + "IHHiIII", magic, 2, 4, 0, 0, 65535, LINKTYPE_ETHERNET))
        for rec in records:
            frame = build_frame(rec)
            ticks = round(rec.ts * scale)
            sec, frac = divmod(ticks, scale)
            fh.write(struct.pack(endian + "IIII", sec, frac, len(frame), max(rec.length, len(frame))))
            fh.write(frame)
            n += 1
    return n
