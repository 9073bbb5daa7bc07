"""Canonical trace records, PoI classification and the JSONL trace format."""
from __future__ import annotations

import enum
import ipaddress
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator

SCHEMA = "dyst-trace/1"
BROADCAST_MAC = b"\xff" * 6


class NetKind(str, enum.Enum):
    ARP = "arp"
    IPV4 = "ipv4"
    IPV6 = "ipv6"
    OTHER = "other"


class ArpOp(str, enum.Enum):
    REQUEST = "request"
    REPLY = "reply"


class TraceError(ValueError):
    """Malformed or unsupported trace input."""


@dataclass(frozen=True, slots=True)
class TraceRecord:
    ts: float
    link_src: bytes
    link_dst: bytes
    net_kind: NetKind = NetKind.OTHER
    net_src: bytes | None = None
    net_dst: bytes | None = None
    arp_op: ArpOp | None = None
    length: int = 60
    tag: str | None = None

    def __post_init__(self) -> None:
        if self.ts < 0:
            raise TraceError(f"negative timestamp {self.ts}")
        if len(self.link_src) != 6 or len(self.link_dst) != 6:
            raise TraceError("link addresses must be 6 bytes")
        if self.net_kind is NetKind.ARP and self.arp_op is None:
            raise TraceError("ARP record without an operation")
        if self.net_kind in (NetKind.IPV4, NetKind.IPV6) and (
                self.net_src is None or self.net_dst is None):
            raise TraceError("IP record without source/destination address")

    def with_ts(self, ts: float) -> "TraceRecord":
        return TraceRecord(ts, self.link_src, self.link_dst, self.net_kind, self.net_src,
                           self.net_dst, self.arp_op, self.length, self.tag)


def mac(text: str) -> bytes:
    return bytes.fromhex(text.replace(":", "").replace("-", ""))


def ip(text: str) -> bytes:
    return ipaddress.ip_address(text).packed


# --------------------------------------------------------------------------
# PoI policies

class PolicyKind(str, enum.Enum):
    LOCAL_BROADCAST = "local_broadcast"
    REMOTE_PATH = "remote_path"
    CUSTOM = "custom"


CUSTOM_PREDICATES: dict[str, Callable[[TraceRecord], bool]] = {}


def register_predicate(name: str):
    def deco(fn):
        CUSTOM_PREDICATES[name] = fn
        return fn
    return deco


@register_predicate("arp_requests")
def _arp_requests(rec: TraceRecord) -> bool:
    return rec.net_kind is NetKind.ARP and rec.arp_op is ArpOp.REQUEST


@dataclass(frozen=True)
class PoIPolicy:
    """Which observed packets count as packets of interest.

    ``flows`` holds (src, dst) network-address pairs for the on-path policy;
    ``None`` in either slot matches anything.  ``exclude_link_src`` lists
    senders whose packets are never PoIs (the covert sender's own signals).
    """
    kind: PolicyKind = PolicyKind.LOCAL_BROADCAST
    subnet: str | None = None
    flows: tuple[tuple[bytes | None, bytes | None], ...] = ()
    predicate: str | None = None
    exclude_link_src: frozenset[bytes] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", PolicyKind(self.kind))
        if self.kind is PolicyKind.LOCAL_BROADCAST and self.subnet is None:
            warnings.warn("no IPv4 subnet configured; subnet-broadcast PoIs are disabled",
                          stacklevel=2)
        if self.kind is PolicyKind.CUSTOM and self.predicate not in CUSTOM_PREDICATES:
            raise TraceError(f"unknown PoI predicate {self.predicate!r}")

    @property
    def broadcast_address(self) -> bytes | None:
        if self.subnet is None:
            return None
        return ipaddress.IPv4Network(self.subnet, strict=False).broadcast_address.packed


def classify_poi(rec: TraceRecord, policy: PoIPolicy) -> bool:
    if rec.link_src in policy.exclude_link_src:
        return False
    if policy.kind is PolicyKind.LOCAL_BROADCAST:
        if rec.net_kind is NetKind.ARP:
            return rec.arp_op is ArpOp.REQUEST and rec.link_dst == BROADCAST_MAC
        if rec.net_kind is NetKind.IPV4:
            bcast = policy.broadcast_address
            return bcast is not None and rec.net_dst == bcast
        if rec.net_kind is NetKind.IPV6:
            dst = rec.net_dst
            return (dst[0] == 0xFF and dst[1] >> 4 == 0) or rec.link_dst[:2] == b"\x33\x33"
        return False
    if policy.kind is PolicyKind.REMOTE_PATH:
        if rec.net_src is None or rec.net_dst is None:
            return False
        return any((s is None or s == rec.net_src) and (d is None or d == rec.net_dst)
                   for s, d in policy.flows)
    return CUSTOM_PREDICATES[policy.predicate](rec)


# --------------------------------------------------------------------------
# JSONL

def _hex(b: bytes | None) -> str | None:
    return None if b is None else b.hex()


def _unhex(s: str | None) -> bytes | None:
    return None if s is None else bytes.fromhex(s)


def record_to_json(rec: TraceRecord) -> dict:
    return {
        "ts": rec.ts,
        "link_src": rec.link_src.hex(),
        "link_dst": rec.link_dst.hex(),
        "net_kind": rec.net_kind.value,
        "net_src": _hex(rec.net_src),
        "net_dst": _hex(rec.net_dst),
        "arp_op": None if rec.arp_op is None else rec.arp_op.value,
        "len": rec.length,
        "tag": rec.tag,
    }


def record_from_json(obj: dict) -> TraceRecord:
    try:
        return TraceRecord(
            ts=float(obj["ts"]),
            link_src=bytes.fromhex(obj["link_src"]),
            link_dst=bytes.fromhex(obj["link_dst"]),
            net_kind=NetKind(obj["net_kind"]),
            net_src=_unhex(obj.get("net_src")),
            net_dst=_unhex(obj.get("net_dst")),
            arp_op=None if obj.get("arp_op") is None else ArpOp(obj["arp_op"]),
            length=int(obj.get("len", 0)),
            tag=obj.get("tag"),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise TraceError(f"bad trace record {obj!r}: {exc}") from exc


def write_jsonl(records: Iterable[TraceRecord], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"schema": SCHEMA}) + "\n")
        for rec in records:
            fh.write(json.dumps(record_to_json(rec), separators=(",", ":")) + "\n")
            n += 1
    return n


def iter_jsonl(path: str | Path) -> Iterator[TraceRecord]:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first:
            return
        head = json.loads(first)
        if head.get("schema") != SCHEMA:
            raise TraceError(f"{path}: expected schema {SCHEMA}, got {head.get('schema')!r}")
        for lineno, line in enumerate(fh, start=2):
            if line.strip():
                try:
                    yield record_from_json(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise TraceError(f"{path}:{lineno}: {exc}") from exc


def read_jsonl(path: str | Path) -> list[TraceRecord]:
    return list(iter_jsonl(path))
