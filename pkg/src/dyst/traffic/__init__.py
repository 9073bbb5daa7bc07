from .pcap import UnsupportedFormat, load_pcap, read_pcap, write_pcap
from .records import (BROADCAST_MAC, SCHEMA, ArpOp, NetKind, PoIPolicy, PolicyKind,
                      TraceError, TraceRecord, classify_poi, ip, mac, read_jsonl,
                      register_predicate, write_jsonl)
from .synth import (DEFAULT_SUBNET, PRESETS, SIGNAL_TAG, JitterModel, Preset, SourcePool,
                    apply_jitter, count_reorderings, heterogeneous_trace, perceive,
                    synth_trace)

__all__ = [
    "ArpOp", "BROADCAST_MAC", "DEFAULT_SUBNET", "JitterModel", "NetKind", "PRESETS",
    "PoIPolicy", "PolicyKind", "Preset", "SCHEMA", "SIGNAL_TAG", "SourcePool",
    "TraceError", "TraceRecord", "UnsupportedFormat", "apply_jitter", "classify_poi",
    "count_reorderings", "heterogeneous_trace", "ip", "load_pcap", "mac", "perceive",
    "read_jsonl", "read_pcap", "register_predicate", "synth_trace", "write_jsonl",
    "write_pcap",
]
