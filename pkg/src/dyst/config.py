"""Experiment configuration files (JSON) with field-level validation."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .analysis import VariantSpec
from .bitcore import ConfigError, HashSpec
from .channel import ChannelConfig
from .traffic import PRESETS, JitterModel, PoIPolicy, ip

DEFAULTS: dict[str, Any] = {
    "variant": {"mode": "basic", "h": 8},
    "hash": {"algorithm": "sha3_512_prefix"},
    "poi": {"kind": "local_broadcast", "subnet": "192.168.0.0/24"},
    "robust": False,
    "D": 0.5,
    "R": 0.3,
    "pointers": 1,
    "chunk_bits": None,
    "frac_filter": True,
    "pointer_encoding": "storage",
    "jitter": {"delay_mean": 0.0, "delay_std": 0.0, "reorder_window": 0.0, "drop_prob": 0.0},
    "signal_jitter": None,
    "trace": {"synth": {"rate_per_hour": 10000.0, "duration_s": 3600.0, "mix": 1.0}},
    "message": "Hello, World!",
    "seed": 0,
    "runs": [{"name": "run"}],
}


class ConfigFieldError(ConfigError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"config field '{field_name}': {message}")
        self.field = field_name


def merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "trace":
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path: str | Path | None) -> dict:
    if path is None:
        return copy.deepcopy(DEFAULTS)
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigFieldError("--config", f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigFieldError("--config", f"invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigFieldError("<root>", "must be a JSON object")
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        raise ConfigFieldError(sorted(unknown)[0], "unknown field")
    return merge(DEFAULTS, raw)


def apply_preset(cfg: dict, name: str) -> dict:
    p = PRESETS[name]
    cfg = copy.deepcopy(cfg)
    j = p.jitter
    cfg["jitter"] = {"delay_mean": j.delay_mean, "delay_std": j.delay_std,
                     "reorder_window": j.reorder_window, "drop_prob": j.drop_prob}
    synth = cfg["trace"].get("synth") if isinstance(cfg["trace"], dict) else None
    if synth is not None:
        synth["rate_per_hour"] = p.rate_per_hour
    cfg["preset"] = name
    return cfg


def _get(d: dict, key: str, kind, field_name: str):
    v = d.get(key)
    if kind is float and isinstance(v, int) and not isinstance(v, bool):
        v = float(v)
    if not isinstance(v, kind) or (kind is int and isinstance(v, bool)):
        raise ConfigFieldError(field_name, f"expected {getattr(kind, '__name__', kind)}, got {v!r}")
    return v


def build_variant(d: dict) -> VariantSpec:
    try:
        mode = d.get("mode", "basic")
        if mode == "basic":
            return VariantSpec.basic(_get(d, "h", int, "variant.h"))
        return VariantSpec.ext(_get(d, "h", int, "variant.h"), _get(d, "c", int, "variant.c"),
                               _get(d, "t", int, "variant.t"), d.get("checksum", "sha3"))
    except ConfigFieldError:
        raise
    except (ConfigError, ValueError) as exc:
        raise ConfigFieldError("variant", str(exc)) from None


def build_jitter(d: dict | None, field_name: str = "jitter") -> JitterModel | None:
    if d is None:
        return None
    try:
        return JitterModel(**{k: float(v) for k, v in d.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigFieldError(field_name, str(exc)) from None


def build_policy(d: dict) -> PoIPolicy:
    try:
        flows = tuple((None if s is None else ip(s), None if t is None else ip(t))
                      for s, t in d.get("flows", []))
        return PoIPolicy(d.get("kind", "local_broadcast"), d.get("subnet"), flows,
                         d.get("predicate"))
    except (ValueError, TypeError) as exc:
        raise ConfigFieldError("poi", str(exc)) from None


def build_channel(cfg: dict) -> ChannelConfig:
    variant = build_variant(cfg["variant"])
    hd = cfg["hash"]
    try:
        algo = hd.get("algorithm", "sha3_512_prefix")
        key = bytes.fromhex(hd["key"]) if hd.get("key") else None
        spec = HashSpec(algo, variant.h, key)
    except (ValueError, ConfigError) as exc:
        raise ConfigFieldError("hash", str(exc)) from None
    robust = _get(cfg, "robust", bool, "robust")
    try:
        return ChannelConfig(
            variant, spec, build_policy(cfg["poi"]), robust=robust,
            D=_get(cfg, "D", float, "D") if robust else 0.0,
            R=_get(cfg, "R", float, "R") if robust else 0.0,
            pointers=_get(cfg, "pointers", int, "pointers"),
            frac_filter=_get(cfg, "frac_filter", bool, "frac_filter"),
            chunk_bits=cfg.get("chunk_bits"),
            pointer_encoding=cfg.get("pointer_encoding", "storage"))
    except ConfigFieldError:
        raise
    except (ConfigError, ValueError) as exc:
        raise ConfigFieldError("channel", str(exc)) from None


def message_bytes(cfg: dict) -> bytes:
    m = cfg.get("message")
    if isinstance(m, str):
        return m.encode("utf-8")
    if isinstance(m, dict) and "hex" in m:
        try:
            return bytes.fromhex(m["hex"])
        except ValueError as exc:
            raise ConfigFieldError("message.hex", str(exc)) from None
    raise ConfigFieldError("message", "expected a string or {\"hex\": ...}")


@dataclass
class RunSpec:
    name: str
    channel: ChannelConfig
    jitter: JitterModel
    signal_jitter: JitterModel | None
    settings: dict = field(default_factory=dict)


def build_runs(cfg: dict) -> list[RunSpec]:
    runs = cfg.get("runs") or [{"name": "run"}]
    out, names = [], set()
    for k, r in enumerate(runs):
        if not isinstance(r, dict) or not isinstance(r.get("name"), str):
            raise ConfigFieldError(f"runs[{k}].name", "each run needs a string name")
        if r["name"] in names:
            raise ConfigFieldError(f"runs[{k}].name", f"duplicate run name {r['name']!r}")
        names.add(r["name"])
        unknown = set(r) - set(DEFAULTS) - {"name"}
        if unknown:
            raise ConfigFieldError(f"runs[{k}].{sorted(unknown)[0]}", "unknown field")
        merged = merge(cfg, {k2: v for k2, v in r.items() if k2 != "name"})
        out.append(RunSpec(r["name"], build_channel(merged), build_jitter(merged["jitter"]),
                           build_jitter(merged.get("signal_jitter"), "signal_jitter"), merged))
    return out
