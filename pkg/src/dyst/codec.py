"""Message chunking and the checksum-based near-match codec.

Sender and receiver run the same first-fit search, so a sender can tell in
advance whether a hash will be decoded into the intended chunk.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .bitcore import (BitError, BitVec, ChecksumKind, ConfigError, checksum,
                      hamming_distance, modification_masks)


@dataclass(frozen=True)
class BitChunk:
    payload: BitVec
    index: int = 0

    @property
    def width(self) -> int:
        return self.payload.length


@dataclass(frozen=True)
class ExtCodecConfig:
    h: int
    c: int
    t: int
    checksum: ChecksumKind

    def __post_init__(self) -> None:
        if not 0 < self.c < self.h:
            raise ConfigError(f"need 0 < c < h, got c={self.c}, h={self.h}")
        if not 0 <= self.t <= self.h:
            raise ConfigError(f"need 0 <= t <= h, got t={self.t}")
        if self.checksum.c != self.c:
            raise ConfigError("checksum width differs from c")

    @property
    def payload_bits(self) -> int:
        return self.h - self.c


def split_message(message: bytes, width: int) -> list[BitChunk]:
    """Cut ``message`` into ``width``-bit chunks, MSB first, last one zero-padded."""
    if width < 1:
        raise BitError("chunk width must be >= 1")
    if not message:
        return []
    nbits = len(message) * 8
    k = -(-nbits // width)
    value = int.from_bytes(message, "big") << (k * width - nbits)
    mask = (1 << width) - 1
    return [BitChunk(BitVec((value >> ((k - 1 - i) * width)) & mask, width), i)
            for i in range(k)]


def join_chunks(chunks: Iterable[BitVec], nbytes: int) -> bytes:
    """Inverse of :func:`split_message` given the true byte length."""
    value, nbits = 0, 0
    for c in chunks:
        value = (value << c.length) | c.value
        nbits += c.length
    need = nbytes * 8
    if nbits < need:
        value <<= need - nbits
    else:
        value >>= nbits - need
    return value.to_bytes(nbytes, "big")


def ext_encode(chunk: BitChunk, cfg: ExtCodecConfig) -> BitVec:
    if chunk.width != cfg.payload_bits:
        raise BitError(f"chunk width {chunk.width} != h-c = {cfg.payload_bits}")
    return chunk.payload + checksum(cfg.checksum, chunk.payload)


def is_consistent(x: BitVec, cfg: ExtCodecConfig) -> bool:
    return checksum(cfg.checksum, x.head(cfg.payload_bits)) == x.tail(cfg.c)


def ext_first_fit(h_i: BitVec, cfg: ExtCodecConfig) -> tuple[BitVec, int] | None:
    """First self-consistent modification of ``h_i`` and its 1-based position."""
    if h_i.length != cfg.h:
        raise BitError(f"hash has {h_i.length} bits, expected {cfg.h}")
    for j, m in enumerate(modification_masks(cfg.h, cfg.t), start=1):
        x = BitVec(h_i.value ^ m, cfg.h)
        if is_consistent(x, cfg):
            return x.head(cfg.payload_bits), j
    return None


def ext_sender_gate(h_i: BitVec, chunk: BitChunk, cfg: ExtCodecConfig) -> bool:
    if hamming_distance(ext_encode(chunk, cfg), h_i) > cfg.t:
        return False
    fit = ext_first_fit(h_i, cfg)
    return fit is not None and fit[0] == chunk.payload


def chunks_from_bits(bits: Sequence[BitVec]) -> list[BitChunk]:
    return [BitChunk(b, i) for i, b in enumerate(bits)]
