"""Bit vectors, hash derivation, checksums and near-miss enumeration.

Bit index 0 is always the rightmost (least significant) bit.  When a bit
vector is packed into bytes (for hashing or CRC) the bits are emitted
most-significant first and the last byte is zero-padded on the right.
"""
from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass
from itertools import combinations
from typing import Iterator, Sequence

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

MAX_BITS = 512


class BitError(ValueError):
    """Rejected bit-vector input (bad length, index, or mismatched operands)."""


class ConfigError(ValueError):
    """A hash or checksum configuration outside its supported range."""


@dataclass(frozen=True, slots=True)
class BitVec:
    value: int
    length: int

    def __post_init__(self) -> None:
        if not 1 <= self.length <= MAX_BITS:
            raise BitError(f"bit length must be in 1..{MAX_BITS}, got {self.length}")
        if self.value < 0 or self.value >> self.length:
            raise BitError(f"value {self.value} does not fit in {self.length} bits")

    @classmethod
    def from_str(cls, bits: str) -> "BitVec":
        if not bits or set(bits) - {"0", "1"}:
            raise BitError(f"not a bit string: {bits!r}")
        return cls(int(bits, 2), len(bits))

    @classmethod
    def from_bytes(cls, data: bytes, length: int | None = None) -> "BitVec":
        """Take the leading ``length`` bits of ``data`` (MSB-first)."""
        total = len(data) * 8
        if length is None:
            length = total
        if length > total:
            raise BitError(f"{len(data)} bytes hold fewer than {length} bits")
        return cls(int.from_bytes(data, "big") >> (total - length), length)

    def __len__(self) -> int:
        return self.length

    def __str__(self) -> str:
        return format(self.value, f"0{self.length}b")

    def __repr__(self) -> str:
        return f"BitVec('{self}')"

    def __add__(self, other: "BitVec") -> "BitVec":
        """Concatenation, ``self`` on the left."""
        return BitVec((self.value << other.length) | other.value, self.length + other.length)

    def bit(self, index: int) -> int:
        if not 0 <= index < self.length:
            raise BitError(f"bit index {index} out of range for length {self.length}")
        return (self.value >> index) & 1

    def flip(self, *indices: int) -> "BitVec":
        mask = 0
        for i in indices:
            if not 0 <= i < self.length:
                raise BitError(f"bit index {i} out of range for length {self.length}")
            mask |= 1 << i
        return BitVec(self.value ^ mask, self.length)

    def head(self, n: int) -> "BitVec":
        """Leftmost ``n`` bits."""
        if not 1 <= n <= self.length:
            raise BitError(f"cannot take {n} leading bits of {self.length}")
        return BitVec(self.value >> (self.length - n), n)

    def tail(self, n: int) -> "BitVec":
        """Rightmost ``n`` bits."""
        if not 1 <= n <= self.length:
            raise BitError(f"cannot take {n} trailing bits of {self.length}")
        return BitVec(self.value & ((1 << n) - 1), n)

    def to_bytes(self) -> bytes:
        nbytes = (self.length + 7) // 8
        return (self.value << (nbytes * 8 - self.length)).to_bytes(nbytes, "big")

    def popcount(self) -> int:
        return bin(self.value).count("1")


def hamming_distance(a: BitVec, b: BitVec) -> int:
    if a.length != b.length:
        raise BitError(f"length mismatch: {a.length} vs {b.length}")
    return (a.value ^ b.value).bit_count()


# --------------------------------------------------------------------------
# hashing

class HashAlgorithm(str, enum.Enum):
    SHA3_512_PREFIX = "sha3_512_prefix"
    AES_COUNTER_PRF = "aes_counter_prf"


ZERO_KEY = bytes(16)


@dataclass(frozen=True)
class HashSpec:
    algorithm: HashAlgorithm
    h: int
    key: bytes | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "algorithm", HashAlgorithm(self.algorithm))
        cap = 512 if self.algorithm is HashAlgorithm.SHA3_512_PREFIX else 128
        if not 1 <= self.h <= min(cap, 64):
            raise ConfigError(f"h={self.h} outside 1..{min(cap, 64)} for {self.algorithm.value}")
        if self.algorithm is HashAlgorithm.AES_COUNTER_PRF:
            if self.key is None:
                object.__setattr__(self, "key", ZERO_KEY)
            elif len(self.key) != 16:
                raise ConfigError("AES counter PRF needs a 128-bit key")
        elif self.key is not None:
            raise ConfigError("SHA3 prefix hashing takes no key")

    @classmethod
    def sha3(cls, h: int) -> "HashSpec":
        return cls(HashAlgorithm.SHA3_512_PREFIX, h)

    @classmethod
    def aes(cls, h: int, key: bytes = ZERO_KEY) -> "HashSpec":
        return cls(HashAlgorithm.AES_COUNTER_PRF, h, key)


def _aes_ecb(key: bytes, blocks: bytes) -> bytes:
    enc = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
    return enc.update(blocks) + enc.finalize()


def counter_block(counter: int) -> bytes:
    return counter.to_bytes(16, "big")


def derive_hash(spec: HashSpec, data: bytes) -> BitVec:
    """Leading ``spec.h`` bits of SHA3-512 or of the AES encryption of ``data``.

    For the AES PRF, ``data`` is read as a big-endian integer of at most 16
    bytes and encrypted as one counter block.
    """
    if not data:
        raise BitError("hash input must be non-empty")
    if spec.algorithm is HashAlgorithm.SHA3_512_PREFIX:
        digest = hashlib.sha3_512(data).digest()
    else:
        if len(data) > 16:
            raise BitError("AES counter input is limited to 16 bytes")
        digest = _aes_ecb(spec.key, data.rjust(16, b"\x00"))
    return BitVec.from_bytes(digest, spec.h)


def prf_stream_values(key: bytes, h: int, n: int, start: int = 0,
                      batch: int = 1 << 20) -> np.ndarray:
    """``n`` consecutive h-bit PRF outputs as a uint64 array (h <= 64)."""
    if not 1 <= h <= 64:
        raise ConfigError("vectorised stream supports 1 <= h <= 64")
    out = np.empty(n, dtype=np.uint64)
    enc = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
    for lo in range(0, n, batch):
        hi = min(n, lo + batch)
        blocks = np.zeros((hi - lo, 2), dtype=">u8")
        blocks[:, 1] = np.arange(start + lo, start + hi, dtype=np.uint64)
        ct = np.frombuffer(enc.update(blocks.tobytes()), dtype=">u8").reshape(-1, 2)
        out[lo:hi] = ct[:, 0] >> np.uint64(64 - h)
    return out


def prf_hash_stream(spec: HashSpec, count: int) -> list[BitVec]:
    if spec.algorithm is not HashAlgorithm.AES_COUNTER_PRF:
        raise ConfigError("prf_hash_stream needs an AES counter spec")
    if count < 1:
        raise BitError("stream length must be >= 1")
    return [BitVec(int(v), spec.h) for v in prf_stream_values(spec.key, spec.h, count)]


# --------------------------------------------------------------------------
# checksums

class ChecksumType(str, enum.Enum):
    SHA3 = "sha3"
    CRC8 = "crc8"
    ADHOC = "adhoc"
    ONES = "ones"   # ones-count, only used for the worked illustration


@dataclass(frozen=True)
class ChecksumKind:
    kind: ChecksumType
    c: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ChecksumType(self.kind))
        if not 1 <= self.c <= 16:
            raise ConfigError(f"checksum width c={self.c} outside 1..16")
        if self.kind is ChecksumType.CRC8 and self.c > 8:
            raise ConfigError("CRC-8 checksum width is at most 8")


def _crc8_table() -> list[int]:
    table = []
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = ((crc << 1) ^ 0x07) & 0xFF if crc & 0x80 else (crc << 1) & 0xFF
        table.append(crc)
    return table


CRC8_TABLE = _crc8_table()


def crc8(data: bytes) -> int:
    """CRC-8, polynomial 0x07, init 0, no reflection, no final xor."""
    crc = 0
    for b in data:
        crc = CRC8_TABLE[crc ^ b]
    return crc


def _adhoc(message: BitVec, c: int) -> int:
    pad = (-message.length) % c
    padded = message.value << pad
    npieces = (message.length + pad) // c
    total = 0
    mask = (1 << c) - 1
    for k in range(npieces):
        total += (padded >> (c * k)) & mask
    return (total + 9) & mask


def checksum(kind: ChecksumKind, message: BitVec) -> BitVec:
    c = kind.c
    if kind.kind is ChecksumType.SHA3:
        return BitVec.from_bytes(hashlib.sha3_512(message.to_bytes()).digest(), c)
    if kind.kind is ChecksumType.CRC8:
        return BitVec(crc8(message.to_bytes()) >> (8 - c), c)
    if kind.kind is ChecksumType.ADHOC:
        return BitVec(_adhoc(message, c), c)
    return BitVec(message.popcount() & ((1 << c) - 1), c)


def checksum_table(kind: ChecksumKind, msg_bits: int) -> np.ndarray:
    """Checksums of every ``msg_bits``-bit message, indexed by message value."""
    if msg_bits > 24:
        raise ConfigError("checksum tables are limited to 24-bit messages")
    return np.fromiter((checksum(kind, BitVec(m, msg_bits)).value
                        for m in range(1 << msg_bits)),
                       dtype=np.int32, count=1 << msg_bits)


# --------------------------------------------------------------------------
# near-miss enumeration

def modification_masks(h: int, t: int) -> Iterator[int]:
    """XOR masks in canonical order: by weight, then lexicographic index tuple."""
    if not 0 <= t <= h:
        raise BitError(f"t={t} must lie in 0..{h}")
    for weight in range(t + 1):
        for idx in combinations(range(h), weight):
            m = 0
            for i in idx:
                m |= 1 << i
            yield m


def enumerate_modifications(h_i: BitVec, t: int) -> list[BitVec]:
    if t > h_i.length or t < 0:
        raise BitError(f"t={t} exceeds vector length {h_i.length}")
    return [BitVec(h_i.value ^ m, h_i.length) for m in modification_masks(h_i.length, t)]


def mask_array(h: int, t: int) -> np.ndarray:
    return np.fromiter(modification_masks(h, t), dtype=np.uint64)


def pack_bits(vectors: Sequence[BitVec]) -> np.ndarray:
    return np.array([v.value for v in vectors], dtype=np.uint64)
