"""Plaintext Bloom filters with double hashing and cardinality estimation."""

import math
import struct
from typing import Iterable, List

import mmh3
import numpy as np
from bitarray import bitarray

from app.infra.error_handler import ParameterMismatchError, ProtocolError, ValidationError
from app.models.helper import Identifier

MIN_BITS = 8
_HEADER = struct.Struct("<IBQ")


def _fold_seed(hash_seed: int) -> int:
    """
    murmur3 takes a 32-bit seed; fold the 64-bit hash seed into it.

    Folding is lossy: distinct announced seeds whose halves XOR to the same
    value index identically.
    """
    return (hash_seed ^ (hash_seed >> 32)) & 0xFFFFFFFF


def index_sequence(data: bytes, m: int, k: int, hash_seed: int) -> List[int]:
    """Positions (h1 + j * h2) mod m for j = 0..k-1."""
    h1, h2 = mmh3.hash64(data, seed=_fold_seed(hash_seed), signed=False)
    return [(h1 + j * h2) % m for j in range(k)]


class BloomFilter:
    """m-bit array with k hash positions per item. Little-endian bit order on the wire."""

    def __init__(self, m: int, k: int, hash_seed: int, bits: bitarray = None):
        if m < MIN_BITS:
            raise ValidationError(f"m must be >= {MIN_BITS}, got {m}")
        if k < 1:
            raise ValidationError(f"k must be >= 1, got {k}")
        if not 0 <= hash_seed < 2**64:
            raise ValidationError("hash_seed must be a 64-bit unsigned integer")
        if bits is None:
            bits = bitarray(m, endian="little")
            bits.setall(0)
        elif len(bits) != m:
            raise ValidationError(f"bit array has {len(bits)} bits, expected {m}")
        self.m = m
        self.k = k
        self.hash_seed = hash_seed
        self.bits = bits

    @property
    def params(self):
        return self.m, self.k, self.hash_seed

    def insert(self, identifier: Identifier) -> "BloomFilter":
        for i in index_sequence(identifier.value, self.m, self.k, self.hash_seed):
            self.bits[i] = 1
        return self

    def __contains__(self, identifier: Identifier) -> bool:
        return all(self.bits[i] for i in index_sequence(identifier.value, self.m, self.k, self.hash_seed))

    def bits_set(self) -> int:
        return self.bits.count(1)

    def to_numpy(self) -> np.ndarray:
        """Bits as a uint8 array, position 0 first."""
        return np.frombuffer(self.bits.unpack(), dtype=np.uint8).copy()

    @classmethod
    def from_numpy(cls, m: int, k: int, hash_seed: int, values: np.ndarray) -> "BloomFilter":
        bits = bitarray(endian="little")
        bits.pack(np.asarray(values, dtype=np.uint8).astype(bool).astype(np.uint8).tobytes())
        return cls(m, k, hash_seed, bits)

    def copy(self) -> "BloomFilter":
        return BloomFilter(self.m, self.k, self.hash_seed, self.bits.copy())

    def clear(self) -> None:
        """Zero the bit array in place."""
        self.bits.setall(0)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BloomFilter):
            return NotImplemented
        return self.params == other.params and self.bits == other.bits

    def __repr__(self) -> str:
        return f"BloomFilter(m={self.m}, k={self.k}, bits_set={self.bits_set()})"

    def to_bytes(self) -> bytes:
        return _HEADER.pack(self.m, self.k, self.hash_seed) + self.bits.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "BloomFilter":
        if len(data) < _HEADER.size:
            raise ProtocolError("truncated bloom filter header")
        m, k, hash_seed = _HEADER.unpack_from(data)
        body = data[_HEADER.size:]
        if len(body) != (m + 7) // 8:
            raise ProtocolError(f"bloom filter body has {len(body)} bytes, expected {(m + 7) // 8}")
        bits = bitarray(endian="little")
        bits.frombytes(body)
        if bits[m:].any():
            raise ProtocolError("non-zero padding bits after bit m")
        del bits[m:]
        return cls(m, k, hash_seed, bits)


def bloom_new(m: int, k: int, hash_seed: int) -> BloomFilter:
    return BloomFilter(m, k, hash_seed)


def insert(bf: BloomFilter, identifier: Identifier) -> BloomFilter:
    return bf.insert(identifier)


def insert_all(bf: BloomFilter, identifiers: Iterable[Identifier]) -> BloomFilter:
    for identifier in identifiers:
        bf.insert(identifier)
    return bf


def bits_set(bf: BloomFilter) -> int:
    return bf.bits_set()


def estimate_cardinality(m: int, k: int, t: int) -> float:
    """
    c = -(m / k) ln(1 - t / m). A saturated filter (t = m) returns +inf.

    Raises:
        ValidationError: t outside [0, m]
    """
    if t < 0 or t > m:
        raise ValidationError(f"bit count {t} outside [0, {m}]")
    if t == m:
        return math.inf
    return -(m / k) * math.log1p(-t / m)


def _check_compatible(a: BloomFilter, b: BloomFilter) -> None:
    if a.params != b.params:
        raise ParameterMismatchError(f"filters with parameters {a.params} and {b.params} cannot be combined")


def intersect(a: BloomFilter, b: BloomFilter) -> BloomFilter:
    """Bitwise AND."""
    _check_compatible(a, b)
    return BloomFilter(a.m, a.k, a.hash_seed, a.bits & b.bits)


def union(a: BloomFilter, b: BloomFilter) -> BloomFilter:
    """Bitwise OR."""
    _check_compatible(a, b)
    return BloomFilter(a.m, a.k, a.hash_seed, a.bits | b.bits)


def estimate_intersection_inclusion_exclusion(m: int, k: int, t_a: int, t_b: int, t_and: int) -> float:
    """
    c(A) + c(B) - c(A or B), with popcount(A or B) = t_a + t_b - t_and.

    Alternative to applying the estimator to the AND count; usable from three
    decrypted counts.
    """
    t_or = t_a + t_b - t_and
    return (
        estimate_cardinality(m, k, t_a)
        + estimate_cardinality(m, k, t_b)
        - estimate_cardinality(m, k, t_or)
    )
