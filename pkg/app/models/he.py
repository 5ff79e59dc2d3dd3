"""Homomorphic-encryption parameters, keys and ciphertext envelopes."""

import functools
import hashlib
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import galois

from app.infra.error_handler import ParameterMismatchError, ProtocolError, ValidationError

DIGEST_BYTES = 32


class HeBackend(str, Enum):
    EMULATED = "emulated"
    LATTICE = "lattice"

    @property
    def wire_id(self) -> int:
        return {HeBackend.EMULATED: 1, HeBackend.LATTICE: 2}[self]

    @classmethod
    def from_wire_id(cls, value: int) -> "HeBackend":
        for backend in cls:
            if backend.wire_id == value:
                return backend
        raise ProtocolError(f"unknown HE backend id {value}")


_PARAMS = struct.Struct("<BQIIB")


@dataclass(frozen=True)
class HeParams:
    """
    Scheme parameters. ``seed`` only drives deterministic keygen in test mode and is
    never part of the public encoding or the digest.
    """
    backend: HeBackend = HeBackend.EMULATED
    plain_modulus: int = 65537
    ring_dimension: int = 8192
    bits_per_ciphertext: int = 4096
    max_depth: int = 1
    seed: Optional[int] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "backend", HeBackend(self.backend))
        if not galois.is_prime(self.plain_modulus):
            raise ValidationError(f"plaintext modulus {self.plain_modulus} is not prime")
        if self.ring_dimension < 2 or self.ring_dimension & (self.ring_dimension - 1):
            raise ValidationError("ring dimension must be a power of two")
        if not 1 <= self.bits_per_ciphertext <= self.ring_dimension:
            raise ValidationError("bits per ciphertext must be in [1, ring_dimension]")
        if self.max_depth < 1:
            raise ValidationError("max_depth must be >= 1")

    @property
    def max_filter_bits(self) -> int:
        """Largest m whose popcount still fits below the plaintext modulus."""
        return self.plain_modulus - 1

    def to_bytes(self) -> bytes:
        return _PARAMS.pack(
            self.backend.wire_id,
            self.plain_modulus,
            self.ring_dimension,
            self.bits_per_ciphertext,
            self.max_depth,
        )

    @classmethod
    def read_from(cls, data: bytes) -> Tuple["HeParams", bytes]:
        if len(data) < _PARAMS.size:
            raise ProtocolError("truncated HE parameters")
        backend_id, p, ring, bpc, depth = _PARAMS.unpack_from(data)
        try:
            params = cls(HeBackend.from_wire_id(backend_id), p, ring, bpc, depth)
        except ValidationError as e:
            raise ProtocolError(f"invalid HE parameters: {e.message}")
        return params, data[_PARAMS.size:]

    def digest(self) -> bytes:
        return hashlib.sha256(self.to_bytes()).digest()


@dataclass(frozen=True)
class PublicKey:
    """Public material: encryption key plus evaluation keys."""
    params: HeParams
    data: bytes = field(repr=False)

    @functools.cached_property
    def fingerprint(self) -> bytes:
        return hashlib.sha256(self.data).digest()

    @property
    def params_digest(self) -> bytes:
        return self.params.digest()


@dataclass(frozen=True)
class SecretKey:
    """Decryption material. Never serialized into a protocol message."""
    params: HeParams
    data: bytes = field(repr=False)
    public_fingerprint: bytes = field(repr=False)


@dataclass(frozen=True)
class KeyPair:
    public_key: PublicKey
    secret_key: SecretKey


_ENVELOPE = struct.Struct("<B32sI")


@dataclass(frozen=True)
class Ciphertext:
    """Versioned envelope ``backend_id:u8 | params_digest:32 | payload_len:u32 | payload``."""
    backend: HeBackend
    params_digest: bytes
    payload: bytes = field(repr=False)

    def to_bytes(self) -> bytes:
        return _ENVELOPE.pack(self.backend.wire_id, self.params_digest, len(self.payload)) + self.payload

    @classmethod
    def read_from(cls, data: bytes) -> Tuple["Ciphertext", bytes]:
        if len(data) < _ENVELOPE.size:
            raise ProtocolError("truncated ciphertext header")
        backend_id, digest, length = _ENVELOPE.unpack_from(data)
        end = _ENVELOPE.size + length
        if len(data) < end:
            raise ProtocolError(f"truncated ciphertext payload: need {length} bytes")
        return cls(HeBackend.from_wire_id(backend_id), digest, data[_ENVELOPE.size:end]), data[end:]

    @classmethod
    def from_bytes(cls, data: bytes) -> "Ciphertext":
        ct, rest = cls.read_from(data)
        if rest:
            raise ProtocolError(f"{len(rest)} trailing bytes after ciphertext")
        return ct


_BLOOM_HEADER = struct.Struct("<II")


@dataclass(frozen=True)
class EncryptedBloom:
    """Encrypted bits of one filter; ``m`` is the logical length."""
    m: int
    ciphertexts: List[Ciphertext] = field(repr=False)

    def __post_init__(self):
        if not self.ciphertexts:
            raise ValidationError("encrypted filter has no ciphertexts")
        digests = {ct.params_digest for ct in self.ciphertexts}
        if len(digests) != 1:
            raise ParameterMismatchError("ciphertexts of one filter carry different parameter digests")

    @property
    def params_id(self) -> bytes:
        return self.ciphertexts[0].params_digest

    def to_bytes(self) -> bytes:
        return _BLOOM_HEADER.pack(self.m, len(self.ciphertexts)) + b"".join(
            ct.to_bytes() for ct in self.ciphertexts
        )

    @classmethod
    def read_from(cls, data: bytes) -> Tuple["EncryptedBloom", bytes]:
        if len(data) < _BLOOM_HEADER.size:
            raise ProtocolError("truncated encrypted filter header")
        m, count = _BLOOM_HEADER.unpack_from(data)
        rest = data[_BLOOM_HEADER.size:]
        ciphertexts = []
        for _ in range(count):
            ct, rest = Ciphertext.read_from(rest)
            ciphertexts.append(ct)
        try:
            return cls(m, ciphertexts), rest
        except ValidationError as e:
            raise ProtocolError(e.message)

    @classmethod
    def from_bytes(cls, data: bytes) -> "EncryptedBloom":
        enc, rest = cls.read_from(data)
        if rest:
            raise ProtocolError(f"{len(rest)} trailing bytes after encrypted filter")
        return enc
