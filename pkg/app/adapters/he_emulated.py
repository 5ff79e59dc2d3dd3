"""
Emulated HE backend.

INSECURE: slot values travel in the clear behind the ciphertext interface. It
exists so protocol tests and evaluation runs do not depend on lattice parameters.
Ciphertext bodies are ``nonce:16 | slots:u64 little-endian``.
"""

import hashlib
import secrets
from typing import Optional, Tuple

import numpy as np

from app.infra.error_handler import ProtocolError
from app.models.he import HeBackend, HeParams

NONCE_BYTES = 16


class EmulatedBackend:
    """Plaintext slot vectors modulo p."""

    backend = HeBackend.EMULATED

    def is_available(self) -> bool:
        return True

    def keygen(self, params: HeParams, seed: Optional[int] = None) -> Tuple[bytes, bytes]:
        """Returns (public, secret). Deterministic when a seed is given."""
        secret = np.random.default_rng(seed).bytes(32)
        public = hashlib.sha256(b"headcount/emulated-public" + params.to_bytes() + secret).digest()
        return public, secret

    def _pack(self, values: np.ndarray) -> bytes:
        return secrets.token_bytes(NONCE_BYTES) + np.asarray(values, dtype="<u8").tobytes()

    def _unpack(self, body: bytes) -> np.ndarray:
        if len(body) < NONCE_BYTES or (len(body) - NONCE_BYTES) % 8:
            raise ProtocolError("malformed emulated ciphertext body")
        return np.frombuffer(body[NONCE_BYTES:], dtype="<u8").astype(np.uint64)

    def encrypt(self, params: HeParams, public: bytes, values: np.ndarray) -> bytes:
        return self._pack(np.asarray(values, dtype=np.uint64) % params.plain_modulus)

    def add(self, params: HeParams, public: bytes, a: bytes, b: bytes) -> bytes:
        va, vb = self._unpack(a), self._unpack(b)
        return self._pack((va + vb) % params.plain_modulus)

    def multiply(self, params: HeParams, public: bytes, a: bytes, b: bytes) -> bytes:
        p = params.plain_modulus
        va = [int(x) for x in self._unpack(a)]
        vb = [int(x) for x in self._unpack(b)]
        return self._pack(np.array([(x * y) % p for x, y in zip(va, vb)], dtype=np.uint64))

    def sum_slots(self, params: HeParams, public: bytes, body: bytes) -> bytes:
        total = sum(int(x) for x in self._unpack(body)) % params.plain_modulus
        return self._pack(np.array([total], dtype=np.uint64))

    def decrypt(self, params: HeParams, secret: bytes, body: bytes) -> np.ndarray:
        return self._unpack(body).astype(np.int64)
