"""Lattice HE backend: BFV through TenSEAL (Microsoft SEAL)."""

import hashlib
import logging
import threading
from collections import OrderedDict
from typing import Optional, Tuple

import numpy as np

from app.infra.error_handler import DecryptionError, UnsupportedParamsError
from app.models.he import HeBackend, HeParams

logger = logging.getLogger(__name__)


class LatticeBackend:
    """
    BFV with batching. Public material is a serialized TenSEAL context without the
    secret key (public, relinearization and Galois keys); secret material is the
    full context.
    """

    backend = HeBackend.LATTICE
    _CACHE_SIZE = 8

    def __init__(self):
        self._contexts: "OrderedDict[bytes, object]" = OrderedDict()
        self._lock = threading.Lock()
        self._ts = None

    @property
    def ts(self):
        """Lazy import of tenseal so the emulated backend works without it."""
        if self._ts is None:
            try:
                import tenseal
            except ImportError as e:
                raise UnsupportedParamsError(f"lattice backend requires tenseal: {e}")
            self._ts = tenseal
        return self._ts

    def is_available(self) -> bool:
        try:
            self.ts
        except UnsupportedParamsError:
            return False
        return True

    def check_params(self, params: HeParams) -> None:
        if (params.plain_modulus - 1) % (2 * params.ring_dimension):
            raise UnsupportedParamsError(
                f"batching needs p = 1 mod 2N; p = {params.plain_modulus}, N = {params.ring_dimension}"
            )
        if params.ring_dimension < 4096:
            raise UnsupportedParamsError("ring dimension below 4096 leaves no room for one multiplication")

    def keygen(self, params: HeParams, seed: Optional[int] = None) -> Tuple[bytes, bytes]:
        """Returns (public, secret). SEAL draws its own randomness; ``seed`` cannot make this deterministic."""
        self.check_params(params)
        if seed is not None:
            logger.warning("Lattice keygen ignores the seed", extra={"backend": self.backend.value})
        ts = self.ts
        context = ts.context(
            ts.SCHEME_TYPE.BFV,
            poly_modulus_degree=params.ring_dimension,
            plain_modulus=params.plain_modulus,
        )
        context.generate_galois_keys()
        secret = context.serialize(
            save_public_key=True, save_secret_key=True, save_galois_keys=True, save_relin_keys=True
        )
        public_context = context.copy()
        public_context.make_context_public()
        public = public_context.serialize()
        return public, secret

    def _context(self, data: bytes):
        key = hashlib.sha256(data).digest()
        with self._lock:
            context = self._contexts.get(key)
            if context is not None:
                self._contexts.move_to_end(key)
                return context
        context = self.ts.context_from(data)
        with self._lock:
            self._contexts[key] = context
            while len(self._contexts) > self._CACHE_SIZE:
                self._contexts.popitem(last=False)
        return context

    def _vector(self, context_data: bytes, body: bytes):
        return self.ts.bfv_vector_from(self._context(context_data), body)

    def encrypt(self, params: HeParams, public: bytes, values: np.ndarray) -> bytes:
        vector = self.ts.bfv_vector(self._context(public), [int(v) for v in values])
        return vector.serialize()

    def add(self, params: HeParams, public: bytes, a: bytes, b: bytes) -> bytes:
        return (self._vector(public, a) + self._vector(public, b)).serialize()

    def multiply(self, params: HeParams, public: bytes, a: bytes, b: bytes) -> bytes:
        return (self._vector(public, a) * self._vector(public, b)).serialize()

    def sum_slots(self, params: HeParams, public: bytes, body: bytes) -> bytes:
        return self._vector(public, body).sum().serialize()

    def decrypt(self, params: HeParams, secret: bytes, body: bytes) -> np.ndarray:
        try:
            values = self._vector(secret, body).decrypt()
        except Exception as e:
            raise DecryptionError(f"lattice decryption failed: {e}")
        # BFV decoding is centered; bring values back to [0, p)
        return np.array([int(v) % params.plain_modulus for v in values], dtype=np.int64)
