"""
Homomorphic evaluation of Bloom-filter statistics.

Every ciphertext payload starts with public bookkeeping
``key_fingerprint:32 | bound:u64 | depth:u8 | slots:u32`` followed by the
backend body. ``bound`` is an upper bound on every slot value and ``depth``
the multiplicative depth consumed; decryption refuses values that could
have wrapped modulo p or exceeded the depth budget. None of these functions
take secret material except the decrypt_* family.
"""

import logging
import struct
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np

from app.adapters.he_emulated import EmulatedBackend
from app.adapters.he_lattice import LatticeBackend
from app.infra.error_handler import (
    DecryptionError,
    KeyMismatchError,
    ParameterMismatchError,
    ProtocolError,
    ValidationError,
)
from app.infra.metrics import he_seconds
from app.models.he import Ciphertext, EncryptedBloom, HeBackend, HeParams, KeyPair, PublicKey, SecretKey

logger = logging.getLogger(__name__)

_META = struct.Struct("<32sQBI")

_BACKENDS: Dict[HeBackend, object] = {
    HeBackend.EMULATED: EmulatedBackend(),
    HeBackend.LATTICE: LatticeBackend(),
}


def get_backend(backend: HeBackend):
    return _BACKENDS[HeBackend(backend)]


def backend_available(backend: HeBackend) -> bool:
    """False when the backend's library is not installed."""
    return get_backend(backend).is_available()


class _Opened(NamedTuple):
    key_fingerprint: bytes
    bound: int
    depth: int
    slots: int
    body: bytes


def _seal(params: HeParams, key_fingerprint: bytes, bound: int, depth: int, slots: int, body: bytes) -> Ciphertext:
    payload = _META.pack(key_fingerprint, min(bound, 2**64 - 1), depth, slots) + body
    return Ciphertext(backend=params.backend, params_digest=params.digest(), payload=payload)


def _open(ct: Ciphertext) -> _Opened:
    if len(ct.payload) < _META.size:
        raise ProtocolError("ciphertext payload shorter than its bookkeeping header")
    fp, bound, depth, slots = _META.unpack_from(ct.payload)
    return _Opened(fp, bound, depth, slots, ct.payload[_META.size:])


def _check_public(pk: PublicKey, *cts: Ciphertext) -> List[_Opened]:
    opened = []
    for ct in cts:
        if ct.params_digest != pk.params_digest or ct.backend != pk.params.backend:
            raise ParameterMismatchError("ciphertext parameters do not match the public key")
        item = _open(ct)
        if item.key_fingerprint != pk.fingerprint:
            raise KeyMismatchError("ciphertext was encrypted under a different key pair")
        opened.append(item)
    return opened


def keygen(params: HeParams) -> KeyPair:
    """
    Generate a key pair. Deterministic for a fixed ``params.seed`` on the emulated
    backend; the lattice backend always draws fresh randomness.

    Raises:
        UnsupportedParamsError: parameter combination the backend cannot realize
    """
    backend = get_backend(params.backend)
    with he_seconds.labels(params.backend.value, "keygen").time():
        public, secret = backend.keygen(params, params.seed)
    pk = PublicKey(params=params, data=public)
    sk = SecretKey(params=params, data=secret, public_fingerprint=pk.fingerprint)
    logger.info("Key pair generated", extra={"backend": params.backend.value, "public_bytes": len(public)})
    return KeyPair(public_key=pk, secret_key=sk)


def encrypt_value(pk: PublicKey, value: int, bound: Optional[int] = None) -> Ciphertext:
    """
    Encrypt one integer in a single slot.

    ``bound`` is public metadata; it defaults to the value itself, so pass a
    public upper bound when the value is sensitive.
    """
    p = pk.params.plain_modulus
    if not 0 <= value < p:
        raise ValidationError(f"value must be in [0, {p})")
    bound = value if bound is None else bound
    if bound < value:
        raise ValidationError("bound is below the encrypted value")
    backend = get_backend(pk.params.backend)
    body = backend.encrypt(pk.params, pk.data, np.array([value], dtype=np.uint64))
    return _seal(pk.params, pk.fingerprint, bound, 0, 1, body)


def encrypt_bits(pk: PublicKey, bits: Sequence[int]) -> EncryptedBloom:
    """
    Encrypt a bit array, ``bits_per_ciphertext`` bits per ciphertext, fresh randomness each.

    Raises:
        ValidationError: more bits than the plaintext modulus can count, or non-binary values
    """
    arr = np.asarray(bits, dtype=np.uint64).reshape(-1)
    m = int(arr.size)
    params = pk.params
    if m < 1:
        raise ValidationError("cannot encrypt an empty bit array")
    if m > params.max_filter_bits:
        raise ValidationError(f"m = {m} too large for plaintext modulus {params.plain_modulus}")
    if arr.max() > 1:
        raise ValidationError("encrypt_bits expects 0/1 values")

    backend = get_backend(params.backend)
    chunk = params.bits_per_ciphertext
    ciphertexts = []
    with he_seconds.labels(params.backend.value, "encrypt").time():
        for start in range(0, m, chunk):
            part = arr[start:start + chunk]
            body = backend.encrypt(params, pk.data, part)
            ciphertexts.append(_seal(params, pk.fingerprint, 1, 0, int(part.size), body))
    return EncryptedBloom(m=m, ciphertexts=ciphertexts)


def add(pk: PublicKey, a: Ciphertext, b: Ciphertext) -> Ciphertext:
    """Slot-wise homomorphic addition."""
    oa, ob = _check_public(pk, a, b)
    if oa.slots != ob.slots:
        raise ParameterMismatchError(f"slot counts differ ({oa.slots} vs {ob.slots})")
    body = get_backend(pk.params.backend).add(pk.params, pk.data, oa.body, ob.body)
    return _seal(pk.params, pk.fingerprint, oa.bound + ob.bound, max(oa.depth, ob.depth), oa.slots, body)


def multiply(pk: PublicKey, a: Ciphertext, b: Ciphertext) -> Ciphertext:
    """Slot-wise homomorphic multiplication; consumes one level."""
    oa, ob = _check_public(pk, a, b)
    if oa.slots != ob.slots:
        raise ParameterMismatchError(f"slot counts differ ({oa.slots} vs {ob.slots})")
    body = get_backend(pk.params.backend).multiply(pk.params, pk.data, oa.body, ob.body)
    return _seal(pk.params, pk.fingerprint, oa.bound * ob.bound, max(oa.depth, ob.depth) + 1, oa.slots, body)


def sum_slots(pk: PublicKey, ct: Ciphertext) -> Ciphertext:
    """Rotate-and-add every slot into a single value."""
    (opened,) = _check_public(pk, ct)
    body = get_backend(pk.params.backend).sum_slots(pk.params, pk.data, opened.body)
    return _seal(pk.params, pk.fingerprint, opened.bound * opened.slots, opened.depth, 1, body)


def _check_pair(enc_a: EncryptedBloom, enc_b: EncryptedBloom) -> None:
    if enc_a.params_id != enc_b.params_id:
        raise ParameterMismatchError("encrypted filters were produced under different parameters")
    if enc_a.m != enc_b.m or len(enc_a.ciphertexts) != len(enc_b.ciphertexts):
        raise ParameterMismatchError(f"encrypted filters have different lengths ({enc_a.m} vs {enc_b.m})")


def encrypted_intersection_count(enc_a: EncryptedBloom, enc_b: EncryptedBloom, pk: PublicKey) -> Ciphertext:
    """
    Enc(sum_i A[i] * B[i]): one multiplication per chunk, then slot sums and
    additions across chunks. Uses public material only.
    """
    _check_pair(enc_a, enc_b)
    total: Optional[Ciphertext] = None
    with he_seconds.labels(pk.params.backend.value, "intersection").time():
        for ca, cb in zip(enc_a.ciphertexts, enc_b.ciphertexts):
            partial = sum_slots(pk, multiply(pk, ca, cb))
            total = partial if total is None else add(pk, total, partial)
    return total


def encrypted_popcount(enc: EncryptedBloom, pk: PublicKey) -> Ciphertext:
    """Enc(number of set bits), additions only."""
    total: Optional[Ciphertext] = None
    with he_seconds.labels(pk.params.backend.value, "popcount").time():
        for ct in enc.ciphertexts:
            partial = sum_slots(pk, ct)
            total = partial if total is None else add(pk, total, partial)
    return total


def _decrypt_slots(sk: SecretKey, ct: Ciphertext) -> np.ndarray:
    if ct.params_digest != sk.params.digest() or ct.backend != sk.params.backend:
        raise ParameterMismatchError("ciphertext parameters do not match the secret key")
    opened = _open(ct)
    if opened.key_fingerprint != sk.public_fingerprint:
        raise KeyMismatchError("ciphertext was encrypted under a different key pair")
    if opened.depth > sk.params.max_depth:
        raise DecryptionError(f"multiplicative depth {opened.depth} exceeds budget {sk.params.max_depth}")
    if opened.bound >= sk.params.plain_modulus:
        raise DecryptionError(f"value bound {opened.bound} reaches the plaintext modulus; result may have wrapped")

    with he_seconds.labels(sk.params.backend.value, "decrypt").time():
        values = get_backend(sk.params.backend).decrypt(sk.params, sk.data, opened.body)
    values = values[:opened.slots]
    if values.size != opened.slots or (values.size and int(values.max()) > opened.bound):
        raise DecryptionError("decrypted value outside its bound; noise budget exhausted or corrupted ciphertext")
    return values


def decrypt_count(sk: SecretKey, ct: Ciphertext) -> int:
    """
    Exact integer in [0, p).

    Raises:
        ParameterMismatchError: ciphertext under other parameters
        KeyMismatchError: ciphertext under another key pair
        DecryptionError: depth budget exceeded, possible wrap-around, or out-of-bound result
    """
    return int(_decrypt_slots(sk, ct)[0])


def decrypt_bits(sk: SecretKey, enc: EncryptedBloom) -> np.ndarray:
    """Recover the full bit array of an encrypted filter."""
    parts = [_decrypt_slots(sk, ct) for ct in enc.ciphertexts]
    bits = np.concatenate(parts).astype(np.uint8)
    if bits.size != enc.m:
        raise DecryptionError(f"decrypted {bits.size} bits, filter length is {enc.m}")
    return bits
