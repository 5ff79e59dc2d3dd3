"""
Client role: owns the key pair, announces epochs and decrypts query results.

The secret key never leaves this module's callers; it is written only to the
client's own key directory.
"""

import logging
import secrets
import struct
from pathlib import Path
from typing import Optional, Tuple

from app.infra.config import config
from app.infra.error_handler import ParameterMismatchError, ValidationError
from app.models.epoch import EpochConfig, FlowEstimate
from app.models.he import DIGEST_BYTES, Ciphertext, HeBackend, HeParams, KeyPair, PublicKey, SecretKey
from app.services import he
from app.services.bloom import estimate_cardinality, estimate_intersection_inclusion_exclusion

logger = logging.getLogger(__name__)

KEY_MAGIC = b"HDCK"
PUBLIC_KEY_FILE = "public.key"
SECRET_KEY_FILE = "secret.key"

_KIND_PUBLIC = 1
_KIND_SECRET = 2
_KEY_HEADER = struct.Struct("<4sB")
_LEN = struct.Struct("<I")


def client_keygen(backend: HeBackend = None, seed: Optional[int] = None, **params) -> KeyPair:
    """Generate the deployment key pair; ``params`` override HeParams defaults."""
    backend = HeBackend(backend or config.HE_BACKEND)
    return he.keygen(HeParams(backend=backend, seed=seed, **params))


def _encode_key(kind: int, params: HeParams, fingerprint: bytes, data: bytes) -> bytes:
    return _KEY_HEADER.pack(KEY_MAGIC, kind) + params.to_bytes() + fingerprint + _LEN.pack(len(data)) + data


def _decode_key(raw: bytes, kind: int, path: Path) -> Tuple[HeParams, bytes, bytes]:
    if len(raw) < _KEY_HEADER.size:
        raise ValidationError(f"{path} is not a key file")
    magic, found = _KEY_HEADER.unpack_from(raw)
    if magic != KEY_MAGIC or found != kind:
        raise ValidationError(f"{path} is not a {'public' if kind == _KIND_PUBLIC else 'secret'} key file")
    params, rest = HeParams.read_from(raw[_KEY_HEADER.size:])
    fingerprint, rest = rest[:DIGEST_BYTES], rest[DIGEST_BYTES:]
    (length,) = _LEN.unpack_from(rest)
    data = rest[_LEN.size:]
    if len(data) != length:
        raise ValidationError(f"{path} is truncated")
    return params, fingerprint, data


def save_keys(keys: KeyPair, directory) -> Path:
    """Write ``public.key`` and ``secret.key`` (mode 0600) into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    pk, sk = keys.public_key, keys.secret_key
    (directory / PUBLIC_KEY_FILE).write_bytes(_encode_key(_KIND_PUBLIC, pk.params, pk.fingerprint, pk.data))
    secret_path = directory / SECRET_KEY_FILE
    secret_path.write_bytes(_encode_key(_KIND_SECRET, sk.params, sk.public_fingerprint, sk.data))
    secret_path.chmod(0o600)
    logger.info("Keys written", extra={"directory": str(directory), "backend": pk.params.backend.value})
    return directory


def load_public_key(directory) -> PublicKey:
    path = Path(directory) / PUBLIC_KEY_FILE
    if not path.exists():
        raise ValidationError(f"no public key at {path}")
    params, fingerprint, data = _decode_key(path.read_bytes(), _KIND_PUBLIC, path)
    pk = PublicKey(params=params, data=data)
    if pk.fingerprint != fingerprint:
        raise ValidationError(f"{path} fingerprint does not match its contents")
    return pk


def load_keys(directory) -> KeyPair:
    pk = load_public_key(directory)
    path = Path(directory) / SECRET_KEY_FILE
    if not path.exists():
        raise ValidationError(f"no secret key at {path}")
    params, fingerprint, data = _decode_key(path.read_bytes(), _KIND_SECRET, path)
    if params != pk.params or fingerprint != pk.fingerprint:
        raise ValidationError(f"secret key in {directory} does not belong to its public key")
    return KeyPair(public_key=pk, secret_key=SecretKey(params=params, data=data, public_fingerprint=fingerprint))


def build_epoch_config(
    epoch_id: int,
    pk: PublicKey,
    n_bits: int = 128,
    error_ratio: float = 0.25,
    d: int = 128,
    m: int = None,
    k: int = None,
    plane_seed: Optional[int] = None,
    bloom_seed: Optional[int] = None,
    duration: int = None,
) -> EpochConfig:
    """
    Assemble an epoch announcement. Seeds not given are drawn fresh.

    The selected code is resolved eagerly so an unreachable error ratio fails
    here instead of at the cameras.
    """
    cfg = EpochConfig(
        epoch_id=epoch_id,
        plane_seed=secrets.randbits(64) if plane_seed is None else plane_seed,
        bloom_seed=secrets.randbits(64) if bloom_seed is None else bloom_seed,
        public_key=pk,
        n_bits=n_bits,
        d=d,
        error_ratio=error_ratio,
        m=m or config.BLOOM_M,
        k=k or config.BLOOM_K,
        duration=duration or config.EPOCH_SECONDS,
    )
    cfg.code()
    return cfg


def linked_epoch_config(previous: EpochConfig, epoch_id: int, pk: PublicKey) -> EpochConfig:
    """
    Announcement for a later epoch whose filters can be compared with ``previous``.

    Raises:
        ParameterMismatchError: ``previous`` was announced under another key
        ValidationError: epoch_id not after the previous epoch
    """
    if previous.public_key.fingerprint != pk.fingerprint:
        raise ParameterMismatchError(f"epoch {previous.epoch_id} was announced under another public key")
    if epoch_id <= previous.epoch_id:
        raise ValidationError(f"linked epoch {epoch_id} must come after epoch {previous.epoch_id}")
    return previous.with_epoch(epoch_id)


def client_footfall_estimate(sk: SecretKey, ct: Ciphertext, m: int, k: int) -> float:
    """Decrypt an encrypted popcount and apply the cardinality estimator."""
    return estimate_cardinality(m, k, he.decrypt_count(sk, ct))


def client_flow_estimate(
    sk: SecretKey,
    ct: Ciphertext,
    m: int,
    k: int,
    epoch_a: int = 0,
    epoch_b: Optional[int] = None,
    footfall_a: Optional[Ciphertext] = None,
    footfall_b: Optional[Ciphertext] = None,
) -> FlowEstimate:
    """
    Decrypt an encrypted AND-count into a flow estimate.

    When both footfall ciphertexts are supplied the estimate also carries the
    per-site footfalls and the inclusion-exclusion alternative.

    Raises:
        KeyMismatchError, DecryptionError, ParameterMismatchError: from decryption, unchanged
    """
    t = he.decrypt_count(sk, ct)
    estimate = FlowEstimate(
        epoch_id=epoch_a,
        epoch_b=epoch_a if epoch_b is None else epoch_b,
        t_intersection=t,
        estimated_flow=estimate_cardinality(m, k, t),
    )
    if footfall_a is not None and footfall_b is not None:
        t_a = he.decrypt_count(sk, footfall_a)
        t_b = he.decrypt_count(sk, footfall_b)
        estimate.footfall_a = estimate_cardinality(m, k, t_a)
        estimate.footfall_b = estimate_cardinality(m, k, t_b)
        estimate.flow_inclusion_exclusion = estimate_intersection_inclusion_exclusion(m, k, t_a, t_b, t)
    logger.info(
        "Flow estimated",
        extra={"epoch_a": estimate.epoch_id, "epoch_b": estimate.epoch_b, "t_intersection": t},
    )
    return estimate
