"""Epoch-level protocol records and their canonical byte encodings."""

import struct
from dataclasses import dataclass, field
from enum import IntEnum
from typing import List, Optional

from pydantic import BaseModel, Field

from app.infra.error_handler import ParameterMismatchError, ProtocolError, ValidationError
from app.models.he import EncryptedBloom, HeParams, PublicKey
from app.models.helper import SALT_BYTES, HelperData

U64_MAX = 2**64 - 1
EPOCH_ID_MAX = 2**63 - 1


class Site(IntEnum):
    A = 0
    B = 1

    @classmethod
    def parse(cls, value) -> "Site":
        if isinstance(value, Site):
            return value
        if isinstance(value, str):
            try:
                return cls[value.strip().upper()]
            except KeyError:
                raise ValidationError(f"unknown site {value!r}; expected A or B")
        try:
            return cls(value)
        except ValueError:
            raise ValidationError(f"unknown site {value!r}")


_ANNOUNCE = struct.Struct("<QIQQHHHIB")
_LEN = struct.Struct("<I")
_EPOCH = struct.Struct("<Q")


@dataclass(frozen=True)
class EpochConfig:
    """Everything both cameras of one epoch must agree on, plus the client's public key."""
    epoch_id: int
    plane_seed: int
    bloom_seed: int
    public_key: PublicKey = field(repr=False)
    n_bits: int = 128
    d: int = 128
    error_ratio: float = 0.25
    m: int = 4096
    k: int = 3
    duration: int = 300

    def __post_init__(self):
        if not 0 <= self.epoch_id <= EPOCH_ID_MAX:
            raise ValidationError(f"epoch_id must be in [0, {EPOCH_ID_MAX}]")
        for name in ("plane_seed", "bloom_seed"):
            if not 0 <= getattr(self, name) <= U64_MAX:
                raise ValidationError(f"{name} must be a 64-bit unsigned integer")
        if self.n_bits not in (64, 128, 256):
            raise ValidationError(f"n_bits must be 64, 128 or 256, got {self.n_bits}")
        if not 0.0 < self.error_ratio < 0.5:
            raise ValidationError("error ratio must be in (0, 0.5)")
        if self.d < 2:
            raise ValidationError("embedding dimension must be >= 2")
        if self.m < 8 or self.k < 1 or self.k > 255:
            raise ValidationError("bloom parameters need m >= 8 and 1 <= k <= 255")
        if self.m > self.he_params.max_filter_bits:
            raise ValidationError(f"m = {self.m} exceeds what the plaintext modulus can count")
        if self.duration < 1:
            raise ValidationError("epoch duration must be positive")
        # Canonical ratio is the per-mille value carried on the wire
        object.__setattr__(self, "error_ratio", round(self.error_ratio * 1000) / 1000)

    @property
    def he_params(self) -> HeParams:
        return self.public_key.params

    @property
    def params_digest(self) -> bytes:
        return self.he_params.digest()

    def code(self):
        from app.services.bch import select_code
        return select_code(self.n_bits, self.error_ratio)

    def with_epoch(self, epoch_id: int) -> "EpochConfig":
        """Same deployment parameters for another epoch."""
        return EpochConfig(
            epoch_id=epoch_id,
            plane_seed=self.plane_seed,
            bloom_seed=self.bloom_seed,
            public_key=self.public_key,
            n_bits=self.n_bits,
            d=self.d,
            error_ratio=self.error_ratio,
            m=self.m,
            k=self.k,
            duration=self.duration,
        )

    def linkage(self) -> tuple:
        """Fields two epochs must share for their filters to be compared."""
        return (
            self.n_bits, self.d, self.error_ratio, self.m, self.k,
            self.plane_seed, self.bloom_seed, self.params_digest, self.public_key.fingerprint,
        )

    def check_linkable(self, other: "EpochConfig") -> None:
        """
        Raise ParameterMismatchError unless identifiers of ``other`` can be
        compared with identifiers of this epoch.
        """
        names = ("n_bits", "d", "error_ratio", "m", "k", "plane_seed", "bloom_seed", "params_digest", "public_key")
        differing = [name for name, x, y in zip(names, self.linkage(), other.linkage()) if x != y]
        if differing:
            raise ParameterMismatchError(
                f"epochs {self.epoch_id} and {other.epoch_id} differ in {', '.join(differing)}"
            )

    def to_bytes(self) -> bytes:
        header = _ANNOUNCE.pack(
            self.epoch_id,
            self.duration,
            self.plane_seed,
            self.bloom_seed,
            self.n_bits,
            self.d,
            round(self.error_ratio * 1000),
            self.m,
            self.k,
        )
        pk = self.public_key.data
        return header + self.he_params.to_bytes() + _LEN.pack(len(pk)) + pk

    @classmethod
    def from_bytes(cls, data: bytes) -> "EpochConfig":
        if len(data) < _ANNOUNCE.size:
            raise ProtocolError("truncated epoch announcement")
        epoch_id, duration, plane_seed, bloom_seed, n_bits, d, permille, m, k = _ANNOUNCE.unpack_from(data)
        params, rest = HeParams.read_from(data[_ANNOUNCE.size:])
        if len(rest) < _LEN.size:
            raise ProtocolError("truncated public key length")
        (pk_len,) = _LEN.unpack_from(rest)
        pk = rest[_LEN.size:]
        if len(pk) != pk_len:
            raise ProtocolError(f"public key has {len(pk)} bytes, header says {pk_len}")
        try:
            return cls(
                epoch_id=epoch_id,
                plane_seed=plane_seed,
                bloom_seed=bloom_seed,
                public_key=PublicKey(params=params, data=pk),
                n_bits=n_bits,
                d=d,
                error_ratio=permille / 1000,
                m=m,
                k=k,
                duration=duration,
            )
        except ValidationError as e:
            raise ProtocolError(f"invalid epoch announcement: {e.message}")


@dataclass(frozen=True)
class HelperBatch:
    """Helper records of one epoch at site A, in shuffled order, without labels."""
    epoch_id: int
    helpers: List[HelperData] = field(repr=False)

    def to_bytes(self) -> bytes:
        return _EPOCH.pack(self.epoch_id) + _LEN.pack(len(self.helpers)) + b"".join(
            h.to_bytes() for h in self.helpers
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "HelperBatch":
        if len(data) < _EPOCH.size + _LEN.size:
            raise ProtocolError("truncated helper batch")
        (epoch_id,) = _EPOCH.unpack_from(data)
        (count,) = _LEN.unpack_from(data, _EPOCH.size)
        rest = data[_EPOCH.size + _LEN.size:]
        helpers = []
        for _ in range(count):
            try:
                helper, rest = HelperData.read_from(rest)
            except ValidationError as e:
                raise ProtocolError(f"invalid helper record: {e.message}")
            helpers.append(helper)
        if rest:
            raise ProtocolError(f"{len(rest)} trailing bytes after helper batch")
        return cls(epoch_id=epoch_id, helpers=helpers)


@dataclass(frozen=True)
class EpochSubmission:
    """One camera's encrypted filter for one epoch."""
    epoch_id: int
    site: Site
    encrypted_bloom: EncryptedBloom = field(repr=False)

    def to_bytes(self) -> bytes:
        return _EPOCH.pack(self.epoch_id) + bytes([int(self.site)]) + self.encrypted_bloom.to_bytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "EpochSubmission":
        if len(data) < _EPOCH.size + 1:
            raise ProtocolError("truncated submission")
        (epoch_id,) = _EPOCH.unpack_from(data)
        try:
            site = Site(data[_EPOCH.size])
        except ValueError:
            raise ProtocolError(f"unknown site byte {data[_EPOCH.size]}")
        return cls(epoch_id, site, EncryptedBloom.from_bytes(data[_EPOCH.size + 1:]))


_FLOW_QUERY = struct.Struct("<QQ")
_FOOTFALL_QUERY = struct.Struct("<QB")


@dataclass(frozen=True)
class EpochFetch:
    """Fetch request for a stored announcement or helper batch."""
    epoch_id: int

    def to_bytes(self) -> bytes:
        return _EPOCH.pack(self.epoch_id)

    @classmethod
    def from_bytes(cls, data: bytes) -> "EpochFetch":
        if len(data) != _EPOCH.size:
            raise ProtocolError("fetch request must be exactly 8 bytes")
        return cls(_EPOCH.unpack(data)[0])


@dataclass(frozen=True)
class FlowQuery:
    """Pairs the site-A filter of epoch_a with the site-B filter of epoch_b."""
    epoch_a: int
    epoch_b: int

    def to_bytes(self) -> bytes:
        return _FLOW_QUERY.pack(self.epoch_a, self.epoch_b)

    @classmethod
    def from_bytes(cls, data: bytes) -> "FlowQuery":
        if len(data) != _FLOW_QUERY.size:
            raise ProtocolError("flow query must be exactly 16 bytes")
        return cls(*_FLOW_QUERY.unpack(data))


@dataclass(frozen=True)
class FootfallQuery:
    epoch_id: int
    site: Site

    def to_bytes(self) -> bytes:
        return _FOOTFALL_QUERY.pack(self.epoch_id, int(self.site))

    @classmethod
    def from_bytes(cls, data: bytes) -> "FootfallQuery":
        if len(data) != _FOOTFALL_QUERY.size:
            raise ProtocolError("footfall query must be exactly 9 bytes")
        epoch_id, site = _FOOTFALL_QUERY.unpack(data)
        try:
            return cls(epoch_id, Site(site))
        except ValueError:
            raise ProtocolError(f"unknown site byte {site}")


_ERROR = struct.Struct("<HI")


@dataclass(frozen=True)
class ErrorPayload:
    code: int
    message: str

    def to_bytes(self) -> bytes:
        text = self.message.encode("utf-8")
        return _ERROR.pack(self.code, len(text)) + text

    @classmethod
    def from_bytes(cls, data: bytes) -> "ErrorPayload":
        if len(data) < _ERROR.size:
            raise ProtocolError("truncated error payload")
        code, length = _ERROR.unpack_from(data)
        text = data[_ERROR.size:]
        if len(text) != length:
            raise ProtocolError("error message length mismatch")
        return cls(code, text.decode("utf-8", errors="replace"))


@dataclass
class TrackOutcome:
    """Camera-B decision for one track (evaluation builds only)."""
    track_index: int
    helper_index: Optional[int]
    corrected_bits: Optional[int]
    candidates: int


@dataclass
class MatchStats:
    outcomes: List[TrackOutcome] = field(default_factory=list)

    @property
    def matched(self) -> int:
        return sum(1 for o in self.outcomes if o.helper_index is not None)

    @property
    def enrolled_locally(self) -> int:
        return sum(1 for o in self.outcomes if o.helper_index is None)


@dataclass
class LocalStats:
    """Counts a camera may report about its own epoch."""
    tracks: int
    bits_set: int
    code: str


class FlowEstimate(BaseModel):
    """Client-side result of a flow query."""
    epoch_id: int = Field(..., description="Epoch of the site-A filter")
    epoch_b: int = Field(..., description="Epoch of the site-B filter")
    t_intersection: int = Field(..., ge=0)
    estimated_flow: float = Field(..., ge=0)
    footfall_a: Optional[float] = None
    footfall_b: Optional[float] = None
    flow_inclusion_exclusion: Optional[float] = Field(
        None, description="Alternative estimate c(A) + c(B) - c(A or B)"
    )


class CameraRunConfig(BaseModel):
    """JSON configuration of one camera invocation."""
    epoch_id: int = Field(..., ge=0, le=EPOCH_ID_MAX)
    embeddings: str = Field(..., description="CSV of this camera's observations; identity_id is the track id")
    seed: Optional[int] = Field(None, ge=0, lt=2**64, description="Fixed randomness; fresh entropy when omitted")
    stable_salt: Optional[str] = Field(
        None, description="Hex salt reused across epochs (32 hex chars); identifiers become linkable"
    )
    keys_dir: Optional[str] = Field(None, description="Pin the announced public key to the one stored here")
    helper_epoch: Optional[int] = Field(
        None, ge=0, le=EPOCH_ID_MAX,
        description="Site B only: earlier linked epoch whose site-A helper data to reproduce against",
    )

    def stable_salt_bytes(self) -> Optional[bytes]:
        if self.stable_salt is None:
            return None
        try:
            salt = bytes.fromhex(self.stable_salt)
        except ValueError:
            raise ValidationError("stable_salt is not valid hex")
        if len(salt) != SALT_BYTES:
            raise ValidationError(f"stable_salt must be {SALT_BYTES} bytes")
        return salt
