"""Fuzzy-extractor records: public helper data and the derived identifier."""

import struct
from dataclasses import dataclass
from typing import Tuple

from app.infra.error_handler import ProtocolError, ValidationError
from app.models.bitstring import BitString

SALT_BYTES = 16
TAG_BYTES = 8
IDENTIFIER_BYTES = 32

_HEADER = struct.Struct("<HHH")


@dataclass(frozen=True)
class Identifier:
    """256-bit identifier derived from a reproduced hash."""
    value: bytes

    def __post_init__(self):
        if len(self.value) != IDENTIFIER_BYTES:
            raise ValidationError(f"identifier must be {IDENTIFIER_BYTES} bytes, got {len(self.value)}")

    def __repr__(self) -> str:
        return f"Identifier({self.value[:4].hex()}...)"


@dataclass(frozen=True)
class HelperData:
    """Public record published by the enrolling camera."""
    n: int
    k: int
    t: int
    offset: BitString
    salt: bytes
    tag: bytes

    def __post_init__(self):
        if len(self.offset) != self.n:
            raise ValidationError(f"offset has {len(self.offset)} bits, code length is {self.n}")
        if len(self.salt) != SALT_BYTES:
            raise ValidationError(f"salt must be {SALT_BYTES} bytes")
        if len(self.tag) != TAG_BYTES:
            raise ValidationError(f"tag must be {TAG_BYTES} bytes")

    @property
    def code_params(self) -> Tuple[int, int, int]:
        return self.n, self.k, self.t

    @staticmethod
    def encoded_size(n: int) -> int:
        return _HEADER.size + (n + 7) // 8 + SALT_BYTES + TAG_BYTES

    def to_bytes(self) -> bytes:
        return _HEADER.pack(self.n, self.k, self.t) + self.offset.to_bytes() + self.salt + self.tag

    @classmethod
    def from_bytes(cls, data: bytes) -> "HelperData":
        record, rest = cls.read_from(data)
        if rest:
            raise ProtocolError(f"{len(rest)} trailing bytes after helper data")
        return record

    @classmethod
    def read_from(cls, data: bytes) -> Tuple["HelperData", bytes]:
        """Parse one record from the front of ``data`` and return the remainder."""
        if len(data) < _HEADER.size:
            raise ProtocolError("truncated helper data header")
        n, k, t = _HEADER.unpack_from(data)
        size = cls.encoded_size(n)
        if len(data) < size:
            raise ProtocolError(f"truncated helper data: need {size} bytes, have {len(data)}")
        pos = _HEADER.size
        offset_len = (n + 7) // 8
        offset = BitString.from_bytes(data[pos:pos + offset_len], n)
        pos += offset_len
        salt = data[pos:pos + SALT_BYTES]
        pos += SALT_BYTES
        tag = data[pos:pos + TAG_BYTES]
        return cls(n=n, k=k, t=t, offset=offset, salt=salt, tag=tag), data[size:]
