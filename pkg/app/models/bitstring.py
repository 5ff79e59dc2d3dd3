"""Fixed-length binary strings (SimHash codes, BCH codewords, helper offsets)."""

from typing import Iterable, Union

import numpy as np

from app.infra.error_handler import ProtocolError, ValidationError


class BitString:
    """
    Immutable sequence of bits backed by a read-only uint8 numpy array.

    Byte form packs bits big-endian (first bit is the most significant bit of the
    first byte) with zero padding. Text form is "<hex>/<length>".
    """

    __slots__ = ("_bits",)

    def __init__(self, bits: Union[np.ndarray, Iterable[int]]):
        arr = np.array(bits, dtype=np.uint8, copy=True).reshape(-1)
        if arr.size and arr.max() > 1:
            raise ValidationError("bit values must be 0 or 1")
        arr.setflags(write=False)
        self._bits = arr

    @classmethod
    def zeros(cls, length: int) -> "BitString":
        return cls(np.zeros(length, dtype=np.uint8))

    @classmethod
    def from_bytes(cls, data: bytes, length: int) -> "BitString":
        """Unpack ``length`` bits from big-endian packed bytes."""
        if len(data) != (length + 7) // 8:
            raise ValidationError(f"{len(data)} bytes cannot hold exactly {length} bits")
        unpacked = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
        if unpacked[length:].any():
            raise ProtocolError("non-zero padding bits after the last bit")
        return cls(unpacked[:length])

    @classmethod
    def from_hex(cls, text: str) -> "BitString":
        hex_part, _, length = text.partition("/")
        if not length:
            raise ValidationError(f"missing bit length in {text!r}")
        return cls.from_bytes(bytes.fromhex(hex_part), int(length))

    @property
    def bits(self) -> np.ndarray:
        return self._bits

    def __len__(self) -> int:
        return int(self._bits.size)

    def __getitem__(self, index: int) -> int:
        return int(self._bits[index])

    def __iter__(self):
        return (int(b) for b in self._bits)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BitString):
            return NotImplemented
        return len(self) == len(other) and bool(np.array_equal(self._bits, other._bits))

    def __hash__(self) -> int:
        return hash((len(self), self.to_bytes()))

    def __xor__(self, other: "BitString") -> "BitString":
        if len(self) != len(other):
            raise ValidationError(f"cannot xor {len(self)}-bit and {len(other)}-bit strings")
        return BitString(np.bitwise_xor(self._bits, other._bits))

    def weight(self) -> int:
        return int(np.count_nonzero(self._bits))

    def flip(self, positions: Iterable[int]) -> "BitString":
        """Return a copy with the given positions inverted."""
        arr = self._bits.copy()
        idx = np.fromiter(positions, dtype=np.int64)
        arr[idx] ^= 1
        return BitString(arr)

    def to_bytes(self) -> bytes:
        return np.packbits(self._bits).tobytes()

    def to_hex(self) -> str:
        return f"{self.to_bytes().hex()}/{len(self)}"

    def __str__(self) -> str:
        return self.to_hex()

    def __repr__(self) -> str:
        return f"BitString({self.to_hex()})"
