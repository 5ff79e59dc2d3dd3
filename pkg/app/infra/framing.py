"""
Wire framing over any reliable byte stream.

    magic "HDCT" | version:u8 = 1 | msg_type:u8 | payload_len:u32 LE | payload
"""

import socket
import struct
from dataclasses import dataclass, field
from enum import IntEnum

from app.infra.config import config
from app.infra.error_handler import ProtocolError, TransportError

MAGIC = b"HDCT"
VERSION = 1
HEADER = struct.Struct("<4sBBI")


class MessageType(IntEnum):
    EPOCH_ANNOUNCE = 1
    HELPER_BATCH = 2
    EPOCH_SUBMISSION = 3
    FLOW_QUERY = 4
    FLOW_RESPONSE = 5
    FOOTFALL_QUERY = 6
    FOOTFALL_RESPONSE = 7
    ERROR = 8


@dataclass(frozen=True)
class Frame:
    msg_type: MessageType
    payload: bytes = field(default=b"", repr=False)

    def to_bytes(self) -> bytes:
        return HEADER.pack(MAGIC, VERSION, int(self.msg_type), len(self.payload)) + self.payload


def parse_header(header: bytes, max_payload: int = None) -> tuple:
    """Validate a 10-byte header; returns (msg_type, payload_len)."""
    max_payload = config.MAX_FRAME_BYTES if max_payload is None else max_payload
    if len(header) != HEADER.size:
        raise ProtocolError(f"frame header must be {HEADER.size} bytes")
    magic, version, msg_type, length = HEADER.unpack(header)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ProtocolError(f"unsupported frame version {version}")
    try:
        msg_type = MessageType(msg_type)
    except ValueError:
        raise ProtocolError(f"unknown message type {msg_type}")
    if length > max_payload:
        raise ProtocolError(f"payload of {length} bytes exceeds limit {max_payload}")
    return msg_type, length


def decode_frame(data: bytes, max_payload: int = None) -> Frame:
    """Decode exactly one frame from a complete buffer."""
    if len(data) < HEADER.size:
        raise ProtocolError("truncated frame header")
    msg_type, length = parse_header(data[:HEADER.size], max_payload)
    payload = data[HEADER.size:]
    if len(payload) != length:
        raise ProtocolError(f"frame declares {length} payload bytes, carries {len(payload)}")
    return Frame(msg_type, payload)


def _recv_exact(sock: socket.socket, count: int) -> bytes:
    chunks = []
    remaining = count
    while remaining:
        chunk = sock.recv(min(remaining, 1 << 20))
        if not chunk:
            raise TransportError("connection closed mid-frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame_socket(sock: socket.socket, max_payload: int = None) -> Frame:
    msg_type, length = parse_header(_recv_exact(sock, HEADER.size), max_payload)
    return Frame(msg_type, _recv_exact(sock, length))

