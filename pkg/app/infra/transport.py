"""
Request/response transports for HDCT frames.

A transport sends one request frame and returns the server's response frame.
The in-process variant still goes through the byte codec so every test
exercises the wire format.
"""

import asyncio
import logging
import socket
import threading
from typing import Callable, List, Optional

import httpx

from app.infra.config import config, parse_address
from app.infra.error_handler import ProtocolError, TransportError, retry_with_backoff
from app.infra.framing import HEADER, Frame, decode_frame, parse_header, read_frame_socket
from app.infra.metrics import open_connections

logger = logging.getLogger(__name__)

FrameHandler = Callable[[bytes], bytes]


class InProcessTransport:
    """Calls the server handler directly; optionally records every frame both ways."""

    last_attempts = 1

    def __init__(self, handler: FrameHandler, record: bool = False):
        self.handler = handler
        self.recorded: Optional[List[bytes]] = [] if record else None

    def request(self, frame: Frame) -> Frame:
        data = frame.to_bytes()
        response = self.handler(data)
        if self.recorded is not None:
            self.recorded.extend([data, response])
        return decode_frame(response)

    def close(self) -> None:
        pass


class TcpTransport:
    """Persistent socket; reconnects with backoff on connection failures."""

    def __init__(self, address: str = None, timeout: float = None, max_retries: int = 3):
        self.host, self.port = parse_address(address or config.SERVER)
        self.timeout = timeout or config.IO_TIMEOUT
        self.max_retries = max_retries
        self._sock: Optional[socket.socket] = None
        self._lock = threading.Lock()
        self.last_attempts = 0

    def _connect(self) -> socket.socket:
        if self._sock is None:
            try:
                self._sock = socket.create_connection((self.host, self.port), timeout=self.timeout)
            except OSError as e:
                raise TransportError(f"cannot connect to {self.host}:{self.port}: {e}")
        return self._sock

    def _round_trip(self, data: bytes) -> Frame:
        sock = self._connect()
        try:
            sock.sendall(data)
            return read_frame_socket(sock)
        except (OSError, TransportError) as e:
            self.close()
            if isinstance(e, TransportError):
                raise
            raise TransportError(f"socket error talking to {self.host}:{self.port}: {e}")

    def request(self, frame: Frame) -> Frame:
        data = frame.to_bytes()
        with self._lock:
            self.last_attempts = 1
            return retry_with_backoff(
                lambda: self._round_trip(data), max_retries=self.max_retries, on_retry=self._on_retry
            )

    def _on_retry(self, error: Exception, attempt: int) -> None:
        self.last_attempts += 1
        logger.warning("Retrying frame request", extra={"attempt": attempt, "error": str(error)})

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            finally:
                self._sock = None


class HttpTransport:
    """POSTs frames to the FastAPI ``/frames`` endpoint."""

    def __init__(self, base_url: str = None, timeout: float = None, max_retries: int = 3,
                 client: Optional[httpx.Client] = None):
        self.base_url = (base_url or config.HTTP_URL).rstrip("/")
        self.max_retries = max_retries
        self._client = client or httpx.Client(base_url=self.base_url, timeout=timeout or config.IO_TIMEOUT)
        self.last_attempts = 0

    def _post(self, data: bytes) -> Frame:
        try:
            response = self._client.post(
                "/frames", content=data, headers={"Content-Type": "application/octet-stream"}
            )
        except httpx.TransportError as e:
            raise TransportError(f"HTTP transport to {self.base_url} failed: {e}")
        if response.status_code >= 500:
            raise TransportError(f"server returned HTTP {response.status_code}")
        return decode_frame(response.content)

    def request(self, frame: Frame) -> Frame:
        data = frame.to_bytes()
        self.last_attempts = 1
        return retry_with_backoff(lambda: self._post(data), max_retries=self.max_retries, on_retry=self._on_retry)

    def _on_retry(self, error: Exception, attempt: int) -> None:
        self.last_attempts += 1
        logger.warning("Retrying HTTP frame request", extra={"attempt": attempt, "error": str(error)})

    def close(self) -> None:
        self._client.close()


async def _serve_connection(handler: FrameHandler, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
    peer = writer.get_extra_info("peername")
    open_connections.inc()
    try:
        while True:
            try:
                header = await reader.readexactly(HEADER.size)
            except asyncio.IncompleteReadError:
                break
            try:
                _, length = parse_header(header)
            except ProtocolError as e:
                # The stream cannot be resynchronized; the handler answers the bad header with an Error frame
                logger.warning("Malformed frame header", extra={"peer": str(peer), "error": e.message})
                writer.write(await asyncio.to_thread(handler, header))
                await writer.drain()
                break
            payload = await reader.readexactly(length)
            # HE evaluation is CPU-bound; keep the event loop responsive
            response = await asyncio.to_thread(handler, header + payload)
            writer.write(response)
            await writer.drain()
    except Exception as e:
        logger.warning("Connection closed on error", extra={"peer": str(peer), "error": str(e)})
    finally:
        open_connections.dec()
        writer.close()
        try:
            await writer.wait_closed()
        except Exception:
            pass


async def start_frame_server(handler: FrameHandler, host: str, port: int) -> asyncio.AbstractServer:
    """Start the TCP frame server; port 0 picks a free port."""
    server = await asyncio.start_server(
        lambda r, w: _serve_connection(handler, r, w), host=host, port=port
    )
    sockname = server.sockets[0].getsockname() if server.sockets else (host, port)
    logger.info("Frame server listening", extra={"host": sockname[0], "port": sockname[1]})
    return server
