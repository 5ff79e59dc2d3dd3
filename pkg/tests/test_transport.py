"""Tests for the TCP frame server and client transport."""

import asyncio
import socket

import httpx
import pytest

from app.infra.error_handler import ConflictError, NotFoundError, ProtocolError, TransportError, error_code
from app.infra.framing import Frame, MessageType, decode_frame
from app.infra.transport import HttpTransport, TcpTransport, start_frame_server
from app.models.epoch import ErrorPayload
from app.services.connection import ServerConnection


@pytest.fixture
async def frame_server(dispatcher):
    server = await start_frame_server(dispatcher.handle_bytes, "127.0.0.1", 0)
    host, port = server.sockets[0].getsockname()[:2]
    yield f"{host}:{port}"
    server.close()
    await server.wait_closed()


class TestTcpTransport:
    """Frames over a persistent socket."""

    async def test_round_trips(self, frame_server, epoch_config):
        def exchange():
            with ServerConnection(TcpTransport(frame_server, timeout=10)) as conn:
                conn.announce(epoch_config)
                fetched = conn.fetch_announcement(epoch_config.epoch_id)
                try:
                    conn.fetch_helpers(epoch_config.epoch_id)
                except NotFoundError as e:
                    return fetched, e
            return fetched, None

        fetched, error = await asyncio.to_thread(exchange)
        assert fetched == epoch_config
        assert isinstance(error, NotFoundError)

    async def test_malformed_frame_answered_with_error(self, frame_server):
        def send_garbage():
            host, port = frame_server.rsplit(":", 1)
            with socket.create_connection((host, int(port)), timeout=10) as sock:
                sock.sendall(b"HDCT\x01\x04\x01\x00\x00\x00\x00")
                return sock.recv(1024)

        response = await asyncio.to_thread(send_garbage)
        assert response[:4] == b"HDCT"
        assert response[5] == 8

    def test_connection_refused(self):
        transport = TcpTransport("127.0.0.1:1", timeout=1, max_retries=0)
        with pytest.raises(TransportError):
            transport.request(Frame(MessageType.FLOW_QUERY, b"\x00" * 16))

    async def test_bad_header_answered_before_close(self, frame_server):
        def send_bad_magic():
            host, port = frame_server.rsplit(":", 1)
            with socket.create_connection((host, int(port)), timeout=10) as sock:
                sock.sendall(b"XXXX\x01\x04\x00\x00\x00\x00")
                chunks = []
                while True:
                    chunk = sock.recv(1024)
                    if not chunk:
                        return b"".join(chunks)
                    chunks.append(chunk)

        response = await asyncio.to_thread(send_bad_magic)
        frame = decode_frame(response)
        assert frame.msg_type == MessageType.ERROR
        assert ErrorPayload.from_bytes(frame.payload).code == error_code(ProtocolError("x"))


class TestRetries:
    """Insert-once requests whose reply is lost."""

    @staticmethod
    def lossy_http(dispatcher, lose: int):
        lost = []

        def handler(request):
            response = dispatcher.handle_bytes(request.content)
            if len(lost) < lose:
                lost.append(request.content)
                raise httpx.ReadError("reply lost", request=request)
            return httpx.Response(200, content=response)

        client = httpx.Client(transport=httpx.MockTransport(handler), base_url="http://headcount.test")
        return HttpTransport("http://headcount.test", client=client)

    def test_conflict_after_retry_is_stored(self, dispatcher, epoch_config):
        transport = self.lossy_http(dispatcher, lose=1)
        with ServerConnection(transport) as conn:
            conn.announce(epoch_config)
            assert transport.last_attempts == 2
            assert conn.fetch_announcement(epoch_config.epoch_id) == epoch_config
            assert transport.last_attempts == 1

    def test_conflict_without_retry_raises(self, dispatcher, epoch_config):
        with ServerConnection(self.lossy_http(dispatcher, lose=0)) as conn:
            conn.announce(epoch_config)
            with pytest.raises(ConflictError):
                conn.announce(epoch_config)
