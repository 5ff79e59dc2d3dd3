"""Tests for the HTTP surface: frames, epochs and health endpoints."""

import pytest
from fastapi.testclient import TestClient

from app.infra.config import config
from app.infra.framing import Frame, MessageType, decode_frame
from app.infra.transport import HttpTransport
from app.main import app, create_app
from app.models.epoch import EpochSubmission, ErrorPayload, Site
from app.services import he
from app.services.connection import ServerConnection
from app.services.server_store import EpochStore

client = TestClient(app)


@pytest.fixture
def api_store():
    return EpochStore(url="sqlite://")


@pytest.fixture
def api_client(api_store):
    with TestClient(create_app(store=api_store)) as test_client:
        yield test_client


class TestHealth:
    """Health and metrics endpoints."""

    def test_health(self):
        response = client.get("/health")
        assert response.status_code == 200
        assert response.json()["service"] == "headcount"

    def test_probes(self):
        assert client.get("/health/live").json() == {"status": "alive"}
        assert client.get("/health/ready").json() == {"status": "ready"}

    def test_not_ready(self, api_store, monkeypatch):
        monkeypatch.setattr(api_store, "is_ready", lambda: False)
        with TestClient(create_app(store=api_store)) as test_client:
            response = test_client.get("/health/ready")
        assert response.status_code == 503

    def test_metrics(self):
        client.get("/health")
        response = client.get("/metrics")
        assert response.status_code == 200
        assert "headcount_http_requests_total" in response.text

    def test_request_id_header(self):
        response = client.get("/health", headers={"X-Request-ID": "abc-123"})
        assert response.headers["X-Request-ID"] == "abc-123"


class TestFramesEndpoint:
    """HDCT frames posted over HTTP."""

    def test_error_frame_for_garbage(self, api_client):
        response = api_client.post("/frames", content=b"garbage-bytes")
        assert response.status_code == 200
        assert response.headers["content-type"] == "application/octet-stream"
        frame = decode_frame(response.content)
        assert frame.msg_type == MessageType.ERROR
        assert ErrorPayload.from_bytes(frame.payload).code == 13

    def test_oversized_body(self, api_client, monkeypatch):
        monkeypatch.setattr(config, "MAX_FRAME_BYTES", 16)
        body = Frame(MessageType.FLOW_QUERY, b"\x00" * 32).to_bytes()
        response = api_client.post("/frames", content=body)
        assert response.status_code == 413
        assert decode_frame(response.content, max_payload=1024).msg_type == MessageType.ERROR

    def test_protocol_over_http(self, api_client, epoch_config, emulated_keys):
        """A full announce/submit/query exchange through HttpTransport."""
        pk, sk = emulated_keys.public_key, emulated_keys.secret_key
        conn = ServerConnection(HttpTransport(client=api_client))
        conn.announce(epoch_config)
        assert conn.fetch_announcement(1) == epoch_config
        bits = [1, 0, 0, 1] * 1024
        conn.submit(EpochSubmission(1, Site.A, he.encrypt_bits(pk, bits)))
        conn.submit(EpochSubmission(1, Site.B, he.encrypt_bits(pk, bits)))
        assert he.decrypt_count(sk, conn.flow_query(1, 1)) == 2048

        listing = api_client.get("/epochs").json()
        assert listing["count"] == 2
        assert [item["site"] for item in listing["items"]] == ["A", "B"]
        assert "payload" not in listing["items"][0]
