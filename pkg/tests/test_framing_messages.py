"""Tests for frame encoding and message codecs."""

import pytest

from app.infra.error_handler import (
    ConflictError,
    NotFoundError,
    ParseError,
    ProtocolError,
    TransportError,
    error_code,
    error_from_code,
)
from app.infra.framing import HEADER, MAGIC, Frame, MessageType, decode_frame, parse_header
from app.models.epoch import (
    EpochConfig,
    EpochFetch,
    EpochSubmission,
    ErrorPayload,
    FlowQuery,
    FootfallQuery,
    HelperBatch,
    Site,
)
from app.services import he
from app.services.messages import (
    ack,
    error_frame,
    expect,
    is_ack,
    is_fetch,
    parse_request,
    raise_for_error,
    to_frame,
)


class TestFraming:
    """Header layout and validation."""

    def test_header_layout(self):
        data = Frame(MessageType.FLOW_QUERY, b"abc").to_bytes()
        assert data[:4] == MAGIC
        assert data[4] == 1
        assert data[5] == 4
        assert data[6:10] == (3).to_bytes(4, "little")
        assert data[10:] == b"abc"
        assert HEADER.size == 10

    def test_decode(self):
        frame = decode_frame(Frame(MessageType.ERROR, b"xy").to_bytes())
        assert frame.msg_type == MessageType.ERROR
        assert frame.payload == b"xy"

    @pytest.mark.parametrize(
        "data",
        [
            b"XXXX\x01\x04\x00\x00\x00\x00",
            b"HDCT\x02\x04\x00\x00\x00\x00",
            b"HDCT\x01\x09\x00\x00\x00\x00",
            b"HDCT\x01\x04\x05\x00\x00\x00ab",
            b"HDCT\x01",
        ],
    )
    def test_malformed(self, data):
        with pytest.raises(ProtocolError):
            decode_frame(data)

    def test_payload_limit(self):
        header = HEADER.pack(MAGIC, 1, 4, 1000)
        with pytest.raises(ProtocolError):
            parse_header(header, max_payload=999)
        assert parse_header(header, max_payload=1000) == (MessageType.FLOW_QUERY, 1000)


class TestMessages:
    """Payload codecs and frame helpers."""

    def test_announcement_round_trip(self, epoch_config):
        frame = to_frame(epoch_config)
        assert frame.msg_type == MessageType.EPOCH_ANNOUNCE
        parsed = parse_request(decode_frame(frame.to_bytes()))
        assert parsed == epoch_config
        assert parsed.code().params == (127, 8, 31)

    def test_fetch_requests(self):
        frame = to_frame(EpochFetch(5), MessageType.HELPER_BATCH)
        assert is_fetch(frame)
        assert parse_request(frame) == EpochFetch(5)
        with pytest.raises(ProtocolError):
            to_frame(EpochFetch(5))

    def test_empty_helper_batch_is_not_a_fetch(self):
        frame = to_frame(HelperBatch(epoch_id=3, helpers=[]))
        assert not is_fetch(frame)
        assert parse_request(frame) == HelperBatch(epoch_id=3, helpers=[])

    def test_queries(self):
        assert parse_request(to_frame(FlowQuery(1, 2))) == FlowQuery(1, 2)
        assert parse_request(to_frame(FootfallQuery(4, Site.B))) == FootfallQuery(4, Site.B)

    def test_submission(self, emulated_keys):
        enc = he.encrypt_bits(emulated_keys.public_key, [0, 1] * 32)
        parsed = parse_request(to_frame(EpochSubmission(9, Site.A, enc)))
        assert parsed.epoch_id == 9
        assert parsed.site == Site.A
        assert parsed.encrypted_bloom.ciphertexts == enc.ciphertexts

    def test_wrong_message_type(self, emulated_keys):
        ct = he.encrypt_value(emulated_keys.public_key, 1)
        with pytest.raises(ProtocolError):
            to_frame(ct, MessageType.FLOW_QUERY)
        with pytest.raises(ProtocolError):
            parse_request(to_frame(ct, MessageType.FLOW_RESPONSE))

    def test_bad_payloads(self):
        with pytest.raises(ProtocolError):
            FlowQuery.from_bytes(b"\x00" * 15)
        with pytest.raises(ProtocolError):
            FootfallQuery.from_bytes(b"\x00" * 8 + b"\x07")
        with pytest.raises(ProtocolError):
            HelperBatch.from_bytes(b"\x00" * 8 + b"\x01\x00\x00\x00")

    def test_announcement_rejects_invalid_fields(self, epoch_config):
        data = bytearray(epoch_config.to_bytes())
        data[28:30] = (100).to_bytes(2, "little")
        with pytest.raises(ProtocolError):
            EpochConfig.from_bytes(bytes(data))

    def test_ack(self):
        frame = ack(MessageType.EPOCH_SUBMISSION)
        assert is_ack(frame, MessageType.EPOCH_SUBMISSION)
        assert not is_ack(frame, MessageType.HELPER_BATCH)
        assert expect(frame, MessageType.EPOCH_SUBMISSION) is frame
        with pytest.raises(ProtocolError):
            expect(frame, MessageType.FLOW_RESPONSE)


class TestErrorFrames:
    """Errors cross the wire with stable codes."""

    def test_round_trip(self):
        frame = error_frame(NotFoundError("no submission for epoch 3 site B"))
        with pytest.raises(NotFoundError) as exc_info:
            raise_for_error(frame)
        assert exc_info.value.message == "no submission for epoch 3 site B"

    def test_unexpected_exception(self):
        frame = error_frame(RuntimeError("secret detail"))
        payload = ErrorPayload.from_bytes(frame.payload)
        assert payload.code == 0
        assert "secret detail" not in payload.message

    def test_codes(self):
        assert error_code(ConflictError("x")) == 10
        assert error_code(ParseError("x", line=2)) == 2
        assert isinstance(error_from_code(14, "x"), TransportError)
        assert error_from_code(14, "x").retryable
        assert error_from_code(2, "bad").line is None
        assert type(error_from_code(999, "x")).__name__ == "HeadcountError"
