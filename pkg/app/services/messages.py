"""Payload codecs for each frame type."""

from typing import Dict, Tuple, Type, Union

from app.infra.error_handler import ProtocolError, error_code, error_from_code, HeadcountError
from app.infra.framing import Frame, MessageType
from app.models.epoch import (
    EpochConfig,
    EpochFetch,
    EpochSubmission,
    ErrorPayload,
    FlowQuery,
    FootfallQuery,
    HelperBatch,
)
from app.models.he import Ciphertext

FETCH_PAYLOAD_BYTES = 8

# Every payload type a frame may carry. The privacy tests walk these types.
PAYLOAD_TYPES: Dict[MessageType, Tuple[Type, ...]] = {
    MessageType.EPOCH_ANNOUNCE: (EpochConfig, EpochFetch),
    MessageType.HELPER_BATCH: (HelperBatch, EpochFetch),
    MessageType.EPOCH_SUBMISSION: (EpochSubmission,),
    MessageType.FLOW_QUERY: (FlowQuery,),
    MessageType.FLOW_RESPONSE: (Ciphertext,),
    MessageType.FOOTFALL_QUERY: (FootfallQuery,),
    MessageType.FOOTFALL_RESPONSE: (Ciphertext,),
    MessageType.ERROR: (ErrorPayload,),
}

_TYPE_OF: Dict[type, MessageType] = {
    EpochConfig: MessageType.EPOCH_ANNOUNCE,
    HelperBatch: MessageType.HELPER_BATCH,
    EpochSubmission: MessageType.EPOCH_SUBMISSION,
    FlowQuery: MessageType.FLOW_QUERY,
    FootfallQuery: MessageType.FOOTFALL_QUERY,
    ErrorPayload: MessageType.ERROR,
}

Message = Union[EpochConfig, HelperBatch, EpochSubmission, FlowQuery, FootfallQuery, ErrorPayload, EpochFetch, Ciphertext]


def to_frame(message: Message, msg_type: MessageType = None) -> Frame:
    """Frame a message; fetch requests and responses need an explicit msg_type."""
    if msg_type is None:
        msg_type = _TYPE_OF.get(type(message))
        if msg_type is None:
            raise ProtocolError(f"{type(message).__name__} needs an explicit message type")
    allowed = PAYLOAD_TYPES[msg_type]
    if not isinstance(message, allowed):
        raise ProtocolError(f"{type(message).__name__} cannot travel as {msg_type.name}")
    return Frame(msg_type, message.to_bytes())


def is_fetch(frame: Frame) -> bool:
    return (
        frame.msg_type in (MessageType.EPOCH_ANNOUNCE, MessageType.HELPER_BATCH)
        and len(frame.payload) == FETCH_PAYLOAD_BYTES
    )


def ack(msg_type: MessageType) -> Frame:
    return Frame(msg_type, b"")


def is_ack(frame: Frame, msg_type: MessageType) -> bool:
    return frame.msg_type == msg_type and not frame.payload


def error_frame(error: Exception) -> Frame:
    message = error.message if isinstance(error, HeadcountError) else "internal server error"
    return to_frame(ErrorPayload(error_code(error), message))


def raise_for_error(frame: Frame) -> Frame:
    """Re-raise a peer's Error frame as the matching local exception."""
    if frame.msg_type == MessageType.ERROR:
        payload = ErrorPayload.from_bytes(frame.payload)
        raise error_from_code(payload.code, payload.message)
    return frame


def parse_request(frame: Frame) -> Message:
    """Decode a request frame arriving at the server."""
    if is_fetch(frame):
        return EpochFetch.from_bytes(frame.payload)
    decoders = {
        MessageType.EPOCH_ANNOUNCE: EpochConfig.from_bytes,
        MessageType.HELPER_BATCH: HelperBatch.from_bytes,
        MessageType.EPOCH_SUBMISSION: EpochSubmission.from_bytes,
        MessageType.FLOW_QUERY: FlowQuery.from_bytes,
        MessageType.FOOTFALL_QUERY: FootfallQuery.from_bytes,
    }
    decoder = decoders.get(frame.msg_type)
    if decoder is None:
        raise ProtocolError(f"{frame.msg_type.name} is not a request")
    return decoder(frame.payload)


def expect(frame: Frame, msg_type: MessageType) -> Frame:
    raise_for_error(frame)
    if frame.msg_type != msg_type:
        raise ProtocolError(f"expected {msg_type.name}, got {frame.msg_type.name}")
    return frame
