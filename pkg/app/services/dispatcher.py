"""Maps request frames to server-store operations."""

import logging

from app.infra.error_handler import HeadcountError, ProtocolError
from app.infra.framing import Frame, MessageType, decode_frame
from app.infra.metrics import frames_total
from app.models.epoch import EpochConfig, EpochFetch, EpochSubmission, FlowQuery, FootfallQuery, HelperBatch
from app.services.messages import ack, error_frame, parse_request, to_frame
from app.services.server_store import (
    EpochStore,
    server_flow_query,
    server_footfall_query,
    server_submit,
)

logger = logging.getLogger(__name__)


class FrameDispatcher:
    """One request frame in, one response frame out. Errors become Error frames."""

    def __init__(self, store: EpochStore):
        self.store = store

    def handle_bytes(self, data: bytes) -> bytes:
        try:
            frame = decode_frame(data)
        except ProtocolError as e:
            frames_total.labels("invalid", "in").inc()
            return error_frame(e).to_bytes()
        return self.handle(frame).to_bytes()

    def handle(self, frame: Frame) -> Frame:
        frames_total.labels(frame.msg_type.name, "in").inc()
        try:
            response = self._dispatch(frame)
        except HeadcountError as e:
            logger.info(
                "Request refused",
                extra={"msg_type": frame.msg_type.name, "error": type(e).__name__, "detail": e.message},
            )
            response = error_frame(e)
        except Exception as e:
            logger.error("Request failed", extra={"msg_type": frame.msg_type.name}, exc_info=True)
            response = error_frame(e)
        frames_total.labels(response.msg_type.name, "out").inc()
        return response

    def _dispatch(self, frame: Frame) -> Frame:
        request = parse_request(frame)

        if isinstance(request, EpochFetch):
            if frame.msg_type == MessageType.EPOCH_ANNOUNCE:
                return to_frame(self.store.get_announcement(request.epoch_id))
            return to_frame(self.store.get_helper_batch(request.epoch_id))

        if isinstance(request, EpochConfig):
            self.store.register_announcement(request)
            return ack(MessageType.EPOCH_ANNOUNCE)

        if isinstance(request, HelperBatch):
            self.store.put_helper_batch(request)
            return ack(MessageType.HELPER_BATCH)

        if isinstance(request, EpochSubmission):
            server_submit(self.store, request)
            return ack(MessageType.EPOCH_SUBMISSION)

        if isinstance(request, FlowQuery):
            ct = server_flow_query(self.store, request.epoch_a, request.epoch_b)
            return to_frame(ct, MessageType.FLOW_RESPONSE)

        if isinstance(request, FootfallQuery):
            ct = server_footfall_query(self.store, request.epoch_id, request.site)
            return to_frame(ct, MessageType.FOOTFALL_RESPONSE)

        raise ProtocolError(f"unhandled request {frame.msg_type.name}")
