"""Typed request helpers over a frame transport, shared by the camera and client roles."""

import logging
from typing import Protocol

from app.infra.config import config
from app.infra.error_handler import ConflictError, ProtocolError, ValidationError
from app.infra.framing import Frame, MessageType
from app.models.epoch import (
    EpochConfig,
    EpochFetch,
    EpochSubmission,
    FlowQuery,
    FootfallQuery,
    HelperBatch,
    Site,
)
from app.models.he import Ciphertext
from app.services.messages import expect, is_ack, to_frame

logger = logging.getLogger(__name__)


class Transport(Protocol):
    last_attempts: int

    def request(self, frame: Frame) -> Frame: ...

    def close(self) -> None: ...


class ServerConnection:
    """
    One method per protocol round trip.

    Error frames from the server are re-raised locally as the exception class
    the server raised (ConflictError, NotFoundError, RejectedError, ...).
    """

    def __init__(self, transport: Transport):
        self.transport = transport

    def __enter__(self) -> "ServerConnection":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        self.transport.close()

    def _store(self, frame: Frame) -> None:
        """
        Send an insert-once request. A ConflictError that follows a transport
        retry means an earlier attempt was stored and only its reply was lost.
        """
        try:
            response = expect(self.transport.request(frame), frame.msg_type)
        except ConflictError:
            if getattr(self.transport, "last_attempts", 1) <= 1:
                raise
            logger.warning("Conflict after retry taken as stored", extra={"msg_type": frame.msg_type.name})
            return
        if not is_ack(response, frame.msg_type):
            raise ProtocolError(f"expected an acknowledgment for {frame.msg_type.name}")

    def _fetch(self, epoch_id: int, msg_type: MessageType) -> bytes:
        response = expect(self.transport.request(to_frame(EpochFetch(epoch_id), msg_type)), msg_type)
        return response.payload

    def announce(self, cfg: EpochConfig) -> None:
        self._store(to_frame(cfg))
        logger.info("Epoch announcement sent", extra={"epoch_id": cfg.epoch_id})

    def fetch_announcement(self, epoch_id: int) -> EpochConfig:
        return EpochConfig.from_bytes(self._fetch(epoch_id, MessageType.EPOCH_ANNOUNCE))

    def put_helpers(self, batch: HelperBatch) -> None:
        self._store(to_frame(batch))

    def fetch_helpers(self, epoch_id: int) -> HelperBatch:
        batch = HelperBatch.from_bytes(self._fetch(epoch_id, MessageType.HELPER_BATCH))
        if batch.epoch_id != epoch_id:
            raise ProtocolError(f"asked for helpers of epoch {epoch_id}, got epoch {batch.epoch_id}")
        return batch

    def submit(self, submission: EpochSubmission) -> None:
        self._store(to_frame(submission))
        logger.info(
            "Submission sent", extra={"epoch_id": submission.epoch_id, "site": submission.site.name}
        )

    def flow_query(self, epoch_a: int, epoch_b: int) -> Ciphertext:
        response = expect(self.transport.request(to_frame(FlowQuery(epoch_a, epoch_b))), MessageType.FLOW_RESPONSE)
        return Ciphertext.from_bytes(response.payload)

    def footfall_query(self, epoch_id: int, site: Site) -> Ciphertext:
        response = expect(
            self.transport.request(to_frame(FootfallQuery(epoch_id, Site.parse(site)))),
            MessageType.FOOTFALL_RESPONSE,
        )
        return Ciphertext.from_bytes(response.payload)


def open_connection(
    transport: str = None,
    server: str = None,
    http_url: str = None,
    store_url: str = None,
    dispatcher=None,
) -> ServerConnection:
    """
    Build a connection for the named transport.

    ``inproc`` runs a dispatcher in this process, over ``store_url`` unless a
    dispatcher is passed in.
    """
    from app.infra.transport import HttpTransport, InProcessTransport, TcpTransport

    kind = (transport or config.TRANSPORT).lower()
    if kind == "inproc":
        if dispatcher is None:
            from app.services.dispatcher import FrameDispatcher
            from app.services.server_store import EpochStore
            dispatcher = FrameDispatcher(EpochStore(url=store_url))
        return ServerConnection(InProcessTransport(dispatcher.handle_bytes))
    if kind == "tcp":
        return ServerConnection(TcpTransport(server))
    if kind == "http":
        return ServerConnection(HttpTransport(http_url))
    raise ValidationError(f"unknown transport {transport!r}; expected inproc, tcp or http")
