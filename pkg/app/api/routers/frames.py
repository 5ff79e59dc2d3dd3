"""HDCT frames over HTTP: one frame in the body, one frame back."""

from fastapi import APIRouter, Depends, Request
from fastapi.concurrency import run_in_threadpool
from fastapi.responses import Response

from app.api.utils import get_dispatcher
from app.infra.config import config
from app.infra.error_handler import ProtocolError
from app.infra.framing import HEADER
from app.services.dispatcher import FrameDispatcher
from app.services.messages import error_frame

router = APIRouter()

FRAME_MEDIA_TYPE = "application/octet-stream"


@router.post("/frames", tags=["Frames"], response_class=Response)
async def post_frame(request: Request, dispatcher: FrameDispatcher = Depends(get_dispatcher)):
    """
    Dispatch one request frame.

    Protocol-level failures come back as an Error frame with HTTP 200; only
    transport problems use HTTP error statuses.
    """
    body = await request.body()
    if len(body) > HEADER.size + config.MAX_FRAME_BYTES:
        payload = error_frame(ProtocolError("frame exceeds the maximum payload size")).to_bytes()
        return Response(content=payload, media_type=FRAME_MEDIA_TYPE, status_code=413)
    response = await run_in_threadpool(dispatcher.handle_bytes, body)
    return Response(content=response, media_type=FRAME_MEDIA_TYPE)
