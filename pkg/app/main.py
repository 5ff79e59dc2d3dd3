"""FastAPI application for the headcount server role."""

import uuid
from contextlib import asynccontextmanager
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from app.infra.config import config, parse_address
from app.infra.error_handler import ErrorCategory, HeadcountError
from app.infra.logging import app_logger
from app.infra.middleware import RequestIDMiddleware, RequestLoggingMiddleware
from app.infra.transport import start_frame_server
from app.services.dispatcher import FrameDispatcher
from app.services.server_store import EpochStore

_STATUS_BY_CATEGORY = {
    ErrorCategory.VALIDATION: 400,
    ErrorCategory.PROTOCOL: 400,
    ErrorCategory.NOT_FOUND: 404,
    ErrorCategory.CONFLICT: 409,
    ErrorCategory.REJECTED: 422,
}


def create_app(store: Optional[EpochStore] = None, frame_listen: Optional[str] = None) -> FastAPI:
    """
    Build the application.

    Args:
        store: Epoch store to serve; a new one over HEADCOUNT_STORE_URL when None
        frame_listen: HOST:PORT for the TCP frame server started with the app;
            no TCP listener when None
    """
    store = store or EpochStore()
    dispatcher = FrameDispatcher(store)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        """Lifespan context manager for startup and shutdown."""
        app_logger.info("Application starting up", extra={"env": config.APP_ENV})
        frame_server = None
        if frame_listen:
            host, port = parse_address(frame_listen)
            frame_server = await start_frame_server(dispatcher.handle_bytes, host, port)
            app.state.frame_server = frame_server

        yield

        app_logger.info("Application shutting down")
        if frame_server is not None:
            frame_server.close()
            await frame_server.wait_closed()
        store.engine.dispose()

    app = FastAPI(
        title="Headcount API",
        description="""
    Server role of a privacy-preserving crowd-flow counter.

    Cameras submit encrypted Bloom filters; the server evaluates flow and footfall
    queries on ciphertexts only. Protocol traffic uses HDCT frames, either on the
    TCP frame server or posted to `/frames`.
    """,
        version="1.0.0",
        lifespan=lifespan,
        tags_metadata=[
            {"name": "Frames", "description": "HDCT request/response frames over HTTP"},
            {"name": "Epochs", "description": "Stored submissions (metadata only)"},
            {"name": "Health", "description": "Health check and monitoring endpoints"},
        ],
    )
    app.state.store = store
    app.state.dispatcher = dispatcher

    app.add_middleware(RequestIDMiddleware)
    app.add_middleware(RequestLoggingMiddleware)

    from app.api.routers import epochs, frames, health

    app.include_router(frames.router)
    app.include_router(epochs.router)
    app.include_router(health.router)

    @app.exception_handler(HeadcountError)
    async def headcount_exception_handler(request: Request, exc: HeadcountError):
        """Map domain errors on JSON routes to HTTP statuses."""
        return JSONResponse(
            status_code=_STATUS_BY_CATEGORY.get(exc.category, 500),
            content={"detail": exc.message, "category": exc.category.value},
        )

    @app.exception_handler(Exception)
    async def general_exception_handler(request: Request, exc: Exception):
        """Handle all other exceptions."""
        error_id = str(uuid.uuid4())
        app_logger.error(f"Unhandled exception: {exc}", exc_info=True, extra={"error_id": error_id})
        return JSONResponse(
            status_code=500,
            content={"detail": f"Internal server error. Error ID: {error_id}"},
        )

    return app


app = create_app()


if __name__ == "__main__":
    import uvicorn

    uvicorn.run(
        create_app(frame_listen=config.LISTEN),
        host="0.0.0.0",
        port=8000,
        timeout_keep_alive=30,
        timeout_graceful_shutdown=30,
    )
