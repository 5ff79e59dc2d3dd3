"""Shared dependencies for API routers."""

from fastapi import Request

from app.services.dispatcher import FrameDispatcher
from app.services.server_store import EpochStore


def get_store(request: Request) -> EpochStore:
    """The application's epoch store (set up by create_app)."""
    return request.app.state.store


def get_dispatcher(request: Request) -> FrameDispatcher:
    return request.app.state.dispatcher
