"""Request middleware for tracking and request metrics."""

import logging
import time
import uuid
from typing import Callable

from fastapi import Request, Response
from starlette.middleware.base import BaseHTTPMiddleware

from app.infra.metrics import request_count, request_duration


class RequestIDMiddleware(BaseHTTPMiddleware):
    """Middleware to add request ID to all requests."""

    async def dispatch(self, request: Request, call_next: Callable) -> Response:
        request_id = request.headers.get("X-Request-ID") or str(uuid.uuid4())
        request.state.request_id = request_id

        response = await call_next(request)

        response.headers["X-Request-ID"] = request_id
        return response


class RequestLoggingMiddleware(BaseHTTPMiddleware):
    """Logs each request and records the HTTP request metrics."""

    async def dispatch(self, request: Request, call_next: Callable) -> Response:
        logger = logging.getLogger("app.request")
        request_id = getattr(request.state, "request_id", "unknown")
        path = request.url.path

        start_time = time.perf_counter()
        try:
            response = await call_next(request)
        except Exception as e:
            duration = time.perf_counter() - start_time
            request_count.labels(request.method, path, "500").inc()
            logger.error(
                "Request failed",
                extra={
                    "request_id": request_id,
                    "method": request.method,
                    "path": path,
                    "error": str(e),
                    "duration_ms": int(duration * 1000),
                },
                exc_info=True,
            )
            raise

        duration = time.perf_counter() - start_time
        route = request.scope.get("route")
        # Unmatched paths share one label
        label = route.path if route is not None else "unmatched"
        request_count.labels(request.method, label, str(response.status_code)).inc()
        request_duration.labels(request.method, label).observe(duration)
        logger.info(
            "Request completed",
            extra={
                "request_id": request_id,
                "method": request.method,
                "path": path,
                "status_code": response.status_code,
                "duration_ms": int(duration * 1000),
            },
        )
        response.headers["X-Response-Time-Ms"] = str(int(duration * 1000))
        return response
