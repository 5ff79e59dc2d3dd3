"""Health check API router."""

from fastapi import APIRouter, Depends
from fastapi.responses import JSONResponse

from app.api.models import HealthResponse, ProbeResponse
from app.api.utils import get_store
from app.infra.metrics import get_metrics_response
from app.services.server_store import EpochStore

router = APIRouter()


@router.get("/health", tags=["Health"], response_model=HealthResponse)
async def health_check():
    """Combined health check endpoint."""
    return {
        "status": "ok",
        "service": "headcount",
        "version": "1.0.0",
    }


@router.get("/health/live", tags=["Health"], response_model=ProbeResponse)
async def liveness_probe():
    """Liveness probe - indicates if the process is running."""
    return {"status": "alive"}


@router.get("/health/ready", tags=["Health"], response_model=ProbeResponse)
async def readiness_probe(store: EpochStore = Depends(get_store)):
    """Readiness probe - checks that the epoch store answers."""
    if store.is_ready():
        return {"status": "ready"}
    return JSONResponse(status_code=503, content={"status": "not_ready"})


@router.get("/metrics", tags=["Health"])
async def metrics():
    """Prometheus metrics endpoint."""
    return get_metrics_response()
