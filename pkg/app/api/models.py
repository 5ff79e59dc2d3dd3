"""API request/response models."""

from typing import List

from pydantic import BaseModel, Field


# ============================================================================
# Health Models
# ============================================================================

class HealthResponse(BaseModel):
    """Response model for the combined health check."""
    status: str = Field(..., example="ok")
    service: str = Field(..., example="headcount")
    version: str = Field(..., example="1.0.0")


class ProbeResponse(BaseModel):
    status: str = Field(..., example="ready")


# ============================================================================
# Epoch Models
# ============================================================================

class StoredSubmissionResponse(BaseModel):
    """One stored submission, without its ciphertexts."""
    epoch_id: int
    site: str = Field(..., description="A or B", example="A")
    params_digest: str = Field(..., description="Hex SHA-256 of the HE parameters")


class StoredSubmissionListResponse(BaseModel):
    items: List[StoredSubmissionResponse]
    count: int
