"""Read-only listing of stored submissions."""

from fastapi import APIRouter, Depends

from app.api.models import StoredSubmissionListResponse
from app.api.utils import get_store
from app.services.server_store import EpochStore

router = APIRouter()


@router.get("/epochs", tags=["Epochs"], response_model=StoredSubmissionListResponse)
async def list_epochs(store: EpochStore = Depends(get_store)):
    """List (epoch_id, site, params_digest) of every stored submission. No ciphertexts."""
    items = store.list_submissions()
    return {"items": items, "count": len(items)}
