"""Embedding observations, synthetic dataset configuration and site splits."""

from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
from pydantic import BaseModel, Field


@dataclass(frozen=True)
class Embedding:
    """One face observation. identity_id is ground truth and only used by evaluation."""
    identity_id: str
    frame_index: int
    vector: np.ndarray = field(repr=False, compare=False)

    @property
    def dim(self) -> int:
        return int(self.vector.shape[0])


EmbeddingDataset = List[Embedding]


class SyntheticConfig(BaseModel):
    """Identity-clustered synthetic embeddings."""
    n_identities: int = Field(..., ge=1, description="Number of identities")
    frames_per_identity: int = Field(..., ge=1, description="Frames generated per identity")
    d: int = Field(128, ge=2, description="Embedding dimension")
    sigma: float = Field(0.0, ge=0.0, description="Additive Gaussian noise scale before renormalization")
    seed: int = Field(0, ge=0, lt=2**64, description="64-bit generator seed")


@dataclass
class SiteSplit:
    """Per-identity observation lists for the two sites."""
    site_a: Dict[str, List[Embedding]]
    site_b: Dict[str, List[Embedding]]
    per_site: int

    @property
    def identities(self) -> List[str]:
        return list(self.site_a.keys())
