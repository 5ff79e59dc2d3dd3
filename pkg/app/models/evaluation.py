"""Evaluation run configurations and result records."""

from typing import List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from app.models.embedding import SyntheticConfig
from app.models.he import HeBackend

CSV_COLUMNS = ("n_bits", "r", "n", "k", "t", "tp_mean", "fn_mean", "fp_mean", "precision", "recall", "f1")


class GridConfig(BaseModel):
    """Key-reproduction grid over SimHash lengths and error ratios."""
    n_bits_list: List[int] = Field(default_factory=lambda: [64, 128, 256], min_length=1)
    r_list: List[int] = Field(
        default_factory=lambda: [10, 15, 20, 25], min_length=1, description="Error ratios in percent"
    )
    n_seeds: int = Field(100, ge=1)
    per_site: int = Field(4, ge=1, description="Frames per identity and site")
    synthetic: Optional[SyntheticConfig] = Field(
        None, description="Synthetic dataset; sigma is replaced by calibration when flip_ratio is set"
    )
    embeddings_path: Optional[str] = Field(None, description="CSV of real embeddings instead of synthetic data")
    flip_ratio: Optional[float] = Field(0.10, ge=0.0, lt=0.5, description="Calibration target for synthetic data")
    seed: int = Field(0, ge=0, lt=2**64, description="Master seed")
    workers: int = Field(1, ge=1)
    exhaustive_fp: bool = False

    @field_validator("n_bits_list")
    @classmethod
    def _check_n_bits(cls, value: List[int]) -> List[int]:
        bad = [n for n in value if n not in (64, 128, 256)]
        if bad:
            raise ValueError(f"unsupported SimHash lengths {bad}; choose from 64, 128, 256")
        return sorted(set(value))

    @field_validator("r_list")
    @classmethod
    def _check_r(cls, value: List[int]) -> List[int]:
        bad = [r for r in value if not 0 < r < 50]
        if bad:
            raise ValueError(f"error ratios {bad} outside (0, 50) percent")
        return sorted(set(value))

    @model_validator(mode="after")
    def _default_dataset(self) -> "GridConfig":
        if self.synthetic is None and self.embeddings_path is None:
            self.synthetic = SyntheticConfig(
                n_identities=130, frames_per_identity=2 * self.per_site, seed=self.seed
            )
        return self


class TrialCounts(BaseModel):
    tp: int = Field(..., ge=0)
    fn: int = Field(..., ge=0)
    fp: int = Field(..., ge=0)


class EvalRow(BaseModel):
    """Means over seeds and metrics for one (n_bits, r) cell."""
    n_bits: int
    r: int
    n: int
    k: int
    t: int
    tp_mean: float
    fn_mean: float
    fp_mean: float
    precision: float
    recall: float
    f1: float

    def csv_values(self) -> List[str]:
        return [
            str(self.n_bits),
            str(self.r),
            str(self.n),
            str(self.k),
            str(self.t),
            f"{self.tp_mean:.4f}",
            f"{self.fn_mean:.4f}",
            f"{self.fp_mean:.4f}",
            f"{self.precision:.4f}",
            f"{self.recall:.4f}",
            f"{self.f1:.4f}",
        ]


class E2EConfig(BaseModel):
    """End-to-end flow run: two sites sharing round(overlap * identities) people."""
    overlap: float = Field(0.5, ge=0.0, le=1.0)
    identities: int = Field(130, ge=1, description="People seen at each site")
    runs: int = Field(1, ge=1)
    backends: List[HeBackend] = Field(
        default_factory=lambda: [HeBackend.EMULATED, HeBackend.LATTICE],
        min_length=1,
        description="Every run repeats on each backend; lattice is skipped when tenseal is missing",
    )
    n_bits: int = Field(128)
    error_ratio: float = Field(0.25, gt=0.0, lt=0.5)
    d: int = Field(128, ge=2)
    m: int = Field(4096, ge=8)
    k: int = Field(3, ge=1, le=255)
    per_site: int = Field(4, ge=1)
    flip_ratio: float = Field(0.10, ge=0.0, lt=0.5, description="Calibrated intra-identity flip ratio")
    seed: int = Field(0, ge=0, lt=2**64)

    @property
    def shared(self) -> int:
        return round(self.overlap * self.identities)

    @field_validator("backends")
    @classmethod
    def _unique_backends(cls, value: List[HeBackend]) -> List[HeBackend]:
        return list(dict.fromkeys(value))


class E2ERun(BaseModel):
    run: int
    backend: HeBackend
    true_flow: int
    t_intersection: int
    t_oracle: int
    estimated_flow: float
    abs_error: float
    rel_error: Optional[float] = Field(None, description="abs_error / true_flow; None when true_flow is 0")
    within_tolerance: bool
    matched_at_b: int
    footfall_a: float
    footfall_b: float
    flow_inclusion_exclusion: Optional[float] = None


class E2EReport(BaseModel):
    config: E2EConfig
    code: str
    sigma: float
    tolerance: float = Field(..., description="max(10% of true flow, 3 persons)")
    runs: List[E2ERun]
    skipped_backends: List[HeBackend] = Field(default_factory=list, description="Backends whose library is missing")

    @property
    def all_within_tolerance(self) -> bool:
        return all(r.within_tolerance for r in self.runs)


class CalibrationResult(BaseModel):
    target: float
    sigma: float
    measured: float
    d: int
    n_planes: int
    consensus_frames: int
