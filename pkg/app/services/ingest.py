"""Embedding ingestion, synthetic generation, site splitting and noise calibration."""

import csv
import logging
from collections import OrderedDict
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from app.infra.error_handler import CalibrationError, ParseError, ValidationError
from app.models.embedding import Embedding, EmbeddingDataset, SiteSplit, SyntheticConfig
from app.services.simhash import consensus, make_hyperplanes, simhash_many

logger = logging.getLogger(__name__)

NORM_EPSILON = 1e-12
CALIBRATION_TOLERANCE = 0.01
MIN_CALIBRATION_PAIRS = 200


def _unit(vector: np.ndarray) -> np.ndarray:
    vector = np.asarray(vector, dtype=np.float64)
    vector = vector / np.linalg.norm(vector)
    vector.setflags(write=False)
    return vector


def load_embeddings(path: Union[str, Path]) -> EmbeddingDataset:
    """
    Load embeddings from CSV (header ``id,frame,v0,...,v{d-1}``).

    Vectors are renormalized to unit length; row order is preserved.

    Raises:
        ParseError: malformed header or row (carries the 1-based line number)
        ValidationError: zero vector (names the row)
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"embeddings file not found: {path}")

    dataset: EmbeddingDataset = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", line=1)
        if len(header) < 4 or header[0].strip() != "id" or header[1].strip() != "frame":
            raise ParseError("header must be id,frame,v0,...,v{d-1} with d >= 2", line=1)
        d = len(header) - 2

        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != d + 2:
                raise ParseError(f"expected {d + 2} columns, got {len(row)}", line=line)
            try:
                frame = int(row[1])
                values = np.array([float(x) for x in row[2:]], dtype=np.float64)
            except ValueError as e:
                raise ParseError(f"non-numeric value ({e})", line=line)
            if not np.all(np.isfinite(values)):
                raise ParseError("non-finite value", line=line)
            if np.linalg.norm(values) < NORM_EPSILON:
                raise ValidationError(f"zero vector at line {line} (id {row[0]!r}, frame {frame})")
            dataset.append(Embedding(identity_id=row[0], frame_index=frame, vector=_unit(values)))

    logger.info("Embeddings loaded", extra={"rows": len(dataset), "dim": d})
    return dataset


def gen_synthetic(config: SyntheticConfig) -> EmbeddingDataset:
    """
    Generate identity-clustered embeddings.

    Each identity gets a mean direction uniform on the sphere; every frame is
    normalize(mean + sigma * g) with g standard Gaussian.
    """
    rng = np.random.default_rng(config.seed)
    means = rng.standard_normal((config.n_identities, config.d))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    noise = rng.standard_normal((config.n_identities, config.frames_per_identity, config.d))

    width = len(str(config.n_identities - 1))
    dataset: EmbeddingDataset = []
    for i in range(config.n_identities):
        identity = f"id{i:0{width}d}"
        frames = means[i] + config.sigma * noise[i]
        for f in range(config.frames_per_identity):
            dataset.append(Embedding(identity_id=identity, frame_index=f, vector=_unit(frames[f])))
    return dataset


def group_by_identity(dataset: EmbeddingDataset) -> Dict[str, List[Embedding]]:
    """Group observations per identity, keeping first-seen identity order."""
    groups: Dict[str, List[Embedding]] = OrderedDict()
    for emb in dataset:
        groups.setdefault(emb.identity_id, []).append(emb)
    return groups


def split_sites(dataset: EmbeddingDataset, per_site: int, seed) -> SiteSplit:
    """
    Assign per_site frames of each identity to site A and per_site disjoint frames to site B.

    Raises:
        ValidationError: per_site < 1 or an identity has fewer than 2 * per_site frames
    """
    if per_site < 1:
        raise ValidationError("per_site must be >= 1")
    rng = np.random.default_rng(seed)
    site_a: Dict[str, List[Embedding]] = OrderedDict()
    site_b: Dict[str, List[Embedding]] = OrderedDict()
    for identity, frames in group_by_identity(dataset).items():
        if len(frames) < 2 * per_site:
            raise ValidationError(
                f"identity {identity!r} has {len(frames)} frames, needs {2 * per_site}"
            )
        order = rng.permutation(len(frames))
        site_a[identity] = [frames[i] for i in order[:per_site]]
        site_b[identity] = [frames[i] for i in order[per_site:2 * per_site]]
    return SiteSplit(site_a=site_a, site_b=site_b, per_site=per_site)


def measure_flip_ratio(
    sigma: float,
    d: int,
    n_planes: int,
    seed,
    n_pairs: int = MIN_CALIBRATION_PAIRS,
    consensus_frames: int = 1,
) -> float:
    """
    Monte-Carlo mean Hamming ratio between two noisy views of the same identity.

    Each view is the consensus SimHash of ``consensus_frames`` independent frames.
    A fixed seed gives common random numbers across sigma values, so the
    measurement is monotone in sigma for bisection.
    """
    rng = np.random.default_rng(seed)
    planes = make_hyperplanes(n_planes, d, int(rng.integers(0, 2**63)))
    means = rng.standard_normal((n_pairs, d))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    noise = rng.standard_normal((n_pairs, 2, consensus_frames, d))

    total = 0
    for i in range(n_pairs):
        views = []
        for side in range(2):
            frames = means[i] + sigma * noise[i, side]
            views.append(consensus(simhash_many(frames, planes)))
        total += int(np.count_nonzero(views[0].bits != views[1].bits))
    return total / (n_pairs * n_planes)


def calibrate_noise(
    target_flip_ratio: float,
    d: int,
    n_planes: int,
    seed,
    n_pairs: int = MIN_CALIBRATION_PAIRS,
    consensus_frames: int = 1,
    tolerance: float = CALIBRATION_TOLERANCE,
    max_iterations: int = 40,
    sigma_max: float = 2.0,
) -> float:
    """
    Find sigma whose measured flip ratio is within ``tolerance`` of the target.

    Bisection over [0, sigma_max]. Target 0 returns 0 without sampling.

    Raises:
        ValidationError: target outside [0, 0.5) or n_pairs below the minimum
        CalibrationError: target beyond what sigma_max achieves (reports the bounds)
    """
    if not 0.0 <= target_flip_ratio < 0.5:
        raise ValidationError("target flip ratio must be in [0, 0.5)")
    if n_pairs < MIN_CALIBRATION_PAIRS:
        raise ValidationError(f"calibration needs at least {MIN_CALIBRATION_PAIRS} pairs")
    if target_flip_ratio == 0.0:
        return 0.0

    def measure(s: float) -> float:
        return measure_flip_ratio(s, d, n_planes, seed, n_pairs, consensus_frames)

    high_ratio = measure(sigma_max)
    if high_ratio < target_flip_ratio - tolerance:
        raise CalibrationError(
            f"target {target_flip_ratio:.3f} unreachable: sigma in [0, {sigma_max}] "
            f"achieves flip ratios [0.000, {high_ratio:.3f}]"
        )

    lo, hi = 0.0, sigma_max
    sigma: Optional[float] = None
    for _ in range(max_iterations):
        mid = (lo + hi) / 2
        ratio = measure(mid)
        if abs(ratio - target_flip_ratio) <= tolerance / 4:
            sigma = mid
            break
        if ratio < target_flip_ratio:
            lo = mid
        else:
            hi = mid
    if sigma is None:
        sigma = (lo + hi) / 2
        ratio = measure(sigma)
        if abs(ratio - target_flip_ratio) > tolerance:
            raise CalibrationError(
                f"bisection did not converge for target {target_flip_ratio:.3f} (last ratio {ratio:.3f})"
            )

    logger.info(
        "Noise calibrated",
        extra={"target": target_flip_ratio, "sigma": sigma, "d": d, "n_planes": n_planes,
               "consensus_frames": consensus_frames},
    )
    return sigma
