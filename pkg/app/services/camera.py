"""
Camera roles for one epoch.

Site A enrolls every track and publishes helper data; site B reproduces
identifiers from that helper data, enrolling unmatched tracks locally. Both
submit only an encrypted Bloom filter.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, NamedTuple, Optional, Sequence

import numpy as np

from app.infra.error_handler import ParameterMismatchError, ValidationError
from app.infra.metrics import reproductions_total
from app.models.bitstring import BitString
from app.models.embedding import Embedding
from app.models.epoch import (
    EpochConfig,
    EpochSubmission,
    HelperBatch,
    LocalStats,
    MatchStats,
    Site,
    TrackOutcome,
)
from app.models.he import PublicKey
from app.models.helper import Identifier
from app.services import he
from app.services.bch import BchCode
from app.services.bloom import BloomFilter, bloom_new
from app.services.fuzzy_extractor import gen, reproduce
from app.services.simhash import ProjectionSet, consensus, make_hyperplanes, simhash_many

logger = logging.getLogger(__name__)

Track = Sequence[Embedding]


@dataclass
class EpochAudit:
    """
    Plaintext view of an epoch, captured before erasure.

    Only evaluation runs and tests attach one; production cameras never do.
    """
    site: Site
    bloom: BloomFilter
    identifiers: List[Identifier]
    hashes: List[BitString]


AuditSink = Callable[[EpochAudit], None]


class CameraAResult(NamedTuple):
    helper_batch: HelperBatch
    submission: EpochSubmission
    stats: LocalStats


class CameraBResult(NamedTuple):
    submission: EpochSubmission
    match_stats: MatchStats


def _track_hashes(tracks: Sequence[Track], cfg: EpochConfig, code: BchCode) -> List[BitString]:
    planes: ProjectionSet = make_hyperplanes(code.n, cfg.d, cfg.plane_seed)
    hashes = []
    for index, track in enumerate(tracks):
        if not track:
            raise ValidationError(f"track {index} is empty")
        rows = [np.asarray(e.vector if isinstance(e, Embedding) else e, dtype=np.float64) for e in track]
        if any(row.shape != (cfg.d,) for row in rows):
            raise ValidationError(f"track {index} has embeddings whose dimension differs from d = {cfg.d}")
        vectors = np.stack(rows)
        hashes.append(consensus(simhash_many(vectors, planes)))
    return hashes


def _check_key(pk: PublicKey, cfg: EpochConfig) -> None:
    if pk.params_digest != cfg.params_digest or pk.fingerprint != cfg.public_key.fingerprint:
        raise ParameterMismatchError("public key does not match the epoch announcement")


def _seal_filter(bf: BloomFilter, cfg: EpochConfig, site: Site, pk: PublicKey) -> EpochSubmission:
    encrypted = he.encrypt_bits(pk, bf.to_numpy())
    # Plaintext filter is not retained past encryption
    bf.clear()
    return EpochSubmission(epoch_id=cfg.epoch_id, site=site, encrypted_bloom=encrypted)


def camera_a_epoch(
    tracks: Sequence[Track],
    cfg: EpochConfig,
    pk: PublicKey,
    seed=None,
    stable_salt: Optional[bytes] = None,
    audit: Optional[AuditSink] = None,
) -> CameraAResult:
    """
    Enroll every track at site A.

    Args:
        tracks: Per-person observation lists (embeddings of dimension cfg.d)
        cfg: Epoch announcement
        pk: Client public key
        seed: Randomness for salts, codewords and helper order; fresh entropy when None
        stable_salt: Reuse one salt across epochs so identifiers stay linkable
        audit: Evaluation hook receiving the plaintext epoch before erasure

    Returns:
        (helper batch, encrypted submission, local stats)
    """
    _check_key(pk, cfg)
    code = cfg.code()
    rng = np.random.default_rng(seed)
    hashes = _track_hashes(tracks, cfg, code)

    bf = bloom_new(cfg.m, cfg.k, cfg.bloom_seed)
    identifiers = []
    helpers = []
    for w in hashes:
        identifier, helper = gen(w, code, rng, salt=stable_salt)
        bf.insert(identifier)
        identifiers.append(identifier)
        helpers.append(helper)

    order = rng.permutation(len(helpers))
    batch = HelperBatch(epoch_id=cfg.epoch_id, helpers=[helpers[i] for i in order])
    stats = LocalStats(tracks=len(tracks), bits_set=bf.bits_set(), code=str(code))
    if audit is not None:
        audit(EpochAudit(Site.A, bf.copy(), identifiers, hashes))

    submission = _seal_filter(bf, cfg, Site.A, pk)
    logger.info(
        "Camera A epoch sealed",
        extra={"epoch_id": cfg.epoch_id, "tracks": len(tracks), "code": str(code)},
    )
    return CameraAResult(batch, submission, stats)


def camera_b_epoch(
    tracks: Sequence[Track],
    helper_batch: HelperBatch,
    cfg: EpochConfig,
    pk: PublicKey,
    seed=None,
    stable_salt: Optional[bytes] = None,
    audit: Optional[AuditSink] = None,
    helper_cfg: Optional[EpochConfig] = None,
) -> CameraBResult:
    """
    Reproduce identifiers at site B.

    Tracks are processed in order. Each track tries every unconsumed helper;
    among verified reproductions the one with the fewest corrected bits wins
    (lowest helper index on ties) and that helper is consumed. A track with no
    reproduction is enrolled locally so it still counts toward footfall.

    The helper batch normally belongs to ``cfg``'s epoch. A batch from an
    earlier epoch is accepted when ``helper_cfg`` is that epoch's announcement
    and it is linkable to ``cfg``, which lets a flow query compare site A at
    one epoch with site B at a later one.

    Raises:
        ParameterMismatchError: helper batch from an unrelated or later epoch,
            or with another code
    """
    if helper_batch.epoch_id != cfg.epoch_id:
        if helper_cfg is None or helper_cfg.epoch_id != helper_batch.epoch_id:
            raise ParameterMismatchError(
                f"helper batch is for epoch {helper_batch.epoch_id}, camera runs epoch {cfg.epoch_id}"
            )
        if helper_batch.epoch_id > cfg.epoch_id:
            raise ParameterMismatchError(
                f"helper batch of epoch {helper_batch.epoch_id} is later than epoch {cfg.epoch_id}"
            )
        helper_cfg.check_linkable(cfg)
    _check_key(pk, cfg)
    code = cfg.code()
    for helper in helper_batch.helpers:
        if helper.code_params != code.params:
            raise ParameterMismatchError(f"helper code {helper.code_params} differs from epoch code {code.params}")

    rng = np.random.default_rng(seed)
    hashes = _track_hashes(tracks, cfg, code)
    consumed = [False] * len(helper_batch.helpers)
    bf = bloom_new(cfg.m, cfg.k, cfg.bloom_seed)
    identifiers = []
    stats = MatchStats()

    for index, w_prime in enumerate(hashes):
        best = None
        candidates = 0
        for j, helper in enumerate(helper_batch.helpers):
            if consumed[j]:
                continue
            result = reproduce(w_prime, helper, code)
            if result is None:
                continue
            candidates += 1
            if best is None or result.corrected_bits < best[0]:
                best = (result.corrected_bits, j, result.identifier)

        if best is not None:
            corrected, j, identifier = best
            consumed[j] = True
            stats.outcomes.append(TrackOutcome(index, j, corrected, candidates))
            reproductions_total.labels("matched").inc()
        else:
            identifier, _ = gen(w_prime, code, rng, salt=stable_salt)
            stats.outcomes.append(TrackOutcome(index, None, None, 0))
            reproductions_total.labels("enrolled").inc()
        bf.insert(identifier)
        identifiers.append(identifier)

    if audit is not None:
        audit(EpochAudit(Site.B, bf.copy(), identifiers, hashes))

    submission = _seal_filter(bf, cfg, Site.B, pk)
    logger.info(
        "Camera B epoch sealed",
        extra={"epoch_id": cfg.epoch_id, "tracks": len(tracks), "matched": stats.matched},
    )
    return CameraBResult(submission, stats)
