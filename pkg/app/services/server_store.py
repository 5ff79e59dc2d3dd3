"""
Server role: insert-once storage of announcements, helper batches and encrypted
filters, and oblivious evaluation of flow and footfall queries.

Nothing in this module accepts or holds secret-key material.
"""

import logging
import threading
from typing import List, Optional

from sqlalchemy import func, insert, select
from sqlalchemy.engine import Engine
from sqlalchemy.exc import IntegrityError

from app.infra.database import (
    announcements,
    create_store_engine,
    deployments,
    get_db_connection,
    helper_batches,
    ping,
    submissions,
)
from app.infra.error_handler import (
    ConflictError,
    NotFoundError,
    ParameterMismatchError,
    RejectedError,
)
from app.infra.metrics import queries_total, submissions_total
from app.models.epoch import EpochConfig, EpochSubmission, HelperBatch, Site
from app.models.he import Ciphertext, EncryptedBloom
from app.services import he

logger = logging.getLogger(__name__)


class EpochStore:
    """Append-only store. Submissions are unique per (epoch_id, site)."""

    def __init__(self, engine: Optional[Engine] = None, url: Optional[str] = None):
        self.engine = engine or create_store_engine(url)
        # SQLite connections are not safe for concurrent use from worker threads
        self._lock = threading.Lock()

    def is_ready(self) -> bool:
        with self._lock:
            return ping(self.engine)

    def register_announcement(self, cfg: EpochConfig) -> None:
        """
        Record an epoch announcement and its deployment digest.

        Raises:
            ConflictError: epoch already announced, or epoch_id not above the
                deployment's last announced epoch
        """
        digest = cfg.params_digest.hex()
        with self._lock, get_db_connection(self.engine) as conn:
            last = conn.execute(
                select(func.max(announcements.c.epoch_id)).where(announcements.c.params_digest == digest)
            ).scalar()
            if last is not None and cfg.epoch_id <= last:
                raise ConflictError(
                    f"epoch {cfg.epoch_id} is not after the deployment's last epoch {last}"
                )
            try:
                conn.execute(
                    insert(announcements).values(
                        epoch_id=cfg.epoch_id, params_digest=digest, payload=cfg.to_bytes()
                    )
                )
            except IntegrityError:
                raise ConflictError(f"epoch {cfg.epoch_id} already announced")
            if last is None:
                conn.execute(insert(deployments).values(params_digest=digest, first_epoch_id=cfg.epoch_id))
        logger.info("Epoch announced", extra={"epoch_id": cfg.epoch_id, "params_digest": digest[:16]})

    def get_announcement(self, epoch_id: int) -> EpochConfig:
        with self._lock, get_db_connection(self.engine) as conn:
            row = conn.execute(
                select(announcements.c.payload).where(announcements.c.epoch_id == epoch_id)
            ).first()
        if row is None:
            raise NotFoundError(f"no announcement for epoch {epoch_id}")
        return EpochConfig.from_bytes(row.payload)

    def is_registered(self, params_digest: bytes) -> bool:
        with self._lock, get_db_connection(self.engine) as conn:
            row = conn.execute(
                select(deployments.c.params_digest).where(deployments.c.params_digest == params_digest.hex())
            ).first()
        return row is not None

    def put_helper_batch(self, batch: HelperBatch) -> None:
        """Relay storage for helper data; opaque to the server beyond its record count."""
        self.get_announcement(batch.epoch_id)
        with self._lock, get_db_connection(self.engine) as conn:
            try:
                conn.execute(
                    insert(helper_batches).values(
                        epoch_id=batch.epoch_id, record_count=len(batch.helpers), payload=batch.to_bytes()
                    )
                )
            except IntegrityError:
                raise ConflictError(f"helper batch for epoch {batch.epoch_id} already stored")
        logger.info("Helper batch stored", extra={"epoch_id": batch.epoch_id, "records": len(batch.helpers)})

    def get_helper_batch(self, epoch_id: int) -> HelperBatch:
        with self._lock, get_db_connection(self.engine) as conn:
            row = conn.execute(
                select(helper_batches.c.payload).where(helper_batches.c.epoch_id == epoch_id)
            ).first()
        if row is None:
            raise NotFoundError(f"no helper batch for epoch {epoch_id}")
        return HelperBatch.from_bytes(row.payload)

    def put_submission(self, submission: EpochSubmission) -> None:
        digest = submission.encrypted_bloom.params_id.hex()
        with self._lock, get_db_connection(self.engine) as conn:
            try:
                conn.execute(
                    insert(submissions).values(
                        epoch_id=submission.epoch_id,
                        site=submission.site.name,
                        params_digest=digest,
                        payload=submission.encrypted_bloom.to_bytes(),
                    )
                )
            except IntegrityError:
                raise ConflictError(
                    f"submission for epoch {submission.epoch_id} site {submission.site.name} already stored"
                )

    def get_submission(self, epoch_id: int, site: Site) -> EncryptedBloom:
        with self._lock, get_db_connection(self.engine) as conn:
            row = conn.execute(
                select(submissions.c.payload).where(
                    submissions.c.epoch_id == epoch_id, submissions.c.site == site.name
                )
            ).first()
        if row is None:
            raise NotFoundError(f"no submission for epoch {epoch_id} site {site.name}")
        return EncryptedBloom.from_bytes(row.payload)

    def list_submissions(self) -> List[dict]:
        """(epoch_id, site, params_digest) of every stored submission, without ciphertexts."""
        with self._lock, get_db_connection(self.engine) as conn:
            rows = conn.execute(
                select(submissions.c.epoch_id, submissions.c.site, submissions.c.params_digest).order_by(
                    submissions.c.epoch_id, submissions.c.site
                )
            ).all()
        return [{"epoch_id": r.epoch_id, "site": r.site, "params_digest": r.params_digest} for r in rows]


def server_submit(store: EpochStore, submission: EpochSubmission) -> None:
    """
    Persist an encrypted filter.

    Raises:
        RejectedError: parameter digest not registered by any announcement, or
            different from the digest announced for this epoch
        ConflictError: (epoch_id, site) already stored
    """
    digest = submission.encrypted_bloom.params_id
    site = submission.site.name
    if not store.is_registered(digest):
        submissions_total.labels(site, "rejected").inc()
        raise RejectedError("submission references an unregistered parameter digest")
    try:
        announced = store.get_announcement(submission.epoch_id)
    except NotFoundError:
        announced = None
    if announced is not None and announced.params_digest != digest:
        submissions_total.labels(site, "rejected").inc()
        raise RejectedError(f"submission digest differs from the one announced for epoch {submission.epoch_id}")
    if announced is not None and submission.encrypted_bloom.m != announced.m:
        submissions_total.labels(site, "rejected").inc()
        raise RejectedError(f"filter length {submission.encrypted_bloom.m} differs from announced m = {announced.m}")

    try:
        store.put_submission(submission)
    except ConflictError:
        submissions_total.labels(site, "conflict").inc()
        raise
    submissions_total.labels(site, "stored").inc()
    logger.info("Submission stored", extra={"epoch_id": submission.epoch_id, "site": site})


def _evaluation_key(store: EpochStore, epoch_id: int, digest: bytes):
    cfg = store.get_announcement(epoch_id)
    if cfg.params_digest != digest:
        raise ParameterMismatchError(f"stored filter and announcement of epoch {epoch_id} disagree on parameters")
    return cfg.public_key


def server_flow_query(store: EpochStore, epoch_a: int, epoch_b: int) -> Ciphertext:
    """
    Encrypted AND-count of the site-A filter of epoch_a and the site-B filter of epoch_b.

    Two different epochs are comparable only when their announcements share
    hyperplanes, Bloom hashing and HE parameters (see ``EpochConfig.with_epoch``).

    Raises:
        NotFoundError: either submission or announcement missing
        ParameterMismatchError: filters under different parameters, or epochs
            whose identifiers are not comparable
    """
    try:
        enc_a = store.get_submission(epoch_a, Site.A)
        enc_b = store.get_submission(epoch_b, Site.B)
        if epoch_a != epoch_b:
            store.get_announcement(epoch_a).check_linkable(store.get_announcement(epoch_b))
            _evaluation_key(store, epoch_b, enc_b.params_id)
        pk = _evaluation_key(store, epoch_a, enc_a.params_id)
        result = he.encrypted_intersection_count(enc_a, enc_b, pk)
    except Exception:
        queries_total.labels("flow", "error").inc()
        raise
    queries_total.labels("flow", "ok").inc()
    logger.info("Flow query evaluated", extra={"epoch_a": epoch_a, "epoch_b": epoch_b})
    return result


def server_footfall_query(store: EpochStore, epoch_id: int, site: Site) -> Ciphertext:
    """Encrypted set-bit count of one stored filter."""
    try:
        enc = store.get_submission(epoch_id, site)
        pk = _evaluation_key(store, epoch_id, enc.params_id)
        result = he.encrypted_popcount(enc, pk)
    except Exception:
        queries_total.labels("footfall", "error").inc()
        raise
    queries_total.labels("footfall", "ok").inc()
    logger.info("Footfall query evaluated", extra={"epoch_id": epoch_id, "site": site.name})
    return result
