"""
Evaluation harness: per-identity key-reproduction trials over the (n_bits, r)
grid, and end-to-end flow runs through the full protocol.
"""

import csv
import io
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from app.infra.error_handler import InvariantViolation, ValidationError
from app.models.embedding import EmbeddingDataset, SyntheticConfig
from app.models.epoch import Site
from app.models.evaluation import (
    CSV_COLUMNS,
    CalibrationResult,
    E2EConfig,
    E2EReport,
    E2ERun,
    EvalRow,
    GridConfig,
    TrialCounts,
)
from app.services import he
from app.services.bch import select_code
from app.services.camera import EpochAudit, camera_a_epoch, camera_b_epoch
from app.services.client import build_epoch_config, client_flow_estimate, client_keygen
from app.services.connection import ServerConnection, open_connection
from app.services.fuzzy_extractor import gen, reproduce
from app.services.ingest import calibrate_noise, gen_synthetic, load_embeddings, measure_flip_ratio, split_sites
from app.services.simhash import consensus, hamming_matrix, make_hyperplanes, simhash_many

logger = logging.getLogger(__name__)


def derive_seeds(seed, count: int) -> List[int]:
    """Independent 63-bit integers from one seed (int or SeedSequence entropy list)."""
    sequence = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [int(x) >> 1 for x in sequence.generate_state(count, dtype=np.uint64)]


def sub_seed(master: int, index: int) -> List[int]:
    """Seed stream for repetition ``index`` of a run with master seed ``master``."""
    return [master, index]


def run_trial(
    dataset: EmbeddingDataset,
    n_bits: int,
    r: float,
    seed,
    per_site: int = 4,
    exhaustive_fp: bool = False,
) -> TrialCounts:
    """
    One seeded trial over every identity in the dataset.

    The seed drives the site split, the hyperplanes and the enrollment
    randomness. Each identity's site-B hash is reproduced against its own helper
    (TP or FN) and against every other identity's helper (each verified success
    is one FP). A verified cross-identity success needs Hamming distance at most
    t, so pairs beyond t are skipped unless ``exhaustive_fp`` is set.

    Raises:
        CodeSelectionError: no code reaches floor(r * n)
        ValidationError: an identity has fewer than 2 * per_site frames
    """
    code = select_code(n_bits, r)
    split_seed, plane_seed, gen_seed = derive_seeds(seed, 3)
    split = split_sites(dataset, per_site, split_seed)
    identities = split.identities
    if not identities:
        raise ValidationError("dataset has no identities")
    d = split.site_a[identities[0]][0].dim
    planes = make_hyperplanes(code.n, d, plane_seed)

    def site_hash(frames):
        return consensus(simhash_many(np.stack([e.vector for e in frames]), planes))

    hashes_a = [site_hash(split.site_a[i]) for i in identities]
    hashes_b = [site_hash(split.site_b[i]) for i in identities]

    rng = np.random.default_rng(gen_seed)
    enrollments = [gen(w, code, rng) for w in hashes_a]

    tp = fn = fp = 0
    for i, w_b in enumerate(hashes_b):
        result = reproduce(w_b, enrollments[i].helper, code)
        if result is not None and result.identifier == enrollments[i].identifier:
            tp += 1
        else:
            fn += 1

    distances = None if exhaustive_fp else hamming_matrix(hashes_b, hashes_a)
    for i, w_b in enumerate(hashes_b):
        for j, enrollment in enumerate(enrollments):
            if i == j:
                continue
            if distances is not None and distances[i, j] > code.t:
                continue
            if reproduce(w_b, enrollment.helper, code) is not None:
                fp += 1

    if tp + fn != len(identities):
        raise InvariantViolation(f"TP + FN = {tp + fn} for {len(identities)} identities")
    return TrialCounts(tp=tp, fn=fn, fp=fp)


def metrics(tp: float, fn: float, fp: float) -> Tuple[float, float, float]:
    """(precision, recall, f1); precision of zero predicted positives is 1.0."""
    precision = 1.0 if tp + fp == 0 else tp / (tp + fp)
    recall = 0.0 if tp + fn == 0 else tp / (tp + fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


def _run_cell(args) -> EvalRow:
    dataset, n_bits, r_percent, n_seeds, master, per_site, exhaustive_fp = args
    r = r_percent / 100
    code = select_code(n_bits, r)
    totals = np.zeros(3, dtype=np.int64)
    for index in range(n_seeds):
        counts = run_trial(dataset, n_bits, r, sub_seed(master, index), per_site, exhaustive_fp)
        totals += (counts.tp, counts.fn, counts.fp)
    tp, fn, fp = (float(x) / n_seeds for x in totals)
    precision, recall, f1 = metrics(tp, fn, fp)
    logger.info(
        "Grid cell finished",
        extra={"n_bits": n_bits, "r": r_percent, "code": str(code), "recall": recall, "precision": precision},
    )
    return EvalRow(
        n_bits=n_bits, r=r_percent, n=code.n, k=code.k, t=code.t,
        tp_mean=tp, fn_mean=fn, fp_mean=fp, precision=precision, recall=recall, f1=f1,
    )


def grid_dataset(cfg: GridConfig) -> Tuple[EmbeddingDataset, Optional[float]]:
    """Load or synthesize the grid dataset; returns it with the synthetic sigma used."""
    if cfg.embeddings_path:
        return load_embeddings(cfg.embeddings_path), None
    synthetic = cfg.synthetic
    if cfg.flip_ratio is not None:
        sigma = calibrate_noise(
            cfg.flip_ratio,
            synthetic.d,
            max(cfg.n_bits_list) - 1,
            derive_seeds([cfg.seed, 2**32], 1)[0],
            consensus_frames=cfg.per_site,
        )
        synthetic = synthetic.model_copy(update={"sigma": sigma})
    return gen_synthetic(synthetic), synthetic.sigma


def run_grid(cfg: GridConfig, out: Optional[Path] = None) -> List[EvalRow]:
    """
    Evaluate every (n_bits, r) cell over ``cfg.n_seeds`` seeds.

    Sub-seeds depend only on (master seed, seed index), so cells share their
    splits and hyperplanes across r. Rows come back sorted by (n_bits, r); the
    CSV is written to ``out`` when given.
    """
    started = time.perf_counter()
    dataset, sigma = grid_dataset(cfg)
    jobs = [
        (dataset, n_bits, r, cfg.n_seeds, cfg.seed, cfg.per_site, cfg.exhaustive_fp)
        for n_bits in cfg.n_bits_list
        for r in cfg.r_list
    ]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(_run_cell, jobs))
    else:
        rows = [_run_cell(job) for job in jobs]
    rows.sort(key=lambda row: (row.n_bits, row.r))

    if out is not None:
        Path(out).write_text(rows_to_csv(rows), encoding="utf-8")
    logger.info(
        "Grid finished",
        extra={"cells": len(rows), "seeds": cfg.n_seeds, "sigma": sigma,
               "duration_s": round(time.perf_counter() - started, 2)},
    )
    return rows


def rows_to_csv(rows: List[EvalRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(row.csv_values())
    return buffer.getvalue()


def check_grid(rows: List[EvalRow]) -> None:
    """
    Raise InvariantViolation when recall decreases with r for some n_bits, or a
    metric column disagrees with its count columns.
    """
    by_bits: Dict[int, List[EvalRow]] = {}
    for row in rows:
        precision, recall, f1 = metrics(row.tp_mean, row.fn_mean, row.fp_mean)
        if max(abs(precision - row.precision), abs(recall - row.recall), abs(f1 - row.f1)) > 5e-4:
            raise InvariantViolation(f"metrics of ({row.n_bits}, {row.r}) disagree with their counts")
        by_bits.setdefault(row.n_bits, []).append(row)
    for n_bits, cells in by_bits.items():
        cells.sort(key=lambda row: row.r)
        for low, high in zip(cells, cells[1:]):
            if high.recall + 1e-12 < low.recall:
                raise InvariantViolation(
                    f"recall at n_bits={n_bits} drops from {low.recall:.4f} (r={low.r}) to {high.recall:.4f} (r={high.r})"
                )


def calibrate(target: float, d: int, n_bits: int, consensus_frames: int = 1, seed: int = 0) -> CalibrationResult:
    n_planes = n_bits - 1 if n_bits in (64, 128, 256) else n_bits
    sigma = calibrate_noise(target, d, n_planes, seed, consensus_frames=consensus_frames)
    measured = measure_flip_ratio(sigma, d, n_planes, seed, consensus_frames=consensus_frames)
    return CalibrationResult(
        target=target, sigma=sigma, measured=measured, d=d, n_planes=n_planes, consensus_frames=consensus_frames
    )


def _e2e_tracks(cfg: E2EConfig, sigma: float, seed: List[int]):
    """Site track lists with ``cfg.shared`` common identities; B's order is shuffled."""
    shared, extra = cfg.shared, cfg.identities - cfg.shared
    data_seed, split_seed, order_seed = derive_seeds(seed, 3)
    dataset = gen_synthetic(
        SyntheticConfig(
            n_identities=shared + 2 * extra,
            frames_per_identity=2 * cfg.per_site,
            d=cfg.d,
            sigma=sigma,
            seed=data_seed,
        )
    )
    split = split_sites(dataset, cfg.per_site, split_seed)
    ids = split.identities
    tracks_a = [split.site_a[i] for i in ids[:shared + extra]]
    tracks_b = [split.site_b[i] for i in ids[:shared] + ids[shared + extra:]]
    order = np.random.default_rng(order_seed).permutation(len(tracks_b))
    return tracks_a, [tracks_b[i] for i in order]


def _e2e_run(
    connection: ServerConnection,
    cfg: E2EConfig,
    keys,
    epoch_id: int,
    index: int,
    sigma: float,
    tolerance: float,
) -> E2ERun:
    """One announce / enroll / reproduce / query round on a fresh epoch."""
    pk, sk = keys.public_key, keys.secret_key
    backend = pk.params.backend
    run_seed = sub_seed(cfg.seed, index)
    plane_seed, bloom_seed, camera_a_seed, camera_b_seed = derive_seeds(run_seed + [1], 4)
    tracks_a, tracks_b = _e2e_tracks(cfg, sigma, run_seed)
    epoch = build_epoch_config(
        epoch_id, pk, n_bits=cfg.n_bits, error_ratio=cfg.error_ratio, d=cfg.d,
        m=cfg.m, k=cfg.k, plane_seed=plane_seed, bloom_seed=bloom_seed,
    )
    connection.announce(epoch)

    audits: Dict[Site, EpochAudit] = {}
    batch, submission_a, _ = camera_a_epoch(
        tracks_a, connection.fetch_announcement(epoch_id), pk,
        seed=camera_a_seed, audit=lambda a: audits.__setitem__(a.site, a),
    )
    connection.put_helpers(batch)
    connection.submit(submission_a)

    submission_b, match_stats = camera_b_epoch(
        tracks_b, connection.fetch_helpers(epoch_id), epoch, pk,
        seed=camera_b_seed, audit=lambda a: audits.__setitem__(a.site, a),
    )
    connection.submit(submission_b)

    estimate = client_flow_estimate(
        sk,
        connection.flow_query(epoch_id, epoch_id),
        cfg.m,
        cfg.k,
        epoch_a=epoch_id,
        epoch_b=epoch_id,
        footfall_a=connection.footfall_query(epoch_id, Site.A),
        footfall_b=connection.footfall_query(epoch_id, Site.B),
    )
    t_oracle = (audits[Site.A].bloom.bits & audits[Site.B].bloom.bits).count()
    if estimate.t_intersection != t_oracle:
        raise InvariantViolation(
            f"run {index} ({backend.value}): decrypted AND-count {estimate.t_intersection} != plaintext {t_oracle}"
        )

    abs_error = abs(estimate.estimated_flow - cfg.shared)
    logger.info(
        "End-to-end run finished",
        extra={"run": index, "backend": backend.value, "true_flow": cfg.shared,
               "estimated_flow": round(estimate.estimated_flow, 2)},
    )
    return E2ERun(
        run=index,
        backend=backend,
        true_flow=cfg.shared,
        t_intersection=estimate.t_intersection,
        t_oracle=t_oracle,
        estimated_flow=estimate.estimated_flow,
        abs_error=abs_error,
        rel_error=abs_error / cfg.shared if cfg.shared else None,
        within_tolerance=abs_error <= tolerance,
        matched_at_b=match_stats.matched,
        footfall_a=estimate.footfall_a,
        footfall_b=estimate.footfall_b,
        flow_inclusion_exclusion=estimate.flow_inclusion_exclusion,
    )


def run_e2e(cfg: E2EConfig, connection: Optional[ServerConnection] = None) -> E2EReport:
    """
    Run the whole protocol ``cfg.runs`` times per HE backend on synthetic sites
    with a known overlap.

    Every run announces a new epoch, runs both cameras, queries flow and
    footfalls and checks the decrypted AND-count against the plaintext filters
    captured before erasure. Run ``i`` sees the same people and seeds on every
    backend, so the backends must decrypt identical counts. Backends whose
    library is missing are skipped and listed in the report.

    Raises:
        InvariantViolation: decrypted count differs from the plaintext oracle,
            or two backends disagree on the same run
    """
    code = select_code(cfg.n_bits, cfg.error_ratio)
    sigma = calibrate_noise(
        cfg.flip_ratio, cfg.d, code.n, derive_seeds([cfg.seed, 2**32], 1)[0], consensus_frames=cfg.per_site
    )
    tolerance = max(0.1 * cfg.shared, 3.0)
    backends = [b for b in cfg.backends if he.backend_available(b)]
    skipped = [b for b in cfg.backends if b not in backends]
    for backend in skipped:
        logger.warning("HE backend unavailable, skipping", extra={"backend": backend.value})
    if not backends:
        raise ValidationError("no requested HE backend is available")

    own_connection = connection is None
    connection = connection or open_connection("inproc")
    runs: List[E2ERun] = []
    epoch_id = 0
    try:
        for backend in backends:
            keys = client_keygen(backend, seed=derive_seeds([cfg.seed, 2**32 + 1], 1)[0])
            for index in range(cfg.runs):
                epoch_id += 1
                runs.append(_e2e_run(connection, cfg, keys, epoch_id, index, sigma, tolerance))
    finally:
        if own_connection:
            connection.close()

    by_run: Dict[int, set] = {}
    for run in runs:
        by_run.setdefault(run.run, set()).add(run.t_intersection)
    for index, counts in by_run.items():
        if len(counts) > 1:
            raise InvariantViolation(f"run {index}: backends decrypted different AND-counts {sorted(counts)}")

    return E2EReport(
        config=cfg, code=str(code), sigma=sigma, tolerance=tolerance, runs=runs, skipped_backends=skipped
    )
