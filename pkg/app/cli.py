"""
headcount command line.

Usage:
    python -m app.cli client keygen --backend emulated --out keys/
    python -m app.cli client announce --epoch 1 --keys keys/ --transport tcp
    python -m app.cli camera --site A --config camera_a.json --transport tcp
    python -m app.cli server --listen 127.0.0.1:7420 --http-port 8000
    python -m app.cli eval grid --n-bits 64,128,256 --error-ratios 10,15,20,25 --seeds 100 --out results.csv
    python -m app.cli eval e2e --overlap 0.5 --identities 130 --backend lattice

Exit codes: 0 success, 1 runtime error, 2 invariant violation.
"""

import argparse
import asyncio
import json
import sys
from pathlib import Path
from typing import List, Optional

import pydantic

from app.infra.config import config, parse_address
from app.infra.error_handler import HeadcountError, InvariantViolation
from app.infra.logging import app_logger
from app.models.embedding import SyntheticConfig
from app.models.epoch import CameraRunConfig, Site
from app.models.evaluation import E2EConfig, GridConfig
from app.models.he import HeBackend

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INVARIANT = 2


def _int_list(value: str) -> List[int]:
    try:
        return [int(part) for part in value.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}")


def _print_json(data) -> None:
    print(json.dumps(data, indent=2, sort_keys=False))


def _connection(args):
    from app.services.connection import open_connection
    return open_connection(args.transport, args.server, args.http_url, args.store)


# ============================================================================
# client
# ============================================================================

def cmd_client_keygen(args) -> int:
    from app.services.client import client_keygen, save_keys

    keys = client_keygen(HeBackend(args.backend), seed=args.seed)
    directory = save_keys(keys, args.out)
    _print_json({
        "directory": str(directory),
        "backend": keys.public_key.params.backend.value,
        "fingerprint": keys.public_key.fingerprint.hex(),
        "params_digest": keys.public_key.params_digest.hex(),
    })
    return EXIT_OK


def cmd_client_announce(args) -> int:
    from app.services.client import build_epoch_config, linked_epoch_config, load_public_key

    pk = load_public_key(args.keys)
    with _connection(args) as connection:
        if args.link_epoch is not None:
            cfg = linked_epoch_config(connection.fetch_announcement(args.link_epoch), args.epoch, pk)
        else:
            cfg = build_epoch_config(
                args.epoch,
                pk,
                n_bits=args.n_bits,
                error_ratio=args.error_ratio,
                d=args.dim,
                m=args.m,
                k=args.k,
                plane_seed=args.plane_seed,
                bloom_seed=args.bloom_seed,
                duration=args.duration,
            )
        connection.announce(cfg)
    _print_json({
        "epoch_id": cfg.epoch_id,
        "code": str(cfg.code()),
        "m": cfg.m,
        "k": cfg.k,
        "params_digest": cfg.params_digest.hex(),
    })
    return EXIT_OK


def cmd_client_flow(args) -> int:
    from app.infra.error_handler import NotFoundError
    from app.services.client import client_flow_estimate, load_keys

    keys = load_keys(args.keys)
    with _connection(args) as connection:
        cfg = connection.fetch_announcement(args.epoch_a)
        flow = connection.flow_query(args.epoch_a, args.epoch_b)
        try:
            footfall_a = connection.footfall_query(args.epoch_a, Site.A)
            footfall_b = connection.footfall_query(args.epoch_b, Site.B)
        except NotFoundError:
            footfall_a = footfall_b = None
    estimate = client_flow_estimate(
        keys.secret_key, flow, cfg.m, cfg.k,
        epoch_a=args.epoch_a, epoch_b=args.epoch_b,
        footfall_a=footfall_a, footfall_b=footfall_b,
    )
    print(estimate.model_dump_json(indent=2))
    return EXIT_OK


def cmd_client_footfall(args) -> int:
    from app.services.client import client_footfall_estimate, load_keys

    keys = load_keys(args.keys)
    site = Site.parse(args.site)
    with _connection(args) as connection:
        cfg = connection.fetch_announcement(args.epoch)
        ct = connection.footfall_query(args.epoch, site)
    _print_json({
        "epoch_id": args.epoch,
        "site": site.name,
        "footfall": client_footfall_estimate(keys.secret_key, ct, cfg.m, cfg.k),
    })
    return EXIT_OK


# ============================================================================
# camera / server
# ============================================================================

def cmd_camera(args) -> int:
    from app.infra.error_handler import ParameterMismatchError
    from app.services.camera import camera_a_epoch, camera_b_epoch
    from app.services.client import load_public_key
    from app.services.ingest import group_by_identity, load_embeddings

    run = CameraRunConfig.model_validate_json(Path(args.config).read_text(encoding="utf-8"))
    if args.stable_salt is not None:
        run = run.model_copy(update={"stable_salt": args.stable_salt})
    site = Site.parse(args.site)
    tracks = list(group_by_identity(load_embeddings(run.embeddings)).values())

    with _connection(args) as connection:
        cfg = connection.fetch_announcement(run.epoch_id)
        pk = cfg.public_key
        if run.keys_dir is not None and load_public_key(run.keys_dir).fingerprint != pk.fingerprint:
            raise ParameterMismatchError("announced public key differs from the pinned key")

        if site == Site.A:
            batch, submission, stats = camera_a_epoch(
                tracks, cfg, pk, seed=run.seed, stable_salt=run.stable_salt_bytes()
            )
            connection.put_helpers(batch)
            connection.submit(submission)
            report = {"tracks": stats.tracks, "helpers": len(batch.helpers), "code": stats.code}
        else:
            helper_epoch = run.epoch_id if run.helper_epoch is None else run.helper_epoch
            batch = connection.fetch_helpers(helper_epoch)
            helper_cfg = cfg if helper_epoch == run.epoch_id else connection.fetch_announcement(helper_epoch)
            submission, match_stats = camera_b_epoch(
                tracks, batch, cfg, pk, seed=run.seed, stable_salt=run.stable_salt_bytes(), helper_cfg=helper_cfg
            )
            connection.submit(submission)
            report = {
                "tracks": len(tracks),
                "matched": match_stats.matched,
                "enrolled_locally": match_stats.enrolled_locally,
            }

    _print_json({"epoch_id": run.epoch_id, "site": site.name, **report})
    return EXIT_OK


async def _serve_frames(listen: str, store_url: Optional[str]) -> None:
    from app.infra.transport import start_frame_server
    from app.services.dispatcher import FrameDispatcher
    from app.services.server_store import EpochStore

    host, port = parse_address(listen)
    server = await start_frame_server(FrameDispatcher(EpochStore(url=store_url)).handle_bytes, host, port)
    async with server:
        await server.serve_forever()


def cmd_server(args) -> int:
    listen = args.listen or config.LISTEN
    if args.http_port is None:
        try:
            asyncio.run(_serve_frames(listen, args.store))
        except KeyboardInterrupt:
            app_logger.info("Frame server stopped")
        return EXIT_OK

    import uvicorn
    from app.main import create_app
    from app.services.server_store import EpochStore

    uvicorn.run(
        create_app(EpochStore(url=args.store), frame_listen=listen),
        host=args.http_host,
        port=args.http_port,
        timeout_keep_alive=30,
        timeout_graceful_shutdown=30,
    )
    return EXIT_OK


# ============================================================================
# eval
# ============================================================================

def cmd_eval_grid(args) -> int:
    from app.services.evaluation import check_grid, rows_to_csv, run_grid

    synthetic = None
    if args.embeddings is None:
        synthetic = SyntheticConfig(
            n_identities=args.identities,
            frames_per_identity=args.frames or 2 * args.per_site,
            d=args.dim,
            seed=args.seed,
        )
    cfg = GridConfig(
        n_bits_list=args.n_bits,
        r_list=args.error_ratios,
        n_seeds=args.seeds,
        per_site=args.per_site,
        synthetic=synthetic,
        embeddings_path=args.embeddings,
        flip_ratio=None if args.embeddings else args.flip_ratio,
        seed=args.seed,
        workers=args.workers,
        exhaustive_fp=args.exhaustive_fp,
    )
    rows = run_grid(cfg, out=Path(args.out) if args.out else None)
    if not args.out:
        sys.stdout.write(rows_to_csv(rows))
    # Real embeddings are reported without a pass/fail gate
    if args.embeddings is None:
        check_grid(rows)
    return EXIT_OK


def cmd_eval_e2e(args) -> int:
    from app.services.evaluation import run_e2e

    cfg = E2EConfig(
        overlap=args.overlap,
        identities=args.identities,
        runs=args.runs,
        backends=list(HeBackend) if args.backend == "all" else [HeBackend(args.backend)],
        n_bits=args.n_bits,
        error_ratio=args.error_ratio,
        m=args.m,
        k=args.k,
        flip_ratio=args.flip_ratio,
        seed=args.seed,
    )
    report = run_e2e(cfg)
    print(report.model_dump_json(indent=2))
    return EXIT_OK


def cmd_eval_calibrate(args) -> int:
    from app.services.evaluation import calibrate

    result = calibrate(args.flip_ratio, args.dim, args.n_bits, args.consensus_frames, args.seed)
    print(result.model_dump_json(indent=2))
    return EXIT_OK


# ============================================================================
# parser
# ============================================================================

def _add_transport_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--transport",
        choices=["inproc", "tcp", "http"],
        default=config.TRANSPORT,
        help=f"Frame transport (default: {config.TRANSPORT})",
    )
    parser.add_argument("--server", default=None, help="Frame server HOST:PORT for --transport tcp")
    parser.add_argument("--http-url", default=None, help="Base URL for --transport http")
    parser.add_argument("--store", default=None, help="Store URL for --transport inproc")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="headcount", description="Privacy-preserving crowd-flow counting")
    commands = parser.add_subparsers(dest="command", required=True)

    # client
    client = commands.add_parser("client", help="Key owner: keys, announcements, queries")
    client_commands = client.add_subparsers(dest="client_command", required=True)

    keygen = client_commands.add_parser("keygen", help="Generate and store a key pair")
    keygen.add_argument("--backend", choices=[b.value for b in HeBackend], default=config.HE_BACKEND)
    keygen.add_argument("--out", required=True, help="Key directory")
    keygen.add_argument("--seed", type=int, default=None, help="Deterministic keygen (emulated backend only)")
    keygen.set_defaults(func=cmd_client_keygen)

    announce = client_commands.add_parser("announce", help="Announce an epoch")
    announce.add_argument("--epoch", type=int, required=True)
    announce.add_argument("--keys", required=True, help="Key directory")
    announce.add_argument("--n-bits", type=int, default=128, choices=[64, 128, 256])
    announce.add_argument("--error-ratio", type=float, default=0.25, help="Fraction in (0, 0.5)")
    announce.add_argument("--dim", type=int, default=128)
    announce.add_argument("--m", type=int, default=None)
    announce.add_argument("--k", type=int, default=None)
    announce.add_argument("--plane-seed", type=int, default=None)
    announce.add_argument("--bloom-seed", type=int, default=None)
    announce.add_argument("--duration", type=int, default=None, help="Epoch length in seconds")
    announce.add_argument(
        "--link-epoch", type=int, default=None,
        help="Reuse the seeds and parameters of this earlier epoch so flow can be queried across the two",
    )
    _add_transport_args(announce)
    announce.set_defaults(func=cmd_client_announce)

    flow = client_commands.add_parser("flow", help="Estimate flow from epoch A to epoch B")
    flow.add_argument("--epoch-a", type=int, required=True)
    flow.add_argument("--epoch-b", type=int, required=True)
    flow.add_argument("--keys", required=True)
    _add_transport_args(flow)
    flow.set_defaults(func=cmd_client_flow)

    footfall = client_commands.add_parser("footfall", help="Estimate footfall at one site")
    footfall.add_argument("--epoch", type=int, required=True)
    footfall.add_argument("--site", choices=["A", "B"], default="A")
    footfall.add_argument("--keys", required=True)
    _add_transport_args(footfall)
    footfall.set_defaults(func=cmd_client_footfall)

    # camera
    camera = commands.add_parser("camera", help="Run one camera epoch")
    camera.add_argument("--site", choices=["A", "B"], required=True)
    camera.add_argument("--config", required=True, help="Camera run JSON")
    camera.add_argument("--stable-salt", default=None, help="Hex salt reused across epochs (overrides the config)")
    _add_transport_args(camera)
    camera.set_defaults(func=cmd_camera)

    # server
    server = commands.add_parser("server", help="Run the frame server (and optionally the HTTP API)")
    server.add_argument("--listen", default=None, help=f"Frame server HOST:PORT (default: {config.LISTEN})")
    server.add_argument("--http-port", type=int, default=None, help="Also serve the HTTP API on this port")
    server.add_argument("--http-host", default="127.0.0.1")
    server.add_argument("--store", default=None, help="SQLAlchemy store URL")
    server.set_defaults(func=cmd_server)

    # eval
    evaluation = commands.add_parser("eval", help="Evaluation runs")
    eval_commands = evaluation.add_subparsers(dest="eval_command", required=True)

    grid = eval_commands.add_parser("grid", help="Key-reproduction grid")
    grid.add_argument("--n-bits", type=_int_list, default=[64, 128, 256])
    grid.add_argument("--error-ratios", type=_int_list, default=[10, 15, 20, 25], help="Percent values")
    grid.add_argument("--seeds", type=int, default=100)
    grid.add_argument("--flip-ratio", type=float, default=0.10)
    grid.add_argument("--out", default=None, help="CSV path (stdout when omitted)")
    grid.add_argument("--identities", type=int, default=130)
    grid.add_argument("--frames", type=int, default=None, help="Frames per identity (default: 2 * per-site)")
    grid.add_argument("--dim", type=int, default=128)
    grid.add_argument("--per-site", type=int, default=4)
    grid.add_argument("--seed", type=int, default=0)
    grid.add_argument("--embeddings", default=None, help="CSV of real embeddings instead of synthetic data")
    grid.add_argument("--workers", type=int, default=1)
    grid.add_argument("--exhaustive-fp", action="store_true", help="Attempt every cross-identity pair")
    grid.set_defaults(func=cmd_eval_grid)

    e2e = eval_commands.add_parser("e2e", help="End-to-end flow accuracy")
    e2e.add_argument("--overlap", type=float, default=0.5)
    e2e.add_argument("--identities", type=int, default=130)
    e2e.add_argument(
        "--backend", choices=["all"] + [b.value for b in HeBackend], default="all",
        help="HE backend to run on; all runs every installed backend",
    )
    e2e.add_argument("--runs", type=int, default=1)
    e2e.add_argument("--n-bits", type=int, default=128)
    e2e.add_argument("--error-ratio", type=float, default=0.25)
    e2e.add_argument("--m", type=int, default=config.BLOOM_M)
    e2e.add_argument("--k", type=int, default=config.BLOOM_K)
    e2e.add_argument("--flip-ratio", type=float, default=0.10)
    e2e.add_argument("--seed", type=int, default=0)
    e2e.set_defaults(func=cmd_eval_e2e)

    cal = eval_commands.add_parser("calibrate", help="Find the noise scale for a flip ratio")
    cal.add_argument("--flip-ratio", type=float, required=True)
    cal.add_argument("--dim", type=int, default=128)
    cal.add_argument("--n-bits", type=int, default=128)
    cal.add_argument("--consensus-frames", type=int, default=1)
    cal.add_argument("--seed", type=int, default=0)
    cal.set_defaults(func=cmd_eval_calibrate)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvariantViolation as e:
        print(f"invariant violated: {e.message}", file=sys.stderr)
        return EXIT_INVARIANT
    except HeadcountError as e:
        print(f"{type(e).__name__}: {e.message}", file=sys.stderr)
        return EXIT_ERROR
    except pydantic.ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"]) or "input"
        print(f"invalid configuration: {location}: {first['msg']}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
