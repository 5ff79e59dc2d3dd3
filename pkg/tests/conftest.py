"""Pytest configuration and fixtures."""

import os

import pytest
from dotenv import load_dotenv

# Load test environment variables
load_dotenv()

# Set test environment
os.environ.setdefault("APP_ENV", "test")
os.environ.setdefault("DEBUG", "false")
os.environ.setdefault("HEADCOUNT_STORE_URL", "sqlite://")

from app.infra.transport import InProcessTransport
from app.models.embedding import SyntheticConfig
from app.models.he import HeBackend
from app.services.client import build_epoch_config, client_keygen
from app.services.connection import ServerConnection
from app.services.dispatcher import FrameDispatcher
from app.services.ingest import gen_synthetic, split_sites
from app.services.server_store import EpochStore


@pytest.fixture(scope="session")
def emulated_keys():
    """Deterministic emulated-backend key pair."""
    return client_keygen(HeBackend.EMULATED, seed=7)


@pytest.fixture(scope="session")
def other_keys():
    """A second, unrelated key pair."""
    return client_keygen(HeBackend.EMULATED, seed=8)


@pytest.fixture
def epoch_config(emulated_keys):
    """Epoch 1 at the default parameters: (127,8,31), m=4096, k=3."""
    return build_epoch_config(1, emulated_keys.public_key, plane_seed=11, bloom_seed=13)


@pytest.fixture
def store():
    return EpochStore(url="sqlite://")


@pytest.fixture
def dispatcher(store):
    return FrameDispatcher(store)


@pytest.fixture
def transport(dispatcher):
    """In-process transport that records every frame."""
    return InProcessTransport(dispatcher.handle_bytes, record=True)


@pytest.fixture
def connection(transport):
    return ServerConnection(transport)


def make_site_tracks(n_identities: int, sigma: float = 0.0, seed: int = 0, per_site: int = 4, d: int = 128):
    """(tracks at A, tracks at B) for the same identities, in the same order."""
    dataset = gen_synthetic(
        SyntheticConfig(
            n_identities=n_identities, frames_per_identity=2 * per_site, d=d, sigma=sigma, seed=seed
        )
    )
    split = split_sites(dataset, per_site, seed + 1)
    return (
        [split.site_a[i] for i in split.identities],
        [split.site_b[i] for i in split.identities],
    )
