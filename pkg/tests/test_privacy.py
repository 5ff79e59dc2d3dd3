"""
What may and may not leave each role.

Payload types are walked statically; recorded frames of a real epoch are
scanned for plaintext material byte by byte.
"""

import dataclasses
import inspect
import typing

import numpy as np
import pytest

from app.infra.framing import decode_frame
from app.models.bitstring import BitString
from app.models.embedding import Embedding
from app.models.epoch import Site
from app.models.he import SecretKey
from app.models.helper import HelperData, Identifier
from app.services import dispatcher as dispatcher_module
from app.services import server_store as server_store_module
from app.services.bloom import BloomFilter
from app.services.camera import camera_a_epoch, camera_b_epoch
from app.services.messages import PAYLOAD_TYPES
from app.services.simhash import ProjectionSet
from tests.conftest import make_site_tracks

FORBIDDEN = (Embedding, BloomFilter, Identifier, ProjectionSet, SecretKey, np.ndarray)


def _walk(tp, path, seen):
    """Yield (path, type) for every type reachable from tp's fields."""
    for arg in typing.get_args(tp):
        yield from _walk(arg, path, seen)
    origin = typing.get_origin(tp)
    if origin is not None:
        return
    yield path, tp
    if dataclasses.is_dataclass(tp) and tp not in seen:
        seen.add(tp)
        hints = typing.get_type_hints(tp)
        for f in dataclasses.fields(tp):
            yield from _walk(hints[f.name], f"{path}.{f.name}", seen)


def reachable_types():
    found = []
    for msg_type, payload_types in PAYLOAD_TYPES.items():
        for payload_type in payload_types:
            found.extend(_walk(payload_type, f"{msg_type.name}:{payload_type.__name__}", set()))
    return found


class TestPayloadTypes:
    """Static scan of everything a frame can carry."""

    def test_no_forbidden_types(self):
        for path, tp in reachable_types():
            assert not (isinstance(tp, type) and issubclass(tp, FORBIDDEN)), path

    def test_bitstrings_only_as_helper_offsets(self):
        bit_paths = [path for path, tp in reachable_types() if tp is BitString]
        assert bit_paths
        assert all(path.endswith(".helpers.offset") for path in bit_paths)
        helper_fields = {f.name for f in dataclasses.fields(HelperData)}
        assert helper_fields == {"n", "k", "t", "offset", "salt", "tag"}

    def test_scanner_sees_nested_records(self):
        paths = [path for path, _ in reachable_types()]
        assert any(path.endswith(".helpers") for path in paths)
        assert any(path.endswith(".encrypted_bloom.ciphertexts") for path in paths)


class TestServerCode:
    """The server role never touches decryption material."""

    @pytest.mark.parametrize("module", [server_store_module, dispatcher_module])
    def test_no_secret_key(self, module):
        source = inspect.getsource(module)
        assert "SecretKey" not in source
        assert "decrypt" not in source

    def test_router_sources(self):
        from app.api.routers import epochs, frames, health

        for module in (epochs, frames, health):
            assert "decrypt" not in inspect.getsource(module)


class AuditLog(dict):
    def __call__(self, audit):
        self[audit.site] = audit


class TestRecordedTraffic:
    """Byte-level scan of one epoch's frames."""

    @pytest.fixture
    def traffic(self, connection, transport, epoch_config, emulated_keys):
        pk = emulated_keys.public_key
        tracks_a, tracks_b = make_site_tracks(10, sigma=0.02, seed=3)
        audits = AuditLog()
        connection.announce(epoch_config)
        result_a = camera_a_epoch(tracks_a, epoch_config, pk, seed=1, audit=audits)
        connection.put_helpers(result_a.helper_batch)
        connection.submit(result_a.submission)
        result_b = camera_b_epoch(
            tracks_b[:5], connection.fetch_helpers(1), epoch_config, pk, seed=2, audit=audits
        )
        connection.submit(result_b.submission)
        connection.flow_query(1, 1)
        connection.footfall_query(1, Site.B)
        return b"".join(transport.recorded), audits, tracks_a

    def test_frames_decode(self, traffic, transport):
        for data in transport.recorded:
            decode_frame(data)

    def test_no_identifiers(self, traffic):
        wire, audits, _ = traffic
        for audit in audits.values():
            for identifier in audit.identifiers:
                assert identifier.value not in wire

    def test_no_plaintext_filters(self, traffic):
        wire, audits, _ = traffic
        for audit in audits.values():
            assert audit.bloom.bits.tobytes() not in wire

    def test_no_embeddings(self, traffic):
        wire, _, tracks_a = traffic
        for track in tracks_a:
            for e in track:
                assert np.asarray(e.vector, dtype="<f8").tobytes()[:32] not in wire

    def test_no_secret_key(self, traffic, emulated_keys):
        wire, _, _ = traffic
        assert emulated_keys.secret_key.data not in wire
