"""Tests for plaintext Bloom filters and cardinality estimation."""

import math

import mmh3
import numpy as np
import pytest

from app.infra.error_handler import ParameterMismatchError, ProtocolError, ValidationError
from app.models.helper import Identifier
from app.services.bloom import (
    BloomFilter,
    bits_set,
    bloom_new,
    estimate_cardinality,
    estimate_intersection_inclusion_exclusion,
    index_sequence,
    insert,
    insert_all,
    intersect,
    union,
)


def identifiers(count: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    return [Identifier(rng.bytes(32)) for _ in range(count)]


class TestBloomFilter:
    """Insertion, membership and serialization."""

    def test_index_sequence(self):
        positions = index_sequence(b"\x01" * 32, 4096, 3, 99)
        assert len(positions) == 3
        assert all(0 <= p < 4096 for p in positions)
        assert positions == index_sequence(b"\x01" * 32, 4096, 3, 99)
        assert positions != index_sequence(b"\x01" * 32, 4096, 3, 100)

    def test_index_sequence_double_hashing(self):
        data = identifiers(1, seed=8)[0].value
        seed = 2**40 + 12345
        h1, h2 = mmh3.hash64(data, seed=(seed ^ (seed >> 32)) & 0xFFFFFFFF, signed=False)
        assert index_sequence(data, 4096, 5, seed) == [(h1 + j * h2) % 4096 for j in range(5)]
        assert index_sequence(data, 997, 3, seed) == [(h1 + j * h2) % 997 for j in range(3)]

    def test_seed_folding_collides(self):
        """Only 32 bits of the hash seed reach murmur3."""
        data = b"\x02" * 32
        assert index_sequence(data, 4096, 3, 6) == index_sequence(data, 4096, 3, (1 << 32) | 7)

    def test_bits_set_matches_per_bit_count(self):
        for seed, count in [(0, 0), (1, 1), (2, 40), (3, 400)]:
            bf = insert_all(bloom_new(1000, 4, seed), identifiers(count, seed))
            naive = sum(1 for i in range(bf.m) if bf.bits[i])
            assert bits_set(bf) == naive
            assert bits_set(bf) == int(bf.to_numpy().sum())

    def test_no_false_negatives(self):
        bf = bloom_new(4096, 3, 7)
        ids = identifiers(200)
        insert_all(bf, ids)
        assert all(i in bf for i in ids)

    def test_insert_is_idempotent(self):
        bf = bloom_new(1024, 3, 1)
        ident = identifiers(1)[0]
        insert(bf, ident)
        once = bits_set(bf)
        insert(bf, ident)
        assert bits_set(bf) == once
        assert 1 <= once <= 3

    def test_empty_filter(self):
        bf = bloom_new(64, 2, 0)
        assert bits_set(bf) == 0
        assert identifiers(1)[0] not in bf

    def test_numpy_round_trip(self):
        bf = insert_all(bloom_new(100, 3, 5), identifiers(10))
        values = bf.to_numpy()
        assert values.dtype == np.uint8
        assert int(values.sum()) == bf.bits_set()
        assert BloomFilter.from_numpy(100, 3, 5, values) == bf

    def test_bytes_round_trip(self):
        bf = insert_all(bloom_new(4096, 3, 2**63 + 5), identifiers(50))
        data = bf.to_bytes()
        assert len(data) == 13 + 512
        assert BloomFilter.from_bytes(data) == bf

    def test_truncated_bytes(self):
        data = bloom_new(64, 2, 0).to_bytes()
        with pytest.raises(ProtocolError):
            BloomFilter.from_bytes(data[:-1])
        with pytest.raises(ProtocolError):
            BloomFilter.from_bytes(data[:5])

    def test_nonzero_padding_rejected(self):
        data = bytearray(bloom_new(60, 2, 0).to_bytes())
        data[-1] |= 0x80
        with pytest.raises(ProtocolError):
            BloomFilter.from_bytes(bytes(data))

    def test_clear_and_copy(self):
        bf = insert_all(bloom_new(256, 3, 0), identifiers(5))
        snapshot = bf.copy()
        bf.clear()
        assert bf.bits_set() == 0
        assert snapshot.bits_set() > 0

    @pytest.mark.parametrize("m,k,seed", [(4, 3, 0), (64, 0, 0), (64, 3, -1), (64, 3, 2**64)])
    def test_rejects_bad_params(self, m, k, seed):
        with pytest.raises(ValidationError):
            BloomFilter(m, k, seed)


class TestSetOperations:
    """AND/OR of compatible filters."""

    def test_intersection_contains_common_items(self):
        common = identifiers(20, seed=1)
        a = insert_all(bloom_new(2048, 3, 9), common + identifiers(30, seed=2))
        b = insert_all(bloom_new(2048, 3, 9), common + identifiers(30, seed=3))
        both = intersect(a, b)
        assert all(i in both for i in common)
        assert both.bits_set() <= min(a.bits_set(), b.bits_set())
        assert union(a, b).bits_set() == a.bits_set() + b.bits_set() - both.bits_set()

    @pytest.fixture
    def filters(self):
        shared = identifiers(15, seed=10)
        return [
            insert_all(bloom_new(512, 3, 4), shared + identifiers(20, seed=11 + i)) for i in range(3)
        ]

    def test_idempotent(self, filters):
        a = filters[0]
        assert intersect(a, a) == a
        assert union(a, a) == a

    def test_empty_filter_absorbs_and_identity(self, filters):
        a, empty = filters[0], bloom_new(512, 3, 4)
        assert intersect(a, empty) == empty
        assert intersect(a, empty).bits_set() == 0
        assert union(a, empty) == a

    def test_commutative(self, filters):
        a, b, _ = filters
        assert intersect(a, b) == intersect(b, a)
        assert union(a, b) == union(b, a)

    def test_associative(self, filters):
        a, b, c = filters
        assert intersect(intersect(a, b), c) == intersect(a, intersect(b, c))
        assert union(union(a, b), c) == union(a, union(b, c))

    def test_operands_unchanged(self, filters):
        a, b, _ = filters
        before = (a.copy(), b.copy())
        intersect(a, b)
        union(a, b)
        assert (a, b) == before

    def test_mismatched_params(self):
        with pytest.raises(ParameterMismatchError):
            intersect(bloom_new(64, 3, 0), bloom_new(64, 3, 1))
        with pytest.raises(ParameterMismatchError):
            union(bloom_new(64, 3, 0), bloom_new(128, 3, 0))


class TestEstimation:
    """Cardinality from the number of set bits."""

    def test_known_values(self):
        assert estimate_cardinality(1000, 4, 100) == pytest.approx(26.34, abs=0.01)
        assert estimate_cardinality(4096, 3, 300) == pytest.approx(103.85, abs=0.01)

    def test_edges(self):
        assert estimate_cardinality(4096, 3, 0) == 0.0
        assert math.isinf(estimate_cardinality(64, 2, 64))
        with pytest.raises(ValidationError):
            estimate_cardinality(64, 2, 65)
        with pytest.raises(ValidationError):
            estimate_cardinality(64, 2, -1)

    def test_monotone(self):
        values = [estimate_cardinality(4096, 3, t) for t in range(0, 4096, 128)]
        assert values == sorted(values)

    def test_estimate_close_to_true_count(self):
        bf = insert_all(bloom_new(4096, 3, 12345), identifiers(65, seed=4))
        assert estimate_cardinality(4096, 3, bf.bits_set()) == pytest.approx(65, abs=6)

    def test_inclusion_exclusion(self):
        common = identifiers(40, seed=5)
        a = insert_all(bloom_new(4096, 3, 1), common + identifiers(60, seed=6))
        b = insert_all(bloom_new(4096, 3, 1), common + identifiers(60, seed=7))
        t_and = intersect(a, b).bits_set()
        estimate = estimate_intersection_inclusion_exclusion(4096, 3, a.bits_set(), b.bits_set(), t_and)
        assert estimate == pytest.approx(40, abs=12)

    def test_mean_estimate_over_seeds(self):
        estimates = [
            estimate_cardinality(4096, 3, insert_all(bloom_new(4096, 3, seed), identifiers(100, seed)).bits_set())
            for seed in range(100)
        ]
        assert np.mean(estimates) == pytest.approx(100, rel=0.05)
