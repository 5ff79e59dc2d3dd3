"""Tests for homomorphic evaluation on both backends."""

import numpy as np
import pytest

from app.infra.error_handler import (
    DecryptionError,
    KeyMismatchError,
    ParameterMismatchError,
    ProtocolError,
    UnsupportedParamsError,
    ValidationError,
)
from app.models.he import Ciphertext, EncryptedBloom, HeBackend, HeParams
from app.services import he


def random_bits(m: int, density: float, seed: int) -> np.ndarray:
    return (np.random.default_rng(seed).random(m) < density).astype(np.uint8)


@pytest.fixture(scope="module", params=[HeBackend.EMULATED, HeBackend.LATTICE])
def keys(request):
    """Key pair per backend; the lattice run needs tenseal."""
    if request.param == HeBackend.LATTICE:
        pytest.importorskip("tenseal")
    return he.keygen(HeParams(backend=request.param, seed=3))


class TestFilterStatistics:
    """Intersection and popcount on encrypted filters."""

    def test_intersection_count(self, keys):
        pk, sk = keys.public_key, keys.secret_key
        a = random_bits(4096, 0.07, 1)
        b = random_bits(4096, 0.07, 2)
        enc_a, enc_b = he.encrypt_bits(pk, a), he.encrypt_bits(pk, b)
        ct = he.encrypted_intersection_count(enc_a, enc_b, pk)
        assert he.decrypt_count(sk, ct) == int(np.sum(a & b))

    def test_popcount(self, keys):
        pk, sk = keys.public_key, keys.secret_key
        a = random_bits(4096, 0.1, 3)
        assert he.decrypt_count(sk, he.encrypted_popcount(he.encrypt_bits(pk, a), pk)) == int(a.sum())

    def test_decrypt_bits(self, keys):
        pk, sk = keys.public_key, keys.secret_key
        a = random_bits(4096, 0.2, 4)
        np.testing.assert_array_equal(he.decrypt_bits(sk, he.encrypt_bits(pk, a)), a)

    def test_empty_and_full_filters(self, keys):
        pk, sk = keys.public_key, keys.secret_key
        zeros = np.zeros(4096, dtype=np.uint8)
        ones = np.ones(4096, dtype=np.uint8)
        enc_zero, enc_one = he.encrypt_bits(pk, zeros), he.encrypt_bits(pk, ones)
        assert he.decrypt_count(sk, he.encrypted_intersection_count(enc_zero, enc_one, pk)) == 0
        assert he.decrypt_count(sk, he.encrypted_intersection_count(enc_one, enc_one, pk)) == 4096

    def test_popcount_is_intersection_with_ones(self, keys):
        pk, sk = keys.public_key, keys.secret_key
        a = random_bits(4096, 0.15, 12)
        enc_a = he.encrypt_bits(pk, a)
        enc_ones = he.encrypt_bits(pk, np.ones(4096, dtype=np.uint8))
        popcount = he.decrypt_count(sk, he.encrypted_popcount(enc_a, pk))
        assert popcount == he.decrypt_count(sk, he.encrypted_intersection_count(enc_a, enc_ones, pk))
        assert popcount == int(a.sum())

    def test_bit_products(self, keys):
        pk, sk = keys.public_key, keys.secret_key
        one, zero = he.encrypt_value(pk, 1), he.encrypt_value(pk, 0)
        assert he.decrypt_count(sk, he.multiply(pk, one, zero)) == 0
        assert he.decrypt_count(sk, he.multiply(pk, zero, zero)) == 0
        assert he.decrypt_count(sk, he.multiply(pk, one, one)) == 1

    def test_fresh_randomness_per_encryption(self, keys):
        pk = keys.public_key
        bits = random_bits(4096, 0.1, 5)
        first, second = he.encrypt_bits(pk, bits), he.encrypt_bits(pk, bits)
        assert first.ciphertexts[0].payload != second.ciphertexts[0].payload


class TestEmulatedArithmetic:
    """Bookkeeping rules, checked on the fast backend."""

    @pytest.fixture
    def pair(self, emulated_keys):
        return emulated_keys.public_key, emulated_keys.secret_key

    def test_multi_chunk_filter(self, pair):
        pk, sk = pair
        a = random_bits(10000, 0.05, 6)
        b = random_bits(10000, 0.05, 7)
        enc_a = he.encrypt_bits(pk, a)
        assert len(enc_a.ciphertexts) == 3
        ct = he.encrypted_intersection_count(enc_a, he.encrypt_bits(pk, b), pk)
        assert he.decrypt_count(sk, ct) == int(np.sum(a & b))

    def test_value_arithmetic(self, pair):
        pk, sk = pair
        a = he.encrypt_value(pk, 20)
        b = he.encrypt_value(pk, 30)
        assert he.decrypt_count(sk, he.add(pk, a, b)) == 50
        assert he.decrypt_count(sk, he.multiply(pk, a, b)) == 600

    def test_depth_budget(self, pair):
        pk, sk = pair
        a = he.encrypt_value(pk, 2)
        twice = he.multiply(pk, he.multiply(pk, a, a), a)
        with pytest.raises(DecryptionError):
            he.decrypt_count(sk, twice)

    def test_bound_reaching_modulus(self, pair):
        pk, sk = pair
        a = he.encrypt_value(pk, 40000)
        with pytest.raises(DecryptionError):
            he.decrypt_count(sk, he.add(pk, a, a))

    def test_public_bound(self, pair):
        pk, sk = pair
        assert he.decrypt_count(sk, he.encrypt_value(pk, 7, bound=4096)) == 7
        with pytest.raises(ValidationError):
            he.encrypt_value(pk, 7, bound=6)
        with pytest.raises(ValidationError):
            he.encrypt_value(pk, 65537)

    def test_encrypt_bits_validation(self, pair):
        pk, _ = pair
        with pytest.raises(ValidationError):
            he.encrypt_bits(pk, [])
        with pytest.raises(ValidationError):
            he.encrypt_bits(pk, [0, 1, 2])
        with pytest.raises(ValidationError):
            he.encrypt_bits(pk, np.zeros(65537, dtype=np.uint8))

    def test_foreign_key_rejected(self, pair, other_keys):
        pk, sk = pair
        mine = he.encrypt_bits(pk, random_bits(64, 0.5, 8))
        theirs = he.encrypt_bits(other_keys.public_key, random_bits(64, 0.5, 9))
        with pytest.raises(KeyMismatchError):
            he.encrypted_intersection_count(mine, theirs, pk)
        with pytest.raises(KeyMismatchError):
            he.decrypt_bits(sk, theirs)

    def test_parameter_mismatch(self, pair):
        pk, _ = pair
        other = he.keygen(HeParams(plain_modulus=12289, seed=1))
        mine = he.encrypt_bits(pk, random_bits(64, 0.5, 10))
        theirs = he.encrypt_bits(other.public_key, random_bits(64, 0.5, 10))
        with pytest.raises(ParameterMismatchError):
            he.encrypted_intersection_count(mine, theirs, pk)
        short = he.encrypt_bits(pk, random_bits(32, 0.5, 11))
        with pytest.raises(ParameterMismatchError):
            he.encrypted_intersection_count(mine, short, pk)

    def test_deterministic_emulated_keygen(self):
        a = he.keygen(HeParams(seed=5))
        b = he.keygen(HeParams(seed=5))
        assert a.public_key.fingerprint == b.public_key.fingerprint
        assert a.secret_key.public_fingerprint == a.public_key.fingerprint


class TestEnvelopes:
    """Parameter and ciphertext encodings."""

    def test_params_encoding_omits_seed(self):
        assert HeParams(seed=1).to_bytes() == HeParams(seed=2).to_bytes()
        assert HeParams(seed=1).digest() == HeParams().digest()
        params, rest = HeParams.read_from(HeParams(backend=HeBackend.LATTICE).to_bytes() + b"x")
        assert params.backend == HeBackend.LATTICE
        assert rest == b"x"

    @pytest.mark.parametrize(
        "kwargs",
        [{"plain_modulus": 65536}, {"ring_dimension": 1000}, {"bits_per_ciphertext": 0}, {"max_depth": 0}],
    )
    def test_params_validation(self, kwargs):
        with pytest.raises(ValidationError):
            HeParams(**kwargs)

    def test_ciphertext_bytes(self, emulated_keys):
        ct = he.encrypt_value(emulated_keys.public_key, 3)
        assert Ciphertext.from_bytes(ct.to_bytes()) == ct
        with pytest.raises(ProtocolError):
            Ciphertext.from_bytes(ct.to_bytes()[:-1])
        with pytest.raises(ProtocolError):
            Ciphertext.from_bytes(ct.to_bytes() + b"\x00")

    def test_encrypted_bloom_bytes(self, emulated_keys):
        enc = he.encrypt_bits(emulated_keys.public_key, random_bits(5000, 0.3, 12))
        again = EncryptedBloom.from_bytes(enc.to_bytes())
        assert again.m == 5000
        assert again.ciphertexts == enc.ciphertexts
        with pytest.raises(ValidationError):
            EncryptedBloom(m=8, ciphertexts=[])

    def test_lattice_rejects_unbatchable_modulus(self):
        params = HeParams(backend=HeBackend.LATTICE, plain_modulus=12289)
        with pytest.raises(UnsupportedParamsError):
            he.get_backend(HeBackend.LATTICE).check_params(params)


def test_backends_agree_on_same_filters():
    pytest.importorskip("tenseal")
    emulated = he.keygen(HeParams(backend=HeBackend.EMULATED, seed=4))
    lattice = he.keygen(HeParams(backend=HeBackend.LATTICE, seed=4))
    rng = np.random.default_rng(4)
    for _ in range(5):
        density = rng.uniform(0.0, 0.5)
        a = (rng.random(4096) < density).astype(np.uint8)
        b = (rng.random(4096) < density).astype(np.uint8)
        counts = []
        for keys in (emulated, lattice):
            pk, sk = keys.public_key, keys.secret_key
            enc_a, enc_b = he.encrypt_bits(pk, a), he.encrypt_bits(pk, b)
            counts.append((
                he.decrypt_count(sk, he.encrypted_intersection_count(enc_a, enc_b, pk)),
                he.decrypt_count(sk, he.encrypted_popcount(enc_a, pk)),
            ))
        assert counts[0] == counts[1] == (int(np.sum(a & b)), int(a.sum()))


def test_backend_availability():
    assert he.backend_available(HeBackend.EMULATED)
    try:
        import tenseal  # noqa: F401
    except ImportError:
        assert not he.backend_available(HeBackend.LATTICE)
    else:
        assert he.backend_available(HeBackend.LATTICE)


@pytest.mark.slow
def test_lattice_matches_plaintext_on_random_pairs():
    pytest.importorskip("tenseal")
    keys = he.keygen(HeParams(backend=HeBackend.LATTICE, seed=9))
    pk, sk = keys.public_key, keys.secret_key
    rng = np.random.default_rng(9)
    for _ in range(100):
        density = rng.uniform(0.0, 0.5)
        a = (rng.random(4096) < density).astype(np.uint8)
        b = (rng.random(4096) < density).astype(np.uint8)
        ct = he.encrypted_intersection_count(he.encrypt_bits(pk, a), he.encrypt_bits(pk, b), pk)
        assert he.decrypt_count(sk, ct) == int(np.sum(a & b))
