"""
Binary BCH codes over GF(2^m).

Code construction (primitive polynomials, minimal polynomials, generator) uses
galois. Encoding and decoding run on integer log/antilog tables: numpy-vectorized
syndromes and Chien search, Berlekamp-Massey in plain Python.

Bit convention: bit i of a length-n word is the coefficient of x^(n-1-i).
Codewords are systematic, message bits first.
"""

import functools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Tuple

import galois
import numpy as np

from app.infra.error_handler import (
    CodeSelectionError,
    DecodeFailure,
    InvariantViolation,
    ValidationError,
)
from app.infra.metrics import decode_failures_total
from app.models.bitstring import BitString

logger = logging.getLogger(__name__)

SUPPORTED_FIELD_DEGREES = (4, 6, 7, 8)
NOMINAL_BITS = (64, 128, 256)


class FieldTables:
    """Log/antilog tables of GF(2^m) under the smallest primitive polynomial of degree m."""

    def __init__(self, m: int):
        if m not in SUPPORTED_FIELD_DEGREES:
            raise ValidationError(f"unsupported field degree {m}; expected one of {SUPPORTED_FIELD_DEGREES}")
        self.m = m
        self.n = (1 << m) - 1
        self.primitive_poly = galois.primitive_poly(2, m, method="min")
        self.modulus = _poly_to_int(self.primitive_poly)

        exp = [0] * (2 * self.n)
        log = [0] * (self.n + 1)
        x = 1
        for i in range(self.n):
            exp[i] = x
            log[x] = i
            x <<= 1
            if x & (1 << m):
                x ^= self.modulus
        if x != 1 or len(set(exp[:self.n])) != self.n:
            raise InvariantViolation(f"polynomial {self.primitive_poly} is not primitive")
        exp[self.n:] = exp[:self.n]

        self.exp = exp
        self.log = log
        self.exp_np = np.array(exp, dtype=np.int64)

    def galois_field(self):
        return galois.GF(2 ** self.m, irreducible_poly=self.primitive_poly)


@functools.lru_cache(maxsize=None)
def get_field(m: int) -> FieldTables:
    return FieldTables(m)


def _poly_to_int(poly: galois.Poly) -> int:
    value = 0
    for c in poly.coeffs:
        value = (value << 1) | int(c)
    return value


def field_degree(n: int) -> int:
    """m such that n = 2^m - 1, for the supported code lengths."""
    for m in SUPPORTED_FIELD_DEGREES:
        if n == (1 << m) - 1:
            return m
    lengths = [(1 << m) - 1 for m in SUPPORTED_FIELD_DEGREES]
    raise ValidationError(f"unsupported code length {n}; native lengths are {lengths}")


@functools.lru_cache(maxsize=None)
def cyclotomic_cosets(n: int) -> Tuple[Tuple[int, ...], ...]:
    """2-cyclotomic cosets modulo n of the nonzero exponents, representative first."""
    seen = set()
    cosets = []
    for s in range(1, n):
        if s in seen:
            continue
        coset = []
        x = s
        while x not in coset:
            coset.append(x)
            x = (2 * x) % n
        seen.update(coset)
        cosets.append(tuple(coset))
    return tuple(cosets)


def _coset_representatives(n: int, t: int) -> List[int]:
    """Representatives of the cosets containing any of 1..2t."""
    reps = []
    for coset in cyclotomic_cosets(n):
        if any(1 <= e <= 2 * t for e in coset):
            reps.append(coset[0])
    return reps


@dataclass(frozen=True)
class BchCode:
    """A table-listed binary BCH code. ``tau`` is the requested tolerance when selected from a grid."""
    m: int
    n: int
    k: int
    t: int
    generator: int = field(repr=False)
    tau: Optional[int] = field(default=None, compare=False)

    @property
    def params(self) -> Tuple[int, int, int]:
        return self.n, self.k, self.t

    @property
    def field(self) -> FieldTables:
        return get_field(self.m)

    def generator_bits(self) -> BitString:
        """Generator coefficients, highest degree first."""
        deg = self.n - self.k
        return BitString([(self.generator >> (deg - i)) & 1 for i in range(deg + 1)])

    def __str__(self) -> str:
        return f"({self.n},{self.k},{self.t})"


@functools.lru_cache(maxsize=None)
def code_table(n: int) -> Tuple[Tuple[int, int, int], ...]:
    """
    All (n, k, t) entries at native length n, ascending in t.

    t is the largest designed capability that yields dimension k. The
    repetition code (k = 1) is excluded.
    """
    field_degree(n)
    covered = set()
    best: Dict[int, int] = {}
    for t in range(1, (n - 1) // 2 + 1):
        for coset in cyclotomic_cosets(n):
            if coset[0] not in covered and any(1 <= e <= 2 * t for e in coset):
                covered.update(coset)
        k = n - len(covered)
        if k <= 1:
            break
        best[k] = t
    return tuple(sorted(((n, k, t) for k, t in best.items()), key=lambda entry: entry[2]))


@functools.lru_cache(maxsize=None)
def _construct(n: int, k: int, t: int) -> BchCode:
    m = field_degree(n)
    tables = get_field(m)
    gf = tables.galois_field()
    alpha = gf(2)

    minimal_polys = [(alpha ** rep).minimal_poly() for rep in _coset_representatives(n, t)]
    generator = minimal_polys[0] if len(minimal_polys) == 1 else galois.lcm(*minimal_polys)

    if generator.degree != n - k:
        raise InvariantViolation(f"generator degree {generator.degree} != n - k = {n - k}")
    if galois.Poly.Degrees([n, 0]) % generator != galois.Poly.Zero():
        raise InvariantViolation(f"generator does not divide x^{n} + 1")

    code = BchCode(m=m, n=n, k=k, t=t, generator=_poly_to_int(generator))
    logger.debug("BCH code constructed", extra={"n": n, "k": k, "t": t})
    return code


def build_code(n: int, t: int) -> BchCode:
    """
    Code at native length n with the smallest table capability >= t.

    Raises:
        CodeSelectionError: t exceeds every table entry at this length
    """
    if t < 0:
        raise ValidationError("t must be non-negative")
    table = code_table(n)
    for n_, k, t_ in table:
        if t_ >= t:
            return _construct(n_, k, t_)
    max_t = table[-1][2]
    raise CodeSelectionError(
        f"no BCH code of length {n} corrects {t} errors; maximum achievable t is {max_t}",
        max_t=max_t,
    )


def code_for(n: int, k: int, t: int) -> BchCode:
    """The code addressed by an exact (n, k, t) tuple from serialized metadata."""
    if (n, k, t) not in code_table(n):
        raise ValidationError(f"({n},{k},{t}) is not a table-listed BCH code")
    return _construct(n, k, t)


def select_code(n_bits: int, r: float) -> BchCode:
    """
    Map a nominal hash length and error ratio to a code.

    n = n_bits - 1 (native length), tau = floor(r * n), smallest table t >= tau.
    """
    if n_bits not in NOMINAL_BITS:
        raise ValidationError(f"n_bits must be one of {NOMINAL_BITS}, got {n_bits}")
    if not 0.0 < r < 0.5:
        raise ValidationError(f"error ratio must be in (0, 0.5), got {r}")
    n = n_bits - 1
    tau = int(np.floor(r * n + 1e-9))
    code = build_code(n, tau)
    return BchCode(m=code.m, n=code.n, k=code.k, t=code.t, generator=code.generator, tau=tau)


def _bits_to_int(bits: np.ndarray) -> int:
    pad = (-bits.size) % 8
    return int.from_bytes(np.packbits(bits).tobytes(), "big") >> pad


def _int_to_bits(value: int, length: int) -> BitString:
    nbytes = (length + 7) // 8
    pad = 8 * nbytes - length
    return BitString.from_bytes((value << pad).to_bytes(nbytes, "big"), length)


def encode(code: BchCode, message: BitString) -> BitString:
    """Systematic encoding: message bits, then x^(n-k) msg(x) mod g(x)."""
    if len(message) != code.k:
        raise ValidationError(f"message has {len(message)} bits, code expects k = {code.k}")
    deg = code.n - code.k
    shifted = _bits_to_int(message.bits) << deg
    remainder = shifted
    while remainder and remainder.bit_length() - 1 >= deg:
        remainder ^= code.generator << (remainder.bit_length() - 1 - deg)
    return _int_to_bits(shifted | remainder, code.n)


def random_codeword(code: BchCode, seed) -> BitString:
    """Encode a uniform k-bit message drawn from ``seed`` (int, SeedSequence or Generator)."""
    rng = np.random.default_rng(seed)
    return encode(code, BitString(rng.integers(0, 2, size=code.k, dtype=np.uint8)))


class DecodeResult(NamedTuple):
    codeword: BitString
    errors_corrected: int


def syndromes(code: BchCode, bits: np.ndarray) -> np.ndarray:
    """S_j = r(alpha^j) for j = 1..2t, as field-element integers."""
    tables = code.field
    degrees = (code.n - 1) - np.flatnonzero(bits)
    js = np.arange(1, 2 * code.t + 1, dtype=np.int64)
    if degrees.size == 0:
        return np.zeros(js.size, dtype=np.int64)
    powers = np.outer(js, degrees) % code.n
    return np.bitwise_xor.reduce(tables.exp_np[powers], axis=1)


def _berlekamp_massey(tables: FieldTables, synd: List[int]) -> Tuple[List[int], int]:
    """Error-locator polynomial (ascending coefficients) and its length L."""
    exp, log, n = tables.exp, tables.log, tables.n
    size = len(synd) + 1
    locator = [1] + [0] * (size - 1)
    prev = [1] + [0] * (size - 1)
    length = 0
    shift = 1
    prev_disc = 1

    for r in range(len(synd)):
        disc = synd[r]
        for i in range(1, length + 1):
            if locator[i] and synd[r - i]:
                disc ^= exp[log[locator[i]] + log[synd[r - i]]]
        if disc == 0:
            shift += 1
            continue

        scale = (log[disc] - log[prev_disc]) % n
        saved = locator[:] if 2 * length <= r else None
        for i, coef in enumerate(prev):
            if coef and i + shift < size:
                locator[i + shift] ^= exp[scale + log[coef]]
        if saved is not None:
            length = r + 1 - length
            prev = saved
            prev_disc = disc
            shift = 1
        else:
            shift += 1

    return locator[:length + 1], length


def _chien_search(tables: FieldTables, locator: List[int]) -> np.ndarray:
    """Degrees e with locator(alpha^-e) = 0."""
    n = tables.n
    es = np.arange(n, dtype=np.int64)
    acc = np.zeros(n, dtype=np.int64)
    for i, coef in enumerate(locator):
        if coef:
            acc ^= tables.exp_np[(tables.log[coef] - i * es) % n]
    return np.flatnonzero(acc == 0)


def decode(code: BchCode, word: BitString) -> DecodeResult:
    """
    Bounded-distance decoding.

    Returns the codeword within distance t together with the number of flipped
    bits. A word farther than t from every codeword raises DecodeFailure or, rarely,
    miscorrects to some codeword within t of the word; the returned value is
    always a codeword.

    Raises:
        ValidationError: word length differs from n
        DecodeFailure: syndrome pattern inconsistent with <= t errors
    """
    if len(word) != code.n:
        raise ValidationError(f"word has {len(word)} bits, code length is {code.n}")

    synd = syndromes(code, word.bits)
    if not synd.any():
        return DecodeResult(word, 0)

    tables = code.field
    locator, length = _berlekamp_massey(tables, [int(s) for s in synd])
    if length > code.t:
        decode_failures_total.inc()
        raise DecodeFailure(f"error locator degree {length} exceeds t = {code.t}")

    degrees = _chien_search(tables, locator)
    if degrees.size != length:
        decode_failures_total.inc()
        raise DecodeFailure(f"locator of degree {length} has {degrees.size} roots in the field")

    corrected = word.flip((code.n - 1) - degrees)
    if syndromes(code, corrected.bits).any():
        decode_failures_total.inc()
        raise DecodeFailure("corrected word is not a codeword")
    return DecodeResult(corrected, int(length))
