"""
Code-offset fuzzy extractor.

gen publishes P = w xor c for a random codeword c, a per-enrollment salt and a
verification tag; R is derived from (salt, w). rep decodes w' xor P, rebuilds
the candidate w~ = P xor c', and only accepts it when the tag matches.
"""

import hashlib
from typing import NamedTuple, Optional

import numpy as np

from app.infra.error_handler import DecodeFailure, ValidationError
from app.models.bitstring import BitString
from app.models.helper import SALT_BYTES, TAG_BYTES, HelperData, Identifier
from app.services.bch import BchCode, code_for, decode, random_codeword

KDF_R = b"headcount/r"
KDF_TAG = b"headcount/tag"


def kdf(prefix: bytes, salt: bytes, w: BitString) -> bytes:
    """SHA-256 over prefix || salt || packed bits of w."""
    return hashlib.sha256(prefix + salt + w.to_bytes()).digest()


def _tag(salt: bytes, w: BitString) -> bytes:
    return kdf(KDF_TAG, salt, w)[:TAG_BYTES]


class Enrollment(NamedTuple):
    identifier: Identifier
    helper: HelperData


class Reproduction(NamedTuple):
    identifier: Identifier
    corrected_bits: int


def gen(w: BitString, code: BchCode, rng_seed, salt: Optional[bytes] = None) -> Enrollment:
    """
    Enroll w.

    Args:
        w: Hash of length n
        code: BCH code used for the offset
        rng_seed: Seed (or numpy Generator) for the salt and the random codeword
        salt: Forced salt, e.g. a stable cross-epoch salt

    Returns:
        (identifier, helper data)
    """
    if len(w) != code.n:
        raise ValidationError(f"hash has {len(w)} bits, code length is {code.n}")
    rng = np.random.default_rng(rng_seed)
    drawn_salt = rng.bytes(SALT_BYTES)
    if salt is None:
        salt = drawn_salt
    elif len(salt) != SALT_BYTES:
        raise ValidationError(f"salt must be {SALT_BYTES} bytes")

    codeword = random_codeword(code, rng)
    helper = HelperData(
        n=code.n,
        k=code.k,
        t=code.t,
        offset=w ^ codeword,
        salt=salt,
        tag=_tag(salt, w),
    )
    return Enrollment(Identifier(kdf(KDF_R, salt, w)), helper)


def reproduce(w_prime: BitString, helper: HelperData, code: Optional[BchCode] = None) -> Optional[Reproduction]:
    """
    Reproduce the enrolled identifier, reporting how many bits decoding corrected.

    Returns None when decoding fails or the tag rejects the recovered input.
    """
    if len(w_prime) != helper.n:
        raise ValidationError(f"hash has {len(w_prime)} bits, helper expects {helper.n}")
    if code is None:
        code = code_for(helper.n, helper.k, helper.t)
    elif code.params != helper.code_params:
        raise ValidationError(f"code {code} does not match helper parameters {helper.code_params}")

    try:
        codeword, corrected = decode(code, w_prime ^ helper.offset)
    except DecodeFailure:
        return None

    recovered = helper.offset ^ codeword
    if _tag(helper.salt, recovered) != helper.tag:
        return None
    return Reproduction(Identifier(kdf(KDF_R, helper.salt, recovered)), corrected)


def rep(w_prime: BitString, helper: HelperData, code: Optional[BchCode] = None) -> Optional[Identifier]:
    """Identifier if w_prime is within the correction radius of the enrolled hash, else None (NoMatch)."""
    result = reproduce(w_prime, helper, code)
    return None if result is None else result.identifier
