"""Random-hyperplane SimHash and consensus codes."""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from app.infra.error_handler import ValidationError
from app.models.bitstring import BitString


@dataclass(frozen=True)
class ProjectionSet:
    """n hyperplanes of dimension d, regenerated identically from (n, d, seed)."""
    n: int
    d: int
    seed: int
    planes: np.ndarray = field(repr=False, compare=False)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ProjectionSet):
            return NotImplemented
        return (self.n, self.d, self.seed) == (other.n, other.d, other.seed) and bool(
            np.array_equal(self.planes, other.planes)
        )

    def __hash__(self) -> int:
        return hash((self.n, self.d, self.seed))


def make_hyperplanes(n: int, d: int, seed: int) -> ProjectionSet:
    """Draw n standard-normal planes of dimension d."""
    if n < 1:
        raise ValidationError(f"hyperplane count must be >= 1, got {n}")
    if d < 2:
        raise ValidationError(f"dimension must be >= 2, got {d}")
    planes = np.random.default_rng(seed).standard_normal((n, d))
    planes.setflags(write=False)
    return ProjectionSet(n=n, d=d, seed=seed, planes=planes)


def simhash(v: np.ndarray, planes: ProjectionSet) -> BitString:
    """Bit i is 1 iff dot(v, plane_i) >= 0."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (planes.d,):
        raise ValidationError(f"vector dimension {v.shape} does not match planes dimension {planes.d}")
    return BitString((planes.planes @ v >= 0).astype(np.uint8))


def simhash_many(vectors: np.ndarray, planes: ProjectionSet) -> np.ndarray:
    """Hash each row of a (count, d) matrix; returns a (count, n) uint8 bit matrix."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    if vectors.shape[1] != planes.d:
        raise ValidationError(f"vector dimension {vectors.shape[1]} does not match planes dimension {planes.d}")
    return (vectors @ planes.planes.T >= 0).astype(np.uint8)


def consensus(hashes) -> BitString:
    """
    Per-bit majority vote; exact ties resolve to 0.

    Accepts a sequence of BitStrings or a (count, n) bit matrix.
    """
    if isinstance(hashes, np.ndarray):
        matrix = np.atleast_2d(hashes)
    else:
        hashes = list(hashes)
        if not hashes:
            raise ValidationError("consensus of an empty list")
        lengths = {len(h) for h in hashes}
        if len(lengths) != 1:
            raise ValidationError(f"ragged hash lengths {sorted(lengths)}")
        matrix = np.stack([h.bits for h in hashes])
    if matrix.shape[0] == 0:
        raise ValidationError("consensus of an empty list")
    ones = matrix.sum(axis=0, dtype=np.int64)
    return BitString((2 * ones > matrix.shape[0]).astype(np.uint8))


def hamming(a: BitString, b: BitString) -> int:
    """Number of differing positions."""
    if len(a) != len(b):
        raise ValidationError(f"hamming distance of {len(a)}-bit and {len(b)}-bit strings")
    return int(np.count_nonzero(a.bits != b.bits))


def hamming_matrix(left: Sequence[BitString], right: Sequence[BitString]) -> np.ndarray:
    """Pairwise distances, shape (len(left), len(right))."""
    if not left or not right:
        return np.zeros((len(left), len(right)), dtype=np.int64)
    a = np.stack([w.bits for w in left]).astype(np.int64)
    b = np.stack([w.bits for w in right]).astype(np.int64)
    if a.shape[1] != b.shape[1]:
        raise ValidationError("hamming matrix over strings of different lengths")
    # |a xor b| = |a| + |b| - 2 a.b
    return a.sum(axis=1)[:, None] + b.sum(axis=1)[None, :] - 2 * (a @ b.T)
