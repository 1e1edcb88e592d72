"""Bit-accurate hyperdimensional computing primitives of the Hypnos encoder.

Vectors are dense ``uint8`` bit arrays (one element per bit). Every value is
read-only after construction and every operation returns a new object, so the
functions here can be shared freely between concurrently running simulations.

The silicon permutation wiring and seed vector are not public. They are
regenerated from the raw 64-bit stream of numpy's PCG64 bit generator
(stable across numpy releases) with a Fisher-Yates shuffle, so golden
vectors frozen in the tests stay valid.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

LEGAL_DIMS = (512, 1024, 1536, 2048)
DATAPATH_BITS = 512
N_PERMUTATIONS = 4
AM_ROWS = 16
AM_CAPACITY_BITS = 32 * 1024
COUNTER_MIN = -128
COUNTER_MAX = 127
DEFAULT_MASTER_SEED = 0


class HDCError(ValueError):
    """Invalid argument to an HDC primitive (dimension, index or range)."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _check_dim(dim: int) -> None:
    if dim not in LEGAL_DIMS:
        raise HDCError(f"dimension {dim} not in {LEGAL_DIMS}")


@dataclass(frozen=True, eq=False)
class HDVector:
    """Fixed-width binary hypervector."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits)
        if bits.ndim != 1:
            raise HDCError("bits must be one-dimensional")
        _check_dim(bits.shape[0])
        if bits.dtype != np.uint8 or bits.flags.writeable:
            if bits.size and (bits.min() < 0 or bits.max() > 1):
                raise HDCError("bits must be 0 or 1")
            bits = _frozen(bits.astype(np.uint8, copy=True))
        object.__setattr__(self, "bits", bits)

    @property
    def dim(self) -> int:
        return int(self.bits.shape[0])

    @classmethod
    def zeros(cls, dim: int) -> HDVector:
        return cls(np.zeros(dim, dtype=np.uint8))

    @classmethod
    def ones(cls, dim: int) -> HDVector:
        return cls(np.ones(dim, dtype=np.uint8))

    @classmethod
    def random(cls, dim: int, rng: np.random.Generator) -> HDVector:
        return cls(rng.integers(0, 2, size=dim, dtype=np.uint8))

    @classmethod
    def from_int(cls, value: int, dim: int) -> HDVector:
        """Build from an integer, bit ``i`` of the integer is vector bit ``i``."""
        raw = value.to_bytes(dim // 8, "little")
        return cls(np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little"))

    def to_int(self) -> int:
        return int.from_bytes(np.packbits(self.bits, bitorder="little").tobytes(), "little")

    @classmethod
    def from_hex(cls, text: str, dim: int) -> HDVector:
        return cls.from_int(int(text, 16), dim)

    def to_hex(self) -> str:
        return f"{self.to_int():0{self.dim // 4}x}"

    def popcount(self) -> int:
        return int(np.count_nonzero(self.bits))

    def __invert__(self) -> HDVector:
        return HDVector(self.bits ^ 1)

    def __xor__(self, other: HDVector) -> HDVector:
        return bind(self, other)

    def __and__(self, other: HDVector) -> HDVector:
        _same_dim(self, other)
        return HDVector(self.bits & other.bits)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, HDVector):
            return NotImplemented
        return self.dim == other.dim and bool(np.array_equal(self.bits, other.bits))

    def __hash__(self) -> int:
        return hash((self.dim, self.bits.tobytes()))

    def __repr__(self) -> str:
        return f"HDVector(dim={self.dim}, popcount={self.popcount()})"


def _same_dim(a: HDVector, b: HDVector) -> None:
    if a.dim != b.dim:
        raise HDCError(f"dimension mismatch: {a.dim} vs {b.dim}")


class _RawStream:
    """Uniform integers drawn from PCG64 raw 64-bit outputs."""

    def __init__(self, seed: int) -> None:
        self._bitgen = np.random.PCG64(seed)

    def below(self, n: int) -> int:
        # multiply-shift range reduction; bias is < n / 2**64
        return (int(self._bitgen.random_raw()) * n) >> 64

    def bits(self, n: int) -> np.ndarray:
        words = (n + 63) // 64
        raw = np.asarray(self._bitgen.random_raw(words), dtype="<u8")
        return np.unpackbits(raw.view(np.uint8), bitorder="little")[:n].copy()


def fisher_yates(n: int, stream: _RawStream) -> np.ndarray:
    perm = np.arange(n, dtype=np.int64)
    for i in range(n - 1, 0, -1):
        j = stream.below(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


@dataclass(frozen=True, eq=False)
class PermutationSet:
    """Four hardwired permutations plus the pseudo-random IM seed vector."""

    dim: int
    perms: tuple[np.ndarray, ...]
    seed: HDVector
    master_seed: int = DEFAULT_MASTER_SEED

    def __post_init__(self) -> None:
        _check_dim(self.dim)
        if len(self.perms) != N_PERMUTATIONS:
            raise HDCError(f"expected {N_PERMUTATIONS} permutations")
        for p in self.perms:
            if p.shape != (self.dim,) or not np.array_equal(np.sort(p), np.arange(self.dim)):
                raise HDCError("permutation table is not a bijection")
        if self.seed.dim != self.dim:
            raise HDCError("seed dimension mismatch")

    @classmethod
    def generate(cls, dim: int, master_seed: int = DEFAULT_MASTER_SEED) -> PermutationSet:
        return _generate(dim, master_seed)


@lru_cache(maxsize=None)
def _generate(dim: int, master_seed: int) -> PermutationSet:
    _check_dim(dim)
    stream = _RawStream(master_seed * 4096 + dim)
    perms = tuple(_frozen(fisher_yates(dim, stream)) for _ in range(N_PERMUTATIONS))
    seed = HDVector(stream.bits(dim))
    return PermutationSet(dim=dim, perms=perms, seed=seed, master_seed=master_seed)


def permute(v: HDVector, perm_id: int, pset: PermutationSet) -> HDVector:
    """Apply hardwired permutation ``perm_id``: ``out[perm[j]] = v[j]``."""
    if v.dim != pset.dim:
        raise HDCError(f"dimension mismatch: {v.dim} vs {pset.dim}")
    if not 0 <= perm_id < N_PERMUTATIONS:
        raise HDCError(f"perm_id {perm_id} out of range 0..{N_PERMUTATIONS - 1}")
    out = np.empty_like(v.bits)
    out[pset.perms[perm_id]] = v.bits
    return HDVector(out)


def bind(a: HDVector, b: HDVector) -> HDVector:
    _same_dim(a, b)
    return HDVector(a.bits ^ b.bits)


def hamming(a: HDVector, b: HDVector) -> int:
    _same_dim(a, b)
    return int(np.count_nonzero(a.bits != b.bits))


@dataclass(frozen=True, eq=False)
class BundleAccumulator:
    """Per-bit signed saturating 8-bit counters.

    ``count`` tracks how many vectors were accumulated (the hardware has no
    such register; it only guards finalize on an empty accumulator).
    """

    counters: np.ndarray
    count: int = 0

    @classmethod
    def empty(cls, dim: int) -> BundleAccumulator:
        _check_dim(dim)
        return cls(_frozen(np.zeros(dim, dtype=np.int16)), 0)

    @property
    def dim(self) -> int:
        return int(self.counters.shape[0])


def bundle_accumulate(acc: BundleAccumulator, v: HDVector) -> BundleAccumulator:
    if acc.dim != v.dim:
        raise HDCError(f"dimension mismatch: {acc.dim} vs {v.dim}")
    step = v.bits.astype(np.int16) * 2 - 1
    counters = np.clip(acc.counters + step, COUNTER_MIN, COUNTER_MAX).astype(np.int16)
    return BundleAccumulator(_frozen(counters), acc.count + 1)


def bundle_finalize(acc: BundleAccumulator, tie_rule: int = 0) -> HDVector:
    """Majority vote: bit is 1 where the counter is positive, ``tie_rule`` where it is 0."""
    if acc.count == 0:
        raise HDCError("bundle of an empty accumulator")
    if tie_rule not in (0, 1):
        raise HDCError("tie_rule must be 0 or 1")
    bits = (acc.counters > 0).astype(np.uint8)
    if tie_rule:
        bits |= (acc.counters == 0).astype(np.uint8)
    return HDVector(bits)


def bundle(vectors: Iterable[HDVector], tie_rule: int = 0) -> HDVector:
    vectors = list(vectors)
    if not vectors:
        raise HDCError("bundle of an empty sequence")
    acc = BundleAccumulator.empty(vectors[0].dim)
    for v in vectors:
        acc = bundle_accumulate(acc, v)
    return bundle_finalize(acc, tie_rule)


def im_encode(word: int, width_d: int, pset: PermutationSet, pair_select: int = 0) -> HDVector:
    """Item-memory rematerialization: one permutation per input bit, LSB first.

    Bit ``b`` of ``word`` selects permutation ``2 * pair_select + b``.
    """
    if not 1 <= width_d <= 32:
        raise HDCError(f"input width {width_d} out of range 1..32")
    if pair_select not in (0, 1):
        raise HDCError("pair_select must be 0 or 1")
    if word < 0:
        raise HDCError("word must be unsigned")
    bits = pset.seed.bits
    for i in range(width_d):
        perm = pset.perms[2 * pair_select + ((word >> i) & 1)]
        out = np.empty_like(bits)
        out[perm] = bits
        bits = out
    return HDVector(bits)


def cim_flips(level: int, max_level: int, dim: int) -> int:
    # round half up, never banker's rounding
    return (2 * level * dim + 2 * max_level) // (4 * max_level)


def cim_encode(level: int, max_level: int, base: HDVector) -> HDVector:
    """Continuous item memory: flip the lowest ``round(level/max * dim/2)`` bit positions."""
    if max_level < 1:
        raise HDCError("max_level must be >= 1")
    if not 0 <= level <= max_level:
        raise HDCError(f"level {level} out of range 0..{max_level}")
    flips = cim_flips(level, max_level, base.dim)
    bits = base.bits.copy()
    bits[:flips] ^= 1
    return HDVector(bits)


@dataclass(frozen=True)
class AssociativeMemory:
    """Up to 16 latch-based rows of equal dimension."""

    dim: int
    rows: tuple[HDVector | None, ...] = (None,) * AM_ROWS

    def __post_init__(self) -> None:
        _check_dim(self.dim)
        if len(self.rows) != AM_ROWS:
            raise HDCError(f"associative memory has exactly {AM_ROWS} row slots")
        if self.dim * AM_ROWS > AM_CAPACITY_BITS:
            raise HDCError("associative memory capacity exceeded")
        for r in self.rows:
            if r is not None and r.dim != self.dim:
                raise HDCError("row dimension mismatch")

    @classmethod
    def empty(cls, dim: int) -> AssociativeMemory:
        return cls(dim)

    def read(self, row: int) -> HDVector:
        _check_row(row)
        v = self.rows[row]
        if v is None:
            raise HDCError(f"AM row {row} is empty")
        return v

    @property
    def occupied(self) -> list[int]:
        return [i for i, r in enumerate(self.rows) if r is not None]


def _check_row(row: int) -> None:
    if not 0 <= row < AM_ROWS:
        raise HDCError(f"AM row {row} out of range 0..{AM_ROWS - 1}")


def am_write(am: AssociativeMemory, row: int, v: HDVector) -> AssociativeMemory:
    _check_row(row)
    if v.dim != am.dim:
        raise HDCError(f"dimension mismatch: {v.dim} vs {am.dim}")
    rows = list(am.rows)
    rows[row] = v
    return AssociativeMemory(am.dim, tuple(rows))


def am_lookup(am: AssociativeMemory, query: HDVector) -> tuple[int, int]:
    """Sequential scan for the minimal Hamming distance; first row wins ties."""
    if query.dim != am.dim:
        raise HDCError(f"dimension mismatch: {query.dim} vs {am.dim}")
    best: tuple[int, int] | None = None
    for i, row in enumerate(am.rows):
        if row is None:
            continue
        d = hamming(row, query)
        if best is None or d < best[1]:
            best = (i, d)
    if best is None:
        raise HDCError("lookup on an empty associative memory")
    return best


def vector_cycles(dim: int) -> int:
    """Datapath passes needed for one vector op on the 512-bit datapath."""
    return -(-dim // DATAPATH_BITS)


def stack(vectors: Sequence[HDVector]) -> np.ndarray:
    return np.stack([v.bits for v in vectors])
