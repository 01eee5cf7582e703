"""Seeded random-binning codebooks.

The idealized uniform random binning of the coding scheme is realized by a
keyed 128-bit hash (blake2b) of the canonical byte encoding of
(sensor, subcodebook, block, sequence), reduced modulo the block's bin count.
This keeps codebooks O(1) memory while behaving statistically like stored
random bins. Bin counts are rounded up to integers; rate accounting elsewhere
uses log2(actual bin count) so it stays exact.

A variable-rate codebook for sensor i consists of C subcodebooks, each a chain
of J_i block encoders: the first block carries n*(eps+nu) bits, later blocks
n*eps bits each. Composite encodings are prefixes of one another by
construction. The same hashing realizes one-shot fixed-rate encoders.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from hashlib import blake2b

import numpy as np

_SEED_MASK = (1 << 64) - 1


class EnumerationGuardError(RuntimeError):
    """Raised when a requested exhaustive search exceeds the desk-scale guard."""


@lru_cache(maxsize=None)
def all_sequences(alphabet: int, n: int) -> np.ndarray:
    """All length-n sequences over {0..alphabet-1} in lexicographic order."""
    if n * math.log2(alphabet) > 22 + 1e-9:
        raise EnumerationGuardError(
            f"sequence space {alphabet}^{n} exceeds the 2^22 enumeration guard")
    total = alphabet ** n
    rows = np.stack(np.unravel_index(np.arange(total), (alphabet,) * n), axis=1)
    rows = np.ascontiguousarray(rows.astype(np.uint8))
    rows.setflags(write=False)
    return rows


@lru_cache(maxsize=None)
def all_sequence_bytes(alphabet: int, n: int) -> tuple[bytes, ...]:
    return tuple(row.tobytes() for row in all_sequences(alphabet, n))


def sequence_bytes(x) -> bytes:
    """Canonical byte encoding of a symbol sequence: one byte per symbol."""
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise ValueError("expected a single 1-d sequence")
    if arr.size and (arr.min() < 0 or arr.max() > 255):
        raise ValueError("symbols must fit in one byte")
    return arr.astype(np.uint8).tobytes()


def _hash_to_bin(key: bytes, header: bytes, payload: bytes, bins: int) -> int:
    digest = blake2b(header + payload, key=key, digest_size=16).digest()
    return int.from_bytes(digest, "big") % bins


def bin_count_for_rate(n: int, rate: float) -> int:
    """ceil(2^(n*rate)) bins; a zero rate yields the single trivial bin."""
    if rate < 0:
        raise ValueError("rate must be nonnegative")
    return max(1, math.ceil(2.0 ** (n * rate)))


@dataclass(frozen=True)
class BinIndexChain:
    """Composite bin index: the chosen subcodebook and one index per block."""

    c: int
    indices: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))

    @property
    def blocks(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class BinningCodebook:
    """Incremental-rate subcodebook family for one sensor.

    Block j=0 has ceil(2^(n(eps+nu))) bins, blocks j>=1 have ceil(2^(n eps));
    there are J = max(1, ceil(log2(alphabet)/eps)) blocks per subcodebook and
    C subcodebooks, all derived from one master seed.
    """

    sensor_id: int
    n: int
    alphabet_size: int
    eps: float
    nu: float
    C: int
    master_seed: int

    def __post_init__(self):
        if self.eps <= 0 or self.nu <= 0:
            raise ValueError("eps and nu must be positive")
        if self.C < 1:
            raise ValueError("need at least one subcodebook")

    @property
    def J(self) -> int:
        return max(1, math.ceil(math.log2(self.alphabet_size) / self.eps))

    def bin_count(self, j: int) -> int:
        self._check_block(j)
        rate = self.eps + self.nu if j == 0 else self.eps
        return bin_count_for_rate(self.n, rate)

    def block_bits(self, j: int) -> float:
        """Exact payload size of block j in bits: log2(actual bin count)."""
        return math.log2(self.bin_count(j))

    def _check_block(self, j: int, c: int | None = None) -> None:
        if not 0 <= j < self.J:
            raise ValueError(f"block index {j} out of range [0, {self.J})")
        if c is not None and not 0 <= c < self.C:
            raise ValueError(f"subcodebook index {c} out of range [0, {self.C})")

    def _key(self) -> bytes:
        return (self.master_seed & _SEED_MASK).to_bytes(8, "big")

    def encode_block_bytes(self, xb: bytes, c: int, j: int) -> int:
        self._check_block(j, c)
        header = struct.pack(">BIII", 0x01, self.sensor_id, c, j)
        return _hash_to_bin(self._key(), header, xb, self.bin_count(j))

    def encode_block(self, x, c: int, j: int) -> int:
        """Bin index of sequence x under subcodebook c, block j."""
        xb = sequence_bytes(x)
        if len(xb) != self.n:
            raise ValueError(f"sequence length {len(xb)} != n={self.n}")
        return self.encode_block_bytes(xb, c, j)

    def composite_encode(self, x, c: int, j: int) -> BinIndexChain:
        """Chain of block indices for blocks 0..j (inclusive)."""
        self._check_block(j, c)
        xb = sequence_bytes(x)
        return BinIndexChain(c, tuple(self.encode_block_bytes(xb, c, k)
                                      for k in range(j + 1)))

    def search_bin(self, chain: BinIndexChain, candidates) -> list[np.ndarray]:
        """All candidate sequences whose composite encoding equals ``chain``,
        in lexicographic order. Candidate set must be desk-scale."""
        matches = []
        for cand in sorted((np.asarray(c) for c in candidates), key=lambda a: tuple(a)):
            xb = sequence_bytes(cand)
            ok = True
            for k, want in enumerate(chain.indices):
                if self.encode_block_bytes(xb, chain.c, k) != want:
                    ok = False
                    break
            if ok:
                matches.append(cand)
        return matches


def fixed_rate_encode(seed: int, sensor_id: int, x, rate: float, c: int = 0) -> int:
    """One-shot fixed-rate bin index: deterministic in (seed, sensor, c, x)."""
    xb = sequence_bytes(x)
    bins = bin_count_for_rate(len(xb), rate)
    header = struct.pack(">BIII", 0x02, sensor_id, c, 0)
    return _hash_to_bin((seed & _SEED_MASK).to_bytes(8, "big"), header, xb, bins)


def fixed_rate_encode_bytes(seed: int, sensor_id: int, xb: bytes, bins: int, c: int = 0) -> int:
    header = struct.pack(">BIII", 0x02, sensor_id, c, 0)
    return _hash_to_bin((seed & _SEED_MASK).to_bytes(8, "big"), header, xb, bins)
