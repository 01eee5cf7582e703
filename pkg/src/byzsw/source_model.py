"""Seeded i.i.d. generation of source blocks and traitor side information.

One top-level 64-bit seed drives everything; per-purpose streams are derived
by keyed hashing of (seed, purpose labels) so that adding a new consumer never
perturbs the draws of existing ones. Sampling is inverse-CDF over the fixed
row-major cell order, which keeps blocks reproducible across platforms.
"""
from __future__ import annotations

from dataclasses import dataclass
from hashlib import blake2b

import numpy as np

from .prob_core import ConditionalPMF, JointPMF, _frozen

_SEED_MASK = (1 << 64) - 1


def derive_seed(master: int, *labels) -> int:
    """Derive an independent 64-bit stream seed from (master, labels)."""
    key = (int(master) & _SEED_MASK).to_bytes(8, "big")
    payload = "\x1f".join(str(l) for l in labels).encode()
    return int.from_bytes(blake2b(payload, key=key, digest_size=8).digest(), "big")


def rng_for(master: int, *labels) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(master, *labels)))


@dataclass(frozen=True)
class SourceBlock:
    """n i.i.d. joint source realizations, one row of symbols per sensor."""

    n: int
    symbols: np.ndarray  # (m, n) integer table

    def __post_init__(self):
        arr = np.asarray(self.symbols)
        if arr.ndim != 2 or arr.shape[1] != self.n:
            raise ValueError(f"symbols shape {arr.shape} inconsistent with n={self.n}")
        object.__setattr__(self, "symbols", _frozen(arr))

    def sensor(self, i: int) -> np.ndarray:
        return self.symbols[i]

    def subset(self, indices) -> np.ndarray:
        return self.symbols[list(indices)]


@dataclass(frozen=True)
class SideInfoBlock:
    """The traitors' per-slot side information W^n."""

    w_symbols: np.ndarray  # (n,)

    def __post_init__(self):
        arr = np.asarray(self.w_symbols)
        if arr.ndim != 1:
            raise ValueError("w_symbols must be one-dimensional")
        object.__setattr__(self, "w_symbols", _frozen(arr))

    @property
    def n(self) -> int:
        return int(self.w_symbols.shape[0])


def _inverse_cdf(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(cdf, u, side="left")
    return np.minimum(idx, cdf.shape[0] - 1)


def sample_block(p: JointPMF, n: int, seed: int) -> SourceBlock:
    """Draw n i.i.d. joint symbols from p; deterministic given seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = rng_for(seed, "source-block")
    cdf = np.cumsum(p.mass.ravel(order="C"))
    flat = _inverse_cdf(cdf, rng.random(n))
    symbols = np.stack(np.unravel_index(flat, p.alphabet_sizes))
    return SourceBlock(n, symbols.astype(np.int64))


def sample_side_info(r: ConditionalPMF, block: SourceBlock, seed: int) -> SideInfoBlock:
    """Per-slot independent draw w_t ~ r(. | x_1,t ... x_m,t)."""
    if block.symbols.shape[0] != len(r.input_alphabet_sizes):
        raise ValueError("block sensor count does not match channel input")
    rng = rng_for(seed, "side-info")
    cs = np.cumsum(r.rows.reshape(r.num_inputs, r.output_alphabet_size), axis=1)
    flat_in = np.ravel_multi_index(tuple(block.symbols), r.input_alphabet_sizes)
    slot_cs = cs[flat_in]                      # (n, |W|)
    u = rng.random(block.n)
    w = (slot_cs < u[:, None]).sum(axis=1)
    w = np.minimum(w, r.output_alphabet_size - 1)
    return SideInfoBlock(w.astype(np.int64))
