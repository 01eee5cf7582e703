"""Exact finite-alphabet probability and method-of-types utilities.

Everything downstream (rate regions, protocols, adversaries) is built on the
four types defined here: joint probability tables, conditional channels,
empirical types with an explicit denominator, and sensor-index subsets.

Conventions:

* all entropies and rates are in bits (log base 2),
* 0 * log 0 = 0 by continuity,
* probabilities are 64-bit floats; tables must sum to 1 within 1e-12,
* all types are immutable after construction and safe to share across
  concurrent workers; every operation is a pure function.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

PROB_ATOL = 1e-12    # normalization slack for probability tables
CHECK_ATOL = 1e-9    # generic invariant slack


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SubsetView:
    """A sorted subset of sensor indices (0-based)."""

    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(i < 0 for i in idx):
            raise ValueError(f"negative sensor index in {idx}")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError(f"indices must be strictly increasing, got {idx}")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def of(cls, *indices: int) -> "SubsetView":
        return cls(tuple(sorted({int(i) for i in indices})))

    def __iter__(self):
        return iter(self.indices)

    def __len__(self) -> int:
        return len(self.indices)

    def __contains__(self, i: int) -> bool:
        return i in self.indices

    def union(self, other: "SubsetView") -> "SubsetView":
        return SubsetView.of(*self.indices, *other.indices)

    def intersection(self, other: "SubsetView") -> "SubsetView":
        return SubsetView(tuple(i for i in self.indices if i in other.indices))

    def difference(self, other: "SubsetView") -> "SubsetView":
        return SubsetView(tuple(i for i in self.indices if i not in other.indices))

    def complement(self, m: int) -> "SubsetView":
        return SubsetView(tuple(i for i in range(m) if i not in self.indices))

    def is_subset_of(self, other: "SubsetView") -> bool:
        return all(i in other.indices for i in self.indices)

    def __str__(self) -> str:
        return "{" + ",".join(str(i) for i in self.indices) + "}"


def union_of(subsets: Iterable[SubsetView]) -> SubsetView:
    out: set[int] = set()
    for s in subsets:
        out.update(s.indices)
    return SubsetView(tuple(sorted(out)))


@dataclass(frozen=True)
class JointPMF:
    """Exact probability table over the m-fold product alphabet."""

    alphabet_sizes: tuple[int, ...]
    mass: np.ndarray

    def __post_init__(self):
        sizes = tuple(int(a) for a in self.alphabet_sizes)
        if any(a < 1 for a in sizes):
            raise ValueError(f"alphabet sizes must be positive, got {sizes}")
        arr = np.asarray(self.mass, dtype=float)
        if arr.shape != sizes:
            raise ValueError(f"mass shape {arr.shape} != alphabet sizes {sizes}")
        if np.any(arr < 0):
            raise ValueError("negative probability cell")
        total = float(arr.sum())
        if abs(total - 1.0) > PROB_ATOL:
            raise ValueError(f"mass sums to {total!r}, not 1")
        object.__setattr__(self, "alphabet_sizes", sizes)
        object.__setattr__(self, "mass", _frozen(arr))

    @classmethod
    def from_table(cls, table, alphabet_sizes=None) -> "JointPMF":
        arr = np.asarray(table, dtype=float)
        sizes = tuple(arr.shape) if alphabet_sizes is None else tuple(alphabet_sizes)
        return cls(sizes, arr.reshape(sizes))

    @property
    def m(self) -> int:
        return len(self.alphabet_sizes)

    @property
    def num_cells(self) -> int:
        return int(np.prod(self.alphabet_sizes))

    def cell(self, symbol: Sequence[int]) -> float:
        return float(self.mass[tuple(symbol)])


@dataclass(frozen=True)
class ConditionalPMF:
    """Channel r(w | x): one output distribution per joint input symbol.

    ``uniform_filled_rows`` flags (flat) input symbols whose row was not
    derivable (conditioning on a zero-probability event) and was therefore
    filled with the uniform distribution instead of raising.
    """

    input_alphabet_sizes: tuple[int, ...]
    output_alphabet_size: int
    rows: np.ndarray
    uniform_filled_rows: tuple[int, ...] = ()

    def __post_init__(self):
        sizes = tuple(int(a) for a in self.input_alphabet_sizes)
        w = int(self.output_alphabet_size)
        arr = np.asarray(self.rows, dtype=float)
        if arr.shape != sizes + (w,):
            raise ValueError(f"rows shape {arr.shape} != {sizes + (w,)}")
        if np.any(arr < 0):
            raise ValueError("negative channel entry")
        sums = arr.reshape(-1, w).sum(axis=1)
        if np.any(np.abs(sums - 1.0) > PROB_ATOL):
            raise ValueError("channel row does not sum to 1")
        object.__setattr__(self, "input_alphabet_sizes", sizes)
        object.__setattr__(self, "output_alphabet_size", w)
        object.__setattr__(self, "rows", _frozen(arr))
        object.__setattr__(self, "uniform_filled_rows",
                           tuple(int(i) for i in self.uniform_filled_rows))

    @property
    def num_inputs(self) -> int:
        return int(np.prod(self.input_alphabet_sizes))


@dataclass(frozen=True)
class EmpiricalType:
    """Integer count table with denominator n; the type of a block."""

    alphabet_sizes: tuple[int, ...]
    counts: np.ndarray
    n: int

    def __post_init__(self):
        sizes = tuple(int(a) for a in self.alphabet_sizes)
        arr = np.asarray(self.counts)
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError("counts must be integers")
        if arr.shape != sizes:
            raise ValueError(f"counts shape {arr.shape} != {sizes}")
        if np.any(arr < 0):
            raise ValueError("negative count")
        n = int(self.n)
        if n < 1:
            raise ValueError("denominator must be positive")
        if int(arr.sum()) != n:
            raise ValueError(f"counts sum to {int(arr.sum())}, not n={n}")
        object.__setattr__(self, "alphabet_sizes", sizes)
        object.__setattr__(self, "counts", _frozen(arr))
        object.__setattr__(self, "n", n)

    def normalized(self) -> JointPMF:
        return JointPMF(self.alphabet_sizes, self.counts / self.n)


# ---------------------------------------------------------------------------
# entropy arithmetic
# ---------------------------------------------------------------------------

def entropy_of_table(table: np.ndarray) -> float:
    """-sum(p log2 p) over the raw table, skipping zero cells."""
    flat = np.asarray(table, dtype=float).ravel()
    nz = flat[flat > 0.0]
    return float(-(nz * np.log2(nz)).sum())


def _validate_subset(pmf: JointPMF, s: SubsetView) -> None:
    if any(i >= pmf.m for i in s):
        raise ValueError(f"subset {s} out of range for m={pmf.m}")


def marginal(pmf: JointPMF, s: SubsetView) -> JointPMF:
    """Marginal table p(x_s), coordinates kept in ascending index order."""
    if len(s) == 0:
        raise ValueError("marginal over the empty subset is undefined")
    _validate_subset(pmf, s)
    drop = tuple(i for i in range(pmf.m) if i not in s)
    table = pmf.mass.sum(axis=drop) if drop else np.array(pmf.mass)
    table = table / table.sum()
    return JointPMF(tuple(pmf.alphabet_sizes[i] for i in s), table)


def entropy(pmf: JointPMF, s: SubsetView | None = None) -> float:
    """H(X_s) in bits; s=None means the full joint entropy."""
    if s is None or len(s) == pmf.m:
        return entropy_of_table(pmf.mass)
    return entropy_of_table(marginal(pmf, s).mass)


def conditional_entropy(pmf: JointPMF, target: SubsetView, given: SubsetView) -> float:
    """H(X_target | X_given) = H(target u given) - H(given), in bits."""
    if any(i in given for i in target):
        raise ValueError(f"target {target} and given {given} must be disjoint")
    if len(given) == 0:
        return entropy(pmf, target)
    return entropy(pmf, target.union(given)) - entropy(pmf, given)


def conditional_mutual_information(pmf: JointPMF, *parts: SubsetView,
                                   given: SubsetView = SubsetView(())) -> float:
    """I(X_a; X_b | X_given) for two parts, or the three-way form
    I(X;Y;Z|W) = H(X|W)+H(Y|W)+H(Z|W)-H(XYZ|W) for three.
    """
    if len(parts) < 2:
        raise ValueError("need at least two subsets")
    seen: set[int] = set(given.indices)
    for p in parts:
        if seen.intersection(p.indices):
            raise ValueError("subsets must be pairwise disjoint")
        seen.update(p.indices)
    total = sum(conditional_entropy(pmf, p, given) for p in parts)
    return total - conditional_entropy(pmf, union_of(parts), given)


# ---------------------------------------------------------------------------
# types and typicality
# ---------------------------------------------------------------------------

def type_of(symbols: np.ndarray, alphabet_sizes: Sequence[int]) -> EmpiricalType:
    """Joint empirical type of a (k, n) block of per-sensor sequences."""
    arr = np.asarray(symbols)
    if arr.ndim == 1:
        arr = arr[None, :]
    sizes = tuple(int(a) for a in alphabet_sizes)
    if arr.shape[0] != len(sizes):
        raise ValueError(f"{arr.shape[0]} sequences but {len(sizes)} alphabets")
    n = arr.shape[1]
    if n < 1:
        raise ValueError("empty block")
    if np.any(arr < 0) or any(arr[k].max() >= sizes[k] for k in range(len(sizes))):
        raise ValueError("symbol out of alphabet range")
    flat = np.ravel_multi_index(tuple(arr), sizes)
    counts = np.bincount(flat, minlength=int(np.prod(sizes))).reshape(sizes)
    return EmpiricalType(sizes, counts, n)


def eta_ball_contains(q: JointPMF, t: Union[EmpiricalType, JointPMF], eta: float) -> bool:
    """Pointwise ball test: |q(x) - t(x)/n| <= eta/|alphabet| for every cell."""
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    if q.alphabet_sizes != t.alphabet_sizes:
        raise ValueError("alphabet mismatch")
    other = t.normalized().mass if isinstance(t, EmpiricalType) else t.mass
    tol = eta / q.num_cells
    return bool(np.max(np.abs(q.mass - other)) <= tol)


def strongly_typical(symbols: np.ndarray, p: JointPMF, eps: float) -> bool:
    """Membership in the strongly typical set, via t(x^n) in B_eps(p)."""
    return eta_ball_contains(p, type_of(symbols, p.alphabet_sizes), eps)


# ---------------------------------------------------------------------------
# side-information channels
# ---------------------------------------------------------------------------

def identity_channel(alphabet_sizes: Sequence[int]) -> ConditionalPMF:
    """The perfect-information channel W = (X_1, ..., X_m)."""
    sizes = tuple(int(a) for a in alphabet_sizes)
    cells = int(np.prod(sizes))
    rows = np.eye(cells).reshape(sizes + (cells,))
    return ConditionalPMF(sizes, cells, rows)


def joint_with_channel(p: JointPMF, r: ConditionalPMF) -> np.ndarray:
    """Raw joint table p(x) r(w|x), shape = alphabet_sizes + (|W|,)."""
    if r.input_alphabet_sizes != p.alphabet_sizes:
        raise ValueError("channel input alphabet does not match source")
    return p.mass[..., None] * r.rows


def marginalize_info_channel(r: ConditionalPMF, p: JointPMF, h: SubsetView) -> ConditionalPMF:
    """Collapse r(w | x_1..x_m) to the channel seen from x_h only:

        r~(w | x_h) = sum_{x_hc} p(x_hc | x_h) r(w | x_h x_hc).

    Rows conditioned on zero-probability x_h are set to uniform and flagged
    in ``uniform_filled_rows`` so degenerate scenarios still load.
    """
    if len(h) == 0:
        raise ValueError("h must be nonempty")
    _validate_subset(p, h)
    joint = joint_with_channel(p, r)
    drop = tuple(i for i in range(p.m) if i not in h)
    num = joint.sum(axis=drop) if drop else joint                 # (sizes_h..., W)
    den = p.mass.sum(axis=drop) if drop else np.array(p.mass)     # (sizes_h...)
    w = r.output_alphabet_size
    rows = np.empty(num.shape)
    flat_num = num.reshape(-1, w)
    flat_den = den.reshape(-1)
    flat_rows = rows.reshape(-1, w)
    filled = []
    for k in range(flat_den.shape[0]):
        if flat_den[k] > 0.0:
            flat_rows[k] = flat_num[k] / flat_den[k]
        else:
            flat_rows[k] = 1.0 / w
            filled.append(k)
    flat_rows /= flat_rows.sum(axis=1, keepdims=True)
    sizes_h = tuple(p.alphabet_sizes[i] for i in h)
    return ConditionalPMF(sizes_h, w, rows.reshape(sizes_h + (w,)),
                          uniform_filled_rows=tuple(filled))


def channel_conditional_entropy(p: JointPMF, r: ConditionalPMF, target: SubsetView) -> float:
    """H(X_target | W) in bits under the joint law p(x) r(w|x)."""
    _validate_subset(p, target)
    joint = joint_with_channel(p, r)
    drop = tuple(i for i in range(p.m) if i not in target)
    tw = joint.sum(axis=drop) if drop else joint
    w_marg = joint.sum(axis=tuple(range(p.m)))
    return entropy_of_table(tw) - entropy_of_table(w_marg)
