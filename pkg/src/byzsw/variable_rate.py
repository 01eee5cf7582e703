"""Decoder-driven variable-rate polling protocol.

A session is N rounds over fresh length-n blocks. Each round runs one phase
per still-plausible sensor, in ascending index order. In phase i the sensor
announces a uniformly chosen subcodebook c and streams incremental bin
indices; after j transactions the decoder searches the set

    T_j(prior) = { x : H_type(X_i | X_prior) <= j * eps }

for sequences matching the received composite bin, stops at the first
non-empty intersection, and takes the lexicographically least member.
At the end of a round the decoder prunes the collection V of candidate
honest sets by testing the empirical type of the decoded block against the
eta-blurred simulable-law sets of each candidate.

Rate accounting is exact: the reported sum rate is the sum of
log2(actual bin count) over all transactions divided by n*N. The subcodebook
announcements (log2 C bits each) are tracked separately, matching the
zero-rate-feedback treatment of the scheme.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .adversary import TraitorContext, TraitorStrategy
from .binning import BinningCodebook, EnumerationGuardError, all_sequences
from .prob_core import (
    ConditionalPMF,
    JointPMF,
    SubsetView,
    marginal,
    type_of,
    union_of,
)
from .rate_region import (
    HonestCollection,
    InfoModel,
    _effective_channel,
    _project_rows_to_simplex,
    _simulability_matrix,
)
from .source_model import SourceBlock, derive_seed, rng_for, sample_block, sample_side_info

SUBCODEBOOK_CAP = 1 << 10


@dataclass(frozen=True)
class ProtocolParams:
    """Session parameters. nu > eps is required by the error analysis; the
    default nu = 5.5*eps also covers the imperfect-information requirement
    nu > 5*eps. eta >= eps with eta -> 0 as eps -> 0; default eta = 2*eps.
    C defaults to the analysis bound ceil(3*N*m*B / alpha) with
    B = ceil(log2|X_M| / (nu - eps)), capped at 1024 for desk scale."""

    n: int
    rounds: int
    eps: float
    nu: float | None = None
    eta: float | None = None
    C: int | None = None
    alpha: float = 0.05

    def __post_init__(self):
        if self.n < 1 or self.rounds < 1:
            raise ValueError("n and rounds must be positive")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.nu_value <= self.eps:
            raise ValueError("nu must exceed eps")
        if self.eta_value < self.eps:
            raise ValueError("eta must be at least eps")

    @property
    def nu_value(self) -> float:
        return 5.5 * self.eps if self.nu is None else self.nu

    @property
    def eta_value(self) -> float:
        return 2.0 * self.eps if self.eta is None else self.eta

    def subcodebook_count(self, m: int, alphabet_sizes: Sequence[int]) -> int:
        if self.C is not None:
            return self.C
        log_xm = sum(math.log2(a) for a in alphabet_sizes)
        b = max(1, math.ceil(log_xm / (self.nu_value - self.eps)))
        c = max(8, math.ceil(3 * self.rounds * m * b / self.alpha))
        if c > SUBCODEBOOK_CAP:
            warnings.warn(
                f"subcodebook count {c} capped at {SUBCODEBOOK_CAP} for desk scale",
                RuntimeWarning, stacklevel=2)
            c = SUBCODEBOOK_CAP
        return c


@dataclass
class TranscriptRecord:
    round: int
    sensor: int
    c: int
    j: int
    bin_index: int
    bits: float


@dataclass
class DecoderState:
    """Everything the decoder carries across a session."""

    V: tuple[SubsetView, ...]
    round_index: int = 0
    estimates: dict = field(default_factory=dict)   # sensor -> sequence or None
    bits_received: float = 0.0
    transcript: list = field(default_factory=list)

    def U(self) -> SubsetView:
        return union_of(self.V)


@dataclass(frozen=True)
class SessionReport:
    """Per-session outcome summary."""

    honest_error_rounds: tuple[bool, ...]
    round_rates: tuple[float, ...]          # bin bits per source symbol, per round
    sum_rate: float                         # total bin bits / (n * rounds)
    v_trajectory: tuple[tuple[SubsetView, ...], ...]
    phase_transactions: tuple[dict, ...]    # per round: sensor -> j count
    subcode_bits_total: float               # announced c indices, bits
    decode_forced: int                      # phases resolved by the exhaustion rule
    v_empty_restores: int
    feedback_ratio: float                   # log2(C * Jmax) / min block bits
    transcript: tuple
    round_estimates: tuple = ()             # per round: sensor -> decoded sequence

    @property
    def honest_error(self) -> bool:
        return any(self.honest_error_rounds)

    @property
    def final_V(self) -> tuple[SubsetView, ...]:
        return self.v_trajectory[-1]


# ---------------------------------------------------------------------------
# phase decoding
# ---------------------------------------------------------------------------

def _conditional_type_entropies(cands: np.ndarray, prior_flat: np.ndarray | None,
                                alphabet: int, prior_cells: int) -> np.ndarray:
    """H_type(X_i | X_prior) for every candidate sequence at once, in bits."""
    k, n = cands.shape
    if prior_flat is None:
        codes = cands.astype(np.int64)
        cells = alphabet
    else:
        codes = prior_flat[None, :] * alphabet + cands
        cells = prior_cells * alphabet
    counts = np.zeros((k, cells), dtype=np.int64)
    rows = np.repeat(np.arange(k), n)
    np.add.at(counts, (rows, codes.reshape(-1)), 1)
    cnt = counts.astype(float)
    if prior_flat is None:
        tot = float(n)
        with np.errstate(divide="ignore", invalid="ignore"):
            h = np.where(cnt > 0, cnt * (np.log2(tot) - np.log2(np.maximum(cnt, 1))), 0.0)
        return h.sum(axis=1) / n
    grouped = cnt.reshape(k, prior_cells, alphabet)
    marg = grouped.sum(axis=2, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = np.where(grouped > 0,
                     grouped * (np.log2(np.maximum(marg, 1)) - np.log2(np.maximum(grouped, 1))),
                     0.0)
    return h.sum(axis=(1, 2)) / n


def _decode_phase(cb: BinningCodebook, prior: list[tuple[int, np.ndarray]],
                  sizes: Sequence[int], c: int, eps: float,
                  next_message: Callable[[int], int]):
    """Run transactions with one sensor until the T_j search succeeds.

    Returns (estimate, j_used (1-based count), received indices, forced flag).
    ``next_message(j)`` polls the sensor for block j's bin index.
    """
    n = cb.n
    alphabet = cb.alphabet_size
    if n * math.log2(alphabet) > 22 + 1e-9:
        raise EnumerationGuardError("phase search space exceeds the 2^22 guard")
    cands = all_sequences(alphabet, n)
    if prior:
        prior_sizes = [sizes[s] for s, _seq in prior]
        prior_syms = np.stack([seq for _s, seq in prior])
        prior_flat = np.ravel_multi_index(tuple(prior_syms), prior_sizes)
        prior_cells = int(np.prod(prior_sizes))
    else:
        prior_flat, prior_cells = None, 1
    cond_h = _conditional_type_entropies(cands, prior_flat, alphabet, prior_cells)

    from .binning import all_sequence_bytes
    cand_bytes = all_sequence_bytes(alphabet, n)
    # chain verification memo: candidate -> (blocks verified ok, failed flag)
    verified = np.zeros(len(cand_bytes), dtype=np.int32)
    failed = np.zeros(len(cand_bytes), dtype=bool)

    received: list[int] = []
    for j in range(cb.J):
        received.append(int(next_message(j)))
        members = np.nonzero(cond_h <= (j + 1) * eps + 1e-12)[0]
        for idx in members:
            if failed[idx]:
                continue
            k = int(verified[idx])
            ok = True
            while k <= j:
                if cb.encode_block_bytes(cand_bytes[idx], c, k) != received[k]:
                    ok = False
                    failed[idx] = True
                    break
                k += 1
            verified[idx] = k
            if ok:
                return np.array(cands[idx], dtype=np.int64), j + 1, received, False
    # Exhausted all blocks with no candidate matching the full chain; this is
    # only reachable when the sender's messages are inconsistent with every
    # sequence (a garbage-spewing traitor). Take the lexicographically least
    # sequence as the forced estimate; the V update will handle elimination.
    return np.array(cands[0], dtype=np.int64), cb.J, received, True


# ---------------------------------------------------------------------------
# V update
# ---------------------------------------------------------------------------

def _ball_marginal_feasible_perfect(t_u: np.ndarray, sizes_u: Sequence[int],
                                    pos_in_u: dict, S: SubsetView,
                                    p_s: np.ndarray, tau_u: float) -> bool:
    """Exact perfect-information membership test of a type in the eta-blurred
    simulable set of candidate S, restricted to the decoded coordinates U.

    A law q over X_U with q(x_S) = p(x_S) exists within the tau_u-ball of the
    type iff, for every x_S fiber,

        sum_fiber max(0, t - tau_u)  <=  p(x_S)  <=  sum_fiber (t + tau_u),

    because cells inside a fiber can be adjusted independently. The induced
    tolerance on the S-marginal is tau_u * |fiber| = eta / |X_S|: marginalizing
    a per-cell ball multiplies the per-cell tolerance by the number of
    collapsed cells.
    """
    axes_keep = tuple(pos_in_u[i] for i in S)
    axes_drop = tuple(k for k in range(len(sizes_u)) if k not in axes_keep)
    move = np.moveaxis(t_u, axes_keep, range(len(axes_keep)))
    flat = move.reshape(int(np.prod([sizes_u[k] for k in axes_keep])), -1)
    lower = np.maximum(flat - tau_u, 0.0).sum(axis=1)
    upper = (flat + tau_u).sum(axis=1)
    ps = p_s.reshape(-1)
    return bool(np.all(lower - 1e-12 <= ps) and np.all(ps <= upper + 1e-12))


def _ball_membership_general(t_u: np.ndarray, U: SubsetView, S: SubsetView,
                             r_tilde: ConditionalPMF, p: JointPMF, tau_u: float,
                             *, iters: int = 4000, tol: float = 1e-7) -> bool:
    """Imperfect-information membership: does some simulable law sit within
    the tau_u-ball of the type? Projected-gradient descent of the squared
    distance between the parameterized law and the box around the type, over
    the per-w simplexes of the simulation table."""
    p_u = marginal(p, U)
    inner = SubsetView(tuple(i for i in U if i not in S))
    if len(inner) == 0:
        sizes_s = tuple(p.alphabet_sizes[i] for i in S)
        p_s = marginal(p, S).mass
        return bool(np.max(np.abs(t_u.reshape(p_s.shape) - p_s)) <= tau_u + 1e-12)
    # Re-index the problem to live on the U coordinates only.
    pos = {i: k for k, i in enumerate(U)}
    S_in_u = SubsetView(tuple(pos[i] for i in S))
    A, perm, w, cells_c = _simulability_matrix(p_u, S_in_u, r_tilde)
    target = np.transpose(t_u, perm).reshape(-1)
    lo, hi = target - tau_u, target + tau_u
    L = float(np.linalg.norm(A, 2)) ** 2
    step = 1.0 / max(L, 1e-12)
    v = np.full((w, cells_c), 1.0 / cells_c)
    for _ in range(iters):
        y = A @ v.reshape(-1)
        resid = y - np.clip(y, lo, hi)
        if float(np.max(np.abs(resid))) <= tol:
            return True
        g = (A.T @ resid).reshape(w, cells_c)
        v = _project_rows_to_simplex(v - step * g)
    y = A @ v.reshape(-1)
    return float(np.max(np.abs(y - np.clip(y, lo, hi)))) <= tol


def update_V(V: Sequence[SubsetView], estimates: dict, U_prev: SubsetView,
             p: JointPMF, info_model: InfoModel, eta: float, n: int):
    """One end-of-round prune of the candidate collection: keep S iff the
    empirical type of the decoded block is consistent with some channel the
    code accepts for S. Returns (new V, emptied flag); on emptying, the caller
    restores the previous V (vanishing-probability event at proper
    parameters) and logs it."""
    sizes_u = tuple(p.alphabet_sizes[i] for i in U_prev)
    syms = np.stack([estimates[i] for i in U_prev])
    t_u = type_of(syms, sizes_u).normalized().mass
    tau_u = eta / int(np.prod(sizes_u))
    pos_in_u = {i: k for k, i in enumerate(U_prev)}

    kept = []
    for S in V:
        if not S.is_subset_of(U_prev):
            continue
        if info_model.perfect:
            p_s = marginal(p, S).mass
            ok = _ball_marginal_feasible_perfect(t_u, sizes_u, pos_in_u, S, p_s, tau_u)
        else:
            ok = False
            for chan in info_model.channels_for(S):
                r_t = _effective_channel(chan, p, S)
                if _ball_membership_general(t_u, U_prev, S, r_t, p, tau_u):
                    ok = True
                    break
        if ok:
            kept.append(S)
    if not kept:
        return tuple(V), True
    return tuple(kept), False


# ---------------------------------------------------------------------------
# sessions
# ---------------------------------------------------------------------------

def run_round(state: DecoderState, block: SourceBlock, w_block,
              codebooks: dict, strategy: TraitorStrategy | None,
              ctx: TraitorContext, params: ProtocolParams, seed: int,
              round_index: int):
    """Play one round on a fresh block: one phase per sensor in U(V), in
    ascending order, updating the decoder state in place.

    Returns (round bin bits, per-sensor transaction counts, forced-phase
    count). The candidate-collection prune happens after the round, in the
    caller, so U(V) stays fixed for the whole round.
    """
    m = len(codebooks)
    sizes = [codebooks[i].alphabet_size for i in range(m)]
    traitors = ctx.traitors
    C = codebooks[0].C
    ctx.w_block = w_block
    ctx.own_block = (SourceBlock(params.n, block.subset(traitors.indices))
                     if len(traitors) else None)
    if strategy is not None:
        strategy.begin_round(ctx, round_index)

    state.estimates = {i: None for i in range(m)}
    round_bits = 0.0
    tx_counts = {}
    forced_count = 0
    prior: list[tuple[int, np.ndarray]] = []
    for i in sorted(state.U().indices):
        cb = codebooks[i]
        if i in traitors and strategy is not None:
            c = strategy.choose_subcodebook(ctx, i, C)
            sender = lambda j, _i=i, _c=c: strategy.respond(ctx, _i, _c, j)
        else:
            c = int(rng_for(seed, "subcode", round_index, i).integers(C))
            truth = block.sensor(i)
            sender = lambda j, _x=truth, _cb=cb, _c=c: _cb.encode_block(_x, _c, j)
        est, j_used, received, forced = _decode_phase(
            cb, prior, sizes, c, params.eps, sender)
        assert j_used <= cb.J
        forced_count += forced
        state.estimates[i] = est
        prior.append((i, est))
        tx_counts[i] = j_used
        for j in range(j_used):
            bits = cb.block_bits(j)
            round_bits += bits
            state.transcript.append(
                TranscriptRecord(round_index, i, c, j, received[j], bits))
            ctx.note_poll((round_index, i, j))
    return round_bits, tx_counts, forced_count


def run_session(p: JointPMF, H: HonestCollection, info_model: InfoModel,
                honest_true: SubsetView, r_true: ConditionalPMF | None,
                strategy: TraitorStrategy | None, params: ProtocolParams,
                seed: int) -> SessionReport:
    """Play one full session and account for every bit.

    ``r_true`` may be None under perfect information (the identity channel is
    implied). ``strategy`` may be None when there are no traitors.
    """
    m = p.m
    sizes = p.alphabet_sizes
    n = params.n
    traitors = honest_true.complement(m)
    if len(traitors) == 0:
        strategy = None
    C = params.subcodebook_count(m, sizes)

    if r_true is None:
        if not info_model.perfect:
            raise ValueError("imperfect information requires the true channel")
        from .prob_core import identity_channel
        r_true = identity_channel(sizes)

    codebooks = {
        i: BinningCodebook(i, n, sizes[i], params.eps, params.nu_value, C,
                           derive_seed(seed, "codebook", i))
        for i in range(m)
    }
    ctx = TraitorContext(traitors=traitors, seed=derive_seed(seed, "traitor"),
                         codebooks=codebooks)

    state = DecoderState(V=tuple(H.candidates))
    honest_errors = []
    round_rates = []
    v_traj = [state.V]
    phase_tx = []
    round_estimates = []
    subcode_bits = 0.0
    forced_count = 0
    restores = 0

    j_max = max(cb.J for cb in codebooks.values())
    min_block_bits = min(cb.block_bits(j) for cb in codebooks.values()
                         for j in range(cb.J))
    feedback_ratio = math.log2(C * j_max) / min_block_bits if min_block_bits > 0 else math.inf

    for I in range(params.rounds):
        block = sample_block(p, n, derive_seed(seed, "block", I))
        w_block = sample_side_info(r_true, block, derive_seed(seed, "sideinfo", I))
        round_bits, tx_counts, forced = run_round(
            state, block, w_block, codebooks, strategy, ctx, params, seed, I)
        forced_count += forced

        newV, emptied = update_V(state.V, state.estimates, state.U(), p,
                                 info_model, params.eta_value, n)
        if emptied:
            restores += 1
        else:
            assert all(any(s.indices == v.indices for v in state.V) for s in newV)
            state.V = newV
        v_traj.append(state.V)

        err = False
        for i in honest_true:
            est = state.estimates.get(i)
            if est is None or not np.array_equal(est, block.sensor(i)):
                err = True
                break
        honest_errors.append(err)
        round_rates.append(round_bits / n)
        phase_tx.append(tx_counts)
        round_estimates.append({i: e for i, e in state.estimates.items()
                                if e is not None})
        subcode_bits += len(tx_counts) * math.log2(C)
        state.bits_received += round_bits
        state.round_index = I + 1

    # canonical accounting: one left-to-right sum over the transcript, so the
    # reported rate equals sum(log2 bin count) / (n N) bit-exactly
    total_rate = sum(rec.bits for rec in state.transcript) / (n * params.rounds)
    return SessionReport(
        honest_error_rounds=tuple(honest_errors),
        round_rates=tuple(round_rates),
        sum_rate=total_rate,
        v_trajectory=tuple(v_traj),
        phase_transactions=tuple(phase_tx),
        subcode_bits_total=subcode_bits,
        decode_forced=forced_count,
        v_empty_restores=restores,
        feedback_ratio=feedback_ratio,
        transcript=tuple(state.transcript),
        round_estimates=tuple(round_estimates),
    )


def transcript_lines(report: SessionReport) -> list[str]:
    """Transcript export: one structured line per transaction, for audit and
    replay. Phases are identified with sensors (phase i polls sensor i)."""
    import json
    return [json.dumps({"round": r.round, "phase": r.sensor, "sensor": r.sensor,
                        "c": r.c, "j": r.j, "bin": r.bin_index, "bits": r.bits},
                       sort_keys=True)
            for r in report.transcript]
