"""Tests for the one-shot fixed-rate protocol."""
import numpy as np

from byzsw.adversary import (
    BlackHole,
    FakeDistribution,
    HonestPassthrough,
    TraitorContext,
    optimal_fake_conditional,
)
from byzsw.binning import bin_count_for_rate
from byzsw.fixed_rate import (
    FixedRateCode,
    decode_all,
    demonstrate_converse,
    encode_all,
)
from byzsw.prob_core import JointPMF, SubsetView, identity_channel
from byzsw.rate_region import HonestCollection
from byzsw.source_model import (
    SourceBlock,
    derive_seed,
    sample_block,
    sample_side_info,
)


def chain_law(cross=0.15) -> JointPMF:
    mass = np.zeros((2, 2, 2))
    for x0 in range(2):
        for x1 in range(2):
            for x2 in range(2):
                pr = 0.5
                pr *= 1 - cross if x1 == x0 else cross
                pr *= 1 - cross if x2 == x1 else cross
                mass[x0, x1, x2] = pr
    return JointPMF((2, 2, 2), mass)


def copy_pair() -> JointPMF:
    mass = np.zeros((2, 2))
    mass[0, 0] = 0.8
    mass[1, 1] = 0.2
    return JointPMF((2, 2), mass)


H3 = HonestCollection.explicit([[0, 1], [0, 2], [1, 2]])


def make_ctx(p, honest, n, seed):
    traitors = honest.complement(p.m)
    block = sample_block(p, n, derive_seed(seed, "b"))
    w = sample_side_info(identity_channel(p.alphabet_sizes), block,
                         derive_seed(seed, "w"))
    return TraitorContext(traitors=traitors, seed=derive_seed(seed, "t"),
                          w_block=w,
                          own_block=SourceBlock(n, block.subset(traitors.indices))), block


class TestEncode:
    def test_all_honest_deterministic_under_seed(self):
        p = chain_law()
        code = FixedRateCode(rates=(1.0, 1.0, 1.0), n=12, kind="deterministic",
                             seed=3)
        block = sample_block(p, 12, 1)
        a = encode_all(code, block, None, None, p, seed=9)
        b = encode_all(code, block, None, None, p, seed=9)
        assert a == b
        assert all(c == 0 for c, _ in a.values())

    def test_randomized_c_varies_and_in_range(self):
        p = chain_law()
        code = FixedRateCode(rates=(1.0, 1.0, 1.0), n=12, kind="randomized",
                             C=8, seed=3)
        block = sample_block(p, 12, 1)
        cs = set()
        for seed in range(12):
            msgs = encode_all(code, block, None, None, p, seed=seed)
            for i, (c, idx) in msgs.items():
                assert 0 <= c < 8
                assert 0 <= idx < bin_count_for_rate(12, 1.0)
                cs.add(c)
        assert len(cs) > 1

    def test_black_hole_messages_in_range(self):
        p = chain_law()
        code = FixedRateCode(rates=(0.8, 0.8, 0.8), n=12, kind="randomized",
                             C=4, seed=3)
        ctx, block = make_ctx(p, SubsetView.of(1, 2), 12, 5)
        msgs = encode_all(code, block, BlackHole(), ctx, p, seed=6)
        c, idx = msgs[0]
        assert 0 <= c < 4
        assert 0 <= idx < bin_count_for_rate(12, 0.8)

    def test_randomized_c1_reduces_to_deterministic(self):
        p = chain_law()
        block = sample_block(p, 12, 2)
        det = FixedRateCode(rates=(0.9, 0.7, 0.9), n=12, kind="deterministic",
                            seed=17)
        rand1 = FixedRateCode(rates=(0.9, 0.7, 0.9), n=12, kind="randomized",
                              C=1, seed=17)
        a = encode_all(det, block, None, None, p, seed=8)
        b = encode_all(rand1, block, None, None, p, seed=8)
        assert a == b


class TestDecode:
    def test_corner_plus_margin_all_honest(self):
        # SW corner (H(X0), H(X1|X0)) = (1.0, h(0.11) ~ 0.5) for the
        # correlated pair. At n = 14 the type fluctuation per cell is ~0.13,
        # so the typicality ball cannot disambiguate bin mates; the margin
        # must be large enough (+0.8 here) that spurious bin matches are
        # rare, i.e. 2^{n(1-R)} << 1. Truth then decodes in >= 95% of trials.
        q = 0.11 / 2
        p = JointPMF((2, 2), np.array([[0.5 - q, q], [q, 0.5 - q]]))
        coll = HonestCollection.explicit([[0, 1]])
        code_rates = (1.8, 1.3)
        wins = 0
        for seed in range(100):
            code = FixedRateCode(rates=code_rates, n=14, kind="deterministic",
                                 seed=derive_seed(seed, "code"),
                                 eps_decode=1.4)
            block = sample_block(p, 14, derive_seed(seed, "blk"))
            msgs = encode_all(code, block, None, None, p, seed=seed)
            table = decode_all(code, msgs, p, coll)
            ok = all(table.final[i] is not None
                     and np.array_equal(table.final[i], block.sensor(i))
                     for i in range(2))
            wins += ok
        assert wins >= 95

    def test_fake_distribution_randomized_keeps_honest_correct(self):
        p = chain_law()
        h_true = SubsetView.of(1, 2)
        from byzsw.rate_region import r_star_perfect
        rep = r_star_perfect(p, H3)
        q_bar = optimal_fake_conditional(rep.per_pair_detail[h_true][2],
                                         h_true, (2, 2, 2))
        wins = 0
        for seed in range(50):
            code = FixedRateCode(rates=(1.4, 1.4, 1.4), n=14, kind="randomized",
                                 C=8, seed=derive_seed(seed, "code"),
                                 eps_decode=1.4)
            ctx, block = make_ctx(p, h_true, 14, seed)
            msgs = encode_all(code, block, FakeDistribution(q_bar), ctx, p,
                              seed=derive_seed(seed, "h"))
            table = decode_all(code, msgs, p, H3)
            wins += all(table.final[i] is not None
                        and np.array_equal(table.final[i], block.sensor(i))
                        for i in h_true)
        assert wins >= 45

    def test_garbage_traitor_honest_set_still_decodes(self):
        p = chain_law()
        h_true = SubsetView.of(1, 2)
        wins = 0
        for seed in range(50):
            code = FixedRateCode(rates=(1.4, 1.4, 1.4), n=14, kind="randomized",
                                 C=8, seed=derive_seed(seed, "code"),
                                 eps_decode=1.4)
            ctx, block = make_ctx(p, h_true, 14, seed)
            msgs = encode_all(code, block, BlackHole(), ctx, p,
                              seed=derive_seed(seed, "h"))
            table = decode_all(code, msgs, p, H3)
            est = table.per_set[(1, 2)]
            wins += (est is not None
                     and np.array_equal(est[0], block.sensor(1))
                     and np.array_equal(est[1], block.sensor(2)))
        assert wins >= 47

    def test_full_rate_recovers_everything(self):
        # componentwise above log2|X|+0.6: spurious bin mates ~2^-7 per
        # sensor, so the decoder recovers every coordinate almost always
        p = chain_law()
        wins = 0
        for seed in range(30):
            code = FixedRateCode(rates=(1.6, 1.6, 1.6), n=12,
                                 kind="deterministic",
                                 seed=derive_seed(seed, "code"), eps_decode=1.6)
            block = sample_block(p, 12, derive_seed(seed, "blk"))
            msgs = encode_all(code, block, None, None, p, seed=seed)
            table = decode_all(code, msgs, p, H3)
            wins += all(table.final[i] is not None
                        and np.array_equal(table.final[i], block.sensor(i))
                        for i in range(3))
        assert wins >= 29

    def test_honest_passthrough_traitor_equivalent(self):
        p = chain_law()
        h_true = SubsetView.of(1, 2)
        code = FixedRateCode(rates=(1.2, 1.2, 1.2), n=12, kind="deterministic",
                             seed=21, eps_decode=1.6)
        ctx, block = make_ctx(p, h_true, 12, 31)
        msgs_honest = encode_all(code, block, None, None, p, seed=41)
        msgs_pass = encode_all(code, block, HonestPassthrough(), ctx, p, seed=41)
        assert msgs_honest == msgs_pass


class TestPlurality:
    def test_plurality_prefers_majority_value(self):
        # four sensors, rates high enough that per-set estimates are exact;
        # the plurality switch must agree with the preference order here
        mass = np.zeros((2,) * 4)
        for x in np.ndindex(*(2,) * 4):
            pr = 0.5
            for i in (1, 2, 3):
                pr *= 0.85 if x[i] == x[0] else 0.15
            mass[x] = pr
        p = JointPMF((2, 2, 2, 2), mass)
        coll = HonestCollection.threshold(4, 1)
        h_true = SubsetView.of(1, 2, 3)
        from byzsw.rate_region import r_star_perfect
        rep = r_star_perfect(p, coll)
        q_bar = optimal_fake_conditional(rep.per_pair_detail[h_true][2],
                                         h_true, (2, 2, 2, 2))
        for seed in range(10):
            code = FixedRateCode(rates=(2.3, 2.3, 2.3, 2.3), n=10,
                                 kind="randomized", C=8,
                                 seed=derive_seed(seed, "code"), eps_decode=3.2)
            ctx, block = make_ctx(p, h_true, 10, seed)
            msgs = encode_all(code, block, FakeDistribution(q_bar), ctx, p,
                              seed=derive_seed(seed, "h"))
            t_plur = decode_all(code, msgs, p, coll, plurality=True)
            for i in h_true:
                if t_plur.final[i] is not None:
                    assert np.array_equal(t_plur.final[i], block.sensor(i))


class TestConverseDemo:
    def test_below_region_error_frequency(self):
        p = chain_law()
        h_true = SubsetView.of(1, 2)
        errors = 0
        found = 0
        for seed in range(40):
            code = FixedRateCode(rates=(0.92, 0.75, 0.95), n=14,
                                 kind="deterministic",
                                 seed=derive_seed(seed, "code"), eps_decode=1.4)
            out = demonstrate_converse(code, p, H3, h_true, SubsetView.of(0, 1),
                                       derive_seed(seed, "demo"))
            found += out.attack_found
            errors += out.honest_error
        assert found >= 35
        assert errors >= 0.2 * 40

    def test_inside_region_attack_rarely_lands(self):
        p = chain_law()
        h_true = SubsetView.of(1, 2)
        errors = 0
        for seed in range(40):
            code = FixedRateCode(rates=(1.5, 1.5, 1.5), n=14,
                                 kind="deterministic",
                                 seed=derive_seed(seed, "code"), eps_decode=1.4)
            out = demonstrate_converse(code, p, H3, h_true, SubsetView.of(0, 1),
                                       derive_seed(seed, "demo"))
            errors += out.honest_error
        assert errors <= 2

    def test_no_traitors_attack_inapplicable(self):
        # zero traitors: nobody can emit attack messages, so the demo never
        # produces an honest error
        p = chain_law()
        coll = HonestCollection.explicit([[0, 1, 2], [1, 2]])
        # the candidate set {0,1,2} has 8 cells, so the ball needs
        # eps_decode ~ 3 for the true triple's type to sit inside it at n=12
        code = FixedRateCode(rates=(1.6, 1.6, 1.6), n=12, kind="deterministic",
                             seed=2, eps_decode=3.0)
        for seed in range(10):
            out = demonstrate_converse(code, p, coll, SubsetView.of(0, 1, 2),
                                       SubsetView.of(0, 1), seed)
            assert not out.attack_found
            assert not out.honest_error


class TestEstimateTableInvariants:
    def test_final_is_one_of_per_set_values(self):
        p = chain_law()
        h_true = SubsetView.of(1, 2)
        for seed in range(20):
            code = FixedRateCode(rates=(1.0, 0.9, 1.0), n=12,
                                 kind="deterministic",
                                 seed=derive_seed(seed, "code"), eps_decode=1.6)
            ctx, block = make_ctx(p, h_true, 12, seed)
            msgs = encode_all(code, block, BlackHole(), ctx, p,
                              seed=derive_seed(seed, "h"))
            table = decode_all(code, msgs, p, H3)
            for i in range(3):
                vals = [tuple(tup[list(S.indices).index(i)])
                        for S in H3.candidates if i in S
                        for tup in [table.per_set[S.indices]] if tup is not None]
                if table.final[i] is None:
                    assert not vals
                else:
                    assert tuple(table.final[i]) in vals
