import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from conftest import pmfs
from prta.errors import (
    DuplicateSupportPoint,
    MassExceedsOne,
    NegativeProbability,
    TransformSizeOverflow,
    UnnormalizedInput,
    ZeroRepetitions,
)
from prta.pmf import (
    Pmf,
    cdf_at,
    convolve_direct,
    convolve_fft,
    moments,
    pmf_from_pairs,
    power_pieces,
    self_conv_power,
    stochastically_dominated_by,
    transform_length,
    truncate_and_sum,
)
from prta.taskset import DEFAULT_CONFIG_SHAPE, build_execution_pmf


class TestConstruction:
    def test_point_mass(self):
        p = pmf_from_pairs([(0, 1.0)])
        assert p.probs.tolist() == [1.0]
        assert p.total_mass == 1.0

    def test_direct_placement(self):
        assert pmf_from_pairs([(1, 0.9), (3, 0.1)]).probs.tolist() == [0, 0.9, 0, 0.1]

    def test_negative_rejected(self):
        with pytest.raises(NegativeProbability):
            pmf_from_pairs([(1, -0.1)])

    def test_duplicate_rejected(self):
        with pytest.raises(DuplicateSupportPoint):
            pmf_from_pairs([(1, 0.5), (1, 0.5)])

    def test_mass_above_one_rejected(self):
        with pytest.raises(MassExceedsOne):
            pmf_from_pairs([(0, 0.6), (2, 0.6)])

    def test_mass_slightly_above_one_tolerated(self):
        assert Pmf([0.5, 0.5 + 5e-10]).total_mass > 1.0

    def test_trailing_zeros_trimmed(self):
        p = Pmf([0.2, 0.8, 0.0, 0.0])
        assert len(p) == 2 and p.probs[-1] > 0

    def test_empty(self):
        assert len(Pmf([0.0, 0.0])) == 0
        assert Pmf.empty().total_mass == 0.0

    def test_immutable(self):
        p = Pmf([0.5, 0.5])
        with pytest.raises(ValueError):
            p.probs[0] = 0.1

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            Pmf([0.5, float("nan")])


class TestCdf:
    def test_examples(self):
        p = pmf_from_pairs([(1, 0.9), (3, 0.1)])
        assert cdf_at(Pmf.delta(0), 0) == 1.0
        assert cdf_at(p, 2) == pytest.approx(0.9)
        assert cdf_at(p, 3) == pytest.approx(1.0)
        assert cdf_at(p, -1) == 0.0
        assert cdf_at(p, 1000) == p.total_mass

    @given(pmfs())
    def test_monotone(self, p):
        vals = [cdf_at(p, t) for t in range(-1, len(p) + 2)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))


class TestDominance:
    def test_reflexive(self):
        x = pmf_from_pairs([(0, 0.3), (4, 0.7)])
        assert stochastically_dominated_by(x, x)

    def test_shifted_delta(self):
        assert stochastically_dominated_by(Pmf.delta(1), Pmf.delta(2))
        assert not stochastically_dominated_by(Pmf.delta(2), Pmf.delta(1))

    def test_crossing_cdfs(self):
        x = pmf_from_pairs([(0, 0.5), (3, 0.5)])
        y = pmf_from_pairs([(1, 1.0)])
        assert not stochastically_dominated_by(x, y)
        assert not stochastically_dominated_by(y, x)

    def test_unnormalized(self):
        with pytest.raises(UnnormalizedInput):
            stochastically_dominated_by(Pmf([0.5]), Pmf.delta(0))

    @settings(max_examples=200)
    @given(pmfs(8), pmfs(8), pmfs(8))
    def test_partial_order(self, x, y, z):
        le = stochastically_dominated_by
        if le(x, y) and le(y, x):
            assert np.allclose(
                np.pad(x.probs, (0, 8 - len(x))), np.pad(y.probs, (0, 8 - len(y))), atol=1e-11
            )
        if le(x, y) and le(y, z):
            assert le(x, z, atol=2e-12)


class TestConvolution:
    def test_identity(self):
        a = pmf_from_pairs([(0, 0.2), (5, 0.8)])
        assert convolve_direct(a, Pmf.delta(0)) == a
        np.testing.assert_allclose(convolve_fft(a, Pmf.delta(0)).probs, a.probs, atol=1e-12)

    def test_forced_arithmetic(self):
        h = pmf_from_pairs([(0, 0.5), (1, 0.5)])
        assert convolve_direct(h, h).probs.tolist() == [0.25, 0.5, 0.25]

    def test_support_length(self):
        rng = np.random.default_rng(1)
        a, b = rng.random(17) + 0.01, rng.random(9) + 0.01
        a, b = Pmf(a / a.sum()), Pmf(b / b.sum())
        assert len(convolve_direct(a, b)) == 17 + 9 - 1
        assert len(convolve_fft(a, b)) == 17 + 9 - 1

    def test_fft_matches_direct_64_100(self):
        rng = np.random.default_rng(7)
        a = rng.random(64)
        b = rng.random(100)
        a, b = Pmf(a / a.sum()), Pmf(b / b.sum())
        np.testing.assert_allclose(convolve_fft(a, b).probs, convolve_direct(a, b).probs, rtol=0, atol=1e-12)

    def test_uniform_1000_mass(self):
        u = Pmf(np.full(1000, 1e-3))
        out = convolve_fft(u, u)
        assert abs(out.total_mass - u.total_mass**2) <= 1e-9

    def test_fft_faster_than_direct(self):
        import time

        u = Pmf(np.full(20_000, 1 / 20_000))
        t0 = time.perf_counter()
        convolve_direct(u, u)
        t_direct = time.perf_counter() - t0
        t0 = time.perf_counter()
        convolve_fft(u, u)
        t_fft = time.perf_counter() - t0
        assert t_fft < t_direct

    def test_transform_length(self):
        assert [transform_length(n) for n in (1, 2, 3, 4, 5, 1000, 1024, 1025)] == [
            1, 2, 4, 4, 8, 1024, 1024, 2048,
        ]

    def test_overflow(self):
        a = Pmf(np.full(600, 1 / 600))
        with pytest.raises(TransformSizeOverflow):
            convolve_fft(a, a, max_length=1024)

    def test_negatives_clamped_and_reported(self):
        # a peaked times a flat operand leaves round-off negatives in the zero tail
        a = Pmf(np.r_[1.0 - 1e-14, np.zeros(3000), 1e-14])
        b = Pmf(np.r_[np.full(50, 1 / 50)])
        out = convolve_fft(a, b)
        assert out.probs.min() >= 0.0
        assert out.lost_mass >= 0.0

    def test_empty_operand(self):
        assert len(convolve_fft(Pmf.empty(), Pmf.delta(3))) == 0

    @settings(max_examples=200, deadline=None)
    @given(pmfs(128, normalized=False), pmfs(128, normalized=False))
    def test_mass_conservation(self, a, b):
        for out in (convolve_direct(a, b), convolve_fft(a, b)):
            assert abs(out.total_mass - a.total_mass * b.total_mass) <= 1e-9

    @settings(max_examples=100, deadline=None)
    @given(pmfs(64), pmfs(64), pmfs(64))
    def test_commutative_associative(self, a, b, c):
        ab = convolve_fft(a, b).probs
        ba = convolve_fft(b, a).probs
        np.testing.assert_allclose(ab, ba, atol=1e-12)
        left = convolve_fft(convolve_fft(a, b), c).probs
        right = convolve_fft(a, convolve_fft(b, c)).probs
        n = max(left.size, right.size)
        np.testing.assert_allclose(np.pad(left, (0, n - left.size)), np.pad(right, (0, n - right.size)), atol=1e-12)


class TestTruncate:
    def test_all_below(self):
        p = pmf_from_pairs([(1, 0.9), (3, 0.1)])
        out, removed = truncate_and_sum(p, 10)
        assert out == p and removed == 0.0

    def test_forced_split(self):
        out, removed = truncate_and_sum(pmf_from_pairs([(1, 0.9), (3, 0.1)]), 2)
        assert out.pairs() == [(1, 0.9)]
        assert removed == pytest.approx(0.1, abs=1e-15)

    def test_bound_zero(self):
        p = pmf_from_pairs([(0, 0.4), (2, 0.6)])
        out, removed = truncate_and_sum(p, 0)
        assert len(out) == 0 and removed == p.total_mass

    def test_demand_equal_bound_is_removed(self):
        _, removed = truncate_and_sum(Pmf.delta(5), 5)
        assert removed == 1.0

    @given(pmfs(100, normalized=False), st.integers(0, 120))
    def test_mass_split(self, p, bound):
        out, removed = truncate_and_sum(p, bound)
        assert len(out) <= bound
        assert abs(out.total_mass + removed - p.total_mass) <= 1e-12


class TestSelfConvPower:
    def test_zero_rejected(self):
        with pytest.raises(ZeroRepetitions):
            self_conv_power(Pmf.delta(0), 0)

    def test_k1_unchanged(self):
        p = pmf_from_pairs([(2, 0.25), (3, 0.75)])
        out, removed = self_conv_power(p, 1)
        assert out == p and removed == 0.0

    def test_k2(self):
        p = pmf_from_pairs([(0, 0.1), (1, 0.6), (4, 0.3)])
        out, _ = self_conv_power(p, 2)
        np.testing.assert_allclose(out.probs, convolve_direct(p, p).probs, atol=1e-12)

    def test_binary_pieces_13(self):
        pp = power_pieces(pmf_from_pairs([(0, 0.5), (1, 0.5)]), 13)
        assert pp.powers == [1, 4, 8]
        assert pp.squarings == 3

    def test_k13_binomial(self):
        coin = pmf_from_pairs([(0, 0.5), (1, 0.5)])
        it = coin
        for _ in range(12):
            it = convolve_direct(it, coin)
        out, removed = self_conv_power(coin, 13)
        np.testing.assert_allclose(out.probs, it.probs, atol=1e-10)
        np.testing.assert_allclose(out.probs, stats.binom.pmf(np.arange(14), 13, 0.5), atol=1e-10)
        assert abs(removed) <= 1e-12

    @settings(max_examples=60, deadline=None)
    @given(pmfs(12), st.integers(1, 40), st.integers(1, 80))
    def test_truncation_exact(self, p, k, d):
        full, _ = self_conv_power(p, k)
        tail = float(full.probs[d:].sum())
        out, removed = self_conv_power(p, k, truncation=d)
        assert len(out) <= d
        assert abs((1.0 - out.total_mass) - tail) <= 1e-9
        assert abs(removed - (p.total_mass**k - out.total_mass)) <= 1e-15


class TestMoments:
    def test_delta(self):
        m = moments(Pmf.delta(5), gamma=1e-6)
        assert m.mean == pytest.approx(5e-6) and m.variance == 0 and m.rho3 == 0

    def test_two_point(self):
        g = 2e-6
        m = moments(pmf_from_pairs([(0, 0.5), (2, 0.5)]), gamma=g)
        assert m.mean == pytest.approx(g)
        assert m.variance == pytest.approx(g**2)
        assert m.rho3 == pytest.approx(g**3)

    def test_unnormalized(self):
        with pytest.raises(UnnormalizedInput):
            moments(Pmf([0.5]))

    @given(pmfs(50))
    def test_non_negative(self, p):
        m = moments(p)
        assert m.variance >= 0 and m.rho3 >= 0

    def test_mixture_mean_matches_quadrature(self):
        wcet = 1000
        cfg = DEFAULT_CONFIG_SHAPE

        def density(x):
            return sum(w * stats.norm.pdf(x, mu * wcet, sd * wcet) for w, mu, sd in cfg.components())

        z, _ = integrate.quad(density, 0, wcet, points=[wcet / 3, wcet / 1.2], limit=200)
        mean, _ = integrate.quad(lambda x: x * density(x), 0, wcet, points=[wcet / 3, wcet / 1.2], limit=200)
        m = moments(build_execution_pmf(wcet, cfg))
        assert abs(m.mean - mean / z) <= 0.5
