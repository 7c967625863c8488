import math

import numpy as np
import pytest
from scipy.stats import beta as beta_dist, chisquare, gamma as gamma_dist, kstest, poisson

from sizebiased import (
    BugRecord,
    ParameterDraw,
    Priors,
    SamplerConfig,
    SamplerError,
    log_likelihood,
    sweep,
)
from sizebiased.samplers import (
    SweepStats,
    discrete_slice,
    gibbs_update_inclusion,
    gibbs_update_inclusion_prob,
    gibbs_update_size_mean,
    mh_update_scalar,
    slice_update_size,
)

from conftest import make_draw, make_model


class TestInclusionGibbs:
    def test_detected_row_rejected(self, tiny_model, rng):
        draw = make_draw(tiny_model, 0.3, 0.5, sizes=[1, 0])
        with pytest.raises(IndexError):
            gibbs_update_inclusion(0, draw, tiny_model, rng)

    def test_size_zero_row_uses_plain_inclusion_probability(self, tiny_model, rng):
        # q = 1 when the row's size is zero, so P(z=1 | ...) = psi
        draw = make_draw(tiny_model, 0.3, 0.7, sizes=[1, 0])
        hits = 0
        n = 100_000
        for _ in range(n):
            gibbs_update_inclusion(1, draw, tiny_model, rng)
            hits += draw.included[1]
        assert hits / n == pytest.approx(0.7, abs=0.005)

    def test_hand_arithmetic_case(self, rng):
        # survival (1-p)^T = 0.25 with psi = 0.5 gives 0.5*0.25/(0.5*0.25+0.5) = 0.2
        model = make_model([BugRecord("b", 1, 1)], inputs=(1,), M=2)
        draw = make_draw(model, rate=0.75, psi=0.5, sizes=[1, 1])
        hits = 0
        n = 100_000
        for _ in range(n):
            gibbs_update_inclusion(1, draw, model, rng)
            hits += draw.included[1]
        assert hits / n == pytest.approx(0.2, abs=0.005)

    def test_many_inputs_exclude_surviving_row(self, rng):
        model = make_model([BugRecord("b", 1, 1)], inputs=(5000,), M=2)
        draw = make_draw(model, rate=0.01, psi=0.5, sizes=[1, 3])
        for _ in range(200):
            gibbs_update_inclusion(1, draw, model, rng)
            assert not draw.included[1]


class TestSizeMeanGibbs:
    def test_conjugate_mean_zero_count(self, tiny_model, rng):
        priors = Priors(size_shape=1.0, size_rate=1.0)
        draw = make_draw(tiny_model, 0.3, 0.5, sizes=[1, 0])
        draws = np.array([
            gibbs_update_size_mean(1, draw, priors, rng).size_means[1]
            for _ in range(100_000)
        ])
        # Gamma(1, rate 2): mean 1/2
        assert draws.mean() == pytest.approx(0.5, abs=3 * draws.std() / math.sqrt(draws.size))

    def test_conjugate_posterior_distribution(self, tiny_model, rng):
        priors = Priors(size_shape=2.0, size_rate=1.0)
        draw = make_draw(tiny_model, 0.3, 0.5, sizes=[10, 0])
        draws = np.array([
            gibbs_update_size_mean(0, draw, priors, rng).size_means[0]
            for _ in range(100_000)
        ])
        # Gamma(12, rate 2), mean 6
        assert draws.mean() == pytest.approx(6.0, abs=3 * draws.std() / math.sqrt(draws.size))
        stat = kstest(draws, gamma_dist(a=12, scale=0.5).cdf)
        assert stat.pvalue > 0.01


class TestSliceSize:
    def test_detected_bug_never_reaches_zero(self, rng):
        model = make_model([BugRecord("b", 1, 1)], inputs=(3,), M=2)
        cfg = SamplerConfig()
        # tiny mean pushes toward zero; detection forbids it
        draw = make_draw(model, 0.4, 0.5, sizes=[1, 0], size_means=[0.01, 0.01])
        for _ in range(2000):
            slice_update_size(0, draw, model, Priors(), cfg, rng)
            assert draw.sizes[0] >= 1

    def test_excluded_row_full_conditional_is_poisson(self, rng):
        # one-step invariance from exact Poisson starts, chi-square on iid draws
        model = make_model([BugRecord("b", 1, 1)], inputs=(3,), M=2)
        cfg = SamplerConfig()
        lam = 3.7
        n = 100_000
        starts = rng.poisson(lam, size=n)
        out = np.empty(n, dtype=np.int64)
        for k in range(n):
            draw = make_draw(
                model, 0.4, 0.5,
                sizes=[1, starts[k]],
                included=[True, False],
                size_means=[1.0, lam],
            )
            slice_update_size(1, draw, model, Priors(), cfg, rng)
            out[k] = draw.sizes[1]
        hi = int(poisson.ppf(1 - 1e-6, lam)) + 1
        observed = np.bincount(np.minimum(out, hi), minlength=hi + 1)
        expected = poisson.pmf(np.arange(hi + 1), lam)
        expected[hi] = 1.0 - expected[:hi].sum()
        keep = expected * n >= 5
        stat = chisquare(observed[keep], expected[keep] / expected[keep].sum() * observed[keep].sum())
        assert stat.pvalue > 0.01

    def test_two_point_target_ratio(self, rng):
        # generic slice machinery on pmf {1: 3/4, 2: 1/4}
        def log_pmf(s):
            out = np.full(s.shape, -np.inf)
            out[s == 1] = math.log(3.0)
            out[s == 2] = math.log(1.0)
            return out

        value = 1
        counts = {1: 0, 2: 0}
        for _ in range(100_000):
            value = discrete_slice(value, log_pmf, rng, width=4, lower=0)
            counts[value] += 1
        assert counts[1] / 100_000 == pytest.approx(0.75, abs=0.01)

    def test_zero_density_start_flagged(self, rng):
        def log_pmf(s):
            return np.full(s.shape, -np.inf)

        with pytest.raises(SamplerError):
            discrete_slice(1, log_pmf, rng, width=4)

    def test_closed_form_included_row(self, rng):
        # included undetected row: conditional is Poisson(lam * (1-r)^T) exactly
        model = make_model([BugRecord("b", 1, 1)], inputs=(10,), M=2)
        cfg = SamplerConfig()
        lam, rate = 5.0, 0.05
        shrunk = lam * (1 - rate) ** 10
        n = 60_000
        starts = rng.poisson(shrunk, size=n)
        out = np.empty(n, dtype=np.int64)
        for k in range(n):
            draw = make_draw(
                model, rate, 0.5,
                sizes=[1, starts[k]],
                included=[True, True],
                size_means=[1.0, lam],
            )
            slice_update_size(1, draw, model, Priors(), cfg, rng)
            out[k] = draw.sizes[1]
        assert out.mean() == pytest.approx(shrunk, abs=3 * out.std() / math.sqrt(n))


class TestScalarMH:
    def test_zero_step_always_accepts(self, tiny_model, rng):
        draw = make_draw(tiny_model, 0.3, 0.5, sizes=[1, 0])
        for name, value in (("detect_rate", 0.3), ("inclusion_prob", 0.5)):
            for _ in range(50):
                _, accepted = mh_update_scalar(
                    name, draw, tiny_model, SamplerConfig(), rng, step=1e-300
                )
                assert accepted
            assert getattr(draw, name) == pytest.approx(value)

    def test_unknown_name_rejected(self, tiny_model, rng):
        draw = make_draw(tiny_model, 0.3, 0.5, sizes=[1, 0])
        from sizebiased import ValidationError

        with pytest.raises(ValidationError):
            mh_update_scalar("sizes", draw, tiny_model, SamplerConfig(), rng)

    def test_inclusion_prob_invariance_against_beta(self, rng):
        # one MH step from exact Beta(1+k, 1+m-k) starts must stay Beta
        model = make_model([], inputs=(0,), M=40)
        cfg = SamplerConfig(rw_step_inclusion=0.8)
        included = np.zeros(40, dtype=bool)
        included[:12] = True
        a, b = 1 + 12, 1 + 28
        n = 100_000
        starts = rng.beta(a, b, size=n)
        out = np.empty(n)
        for k in range(n):
            draw = make_draw(model, 0.3, starts[k], sizes=np.ones(40, int),
                             included=included)
            mh_update_scalar("inclusion_prob", draw, model, cfg, rng)
            out[k] = draw.inclusion_prob
        stat = kstest(out, beta_dist(a, b).cdf)
        assert stat.pvalue > 0.01

    def test_rate_invariance_against_uniform_with_flat_likelihood(self, rng):
        # zero-information data: one phase of zero inputs, no detections
        model = make_model([], inputs=(0,), M=5)
        cfg = SamplerConfig(rw_step_rate=2.0)
        n = 100_000
        starts = rng.uniform(size=n)
        out = np.empty(n)
        for k in range(n):
            draw = make_draw(model, starts[k], 0.5, sizes=np.zeros(5, int),
                             included=np.zeros(5, bool))
            mh_update_scalar("detect_rate", draw, model, cfg, rng)
            out[k] = draw.detect_rate
        stat = kstest(out, "uniform")
        assert stat.pvalue > 0.01

    def test_beta_gibbs_kernel_exact(self, rng):
        draw = ParameterDraw(0.3, 0.5, np.array([True] * 7 + [False] * 3),
                             np.ones(10, int), np.ones(10))
        out = np.array([
            gibbs_update_inclusion_prob(draw, rng).inclusion_prob
            for _ in range(100_000)
        ])
        stat = kstest(out, beta_dist(8, 4).cdf)
        assert stat.pvalue > 0.01


class TestSweep:
    def test_skip_everything_is_identity(self, tiny_model, rng):
        draw = make_draw(tiny_model, 0.3, 0.5, sizes=[2, 1],
                         size_means=[1.5, 2.5])
        before = draw.copy()
        sweep(draw, tiny_model, Priors(), SamplerConfig(), rng,
              skip=frozenset({"sizes", "size_means", "inclusion",
                              "detect_rate", "inclusion_prob"}))
        assert draw.detect_rate == before.detect_rate
        assert draw.inclusion_prob == before.inclusion_prob
        np.testing.assert_array_equal(draw.sizes, before.sizes)
        np.testing.assert_array_equal(draw.included, before.included)
        np.testing.assert_array_equal(draw.size_means, before.size_means)

    def test_detected_rows_keep_inclusion_and_positive_size(self, rng):
        model = make_model(
            [BugRecord("b1", 1, 2), BugRecord("b2", 2, 1)], inputs=(30, 20), M=10
        )
        draw = make_draw(model, 0.05, 0.5, sizes=[3, 2] + [1] * 8,
                         size_means=np.full(10, 2.0))
        priors = Priors(2.0, 1.0)
        cfg = SamplerConfig()
        for _ in range(500):
            sweep(draw, model, priors, cfg, rng)
            assert draw.included[:2].all()
            assert (draw.sizes[:2] >= 1).all()
            assert math.isfinite(log_likelihood(draw, model))

    def test_bit_identical_given_seed(self, rng):
        model = make_model([BugRecord("b", 1, 1)], inputs=(5, 5), M=6)
        priors = Priors(2.0, 1.0)
        cfg = SamplerConfig()

        def trajectory(seed):
            local = np.random.default_rng(seed)
            draw = make_draw(model, 0.2, 0.5, sizes=[2, 1, 0, 3, 1, 0],
                             size_means=np.full(6, 2.0))
            states = []
            for _ in range(50):
                sweep(draw, model, priors, cfg, local)
                states.append((draw.detect_rate, draw.inclusion_prob,
                               draw.sizes.copy(), draw.included.copy()))
            return states

        s1, s2 = trajectory(99), trajectory(99)
        for (r1, p1, z1, i1), (r2, p2, z2, i2) in zip(s1, s2):
            assert r1 == r2 and p1 == p2
            np.testing.assert_array_equal(z1, z2)
            np.testing.assert_array_equal(i1, i2)

    def test_acceptance_stats_recorded(self, tiny_model, rng):
        draw = make_draw(tiny_model, 0.3, 0.5, sizes=[1, 0])
        stats = SweepStats()
        for _ in range(40):
            sweep(draw, tiny_model, Priors(), SamplerConfig(), rng, stats=stats)
        assert stats.proposals["detect_rate"] == 40
        assert 0 <= stats.accepts["detect_rate"] <= 40
