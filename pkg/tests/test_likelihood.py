import math

import numpy as np
import pytest
from scipy.stats import binom, gamma as gamma_dist, poisson

from sizebiased import (
    AugmentedModel,
    BugRecord,
    DetectionHistory,
    ParameterDraw,
    PhasePlan,
    Priors,
    ValidationError,
    detection_probability,
    log_likelihood,
    log_prior,
)

from conftest import make_draw, make_model


# Oracle value for detection_probability(0.75e-5, 20), computed with mpmath at
# 50 digits: mp.mpf(1) - (mp.mpf(1) - mp.mpf('0.75e-5'))**20
HIGH_PRECISION_P = 1.4998931298092216e-04


class TestDetectionProbability:
    def test_size_zero_gives_zero(self):
        assert detection_probability(0.5, 0) == 0.0

    def test_size_one_gives_rate(self):
        assert detection_probability(0.5, 1) == pytest.approx(0.5, abs=1e-15)

    def test_small_rate_against_extended_precision(self):
        mpmath = pytest.importorskip("mpmath")
        mpmath.mp.dps = 50
        oracle = float(1 - (1 - mpmath.mpf("0.75e-5")) ** 20)
        assert oracle == pytest.approx(HIGH_PRECISION_P, abs=1e-18)
        assert detection_probability(0.75e-5, 20) == pytest.approx(oracle, abs=1e-9)

    @pytest.mark.parametrize("rate", [0.0, 1.0, -0.1, 1.5])
    def test_rate_domain(self, rate):
        with pytest.raises(ValidationError):
            detection_probability(rate, 1)

    def test_negative_size_rejected(self):
        with pytest.raises(ValidationError):
            detection_probability(0.5, -1)

    def test_vectorized(self):
        out = detection_probability(0.25, np.array([0, 1, 2]))
        np.testing.assert_allclose(out, [0.0, 0.25, 1 - 0.75**2])

    def test_strictly_increasing_in_size_and_rate(self, rng):
        # strict until float64 saturates at exactly 1.0, weak after
        for _ in range(50):
            rate = rng.uniform(1e-6, 0.9)
            p = detection_probability(rate, np.arange(0, 30))
            steps = np.diff(p)
            assert np.all(steps[p[1:] < 1.0] > 0)
            assert np.all(steps >= 0)
            assert p[0] == 0.0 and np.all(p[1:] > 0)
        size = int(rng.integers(1, 8))
        rates = np.linspace(0.01, 0.6, 60)
        vals = np.array([detection_probability(r, size) for r in rates])
        assert np.all(np.diff(vals) > 0)

    def test_zero_iff_size_zero(self, rng):
        for _ in range(20):
            rate = rng.uniform(1e-8, 0.999)
            assert detection_probability(rate, 0) == 0.0
            assert detection_probability(rate, int(rng.integers(1, 1000))) > 0.0


def oracle_log_likelihood(draw, model):
    """Independent route: per-phase binomial pmfs from scipy, no aggregation."""
    plan = model.history.plan
    total = 0.0
    for i in range(model.M):
        if not draw.included[i]:
            if i < model.n_detected:
                return -math.inf
            continue
        p = detection_probability(draw.detect_rate, int(draw.sizes[i]))
        if i < model.n_detected:
            rec = model.history.records[i]
            if draw.sizes[i] == 0:
                return -math.inf
            for l in range(1, rec.phase):
                total += binom.logpmf(0, plan.inputs_per_phase[l - 1], p)
            total += binom.logpmf(rec.count, plan.inputs_per_phase[rec.phase - 1], p)
        else:
            for l in range(1, plan.n_phases + 1):
                total += binom.logpmf(0, plan.inputs_per_phase[l - 1], p)
    return total


class TestLogLikelihood:
    def test_single_bernoulli_success(self):
        model = make_model([BugRecord("b1", 1, 1)], inputs=(1,), M=2)
        draw = make_draw(model, rate=0.5, psi=0.5, sizes=[1, 0], included=[True, False])
        assert log_likelihood(draw, model) == pytest.approx(math.log(0.5))

    def test_excluded_augmented_row_contributes_nothing(self, tiny_model):
        base = make_draw(tiny_model, 0.3, 0.5, sizes=[1, 7], included=[True, False])
        only_observed = make_model([BugRecord("b1", 1, 1)], inputs=(3,), M=2)
        ref = make_draw(only_observed, 0.3, 0.5, sizes=[1, 0], included=[True, False])
        assert log_likelihood(base, tiny_model) == pytest.approx(
            log_likelihood(ref, only_observed)
        )

    def test_two_phase_hand_expansion(self):
        # detected in phase 2 of 2, count 1 of 2 inputs, p = 0.1:
        # two pre-phase survivals plus Binomial(1; 2, 0.1)
        model = make_model([BugRecord("b1", 2, 1)], inputs=(2, 2), M=2)
        draw = make_draw(model, rate=0.1, psi=0.5, sizes=[1, 3], included=[True, False])
        expected = 2 * math.log(0.9) + math.log(2 * 0.1 * 0.9)
        assert log_likelihood(draw, model) == pytest.approx(expected)

    def test_detected_bug_excluded_is_impossible(self, tiny_model):
        draw = make_draw(tiny_model, 0.3, 0.5, sizes=[1, 0], included=[False, False])
        assert log_likelihood(draw, tiny_model) == -math.inf

    def test_detected_bug_size_zero_is_impossible(self, tiny_model):
        draw = make_draw(tiny_model, 0.3, 0.5, sizes=[0, 0])
        assert log_likelihood(draw, tiny_model) == -math.inf

    def test_permuting_augmented_rows_is_invariant(self, rng):
        model = make_model(
            [BugRecord("b1", 1, 2), BugRecord("b2", 3, 1)], inputs=(4, 3, 2), M=8
        )
        sizes = rng.integers(0, 6, size=8)
        sizes[:2] = [2, 3]
        included = rng.random(8) < 0.6
        included[:2] = True
        draw = make_draw(model, 0.2, 0.5, sizes=sizes, included=included)
        base = log_likelihood(draw, model)
        for _ in range(5):
            perm = rng.permutation(np.arange(2, 8))
            permuted = make_draw(
                model, 0.2, 0.5,
                sizes=np.concatenate([sizes[:2], sizes[perm]]),
                included=np.concatenate([included[:2], included[perm]]),
            )
            assert log_likelihood(permuted, model) == pytest.approx(base)

    @pytest.mark.parametrize("rate,size", [(0.3, 1), (0.1, 3), (0.55, 2)])
    def test_one_bug_total_probability_is_one(self, rate, size):
        # exhaustive enumeration over every possible history of one included
        # bug at Q=2, T=(2,3): detected in phase 1 (count 1..2), detected in
        # phase 2 (count 1..3), or never detected
        inputs = (2, 3)
        total = 0.0
        for phase, t in ((1, 2), (2, 3)):
            for count in range(1, t + 1):
                model = make_model([BugRecord("b", phase, count)], inputs, M=2)
                draw = make_draw(
                    model, rate, 0.5, sizes=[size, 0], included=[True, False]
                )
                total += math.exp(log_likelihood(draw, model))
        never = make_model([], inputs, M=1)
        draw = make_draw(never, rate, 0.5, sizes=[size], included=[True])
        total += math.exp(log_likelihood(draw, never))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_toggling_augmented_inclusion_changes_only_its_survival(self, rng):
        model = make_model([BugRecord("b1", 1, 1)], inputs=(5, 4), M=4)
        sizes = np.array([2, 3, 1, 4])
        on = make_draw(model, 0.15, 0.5, sizes=sizes,
                       included=[True, True, False, False])
        off = make_draw(model, 0.15, 0.5, sizes=sizes,
                        included=[True, False, False, False])
        survival = 9 * 3 * math.log1p(-0.15)  # failures * size * log(1-rate)
        assert log_likelihood(on, model) - log_likelihood(off, model) == pytest.approx(
            survival
        )

    def test_matches_independent_scipy_route(self, rng):
        model = make_model(
            [BugRecord("b1", 1, 2), BugRecord("b2", 2, 1), BugRecord("b3", 3, 3)],
            inputs=(6, 5, 7), M=10,
        )
        for _ in range(25):
            sizes = rng.integers(0, 8, size=10)
            sizes[:3] = rng.integers(1, 8, size=3)
            included = rng.random(10) < 0.7
            included[:3] = True
            draw = make_draw(model, float(rng.uniform(0.02, 0.6)), 0.5,
                             sizes=sizes, included=included)
            assert log_likelihood(draw, model) == pytest.approx(
                oracle_log_likelihood(draw, model), rel=1e-12
            )


class TestLogPrior:
    def test_hand_computed_value(self):
        model = make_model([BugRecord("b1", 1, 1)], inputs=(1,), M=2)
        draw = ParameterDraw(
            detect_rate=0.3,
            inclusion_prob=0.5,
            included=np.array([True]),
            sizes=np.array([0]),
            size_means=np.array([1.0]),
        )
        priors = Priors(size_shape=1.0, size_rate=1.0)
        # Bernoulli(1; .5) + Poisson(0; 1) + Gamma(1; 1, 1)
        assert log_prior(draw, priors) == pytest.approx(math.log(0.5) - 2.0)

    @pytest.mark.parametrize("psi", [0.0, 1.0])
    def test_inclusion_probability_boundary(self, psi):
        draw = ParameterDraw(0.3, psi, np.array([True]), np.array([1]), np.array([1.0]))
        assert log_prior(draw, Priors(1.0, 1.0)) == -math.inf

    @pytest.mark.parametrize("rate", [0.0, 1.0])
    def test_rate_boundary(self, rate):
        draw = ParameterDraw(rate, 0.5, np.array([True]), np.array([1]), np.array([1.0]))
        assert log_prior(draw, Priors(1.0, 1.0)) == -math.inf

    def test_negative_size_raises(self):
        draw = ParameterDraw(0.3, 0.5, np.array([True]), np.array([1]), np.array([1.0]))
        draw.sizes = np.array([-1])
        with pytest.raises(ValidationError):
            log_prior(draw, Priors(1.0, 1.0))

    def test_matches_scipy_densities(self, rng):
        priors = Priors(size_shape=2.5, size_rate=0.7)
        for _ in range(20):
            m = 6
            draw = ParameterDraw(
                detect_rate=float(rng.uniform(0.01, 0.99)),
                inclusion_prob=float(rng.uniform(0.01, 0.99)),
                included=rng.random(m) < 0.5,
                sizes=rng.integers(0, 10, size=m),
                size_means=rng.gamma(2.0, 2.0, size=m),
            )
            expected = 0.0
            for i in range(m):
                z = int(draw.included[i])
                expected += z * math.log(draw.inclusion_prob)
                expected += (1 - z) * math.log1p(-draw.inclusion_prob)
                expected += poisson.logpmf(draw.sizes[i], draw.size_means[i])
                expected += gamma_dist.logpdf(
                    draw.size_means[i], priors.size_shape, scale=1 / priors.size_rate
                )
            assert log_prior(draw, priors) == pytest.approx(expected, rel=1e-10)


class TestTypeInvariants:
    def test_history_rejects_out_of_range_counts(self):
        plan = PhasePlan(inputs_per_phase=(3,))
        with pytest.raises(ValidationError):
            DetectionHistory(records=(BugRecord("b", 1, 4),), plan=plan)
        with pytest.raises(ValidationError):
            DetectionHistory(records=(BugRecord("b", 1, 0),), plan=plan)
        with pytest.raises(ValidationError):
            DetectionHistory(records=(BugRecord("b", 2, 1),), plan=plan)

    def test_history_rejects_duplicate_bug(self):
        plan = PhasePlan(inputs_per_phase=(3, 3))
        with pytest.raises(ValidationError):
            DetectionHistory(
                records=(BugRecord("b", 1, 1), BugRecord("b", 2, 1)), plan=plan
            )

    def test_history_canonical_order(self):
        plan = PhasePlan(inputs_per_phase=(3, 3))
        records = (BugRecord("z", 1, 1), BugRecord("a", 2, 2))
        h1 = DetectionHistory(records=records, plan=plan)
        h2 = DetectionHistory(records=records[::-1], plan=plan)
        assert h1.records == h2.records
        assert h1.records[0].bug_id == "a"

    def test_bound_must_exceed_observed(self):
        plan = PhasePlan(inputs_per_phase=(3,))
        history = DetectionHistory(records=(BugRecord("b", 1, 1),), plan=plan)
        with pytest.raises(ValidationError):
            AugmentedModel(M=1, history=history)

    def test_plan_allows_zero_inputs_but_not_negative(self):
        PhasePlan(inputs_per_phase=(0, 5))
        with pytest.raises(ValidationError):
            PhasePlan(inputs_per_phase=(-1,))

    def test_multi_detection_count(self):
        plan = PhasePlan(inputs_per_phase=(5, 5))
        history = DetectionHistory(
            records=(BugRecord("a", 1, 3), BugRecord("b", 2, 1)), plan=plan
        )
        assert history.multi_detection_count == 1
