import math

import numpy as np
import pytest

from sizebiased import (
    BugRecord,
    DegenerateChainError,
    InitializationError,
    Priors,
    RunConfig,
    SamplerConfig,
    ValidationError,
    gelman_rubin,
    run,
    summarize,
)
from sizebiased.engine import ChainSet, effective_sample_size

from conftest import make_model


def small_run_config(seed=3, **kwargs):
    defaults = dict(
        n_chains=2,
        n_iterations=300,
        burn_in=100,
        priors=Priors(2.0, 1.0),
        sampler=SamplerConfig(rng_seed=seed),
    )
    defaults.update(kwargs)
    return RunConfig(**defaults)


@pytest.fixture(scope="module")
def fitted():
    model = make_model(
        [BugRecord("b1", 1, 1), BugRecord("b2", 2, 2)], inputs=(20, 25, 15), M=12
    )
    chains = run(model, small_run_config())
    return model, chains


class TestRun:
    def test_retention_arithmetic(self):
        model = make_model([BugRecord("b", 1, 1)], inputs=(5,), M=3)
        cfg = small_run_config(n_iterations=101, burn_in=100)
        chains = run(model, cfg)
        assert chains.n_kept == 1
        assert chains.iterations.tolist() == [101]

    def test_thinning_retention(self):
        model = make_model([BugRecord("b", 1, 1)], inputs=(5,), M=3)
        cfg = small_run_config(n_iterations=120, burn_in=100, thin=5)
        chains = run(model, cfg)
        assert chains.n_kept == 4
        assert chains.iterations.tolist() == [105, 110, 115, 120]

    def test_same_seed_bit_identical(self):
        model = make_model([BugRecord("b", 1, 1)], inputs=(10, 10), M=6)
        c1 = run(model, small_run_config(seed=42))
        c2 = run(model, small_run_config(seed=42))
        for q in c1.quantities():
            np.testing.assert_array_equal(c1.monitored[q], c2.monitored[q])
        np.testing.assert_array_equal(c1.sizes, c2.sizes)
        np.testing.assert_array_equal(c1.included, c2.included)

    def test_different_seeds_differ(self):
        model = make_model([BugRecord("b", 1, 1)], inputs=(10, 10), M=6)
        c1 = run(model, small_run_config(seed=1))
        c2 = run(model, small_run_config(seed=2))
        assert not np.array_equal(c1.monitored["detect_rate"], c2.monitored["detect_rate"])

    def test_monitored_consistent_with_stored_draws(self, fitted):
        model, chains = fitted
        aug = ~model.compiled.detected
        for c in range(chains.n_chains):
            for k in range(0, chains.n_kept, 37):
                draw = chains.draw(c, k)
                assert chains.monitored["N"][c, k] == draw.population_total
                assert chains.monitored["total_size"][c, k] == draw.total_size
                assert chains.monitored["remaining_size"][c, k] == (
                    draw.sizes * draw.included * aug
                ).sum()

    def test_population_bounds(self, fitted):
        model, chains = fitted
        n_draws = chains.pooled("N")
        assert (n_draws >= model.n_detected).all()
        assert (n_draws <= model.M).all()

    def test_detected_rows_always_included(self, fitted):
        model, chains = fitted
        assert chains.included[:, :, : model.n_detected].all()

    def test_keep_draws_false(self):
        model = make_model([BugRecord("b", 1, 1)], inputs=(5,), M=3)
        chains = run(model, small_run_config(keep_draws=False))
        assert chains.sizes is None
        with pytest.raises(ValidationError):
            chains.draw(0, 0)

    def test_fixed_params_held(self):
        model = make_model([BugRecord("b", 1, 1)], inputs=(5,), M=3)
        cfg = small_run_config(fixed_params={"detect_rate": 0.2, "inclusion_prob": 0.7})
        chains = run(model, cfg)
        assert (chains.pooled("detect_rate") == 0.2).all()
        assert (chains.pooled("inclusion_prob") == 0.7).all()

    def test_initialization_failure_aborts(self, monkeypatch):
        model = make_model([BugRecord("b", 1, 1)], inputs=(5,), M=3)
        monkeypatch.setattr("sizebiased.engine.log_likelihood",
                            lambda *a, **k: -math.inf)
        with pytest.raises(InitializationError):
            run(model, small_run_config())

    def test_burn_in_must_be_smaller(self):
        with pytest.raises(ValidationError):
            small_run_config(n_iterations=100, burn_in=100)


class TestGelmanRubin:
    def test_iid_normal_close_to_one(self, rng):
        data = rng.normal(size=(3, 5000))
        rhat = gelman_rubin(data)
        assert 0.99 < rhat < 1.05

    def test_disjoint_chains_flagged(self):
        data = np.vstack([np.zeros(100) + np.arange(100) * 1e-6,
                          1000.0 + np.arange(100) * 1e-6])
        assert gelman_rubin(data) > 10

    def test_constant_chains_error(self):
        data = np.ones((2, 100))
        with pytest.raises(DegenerateChainError):
            gelman_rubin(data)

    def test_needs_two_chains(self):
        with pytest.raises(ValidationError):
            gelman_rubin(np.ones((1, 100)))

    def test_chainset_interface(self, fitted):
        _, chains = fitted
        rhat = gelman_rubin(chains, "detect_rate")
        assert rhat >= 0.98


class TestSummarize:
    def test_constant_quantity(self):
        chains = _manual_chainset({"x": np.full((2, 50), 7.0)})
        summary = summarize(chains)
        row = summary["x"]
        assert row.mean == 7.0 and row.sd == 0.0
        assert row.q2_5 == 7.0 and row.q97_5 == 7.0
        assert math.isnan(row.rhat)

    def test_interpolated_median(self):
        data = np.arange(1, 101, dtype=float).reshape(1, 100)
        chains = _manual_chainset({"x": data})
        assert summarize(chains)["x"].median == pytest.approx(50.5)

    def test_quantile_ordering(self, fitted):
        _, chains = fitted
        summary = summarize(chains)
        for q in chains.quantities():
            row = summary[q]
            assert row.q2_5 <= row.median <= row.q97_5
            assert row.q2_5 <= row.mean <= row.q97_5 or row.sd == 0

    def test_convergence_warnings(self):
        bad = _manual_chainset(
            {"x": np.vstack([np.random.default_rng(0).normal(size=200),
                             10 + np.random.default_rng(1).normal(size=200)])}
        )
        warnings = summarize(bad).convergence_warnings()
        assert len(warnings) == 1 and "x" in warnings[0]


def _manual_chainset(monitored):
    any_arr = next(iter(monitored.values()))
    return ChainSet(
        monitored=monitored,
        iterations=np.arange(1, any_arr.shape[1] + 1),
        config=None,
        model_bound=0,
        n_detected=0,
        chain_seeds={},
        acceptance={},
        final_steps={},
    )


class TestEffectiveSampleSize:
    def test_iid_close_to_n(self, rng):
        x = rng.normal(size=20_000)
        ess = effective_sample_size(x)
        assert 0.8 * x.size < ess < 1.3 * x.size

    def test_correlated_much_smaller(self, rng):
        x = np.empty(20_000)
        x[0] = 0.0
        noise = rng.normal(size=x.size)
        for i in range(1, x.size):
            x[i] = 0.95 * x[i - 1] + noise[i]
        # AR(1) with rho=.95 has ESS ~ n * (1-rho)/(1+rho) ~ n/39
        assert effective_sample_size(x) < x.size / 15
