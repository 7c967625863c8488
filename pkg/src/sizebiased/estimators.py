"""Scikit-learn style estimators wrapping the inference engine.

Both estimators follow the usual contract: hyperparameters in ``__init__``
(so ``get_params``/``set_params``/``clone`` work), ``fit`` consumes a data
object and attaches trailing-underscore attributes, and prediction methods
require a fitted state.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .engine import RunConfig, run, summarize
from .errors import ValidationError
from .grouped import GroupedData, GroupedModel, run_grouped
from .prediction import PredictionConfig, PredictionResult, predict
from .samplers import SamplerConfig
from .types import AugmentedModel, DetectionHistory, Priors

__all__ = ["SizeBiasedBugModel", "GroupedBugModel"]


class _BugModelBase(BaseEstimator):
    def __init__(
        self,
        bound=None,
        size_shape=1.0,
        size_rate=0.1,
        n_chains=3,
        n_iterations=10_000,
        burn_in=5_000,
        thin=1,
        rw_step_rate=1.0,
        rw_step_inclusion=1.0,
        adapt_target=0.44,
        adapt_interval=50,
        slice_width=8,
        inclusion_kernel="rw_mh",
        keep_draws=True,
        random_state=0,
    ):
        self.bound = bound
        self.size_shape = size_shape
        self.size_rate = size_rate
        self.n_chains = n_chains
        self.n_iterations = n_iterations
        self.burn_in = burn_in
        self.thin = thin
        self.rw_step_rate = rw_step_rate
        self.rw_step_inclusion = rw_step_inclusion
        self.adapt_target = adapt_target
        self.adapt_interval = adapt_interval
        self.slice_width = slice_width
        self.inclusion_kernel = inclusion_kernel
        self.keep_draws = keep_draws
        self.random_state = random_state

    def _run_config(self) -> RunConfig:
        return RunConfig(
            n_chains=self.n_chains,
            n_iterations=self.n_iterations,
            burn_in=self.burn_in,
            thin=self.thin,
            priors=Priors(size_shape=self.size_shape, size_rate=self.size_rate),
            sampler=SamplerConfig(
                rw_step_rate=self.rw_step_rate,
                rw_step_inclusion=self.rw_step_inclusion,
                adapt_target=self.adapt_target,
                adapt_interval=self.adapt_interval,
                slice_width=self.slice_width,
                rng_seed=int(self.random_state),
                inclusion_kernel=self.inclusion_kernel,
            ),
            keep_draws=self.keep_draws,
        )

    def _require_bound(self, n_observed: int) -> int:
        if self.bound is None:
            raise ValidationError(
                "bound (the augmentation upper limit on the population) must "
                f"be set explicitly; the data hold {n_observed} observed rows"
            )
        return int(self.bound)

    def _check_fitted(self) -> None:
        if not hasattr(self, "chains_"):
            raise NotFittedError(
                f"this {type(self).__name__} instance is not fitted yet; "
                "call fit before using posterior quantities"
            )

    def reliability(self, epsilon: float) -> float:
        """Posterior probability that the remaining eventual size after the
        observed phases is at or below ``epsilon``."""
        self._check_fitted()
        return float((self.chains_.pooled("remaining_size") <= epsilon).mean())


class SizeBiasedBugModel(_BugModelBase):
    """Bayesian size-biased bug population model for per-bug detection data.

    Parameters mirror the engine configuration: ``bound`` is the zero
    augmentation limit M (must exceed the observed bug count; the analyst
    owns this choice), ``size_shape``/``size_rate`` are the Gamma
    hyperparameters of the per-bug mean size, and the remaining arguments
    control the chains and kernels.

    Attributes set by ``fit``: ``chains_`` (retained draws), ``summary_``
    (posterior table), ``rhat_``, ``acceptance_``, ``model_`` (the augmented
    data), ``n_detected_``.

    Example
    -------
    >>> est = SizeBiasedBugModel(bound=100, n_iterations=2000, burn_in=1000)
    >>> est.fit(history)                          # doctest: +SKIP
    >>> est.summary_["N"].mean                    # doctest: +SKIP
    """

    def fit(self, X: DetectionHistory, y=None) -> "SizeBiasedBugModel":
        """Run the MCMC fit on a detection history."""
        if not isinstance(X, DetectionHistory):
            raise ValidationError("fit expects a DetectionHistory")
        bound = self._require_bound(X.bug_count_observed)
        self.model_ = AugmentedModel(M=bound, history=X)
        self.chains_ = run(self.model_, self._run_config())
        self.summary_ = summarize(self.chains_)
        self.rhat_ = {q: self.summary_[q].rhat for q in self.summary_.quantities()}
        self.acceptance_ = self.chains_.acceptance
        self.n_detected_ = X.bug_count_observed
        return self

    def predict(
        self,
        epsilon: float,
        horizon: int | None = None,
        future_inputs=None,
        target: float = 0.95,
        random_state: int | None = None,
    ) -> PredictionResult:
        """Posterior-predictive reliability over future phases.

        Returns the full prediction result; its ``crossing_phase`` is the
        headline stopping phase (first phase at which the reliability curve
        reaches the target).
        """
        self._check_fitted()
        cfg = PredictionConfig(
            epsilon=epsilon,
            horizon=horizon,
            future_inputs=future_inputs,
            target=target,
        )
        seed = self.random_state if random_state is None else random_state
        rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x5EED)))
        return predict(self.chains_, self.model_, cfg, rng)


class GroupedBugModel(_BugModelBase):
    """Grouped variant: collocated bugs share one latent size.

    ``fit`` consumes a ``GroupedData``; the monitored posterior includes the
    number of groups (``N_groups``) and the reconstructed bug total (``N``).
    """

    def fit(self, X: GroupedData, y=None) -> "GroupedBugModel":
        if not isinstance(X, GroupedData):
            raise ValidationError("fit expects a GroupedData")
        # the data object already carries its augmentation bound
        if self.bound is not None and int(self.bound) != X.bound:
            raise ValidationError(
                f"estimator bound {self.bound} disagrees with the data bound "
                f"{X.bound}; set them consistently or leave the estimator's unset"
            )
        self.model_ = GroupedModel(X)
        self.chains_ = run_grouped(self.model_, self._run_config())
        self.summary_ = summarize(self.chains_)
        self.rhat_ = {q: self.summary_[q].rhat for q in self.summary_.quantities()}
        self.acceptance_ = self.chains_.acceptance
        self.n_detected_ = X.bugs_detected
        return self
