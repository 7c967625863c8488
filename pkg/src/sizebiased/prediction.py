"""Posterior-predictive simulation of future phases.

For every retained posterior draw, the included bugs that are still
undetected at the end of testing are pushed through simulated future phases.
From the resulting detection statuses we build the detected/remaining
eventual-size trajectories, the per-draw stopping phase at a threshold, and
the reliability curve (posterior probability that the remaining size is at or
below the threshold after each phase).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .types import AugmentedModel, ParameterDraw, PhasePlan

__all__ = [
    "PredictionConfig",
    "PredictionResult",
    "replicate_detections",
    "size_trajectories",
    "stopping_phase",
    "reliability_curve",
    "predict",
    "predict_from_arrays",
]

DEFAULT_EXTRA_PHASES = 25
_CHUNK = 512  # draws per vectorised block


@dataclass(frozen=True)
class PredictionConfig:
    """Future-phase layout and the reliability question being asked.

    ``epsilon`` is the remaining-size threshold (no default: it is an
    engineering choice, and ``inf`` is accepted as a sentinel).  When
    ``future_inputs`` is None every future phase reuses the last observed
    phase's input count.
    """

    epsilon: float
    horizon: int | None = None          # total phases J; default Q + 25
    future_inputs: int | tuple | None = None
    target: float = 0.95

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be positive (inf is allowed)")
        if not 0.0 < self.target <= 1.0:
            raise ValidationError("reliability target must be in (0, 1]")

    def resolve(self, plan: PhasePlan) -> tuple[int, np.ndarray]:
        """Return (J, future inputs array of length J - Q) for a plan."""
        q = plan.n_phases
        horizon = self.horizon if self.horizon is not None else q + DEFAULT_EXTRA_PHASES
        if horizon <= q:
            raise ValidationError(
                f"horizon {horizon} must exceed the observed phases {q}"
            )
        n_future = horizon - q
        if self.future_inputs is None:
            future = np.full(n_future, plan.inputs_per_phase[-1], dtype=np.int64)
        elif np.isscalar(self.future_inputs):
            future = np.full(n_future, int(self.future_inputs), dtype=np.int64)
        else:
            future = np.asarray(self.future_inputs, dtype=np.int64)
            if future.size != n_future:
                raise ValidationError(
                    f"future_inputs has {future.size} entries, expected {n_future}"
                )
        if (future < 0).any():
            raise ValidationError("future inputs must be >= 0")
        return horizon, future


@dataclass
class PredictionResult:
    """Per-draw trajectories and the pooled reliability curve.

    ``detection_phase`` stores, per draw and bug, the phase of first
    detection within the horizon (0 = never detected); the detection-status
    matrix of any draw can be rebuilt from it exactly.
    """

    detected_size: np.ndarray      # A, (n_draws, J)
    remaining_size: np.ndarray     # B, (n_draws, J)
    detection_phase: np.ndarray    # (n_draws, M) int32, 0 = never
    stop_phase: np.ndarray         # (n_draws,) int64, -1 when censored
    censored: np.ndarray           # (n_draws,) bool
    reliability: np.ndarray        # gamma, (J,)
    crossing_phase: int | None     # first phase with reliability >= target
    observed_phases: int           # Q
    config: PredictionConfig
    future_inputs: np.ndarray

    @property
    def n_draws(self) -> int:
        return self.detected_size.shape[0]

    @property
    def horizon(self) -> int:
        return self.detected_size.shape[1]

    def detection_status(self, draw_index: int) -> np.ndarray:
        """Boolean (M, J) matrix: detected on or before each phase."""
        phases = self.detection_phase[draw_index]
        j = np.arange(1, self.horizon + 1)
        return (phases[:, None] > 0) & (phases[:, None] <= j[None, :])

    def censored_fraction(self) -> float:
        return float(self.censored.mean())

    def stop_phase_distribution(self) -> dict:
        """Counts of the per-draw stopping phase; censored draws under 'censored'."""
        values, counts = np.unique(self.stop_phase[~self.censored], return_counts=True)
        out = {int(v): int(c) for v, c in zip(values, counts)}
        out["censored"] = int(self.censored.sum())
        return out


def replicate_detections(
    draw: ParameterDraw,
    model: AugmentedModel,
    cfg: PredictionConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Simulate one draw's future detection outcomes.

    Returns the per-bug first-detection phase over the whole horizon
    (0 = never detected within it).  Bugs detected during testing keep their
    observed phase; excluded rows and size-zero bugs are never detected.
    The phase-by-phase law is binomial per phase with removal on first
    detection, sampled exactly through its first-success representation.
    """
    horizon, future = cfg.resolve(model.plan)
    return _replicate_block(
        sizes=draw.sizes[None, :].astype(np.float64),
        included=draw.included[None, :],
        rates=np.array([draw.detect_rate]),
        observed_phase=model.compiled.detection_phase,
        future_inputs=future,
        n_observed=model.plan.n_phases,
        rng=rng,
    )[0]


def _replicate_block(
    sizes: np.ndarray,
    included: np.ndarray,
    rates: np.ndarray,
    observed_phase: np.ndarray,
    future_inputs: np.ndarray,
    n_observed: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """First-detection phases for a block of draws, vectorised.

    A bug with per-input detection probability ``p`` survives a future phase
    with ``(1-p)^T``; the first phase whose cumulative input count pushes the
    survival below an exponential threshold is the detection phase.
    """
    n_draws, m = sizes.shape
    cumulative = np.cumsum(future_inputs).astype(np.float64)
    phases = np.broadcast_to(observed_phase, (n_draws, m)).astype(np.int32).copy()

    open_rows = included & (observed_phase[None, :] == 0) & (sizes > 0)
    log_surv_unit = np.log1p(-rates)[:, None]
    # exponential race: survival after C inputs is exp(C * size * log(1-r))
    hazard = -(sizes * log_surv_unit)
    threshold = rng.exponential(size=(n_draws, m))
    with np.errstate(divide="ignore", invalid="ignore"):
        inputs_needed = np.where(open_rows, threshold / hazard, np.inf)
    future_phase = np.searchsorted(cumulative, inputs_needed, side="left") + 1
    detected_future = open_rows & (future_phase <= future_inputs.size)
    phases[detected_future] = (n_observed + future_phase[detected_future]).astype(np.int32)
    return phases


def size_trajectories(
    sizes: np.ndarray,
    included: np.ndarray,
    detection_phase: np.ndarray,
    horizon: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Detected (A) and remaining (B) eventual-size trajectories per draw.

    ``A_j`` sums the sizes of included bugs detected on or before phase j,
    ``B_j`` those not yet detected, so ``A_j + B_j`` is the draw's total
    eventual size for every j.
    """
    sizes = np.atleast_2d(sizes).astype(np.float64)
    included = np.atleast_2d(included)
    detection_phase = np.atleast_2d(detection_phase)
    n_draws, m = sizes.shape
    weights = sizes * included

    # histogram of size by detection phase; bucket 0 collects never-detected
    buckets = np.zeros((n_draws, horizon + 1), dtype=np.float64)
    rows = np.repeat(np.arange(n_draws), m)
    in_horizon = (detection_phase >= 1) & (detection_phase <= horizon)
    cols = np.where(in_horizon, detection_phase, 0).reshape(-1)
    np.add.at(buckets, (rows, cols), weights.reshape(-1))

    detected = np.cumsum(buckets[:, 1:], axis=1)
    remaining = buckets[:, 0:1] + detected[:, -1:] - detected
    return detected, remaining


def stopping_phase(remaining: np.ndarray, epsilon: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-draw earliest phase with remaining size strictly below epsilon.

    Returns (phase, censored): censored draws never cross within the horizon
    and carry phase -1.
    """
    remaining = np.atleast_2d(remaining)
    below = remaining < epsilon
    crossed = below.any(axis=1)
    phase = np.where(crossed, below.argmax(axis=1) + 1, -1).astype(np.int64)
    return phase, ~crossed


def reliability_curve(remaining: np.ndarray, epsilon: float) -> np.ndarray:
    """Monte Carlo reliability per phase: fraction of draws with remaining
    size at or below epsilon."""
    remaining = np.atleast_2d(remaining)
    return (remaining <= epsilon).mean(axis=0)


def crossing_phase(reliability: np.ndarray, target: float) -> int | None:
    """First phase at which the reliability curve reaches the target."""
    hits = np.flatnonzero(reliability >= target)
    return int(hits[0]) + 1 if hits.size else None


def predict_from_arrays(
    sizes: np.ndarray,
    included: np.ndarray,
    rates: np.ndarray,
    observed_phase: np.ndarray,
    plan: PhasePlan,
    cfg: PredictionConfig,
    rng: np.random.Generator,
) -> PredictionResult:
    """Posterior prediction from raw draw arrays (as persisted by a fit).

    ``sizes``/``included`` are (n_draws, M), ``rates`` is (n_draws,), and
    ``observed_phase`` is the per-row observed detection phase (0 for
    augmented rows).
    """
    horizon, future = cfg.resolve(plan)
    n_draws = sizes.shape[0]
    m = sizes.shape[1]
    detected_traj = np.empty((n_draws, horizon))
    remaining_traj = np.empty((n_draws, horizon))
    all_phases = np.empty((n_draws, m), dtype=np.int32)

    for start in range(0, n_draws, _CHUNK):
        stop = min(start + _CHUNK, n_draws)
        phases = _replicate_block(
            sizes=sizes[start:stop].astype(np.float64),
            included=included[start:stop],
            rates=rates[start:stop],
            observed_phase=observed_phase,
            future_inputs=future,
            n_observed=plan.n_phases,
            rng=rng,
        )
        all_phases[start:stop] = phases
        a, b = size_trajectories(
            sizes[start:stop], included[start:stop], phases, horizon
        )
        detected_traj[start:stop] = a
        remaining_traj[start:stop] = b

    stop_ph, censored = stopping_phase(remaining_traj, cfg.epsilon)
    gamma = reliability_curve(remaining_traj, cfg.epsilon)
    return PredictionResult(
        detected_size=detected_traj,
        remaining_size=remaining_traj,
        detection_phase=all_phases,
        stop_phase=stop_ph,
        censored=censored,
        reliability=gamma,
        crossing_phase=crossing_phase(gamma, cfg.target),
        observed_phases=plan.n_phases,
        config=cfg,
        future_inputs=future,
    )


def predict(
    chains,
    model: AugmentedModel,
    cfg: PredictionConfig,
    rng: np.random.Generator | int | None = None,
) -> PredictionResult:
    """Posterior prediction over every retained draw of a fit."""
    if chains.sizes is None:
        raise ValidationError(
            "prediction needs retained draws; rerun the fit with keep_draws=True"
        )
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    n_chains, n_kept, m = chains.sizes.shape
    return predict_from_arrays(
        sizes=chains.sizes.reshape(n_chains * n_kept, m),
        included=chains.included.reshape(n_chains * n_kept, m),
        rates=chains.monitored["detect_rate"].reshape(-1),
        observed_phase=model.compiled.detection_phase,
        plan=model.plan,
        cfg=cfg,
        rng=rng,
    )
