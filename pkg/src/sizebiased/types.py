"""Core domain types for the size-biased detection model.

The observed data are phase-wise detection counts: testing runs in phases,
phase ``j`` uses ``T_j`` inputs, and a bug present in the software is detected
in a phase with a binomial count driven by its latent eventual size.  A bug is
removed from the pool at the end of the phase in which it is first detected,
so each observed bug carries exactly one (phase, count) record.

The unknown number of bugs is handled by zero augmentation: the observed
records are padded to a fixed bound ``M`` with all-zero detection histories,
and a Bernoulli inclusion indicator per row marks which rows are real bugs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .errors import ValidationError

__all__ = [
    "PhasePlan",
    "BugRecord",
    "DetectionHistory",
    "AugmentedModel",
    "Priors",
    "ParameterDraw",
]


@dataclass(frozen=True)
class PhasePlan:
    """Inputs per observed testing phase, plus an optional planning horizon.

    Parameters
    ----------
    inputs_per_phase : sequence of int
        Number of test inputs ``T_j`` used in each observed phase, ``j = 1..Q``.
        Zero is permitted (a phase that ran no inputs carries no information);
        file ingestion is stricter and requires at least one input per phase.
    horizon : int, optional
        Total number of phases ``J >= Q`` including future phases considered
        by posterior prediction.  Defaults to ``Q``.
    """

    inputs_per_phase: tuple[int, ...]
    horizon: int | None = None

    def __post_init__(self) -> None:
        inputs = tuple(int(t) for t in self.inputs_per_phase)
        object.__setattr__(self, "inputs_per_phase", inputs)
        if len(inputs) < 1:
            raise ValidationError("a phase plan needs at least one phase")
        if any(t < 0 for t in inputs):
            raise ValidationError("inputs per phase must be >= 0")
        if self.horizon is None:
            object.__setattr__(self, "horizon", len(inputs))
        elif self.horizon < len(inputs):
            raise ValidationError(
                f"horizon {self.horizon} is smaller than the number of "
                f"observed phases {len(inputs)}"
            )

    @property
    def n_phases(self) -> int:
        """Number of observed phases Q."""
        return len(self.inputs_per_phase)

    @property
    def total_inputs(self) -> int:
        """Total inputs over all observed phases."""
        return int(sum(self.inputs_per_phase))

    def inputs_before(self, phase: int) -> int:
        """Total inputs over phases strictly before ``phase`` (1-based)."""
        return int(sum(self.inputs_per_phase[: phase - 1]))


@dataclass(frozen=True, order=True)
class BugRecord:
    """One observed bug: detected in phase ``phase`` with ``count`` detections."""

    bug_id: str
    phase: int
    count: int


@dataclass(frozen=True)
class DetectionHistory:
    """Observed detection records for all detected bugs plus the phase plan.

    Records are stored in canonical order (sorted by ``bug_id``) so the
    internal model does not depend on input row order.  The removal rule is
    implicit: a bug has zero detections in phases before its detection phase
    and does not exist in the pool afterwards.
    """

    records: tuple[BugRecord, ...]
    plan: PhasePlan

    def __post_init__(self) -> None:
        records = tuple(sorted(self.records))
        object.__setattr__(self, "records", records)
        seen: set[str] = set()
        for rec in records:
            if rec.bug_id in seen:
                raise ValidationError(
                    f"bug {rec.bug_id!r} has more than one detection record"
                )
            seen.add(rec.bug_id)
            if not 1 <= rec.phase <= self.plan.n_phases:
                raise ValidationError(
                    f"bug {rec.bug_id!r}: detection phase {rec.phase} outside "
                    f"1..{self.plan.n_phases}"
                )
            t_phase = self.plan.inputs_per_phase[rec.phase - 1]
            if not 1 <= rec.count <= t_phase:
                raise ValidationError(
                    f"bug {rec.bug_id!r}: detection count {rec.count} outside "
                    f"1..{t_phase} (inputs in phase {rec.phase})"
                )

    @property
    def bug_count_observed(self) -> int:
        return len(self.records)

    @property
    def multi_detection_count(self) -> int:
        """Number of observed bugs detected more than once in their phase."""
        return sum(1 for rec in self.records if rec.count > 1)


@dataclass(frozen=True)
class AugmentedModel:
    """A detection history padded with all-zero rows up to the bound ``M``.

    Rows ``1..n`` are the observed bugs (canonical order); rows ``n+1..M`` are
    augmented pseudo-bugs whose detection history is all zeros over the
    observed phases.
    """

    M: int
    history: DetectionHistory

    def __post_init__(self) -> None:
        if self.M <= self.history.bug_count_observed:
            raise ValidationError(
                f"augmentation bound M={self.M} must exceed the number of "
                f"observed bugs n={self.history.bug_count_observed}"
            )
        object.__setattr__(self, "_compiled", _compile(self))

    @property
    def n_detected(self) -> int:
        return self.history.bug_count_observed

    @property
    def plan(self) -> PhasePlan:
        return self.history.plan

    @property
    def compiled(self) -> CompiledDetection:
        return self._compiled  # type: ignore[attr-defined]


@dataclass(frozen=True)
class CompiledDetection:
    """Per-row sufficient statistics of the detection likelihood.

    With per-input detection probability ``p`` for a row, the row's
    log-likelihood (given inclusion) is::

        successes * log(p) + failures * log(1 - p) + log_binom

    where ``successes`` is the detection count at the detection phase (zero
    for augmented rows), ``failures`` counts the inputs that did not detect
    the bug while it was in the pool, and ``log_binom`` is the binomial
    coefficient constant of the detection phase.
    """

    successes: np.ndarray        # (M,) int64
    failures: np.ndarray         # (M,) int64
    detected: np.ndarray         # (M,) bool, observed rows first
    detection_phase: np.ndarray  # (M,) int64, 0 for augmented rows
    log_binom: np.ndarray        # (M,) float64
    total_inputs: int            # inputs over all observed phases
    weights: np.ndarray | None = None  # (M,) int64 group sizes, grouped model only


def _compile(model: AugmentedModel) -> CompiledDetection:
    plan = model.history.plan
    n, m = model.n_detected, model.M
    successes = np.zeros(m, dtype=np.int64)
    failures = np.full(m, plan.total_inputs, dtype=np.int64)
    detected = np.zeros(m, dtype=bool)
    phase = np.zeros(m, dtype=np.int64)
    log_binom = np.zeros(m, dtype=np.float64)
    for i, rec in enumerate(model.history.records):
        t_det = plan.inputs_per_phase[rec.phase - 1]
        successes[i] = rec.count
        failures[i] = plan.inputs_before(rec.phase) + (t_det - rec.count)
        detected[i] = True
        phase[i] = rec.phase
        log_binom[i] = (
            gammaln(t_det + 1) - gammaln(rec.count + 1) - gammaln(t_det - rec.count + 1)
        )
    return CompiledDetection(
        successes=successes,
        failures=failures,
        detected=detected,
        detection_phase=phase,
        log_binom=log_binom,
        total_inputs=plan.total_inputs,
    )


@dataclass(frozen=True)
class Priors:
    """Hyperparameters of the hierarchical prior.

    Each bug's eventual size is Poisson with a bug-specific mean, and that
    mean has a Gamma(size_shape, size_rate) hyperprior.  The per-input
    detection rate and the inclusion probability both carry Uniform(0, 1)
    priors.
    """

    size_shape: float = 1.0
    size_rate: float = 0.1

    def __post_init__(self) -> None:
        if not (self.size_shape > 0 and self.size_rate > 0):
            raise ValidationError("Gamma hyperparameters must be positive")


@dataclass
class ParameterDraw:
    """One full state of the sampler.

    Attributes
    ----------
    detect_rate : float
        Probability ``r`` that a single input traversing one unit of bug size
        detects the bug; in (0, 1).
    inclusion_prob : float
        Probability ``psi`` that an augmented row is a real bug; in (0, 1).
    included : ndarray of bool, shape (M,)
        Inclusion indicators; always True for detected rows.
    sizes : ndarray of int, shape (M,)
        Latent eventual sizes, >= 0.
    size_means : ndarray of float, shape (M,)
        Bug-specific Poisson means for the sizes, > 0.
    """

    detect_rate: float
    inclusion_prob: float
    included: np.ndarray
    sizes: np.ndarray
    size_means: np.ndarray

    def __post_init__(self) -> None:
        self.included = np.asarray(self.included, dtype=bool)
        self.sizes = np.asarray(self.sizes, dtype=np.int64)
        self.size_means = np.asarray(self.size_means, dtype=np.float64)
        if not (self.included.shape == self.sizes.shape == self.size_means.shape):
            raise ValidationError("draw arrays must have identical shapes")

    @property
    def n_rows(self) -> int:
        return self.included.shape[0]

    @property
    def population_total(self) -> int:
        """Number of included rows (the bug total N)."""
        return int(self.included.sum())

    @property
    def total_size(self) -> int:
        """Total eventual size over included rows."""
        return int((self.sizes * self.included).sum())

    def validate(self, model: AugmentedModel | None = None) -> None:
        """Raise ValidationError if the state violates a structural invariant."""
        if not 0.0 < self.detect_rate < 1.0:
            raise ValidationError("detect_rate must be in (0, 1)")
        if not 0.0 < self.inclusion_prob < 1.0:
            raise ValidationError("inclusion_prob must be in (0, 1)")
        if (self.sizes < 0).any():
            raise ValidationError("sizes must be nonnegative")
        if (self.size_means <= 0).any():
            raise ValidationError("size means must be positive")
        if model is not None:
            if self.n_rows != model.M:
                raise ValidationError("draw size does not match the model bound M")
            n = model.n_detected
            if not self.included[:n].all():
                raise ValidationError("detected bugs must have inclusion = 1")

    def copy(self) -> "ParameterDraw":
        return ParameterDraw(
            detect_rate=self.detect_rate,
            inclusion_prob=self.inclusion_prob,
            included=self.included.copy(),
            sizes=self.sizes.copy(),
            size_means=self.size_means.copy(),
        )
