"""Grouped-bug variant: collocated bugs share one latent size.

Detections are recorded per group (how many of the group's bugs were found,
in which phase), groups are zero-augmented exactly like individual bugs, and
the bug total is reconstructed as the detected count plus the undetected
members of included augmented groups.  The number of undetected bugs in an
augmented group has no likelihood term, so it is drawn from a zero-truncated
Poisson prior whose mean defaults to the mean observed group size; reports
state that choice prominently because the group-count law is a modelling
choice, not something the detection data can identify.

Note on trial counts: an observed group's detected-bug count is modelled as
binomial over the phase's test inputs (with pre-detection survival), the same
aggregate form as the per-bug model; the group size does not cap the count in
the likelihood.  Ingestion still rejects records whose detected count exceeds
the group size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln
from scipy.stats import poisson

from .engine import ChainSet, RunConfig, run
from .errors import ValidationError
from .likelihood import log_likelihood
from .types import CompiledDetection, ParameterDraw, PhasePlan

__all__ = [
    "GroupRecord",
    "GroupedData",
    "GroupedModel",
    "GroupedDraw",
    "grouped_log_likelihood",
    "total_bugs",
    "grouped_remaining_size",
    "sample_undetected_counts",
    "run_grouped",
]


@dataclass(frozen=True, order=True)
class GroupRecord:
    """One observed bug group: ``detected_count`` bugs found in ``phase``."""

    group_id: str
    phase: int
    detected_count: int
    group_size: int


@dataclass(frozen=True)
class GroupedData:
    """Observed group records, the phase plan, and the augmentation bound.

    ``detected_offset`` adds deterministically detected bugs (from stages
    without a probabilistic structure, e.g. manual code inspection) to the
    reconstructed bug total.  ``undetected_mean`` is the zero-truncated
    Poisson mean for undetected bugs per augmented group; None means "mean
    observed group size".
    """

    records: tuple[GroupRecord, ...]
    bound: int
    plan: PhasePlan
    detected_offset: int = 0
    undetected_mean: float | None = None

    def __post_init__(self) -> None:
        records = tuple(sorted(self.records))
        object.__setattr__(self, "records", records)
        if self.bound <= len(records):
            raise ValidationError(
                f"group augmentation bound {self.bound} must exceed the "
                f"number of observed groups {len(records)}"
            )
        if self.detected_offset < 0:
            raise ValidationError("detected_offset must be >= 0")
        seen: set[str] = set()
        for rec in records:
            if rec.group_id in seen:
                raise ValidationError(
                    f"group {rec.group_id!r} has more than one record"
                )
            seen.add(rec.group_id)
            if not 1 <= rec.phase <= self.plan.n_phases:
                raise ValidationError(
                    f"group {rec.group_id!r}: phase {rec.phase} outside "
                    f"1..{self.plan.n_phases}"
                )
            t_phase = self.plan.inputs_per_phase[rec.phase - 1]
            if not 1 <= rec.detected_count <= t_phase:
                raise ValidationError(
                    f"group {rec.group_id!r}: detected count {rec.detected_count} "
                    f"outside 1..{t_phase}"
                )
            if rec.group_size < 1:
                raise ValidationError(
                    f"group {rec.group_id!r}: group size must be >= 1"
                )
        if self.undetected_mean is not None and not self.undetected_mean > 0:
            raise ValidationError("undetected_mean must be positive")

    @property
    def n_groups_observed(self) -> int:
        return len(self.records)

    @property
    def bugs_detected(self) -> int:
        """Bugs detected probabilistically plus the deterministic offset."""
        return sum(rec.detected_count for rec in self.records) + self.detected_offset

    @property
    def mean_group_size(self) -> float:
        if not self.records:
            return 1.0
        return float(np.mean([rec.group_size for rec in self.records]))


class GroupedModel:
    """Zero-augmented grouped data compiled for the shared kernels.

    Exposes the same surface as the per-bug augmented model (``M``,
    ``n_detected``, ``plan``, ``compiled``) so every sampling kernel works
    unchanged on group rows.
    """

    def __init__(self, data: GroupedData):
        self.data = data
        self.M = data.bound
        self.n_detected = data.n_groups_observed
        self.plan = data.plan
        self.compiled = _compile_grouped(data)
        mu = data.undetected_mean
        self.undetected_mean = float(mu) if mu is not None else data.mean_group_size


def _compile_grouped(data: GroupedData) -> CompiledDetection:
    plan = data.plan
    n, m = data.n_groups_observed, data.bound
    successes = np.zeros(m, dtype=np.int64)
    failures = np.full(m, plan.total_inputs, dtype=np.int64)
    detected = np.zeros(m, dtype=bool)
    phase = np.zeros(m, dtype=np.int64)
    log_binom = np.zeros(m, dtype=np.float64)
    weights = np.ones(m, dtype=np.int64)
    for i, rec in enumerate(data.records):
        t_det = plan.inputs_per_phase[rec.phase - 1]
        successes[i] = rec.detected_count
        failures[i] = plan.inputs_before(rec.phase) + (t_det - rec.detected_count)
        detected[i] = True
        phase[i] = rec.phase
        log_binom[i] = (
            gammaln(t_det + 1)
            - gammaln(rec.detected_count + 1)
            - gammaln(t_det - rec.detected_count + 1)
        )
        weights[i] = rec.group_size
    return CompiledDetection(
        successes=successes,
        failures=failures,
        detected=detected,
        detection_phase=phase,
        log_binom=log_binom,
        total_inputs=plan.total_inputs,
        weights=weights,
    )


@dataclass
class GroupedDraw(ParameterDraw):
    """Group-level sampler state: shared sizes per group plus, for augmented
    rows, the number of undetected bugs the group would contribute."""

    undetected_counts: np.ndarray = None

    def __post_init__(self) -> None:
        super().__post_init__()
        self.undetected_counts = np.asarray(self.undetected_counts, dtype=np.int64)
        if self.undetected_counts.shape != self.included.shape:
            raise ValidationError("undetected_counts must match the row count")


def grouped_log_likelihood(draw: ParameterDraw, model: GroupedModel) -> float:
    """Joint log-likelihood of the grouped detection data.

    Same survival-plus-binomial structure as the per-bug model, evaluated on
    group rows; ``-inf`` for an observed group with size zero or exclusion.
    """
    return log_likelihood(draw, model)


def total_bugs(draw: GroupedDraw, model: GroupedModel) -> int:
    """Reconstructed bug total: detected bugs plus the undetected members of
    included augmented groups."""
    aug = ~model.compiled.detected
    extra = int((draw.undetected_counts * draw.included * aug).sum())
    return model.data.bugs_detected + extra


def grouped_remaining_size(draw: GroupedDraw, model: GroupedModel) -> int:
    """Remaining eventual size after the observed phases.

    Observed groups count as detected, so only included augmented groups
    contribute: shared size times the group's undetected member count.
    """
    aug = ~model.compiled.detected
    return int((draw.sizes * draw.included * draw.undetected_counts * aug).sum())


def _sample_zero_truncated_poisson(
    mean: float, size: int, rng: np.random.Generator
) -> np.ndarray:
    """Exact inverse-CDF draws from Poisson(mean) conditioned on >= 1."""
    p_zero = np.exp(-mean)
    u = p_zero + rng.random(size) * (1.0 - p_zero)
    return poisson.ppf(u, mean).astype(np.int64)


def sample_undetected_counts(
    draw: GroupedDraw, model: GroupedModel, rng: np.random.Generator
) -> GroupedDraw:
    """Resample undetected member counts of augmented rows from the
    zero-truncated Poisson prior (every group holds at least one bug).

    The counts carry no likelihood term, so their full conditional is the
    prior; excluded rows keep a draw too but contribute nothing anywhere.
    """
    aug = np.flatnonzero(~model.compiled.detected)
    draw.undetected_counts[aug] = _sample_zero_truncated_poisson(
        model.undetected_mean, aug.size, rng
    )
    return draw


def run_grouped(model: GroupedModel, cfg: RunConfig) -> ChainSet:
    """Fit the grouped model and monitor group-level and bug-level totals.

    Runs the shared engine on group rows, resampling undetected member
    counts each sweep, then rebuilds the monitored scalars:

    * ``N_groups``: included groups,
    * ``N``: reconstructed bug total,
    * ``total_size``/``remaining_size``: eventual sizes weighted by group
      membership.
    """
    if not cfg.keep_draws:
        raise ValidationError("grouped runs require keep_draws=True")
    counts = np.ones(model.M, dtype=np.int64)
    stored = np.empty((cfg.n_chains, cfg.n_kept, model.M), dtype=np.int32)

    def extra_sweep(draw: ParameterDraw, rng: np.random.Generator) -> None:
        aug = np.flatnonzero(~model.compiled.detected)
        counts[aug] = _sample_zero_truncated_poisson(
            model.undetected_mean, aug.size, rng
        )

    def extra_record(draw: ParameterDraw, c: int, k: int) -> None:
        stored[c, k] = counts

    chains = run(model, cfg, extra_sweep=extra_sweep, extra_record=extra_record)
    chains.undetected_counts = stored

    aug = ~model.compiled.detected
    weights = np.where(aug, stored, model.compiled.weights[None, None, :])
    active = chains.sizes * chains.included
    chains.monitored = {
        "N_groups": chains.monitored["N"],
        "N": model.data.bugs_detected
        + (stored * chains.included * aug).sum(axis=2).astype(np.float64),
        "detect_rate": chains.monitored["detect_rate"],
        "inclusion_prob": chains.monitored["inclusion_prob"],
        "total_size": (active * weights).sum(axis=2).astype(np.float64),
        "remaining_size": (active * weights * aug).sum(axis=2).astype(np.float64),
    }
    return chains
