"""Single-site MCMC kernels and the systematic-scan sweep.

Kernels:

* conjugate Gibbs for the inclusion indicators and the per-bug size means,
* a discrete slice sampler (stepping-out bracket on the integer lattice,
  uniform integer shrinkage) for the latent sizes,
* adaptive random-walk Metropolis-Hastings on the logit scale for the
  detect rate and the inclusion probability, with an optional exact
  Beta-conjugate kernel for the inclusion probability.

All kernels mutate the passed ``ParameterDraw`` in place and return it; a
chain owns its draw, so there is no cross-chain shared state.  The internals
are vectorised over row subsets, and the public per-row operations are thin
wrappers over the same code path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import gammaln

from .errors import SamplerError, ValidationError
from .types import AugmentedModel, ParameterDraw, Priors

__all__ = [
    "SamplerConfig",
    "SweepStats",
    "gibbs_update_inclusion",
    "gibbs_update_size_mean",
    "gibbs_update_inclusion_prob",
    "slice_update_size",
    "mh_update_scalar",
    "discrete_slice",
    "sweep",
]

_MAX_SLICE_STEPS = 10_000


@dataclass(frozen=True)
class SamplerConfig:
    """Tuning constants for the kernels.

    ``rw_step_rate`` and ``rw_step_inclusion`` are initial random-walk step
    sizes on the logit scale; the engine adapts them toward ``adapt_target``
    acceptance during burn-in (Robbins-Monro style, frozen afterwards).
    ``slice_width`` is the initial bracket width (in size units) of the
    discrete slice sampler.  ``inclusion_kernel`` selects between the
    random-walk update ("rw_mh", the default) and the exact conjugate Beta
    draw ("beta_gibbs") for the inclusion probability.
    """

    rw_step_rate: float = 1.0
    rw_step_inclusion: float = 1.0
    adapt_target: float = 0.44
    adapt_interval: int = 50
    slice_width: int = 8
    rng_seed: int = 0
    inclusion_kernel: str = "rw_mh"

    def __post_init__(self) -> None:
        if self.rw_step_rate <= 0 or self.rw_step_inclusion <= 0:
            raise ValidationError("random-walk step sizes must be positive")
        if not 0.0 < self.adapt_target < 1.0:
            raise ValidationError("adapt_target must be in (0, 1)")
        if self.adapt_interval < 1:
            raise ValidationError("adapt_interval must be >= 1")
        if self.slice_width < 1:
            raise ValidationError("slice_width must be >= 1")
        if self.inclusion_kernel not in ("rw_mh", "beta_gibbs"):
            raise ValidationError(
                f"unknown inclusion kernel {self.inclusion_kernel!r}"
            )


@dataclass
class SweepStats:
    """Acceptance bookkeeping for the scalar MH kernels."""

    proposals: dict = field(default_factory=lambda: {"detect_rate": 0, "inclusion_prob": 0})
    accepts: dict = field(default_factory=lambda: {"detect_rate": 0, "inclusion_prob": 0})

    def record(self, name: str, accepted: bool) -> None:
        self.proposals[name] += 1
        self.accepts[name] += int(accepted)

    def rate(self, name: str) -> float:
        n = self.proposals[name]
        return self.accepts[name] / n if n else float("nan")


# ---------------------------------------------------------------------------
# inclusion indicators (conjugate Bernoulli Gibbs)
# ---------------------------------------------------------------------------

def _update_inclusion(
    draw: ParameterDraw, model: AugmentedModel, rng: np.random.Generator,
    idx: np.ndarray,
) -> None:
    c = model.compiled
    log_survive_all = (
        draw.sizes[idx] * c.failures[idx] * np.log1p(-draw.detect_rate)
    )
    psi = draw.inclusion_prob
    weighted = psi * np.exp(log_survive_all)
    prob = weighted / (weighted + (1.0 - psi))
    draw.included[idx] = rng.random(idx.size) < prob


def gibbs_update_inclusion(
    i: int, draw: ParameterDraw, model: AugmentedModel, rng: np.random.Generator
) -> ParameterDraw:
    """Resample one augmented row's inclusion indicator from its Bernoulli
    full conditional ``psi*q / (psi*q + 1 - psi)`` where ``q`` is the
    probability of the all-zero history given inclusion.

    Detected rows have their indicator pinned at 1 and never pass through
    this kernel.
    """
    if i < model.n_detected:
        raise IndexError(
            f"row {i} is a detected bug; its inclusion indicator is fixed"
        )
    _update_inclusion(draw, model, rng, np.array([i], dtype=np.intp))
    return draw


# ---------------------------------------------------------------------------
# size means (conjugate Gamma-Poisson Gibbs)
# ---------------------------------------------------------------------------

def _update_size_means(
    draw: ParameterDraw, priors: Priors, rng: np.random.Generator, idx: np.ndarray
) -> None:
    shape = priors.size_shape + draw.sizes[idx]
    draw.size_means[idx] = rng.gamma(shape, 1.0 / (priors.size_rate + 1.0))


def gibbs_update_size_mean(
    i: int, draw: ParameterDraw, priors: Priors, rng: np.random.Generator
) -> ParameterDraw:
    """Resample one bug's Poisson mean from Gamma(shape + size, rate + 1)."""
    if draw.sizes[i] < 0:
        raise ValidationError("size must be nonnegative")
    _update_size_means(draw, priors, rng, np.array([i], dtype=np.intp))
    return draw


# ---------------------------------------------------------------------------
# latent sizes (discrete slice sampler)
# ---------------------------------------------------------------------------

def _make_size_target(
    draw: ParameterDraw, model: AugmentedModel, idx: np.ndarray
) -> Callable:
    """Unnormalised log full conditional of the sizes at rows ``idx``.

    Poisson prior term plus, for included rows, the survival of undetecting
    inputs, plus the detection-count term for observed rows.  Constant terms
    in the size are dropped.
    """
    c = model.compiled
    log_surv_unit = np.log1p(-draw.detect_rate)
    linear = np.log(draw.size_means[idx]) + np.where(
        draw.included[idx], c.failures[idx] * log_surv_unit, 0.0
    )
    successes = c.successes[idx].astype(np.float64)
    any_detected = bool(c.detected[idx].any())
    detected = c.detected[idx] if any_detected else None

    def target(s: np.ndarray, sub: np.ndarray | None = None) -> np.ndarray:
        li = linear if sub is None else linear[sub]
        out = s * li - gammaln(s + 1.0)
        if any_detected:
            sc = successes if sub is None else successes[sub]
            dd = detected if sub is None else detected[sub]
            with np.errstate(divide="ignore"):
                log_p = np.log(-np.expm1(s[dd] * log_surv_unit))
            out[dd] += sc[dd] * log_p
        return out

    return target


def _discrete_slice_step(
    s0: np.ndarray,
    target: Callable,
    lower: np.ndarray,
    rng: np.random.Generator,
    width: int,
) -> np.ndarray:
    """One slice update per row on the integer lattice, vectorised.

    ``target(s, sub)`` evaluates the log target at float-valued integer
    candidates ``s`` for the row subset ``sub`` (None means all rows).
    """
    k = s0.size
    g0 = target(s0)
    if not np.isfinite(g0).all():
        raise SamplerError(
            "slice sampler started from a zero-density state; "
            "the current size is outside the support"
        )
    log_height = g0 - rng.exponential(size=k)

    left = s0 - rng.integers(0, width, size=k)
    left = np.maximum(left, lower)
    right = left + (width - 1)

    # step out: expand an endpoint while it still lies inside the slice
    active = np.flatnonzero(left > lower)
    for _ in range(_MAX_SLICE_STEPS):
        if active.size == 0:
            break
        inside = target(left[active], active) > log_height[active]
        active = active[inside]
        if active.size == 0:
            break
        left[active] = np.maximum(left[active] - width, lower[active])
        active = active[left[active] > lower[active]]
    else:
        raise SamplerError("slice bracket expansion (left) did not terminate")

    active = np.arange(k)
    for _ in range(_MAX_SLICE_STEPS):
        inside = target(right[active], active) > log_height[active]
        active = active[inside]
        if active.size == 0:
            break
        right[active] += width
    else:
        raise SamplerError("slice bracket expansion (right) did not terminate")

    # shrink: uniform integer proposals, collapsing the bracket on rejection
    out = s0.copy()
    active = np.arange(k)
    for _ in range(_MAX_SLICE_STEPS):
        span = right[active] - left[active] + 1.0
        prop = left[active] + np.floor(rng.random(active.size) * span)
        accept = target(prop, active) > log_height[active]
        out[active[accept]] = prop[accept]
        rejected = active[~accept]
        if rejected.size == 0:
            break
        prop_rej = prop[~accept]
        if (prop_rej == s0[rejected]).any():
            raise SamplerError(
                "slice bracket shrank onto the current state without "
                "containing any acceptable integer"
            )
        is_left = prop_rej < s0[rejected]
        left[rejected[is_left]] = prop_rej[is_left] + 1
        right[rejected[~is_left]] = prop_rej[~is_left] - 1
        active = rejected
    else:
        raise SamplerError("slice shrinkage did not terminate")
    return out


def _update_sizes(
    draw: ParameterDraw,
    model: AugmentedModel,
    rng: np.random.Generator,
    width: int,
    idx: np.ndarray,
) -> None:
    target = _make_size_target(draw, model, idx)
    lower = np.where(model.compiled.detected[idx], 1.0, 0.0)
    s0 = draw.sizes[idx].astype(np.float64)
    s_new = _discrete_slice_step(s0, target, lower, rng, width)
    draw.sizes[idx] = s_new.astype(np.int64)


def slice_update_size(
    i: int,
    draw: ParameterDraw,
    model: AugmentedModel,
    priors: Priors,
    cfg: SamplerConfig,
    rng: np.random.Generator,
) -> ParameterDraw:
    """Resample one latent size by discrete slice sampling.

    The target is the Poisson prior times the row's likelihood terms; for a
    detected bug the support excludes size 0.  ``priors`` enters through the
    size mean already held in the draw (the Poisson term), so only the draw
    state is read here.
    """
    del priors  # the Poisson mean is part of the draw state
    _update_sizes(draw, model, rng, cfg.slice_width, np.array([i], dtype=np.intp))
    return draw


def discrete_slice(
    current: int,
    log_pmf: Callable[[np.ndarray], np.ndarray],
    rng: np.random.Generator,
    width: int = 8,
    lower: int = 0,
) -> int:
    """Generic one-variable discrete slice update (testing and reuse hook).

    ``log_pmf`` maps an array of integer-valued floats to unnormalised log
    probabilities (``-inf`` outside the support).
    """

    def target(s: np.ndarray, sub=None) -> np.ndarray:
        return np.asarray(log_pmf(s), dtype=np.float64)

    out = _discrete_slice_step(
        np.array([float(current)]),
        target,
        np.array([float(lower)]),
        rng,
        width,
    )
    return int(out[0])


# ---------------------------------------------------------------------------
# detect rate and inclusion probability (random-walk MH on the logit scale)
# ---------------------------------------------------------------------------

def _rate_loglik_parts(draw: ParameterDraw, model: AugmentedModel):
    """State-dependent pieces of the log-likelihood as a function of rate."""
    c = model.compiled
    survival_units = float(
        np.sum(c.failures * draw.sizes * draw.included)
    )
    det = c.detected
    return survival_units, draw.sizes[det].astype(np.float64), c.successes[det].astype(np.float64)


def _loglik_at_rate(
    rate: float, survival_units: float, det_sizes: np.ndarray, det_counts: np.ndarray
) -> float:
    log_surv_unit = math.log1p(-rate)
    total = survival_units * log_surv_unit
    if det_sizes.size:
        with np.errstate(divide="ignore"):
            log_p = np.log(-np.expm1(det_sizes * log_surv_unit))
        total += float(np.dot(det_counts, log_p))
    return total


def _logit(x: float) -> float:
    return math.log(x) - math.log1p(-x)


def _inv_logit(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def mh_update_scalar(
    name: str,
    draw: ParameterDraw,
    model: AugmentedModel,
    cfg: SamplerConfig,
    rng: np.random.Generator,
    step: float | None = None,
) -> tuple[ParameterDraw, bool]:
    """Random-walk Metropolis-Hastings update of ``detect_rate`` or
    ``inclusion_prob`` on the logit scale.

    The prior is Uniform(0, 1) on the natural scale, so the acceptance ratio
    carries the Jacobian factor ``x(1-x)`` of the logistic transform.  A
    rejected proposal keeps the current value; the acceptance flag is
    returned alongside the draw.
    """
    if name == "detect_rate":
        current = draw.detect_rate
        if step is None:
            step = cfg.rw_step_rate
        parts = _rate_loglik_parts(draw, model)

        def log_target(value: float) -> float:
            return _loglik_at_rate(value, *parts)

    elif name == "inclusion_prob":
        current = draw.inclusion_prob
        if step is None:
            step = cfg.rw_step_inclusion
        n_inc = float(draw.included.sum())
        n_exc = float(draw.n_rows - n_inc)

        def log_target(value: float) -> float:
            return n_inc * math.log(value) + n_exc * math.log1p(-value)

    else:
        raise ValidationError(f"unknown scalar parameter {name!r}")

    proposal = _inv_logit(_logit(current) + step * rng.normal())
    log_u = math.log1p(-rng.random())  # log of a Uniform(0,1], never log(0)
    if not 0.0 < proposal < 1.0:
        return draw, False  # saturated beyond float resolution; zero density
    log_accept = (
        log_target(proposal)
        - log_target(current)
        + math.log(proposal) + math.log1p(-proposal)
        - math.log(current) - math.log1p(-current)
    )
    accepted = log_u < log_accept
    if accepted:
        if name == "detect_rate":
            draw.detect_rate = proposal
        else:
            draw.inclusion_prob = proposal
    return draw, accepted


def gibbs_update_inclusion_prob(
    draw: ParameterDraw, rng: np.random.Generator
) -> ParameterDraw:
    """Exact conjugate update: Beta(1 + included, 1 + excluded).

    Alternative kernel to the random-walk update, selectable through
    ``SamplerConfig.inclusion_kernel``.
    """
    n_inc = int(draw.included.sum())
    draw.inclusion_prob = float(
        rng.beta(1.0 + n_inc, 1.0 + draw.n_rows - n_inc)
    )
    return draw


# ---------------------------------------------------------------------------
# systematic scan
# ---------------------------------------------------------------------------

def sweep(
    draw: ParameterDraw,
    model: AugmentedModel,
    priors: Priors,
    cfg: SamplerConfig,
    rng: np.random.Generator,
    steps: dict | None = None,
    stats: SweepStats | None = None,
    skip: frozenset = frozenset(),
) -> ParameterDraw:
    """One full systematic scan, frozen order: sizes, size means, inclusion
    indicators (augmented rows only), detect rate, inclusion probability.

    ``steps`` optionally overrides the random-walk step sizes (the engine
    passes its adapted values).  ``skip`` names blocks to hold fixed; it is
    used for fixed-parameter runs and identity checks.
    """
    all_rows = np.arange(model.M, dtype=np.intp)
    augmented = np.arange(model.n_detected, model.M, dtype=np.intp)
    steps = steps or {}

    if "sizes" not in skip:
        _update_sizes(draw, model, rng, cfg.slice_width, all_rows)
    if "size_means" not in skip:
        _update_size_means(draw, priors, rng, all_rows)
    if "inclusion" not in skip and augmented.size:
        _update_inclusion(draw, model, rng, augmented)
    if "detect_rate" not in skip:
        _, accepted = mh_update_scalar(
            "detect_rate", draw, model, cfg, rng, step=steps.get("detect_rate")
        )
        if stats is not None:
            stats.record("detect_rate", accepted)
    if "inclusion_prob" not in skip:
        if cfg.inclusion_kernel == "beta_gibbs":
            gibbs_update_inclusion_prob(draw, rng)
            if stats is not None:
                stats.record("inclusion_prob", True)
        else:
            _, accepted = mh_update_scalar(
                "inclusion_prob", draw, model, cfg, rng,
                step=steps.get("inclusion_prob"),
            )
            if stats is not None:
                stats.record("inclusion_prob", accepted)
    return draw
