"""Detection probability, joint log-likelihood and log-prior.

All likelihood math is done in log space.  Survival terms ``(1-p)^T`` are
computed as ``T * log1p(-p)`` with ``log(1-p)`` obtained directly from the
size-biased form ``1 - p = (1-r)^S``, which keeps everything stable for
detection rates of order 1e-5 and sizes in the hundreds.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln

from .errors import ValidationError
from .types import AugmentedModel, ParameterDraw, Priors

__all__ = ["detection_probability", "log_likelihood", "log_prior"]

NEG_INF = float("-inf")


def detection_probability(rate: float, size) -> float | np.ndarray:
    """Per-input detection probability ``1 - (1-rate)^size``.

    Strictly increasing in both arguments, and exactly zero iff ``size`` is
    zero.  Evaluated as ``-expm1(size * log1p(-rate))`` so rates near zero do
    not lose precision.

    Parameters
    ----------
    rate : float
        Per-input, per-unit-size detection probability, in (0, 1).
    size : int or ndarray of int
        Nonnegative eventual size(s).
    """
    if not 0.0 < rate < 1.0:
        raise ValidationError(f"detect rate must be in (0, 1), got {rate}")
    size_arr = np.asarray(size)
    if (size_arr < 0).any():
        raise ValidationError("size must be nonnegative")
    out = -np.expm1(size_arr * np.log1p(-rate))
    if np.isscalar(size) or size_arr.ndim == 0:
        return float(out)
    return out


def _rowwise_log_likelihood(
    rate: float,
    sizes: np.ndarray,
    included: np.ndarray,
    model: AugmentedModel,
) -> np.ndarray:
    """Per-row log-likelihood contributions; -inf where impossible."""
    c = model.compiled
    log_surv_unit = np.log1p(-rate)  # log(1-p) per unit of size
    out = np.zeros(len(sizes), dtype=np.float64)

    active = included & (sizes > 0)
    out[active] = c.failures[active] * sizes[active] * log_surv_unit
    det = c.detected
    with np.errstate(divide="ignore"):
        log_p = np.log(-np.expm1(sizes[det] * log_surv_unit))
    out[det] = np.where(
        included[det] & (sizes[det] > 0),
        out[det] + c.successes[det] * log_p + c.log_binom[det],
        NEG_INF,
    )
    return out


def log_likelihood(draw: ParameterDraw, model: AugmentedModel) -> float:
    """Joint log-likelihood of the zero-augmented detection data.

    Each observed bug contributes the survival of all inputs before its
    detection phase plus a binomial term at the detection phase.  An
    augmented row contributes full survival over the observed phases when
    included, and nothing when excluded.  Returns ``-inf`` for impossible
    states (a detected bug excluded or of size zero).
    """
    if draw.n_rows != model.M:
        raise ValidationError("draw does not match model dimension")
    rows = _rowwise_log_likelihood(
        draw.detect_rate, draw.sizes, draw.included, model
    )
    return float(rows.sum())


def log_prior(draw: ParameterDraw, priors: Priors) -> float:
    """Log-density of the prior at ``draw``.

    Bernoulli inclusion, Poisson sizes with Gamma-distributed means, and flat
    Uniform(0, 1) contributions for the detect rate and inclusion probability.
    Values outside the open support return ``-inf``; a negative size is a
    structural error and raises.
    """
    if (draw.sizes < 0).any():
        raise ValidationError("sizes must be nonnegative")
    if not (0.0 < draw.detect_rate < 1.0 and 0.0 < draw.inclusion_prob < 1.0):
        return NEG_INF
    if (draw.size_means <= 0).any():
        return NEG_INF

    psi = draw.inclusion_prob
    n_inc = draw.included.sum()
    total = n_inc * np.log(psi) + (draw.n_rows - n_inc) * np.log1p(-psi)

    lam = draw.size_means
    s = draw.sizes
    total += float(np.sum(s * np.log(lam) - lam - gammaln(s + 1)))

    a, b = priors.size_shape, priors.size_rate
    total += float(
        np.sum(a * np.log(b) - gammaln(a) + (a - 1.0) * np.log(lam) - b * lam)
    )
    return float(total)
