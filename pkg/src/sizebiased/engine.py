"""Multi-chain orchestration, diagnostics and posterior summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateChainError, InitializationError, ValidationError
from .likelihood import log_likelihood, log_prior
from .samplers import SamplerConfig, SweepStats, sweep
from .types import AugmentedModel, ParameterDraw, Priors

__all__ = [
    "RunConfig",
    "ChainSet",
    "PosteriorSummary",
    "run",
    "gelman_rubin",
    "summarize",
    "effective_sample_size",
]

MONITORED = ("N", "detect_rate", "inclusion_prob", "total_size", "remaining_size")

_INIT_RETRIES = 100
_RHAT_THRESHOLD = 1.1


@dataclass(frozen=True)
class RunConfig:
    """Chain layout and components of a fit.

    ``fixed_params`` pins named scalars ("detect_rate", "inclusion_prob") to
    constants for the whole run; it exists for enumeration checks and
    debugging, not for production fits.
    """

    n_chains: int = 3
    n_iterations: int = 10_000
    burn_in: int = 5_000
    thin: int = 1
    priors: Priors = field(default_factory=Priors)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    keep_draws: bool = True
    fixed_params: dict | None = None

    def __post_init__(self) -> None:
        if self.n_chains < 1:
            raise ValidationError("need at least one chain")
        if self.burn_in >= self.n_iterations:
            raise ValidationError("burn_in must be smaller than n_iterations")
        if self.thin < 1:
            raise ValidationError("thin must be >= 1")
        if self.fixed_params:
            unknown = set(self.fixed_params) - {"detect_rate", "inclusion_prob"}
            if unknown:
                raise ValidationError(f"cannot fix parameters: {sorted(unknown)}")

    @property
    def n_kept(self) -> int:
        return (self.n_iterations - self.burn_in) // self.thin


@dataclass
class ChainSet:
    """Post burn-in, thinned output of a multi-chain run.

    ``monitored`` maps quantity names to (n_chains, n_kept) arrays.  When
    draws are kept, ``sizes``/``included``/``size_means`` hold the full
    latent state per retained draw so posterior prediction can replay it.
    """

    monitored: dict
    iterations: np.ndarray              # absolute iteration index per kept draw
    config: RunConfig
    model_bound: int                    # augmentation bound M
    n_detected: int
    chain_seeds: dict
    acceptance: dict                    # name -> per-chain post burn-in rates
    final_steps: dict                   # name -> per-chain adapted step sizes
    sizes: np.ndarray | None = None        # (n_chains, n_kept, M) int32
    included: np.ndarray | None = None     # (n_chains, n_kept, M) bool
    size_means: np.ndarray | None = None   # (n_chains, n_kept, M) float64
    undetected_counts: np.ndarray | None = None  # grouped runs only

    @property
    def n_chains(self) -> int:
        return next(iter(self.monitored.values())).shape[0]

    @property
    def n_kept(self) -> int:
        return next(iter(self.monitored.values())).shape[1]

    def quantities(self) -> tuple:
        return tuple(self.monitored)

    def pooled(self, name: str) -> np.ndarray:
        """All chains' retained draws of one quantity, concatenated."""
        return self.monitored[name].reshape(-1)

    def draw(self, chain: int, index: int) -> ParameterDraw:
        """Reconstruct the full parameter state of one retained draw."""
        if self.sizes is None:
            raise ValidationError("this run was configured with keep_draws=False")
        return ParameterDraw(
            detect_rate=float(self.monitored["detect_rate"][chain, index]),
            inclusion_prob=float(self.monitored["inclusion_prob"][chain, index]),
            included=self.included[chain, index].copy(),
            sizes=self.sizes[chain, index].astype(np.int64),
            size_means=self.size_means[chain, index].copy(),
        )


def _initial_draw(
    model: AugmentedModel, cfg: RunConfig, rng: np.random.Generator
) -> ParameterDraw:
    priors = cfg.priors
    m, n = model.M, model.n_detected
    fixed = cfg.fixed_params or {}
    size_means = rng.gamma(priors.size_shape, 1.0 / priors.size_rate, size=m)
    sizes = rng.poisson(size_means)
    # detected bugs need size >= 1 for a finite start
    sizes[:n] = np.maximum(1, np.round(size_means[:n])).astype(np.int64)
    psi = float(fixed.get("inclusion_prob", rng.uniform(0.01, 0.99)))
    rate = float(fixed.get("detect_rate", rng.uniform(0.01, 0.99)))
    included = np.ones(m, dtype=bool)
    included[n:] = rng.random(m - n) < psi
    return ParameterDraw(
        detect_rate=rate,
        inclusion_prob=psi,
        included=included,
        sizes=sizes.astype(np.int64),
        size_means=size_means,
    )


def _record(draw: ParameterDraw, model: AugmentedModel, out: dict, c: int, k: int) -> None:
    aug = ~model.compiled.detected
    out["N"][c, k] = draw.population_total
    out["detect_rate"][c, k] = draw.detect_rate
    out["inclusion_prob"][c, k] = draw.inclusion_prob
    out["total_size"][c, k] = draw.total_size
    out["remaining_size"][c, k] = int((draw.sizes * draw.included * aug).sum())


def run(
    model: AugmentedModel,
    cfg: RunConfig,
    extra_sweep=None,
    extra_record=None,
) -> ChainSet:
    """Run ``cfg.n_chains`` independent chains and collect retained draws.

    Chains execute sequentially with independent spawned RNG streams, so a
    given (seed, config) pair always reproduces the same output bit for bit.
    ``extra_sweep``/``extra_record`` are injection points for the grouped
    model's additional per-iteration state.
    """
    n_kept = cfg.n_kept
    if n_kept < 1:
        raise ValidationError("no draws would be retained; adjust iterations/thin")
    root = np.random.SeedSequence(cfg.sampler.rng_seed)
    children = root.spawn(cfg.n_chains)

    monitored = {q: np.empty((cfg.n_chains, n_kept)) for q in MONITORED}
    iterations = np.array(
        [cfg.burn_in + (k + 1) * cfg.thin for k in range(n_kept)], dtype=np.int64
    )
    sizes = included = size_means = None
    if cfg.keep_draws:
        sizes = np.empty((cfg.n_chains, n_kept, model.M), dtype=np.int32)
        included = np.empty((cfg.n_chains, n_kept, model.M), dtype=bool)
        size_means = np.empty((cfg.n_chains, n_kept, model.M), dtype=np.float64)

    skip = frozenset((cfg.fixed_params or {}).keys())
    acceptance = {"detect_rate": [], "inclusion_prob": []}
    final_steps = {"detect_rate": [], "inclusion_prob": []}

    for c in range(cfg.n_chains):
        rng = np.random.default_rng(children[c])
        draw = None
        for _ in range(_INIT_RETRIES):
            candidate = _initial_draw(model, cfg, rng)
            lp = log_likelihood(candidate, model) + log_prior(candidate, cfg.priors)
            if math.isfinite(lp):
                draw = candidate
                break
        if draw is None:
            raise InitializationError(
                f"chain {c}: no finite log-posterior start in {_INIT_RETRIES} tries"
            )

        steps = {
            "detect_rate": cfg.sampler.rw_step_rate,
            "inclusion_prob": cfg.sampler.rw_step_inclusion,
        }
        block = SweepStats()
        post = SweepStats()
        adapt_block = 0
        k = 0
        for it in range(1, cfg.n_iterations + 1):
            in_burn = it <= cfg.burn_in
            stats = block if in_burn else post
            sweep(
                draw, model, cfg.priors, cfg.sampler, rng,
                steps=steps, stats=stats, skip=skip,
            )
            if extra_sweep is not None:
                extra_sweep(draw, rng)
            if in_burn and it % cfg.sampler.adapt_interval == 0:
                adapt_block += 1
                gain = 1.0 / math.sqrt(adapt_block)
                for name in steps:
                    if name in skip or block.proposals[name] == 0:
                        continue
                    rate = block.rate(name)
                    steps[name] *= math.exp(gain * (rate - cfg.sampler.adapt_target))
                block = SweepStats()
            if not in_burn and (it - cfg.burn_in) % cfg.thin == 0:
                _record(draw, model, monitored, c, k)
                if cfg.keep_draws:
                    sizes[c, k] = draw.sizes
                    included[c, k] = draw.included
                    size_means[c, k] = draw.size_means
                if extra_record is not None:
                    extra_record(draw, c, k)
                k += 1

        for name in ("detect_rate", "inclusion_prob"):
            acceptance[name].append(post.rate(name))
            final_steps[name].append(steps[name])

    return ChainSet(
        monitored=monitored,
        iterations=iterations,
        config=cfg,
        model_bound=model.M,
        n_detected=model.n_detected,
        chain_seeds={
            "root_seed": cfg.sampler.rng_seed,
            "spawn_keys": [list(child.spawn_key) for child in children],
        },
        acceptance=acceptance,
        final_steps=final_steps,
        sizes=sizes,
        included=included,
        size_means=size_means,
    )


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def gelman_rubin(chains: ChainSet | np.ndarray, quantity: str | None = None) -> float:
    """Potential scale reduction factor from between/within chain variances.

    Accepts either a ChainSet plus a quantity name or a raw
    (n_chains, n_draws) array.  Raises DegenerateChainError when the
    quantity is constant within every chain.
    """
    if isinstance(chains, ChainSet):
        if quantity is None:
            raise ValidationError("quantity name required with a ChainSet")
        data = chains.monitored[quantity]
    else:
        data = np.asarray(chains, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        raise ValidationError("need at least two chains")
    n = data.shape[1]
    if n < 10:
        raise ValidationError("need at least 10 draws per chain")
    within = float(np.mean(np.var(data, axis=1, ddof=1)))
    if within == 0.0:
        raise DegenerateChainError(
            "zero within-chain variance; the scale reduction factor is undefined"
        )
    means = data.mean(axis=1)
    between = n * float(np.var(means, ddof=1))
    pooled = (n - 1) / n * within + between / n
    return float(np.sqrt(pooled / within))


def effective_sample_size(series: np.ndarray) -> float:
    """Effective sample size of one chain via the initial positive sequence
    of autocovariance pair sums."""
    x = np.asarray(series, dtype=np.float64)
    n = x.size
    x = x - x.mean()
    var = float(np.dot(x, x)) / n
    if var == 0.0 or n < 4:
        return float(n)
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n].real / n
    rho = acov / acov[0]
    tau = 1.0
    for k in range(1, n // 2):
        pair = rho[2 * k - 1] + rho[2 * k]
        if pair < 0:
            break
        tau += 2.0 * pair
    return float(n / max(tau, 1.0))


# ---------------------------------------------------------------------------
# summaries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SummaryRow:
    mean: float
    sd: float
    median: float
    q2_5: float
    q97_5: float
    rhat: float | None


@dataclass(frozen=True)
class PosteriorSummary:
    """Pooled posterior summaries per monitored quantity.

    Quantiles use linear interpolation of order statistics (the same
    convention everywhere so reports are reproducible across tools).
    """

    rows: dict

    def __getitem__(self, name: str) -> SummaryRow:
        return self.rows[name]

    def quantities(self) -> tuple:
        return tuple(self.rows)

    def convergence_warnings(self, threshold: float = _RHAT_THRESHOLD) -> list:
        out = []
        for name, row in self.rows.items():
            if row.rhat is not None and np.isfinite(row.rhat) and row.rhat > threshold:
                out.append(
                    f"scale reduction factor for {name} is {row.rhat:.3f} "
                    f"(> {threshold}); chains may not have converged"
                )
        return out


def summarize(chains: ChainSet) -> PosteriorSummary:
    """Pooled post burn-in summaries of every monitored quantity."""
    rows = {}
    for name, data in chains.monitored.items():
        pooled = data.reshape(-1)
        try:
            rhat = gelman_rubin(chains, name) if chains.n_chains >= 2 else None
        except DegenerateChainError:
            rhat = float("nan")
        rows[name] = SummaryRow(
            mean=float(pooled.mean()),
            sd=float(pooled.std(ddof=1)) if pooled.size > 1 else 0.0,
            median=float(np.quantile(pooled, 0.5)),
            q2_5=float(np.quantile(pooled, 0.025)),
            q97_5=float(np.quantile(pooled, 0.975)),
            rhat=rhat,
        )
    return PosteriorSummary(rows=rows)
