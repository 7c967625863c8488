"""Exception types shared across the package."""


class SizeBiasedError(Exception):
    """Base class for all package errors."""


class ValidationError(SizeBiasedError):
    """Invalid data, configuration or file content. CLI exit code 2."""


class SamplerError(SizeBiasedError):
    """An MCMC kernel could not produce a valid state."""


class InitializationError(SizeBiasedError):
    """Chain initialization failed to reach a finite log-posterior."""


class DegenerateChainError(SizeBiasedError):
    """A diagnostic is undefined, e.g. zero within-chain variance."""
