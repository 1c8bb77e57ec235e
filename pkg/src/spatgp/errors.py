"""Exception types shared across the package."""


class SpatGPError(Exception):
    """Base class for all package-specific errors."""


class NotPositiveDefinite(SpatGPError):
    """A matrix required to be SPD failed factorization (after one jitter retry)."""


class ZeroDiagonal(SpatGPError):
    """A triangular solve hit a (near-)zero diagonal entry."""


class InvalidParams(SpatGPError):
    """Covariance parameters violate their invariants."""


class DuplicateLocation(SpatGPError):
    """A point set that must consist of distinct locations contains duplicates."""


class TargetInReference(SpatGPError):
    """A latent-model prediction target coincides with a reference point at zero nugget."""


class UnsupportedFamily(SpatGPError):
    """Requested model family (e.g. a non-Gaussian response link) is not supported."""


class LengthMismatch(SpatGPError):
    """Paired vectors passed to a metric have different lengths."""


class InsufficientDraws(SpatGPError):
    """Too few posterior draws to summarize."""


class ConfigError(SpatGPError):
    """A run configuration file is malformed or contains unknown keys."""


class ChainError(SpatGPError):
    """A numerical failure inside an MCMC iteration; message carries the iteration index."""
