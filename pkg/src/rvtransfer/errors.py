"""Exception types shared across the package."""


class RvTransferError(Exception):
    """Base class for all package errors."""


class ValidationError(RvTransferError):
    """Malformed or inconsistent input data."""


class ConfigError(RvTransferError):
    """Invalid configuration value or unknown option."""


class AlignmentError(RvTransferError):
    """Temporal alignment violated: a training row postdates its forecast origin."""


class FitError(RvTransferError):
    """Model estimation failed (rank deficiency after fallback, divergence, empty data)."""
