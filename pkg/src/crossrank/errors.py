"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
NumericError -> 3.
"""


class CrossrankError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(CrossrankError):
    """Invalid or inconsistent configuration."""


class DataError(CrossrankError):
    """Malformed input files or inconsistent data (missing ids, bad formats)."""


class NumericError(CrossrankError):
    """Numerical failure, e.g. divergence during training."""
