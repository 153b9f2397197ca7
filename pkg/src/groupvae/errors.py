"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
NumericError -> 3.
"""


class ConfigError(ValueError):
    """Invalid or conflicting configuration (bad key, bad value, bad combination)."""


class DataError(ValueError):
    """Unusable input data (missing file, malformed cell, degenerate class)."""


class NumericError(RuntimeError):
    """Non-finite values or failed factorizations during computation."""
