"""Exception types shared across the package.

Two failure families are kept apart so the command line tool can map them
to distinct exit codes: bad input or configuration (exit 1) versus numeric
breakdown during sampling or aggregation (exit 2).
"""

from __future__ import annotations


class BayesmrError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(BayesmrError):
    """Invalid configuration, arguments, or input data."""


class NumericalError(BayesmrError):
    """A computation produced non-finite or otherwise unusable values."""
