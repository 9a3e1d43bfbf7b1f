"""Input validation helpers.

Small check_* functions in the spirit of sklearn's validation utilities,
raising :class:`~structattn.errors.ConfigurationError` with a parameter
name so CLI and estimator surfaces report consistent messages.
"""

import numbers

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "check_positive_int",
    "check_odd_filter_size",
    "check_positive_float",
    "check_nonnegative_float",
    "check_choice",
    "as_float_matrix",
]


def check_positive_int(value, name):
    if not isinstance(value, numbers.Integral) or isinstance(value, bool) or value < 1:
        raise ConfigurationError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_odd_filter_size(f, name="f"):
    f = check_positive_int(f, name)
    if f % 2 == 0:
        raise ConfigurationError(f"{name} must be odd, got {f}")
    return f


def check_positive_float(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise ConfigurationError(f"{name} must be a finite positive number, got {value!r}")
    return float(value)


def check_nonnegative_float(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value < 0:
        raise ConfigurationError(f"{name} must be a finite non-negative number, got {value!r}")
    return float(value)


def check_choice(value, choices, name):
    if value not in choices:
        raise ConfigurationError(f"{name} must be one of {sorted(choices)}, got {value!r}")
    return value


def as_float_matrix(X, name="X"):
    """Coerce to a 2D float64 array, rejecting non-finite entries."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ConfigurationError(f"{name} must be 2-dimensional, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ConfigurationError(f"{name} contains non-finite entries")
    return X
