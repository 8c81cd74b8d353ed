"""Input validation helpers shared across modules."""

from fractions import Fraction
import numbers

import numpy as np
from sklearn.utils import check_random_state as _sk_check_random_state

__all__ = ["check_random_state", "as_fraction", "check_positive", "check_exponent", "check_1d"]


def check_random_state(seed):
    """Seeded ``numpy.random.RandomState`` (MT19937), reproducible across platforms."""
    return _sk_check_random_state(seed)


def as_fraction(value):
    """Exact rational from int, Fraction, ``"a/b"`` strings or finite floats."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, numbers.Integral):
        return Fraction(int(value))
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, numbers.Real):
        return Fraction(value).limit_denominator(10**12) if not float(value).is_integer() else Fraction(int(value))
    raise TypeError(f"cannot interpret {value!r} as a rational number")


def check_positive(value, name):
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return value


def check_exponent(p, minimum=1.0):
    p = float(p)
    if not p >= minimum:
        raise ValueError(f"exponent p must be >= {minimum}, got {p}")
    return p


def check_1d(values, name="array", dtype=float, min_length=1):
    arr = np.asarray(values, dtype=dtype)
    if arr.ndim != 1 or arr.size < min_length:
        raise ValueError(f"{name} must be one-dimensional with at least {min_length} entries")
    return arr
