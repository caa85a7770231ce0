"""
One-sided float arithmetic. Every helper returns a machine number that is
never on the unsafe side of the exact result: *_down never exceeds it,
*_up is never below it. Inputs are non-negative probabilities.
"""
from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

UNIT_ROUNDOFF = 2.0 ** -53
_SPLITTER = 134217729.0  # 2**27 + 1
_TINY = 2.0 ** -900  # below this the product error term may underflow


def _split(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c = _SPLITTER * x
    high = c - (c - x)
    return high, x - high


def two_product(a, b) -> tuple[np.ndarray, np.ndarray]:
    """prod, err with prod + err == a * b exactly (barring underflow)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    prod = a * b
    a_hi, a_lo = _split(a)
    b_hi, b_lo = _split(b)
    err = a_lo * b_lo - (((prod - a_hi * b_hi) - a_lo * b_hi) - a_hi * b_lo)
    return prod, err


def mul_down(a, b) -> np.ndarray:
    prod, err = two_product(a, b)
    unsure = (prod < _TINY) & (prod > 0.0)
    down = (err < 0.0) | unsure
    return np.maximum(np.where(down, np.nextafter(prod, -np.inf), prod), 0.0)


def sum_down(values: np.ndarray, index: np.ndarray | None = None, size: int | None = None) -> np.ndarray:
    """
    Bucketed sum with a lower-bound guarantee. Sequential summation of k
    non-zero non-negative terms has relative error below (k-1)u, so each
    bucket with k > 1 is scaled by 1 - 2ku and rounded down.
    """
    values = np.asarray(values, dtype=np.float64)
    if index is None:
        index = np.zeros(len(values), dtype=np.intp)
        size = 1
    sums = np.bincount(index, weights=values, minlength=size)
    terms = np.bincount(index, weights=(values > 0.0).astype(np.float64), minlength=size)
    factor = np.where(terms <= 1.0, 1.0, 1.0 - 2.0 * terms * UNIT_ROUNDOFF)
    return mul_down(sums, factor)


def fraction_down(q: Fraction) -> float:
    """Largest reachable float not above q (clamped at zero)."""
    f = float(q)
    if Fraction(f) > q:
        f = math.nextafter(f, -math.inf)
    return max(f, 0.0)


def fraction_up(q: Fraction) -> float:
    f = float(q)
    if Fraction(f) < q:
        f = math.nextafter(f, math.inf)
    return f


def exact_sum(values) -> Fraction:
    return sum((Fraction(float(v)) for v in values), Fraction(0))


def sqrt_up(x: float) -> float:
    """A float s with s*s >= x. math.sqrt is correctly rounded, so at most one step up is needed."""
    s = math.sqrt(x)
    if Fraction(s) ** 2 < Fraction(x):
        s = math.nextafter(s, math.inf)
    return s


def as_ratio(q: Fraction | float) -> str:
    """Decimal-free 'num/den' text of an exact value."""
    q = Fraction(q)
    return f"{q.numerator}/{q.denominator}"


def parse_ratio(text: str) -> Fraction:
    num, _, den = text.partition("/")
    return Fraction(int(num), int(den or 1))
