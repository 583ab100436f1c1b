"""Exact logarithms of positive rationals.

A :class:`LogValue` stands for ``log(mantissa)``. Sums become products and
integer multiples become powers, so every sign test and comparison is an
exact rational comparison against 1.
"""

from __future__ import annotations

import contextlib
import contextvars
import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import BitBudgetExceeded

_bit_budget: contextvars.ContextVar[int | None] = contextvars.ContextVar(
    "plrenorm_bit_budget", default=None)


@contextlib.contextmanager
def bit_budget(bits):
    """Raise :class:`BitBudgetExceeded` for mantissas wider than ``bits``."""
    token = _bit_budget.set(bits)
    try:
        yield
    finally:
        _bit_budget.reset(token)


def _checked(m: Fraction) -> Fraction:
    limit = _bit_budget.get()
    if limit is not None:
        width = m.numerator.bit_length() + m.denominator.bit_length()
        if width > limit:
            raise BitBudgetExceeded(f"mantissa needs {width} bits (budget {limit})")
    return m


@dataclass(frozen=True, order=False)
class LogValue:
    mantissa: Fraction

    def __post_init__(self):
        m = Fraction(self.mantissa)
        if m <= 0:
            raise ValueError(f"mantissa must be positive, got {m}")
        object.__setattr__(self, "mantissa", _checked(m))

    @classmethod
    def zero(cls) -> LogValue:
        return cls(Fraction(1))

    @classmethod
    def of_abs(cls, x) -> LogValue:
        """``log|x|`` for a nonzero rational ``x``."""
        return cls(abs(Fraction(x)))

    def __add__(self, other: LogValue) -> LogValue:
        return LogValue(self.mantissa * other.mantissa)

    def __sub__(self, other: LogValue) -> LogValue:
        return LogValue(self.mantissa / other.mantissa)

    def __neg__(self) -> LogValue:
        return LogValue(1 / self.mantissa)

    def __mul__(self, k: int) -> LogValue:
        if not isinstance(k, int):
            return NotImplemented
        return LogValue(self.mantissa ** k)

    __rmul__ = __mul__

    def __abs__(self) -> LogValue:
        m = self.mantissa
        return self if m >= 1 else LogValue(1 / m)

    def sign(self) -> int:
        return (self.mantissa > 1) - (self.mantissa < 1)

    def is_zero(self) -> bool:
        return self.mantissa == 1

    def __lt__(self, other: LogValue) -> bool:
        return self.mantissa < other.mantissa

    def __le__(self, other: LogValue) -> bool:
        return self.mantissa <= other.mantissa

    def __gt__(self, other: LogValue) -> bool:
        return self.mantissa > other.mantissa

    def __ge__(self, other: LogValue) -> bool:
        return self.mantissa >= other.mantissa

    def approx(self) -> float:
        """Decimal value of the logarithm; for display only."""
        m = self.mantissa
        return math.log(m.numerator) - math.log(m.denominator)

    def __str__(self):
        return f"log({self.mantissa})"


def log_sum(values) -> LogValue:
    m = Fraction(1)
    for v in values:
        m *= v.mantissa
    return LogValue(m)
