"""Exact rational values with a log2-domain fallback.

Probabilities and losses are kept as ``Fraction`` while numerator and
denominator stay under ``BIT_LIMIT`` bits. Past that, a value is stored as a
``(sign, log2|value|)`` pair, rounded in a caller-chosen direction so that
upper bounds never shrink and lower bounds never grow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

BIT_LIMIT = 4096

Number = Union[int, Fraction, "ExactValue"]

_ROUNDINGS = ("nearest", "up", "down")


def _log2_fraction(x: Fraction) -> float:
    # math.log2 accepts arbitrarily large ints
    return math.log2(x.numerator) - math.log2(x.denominator)


def _nudge(value: float, rounding: str) -> float:
    if rounding == "up":
        return math.nextafter(math.nextafter(value, math.inf), math.inf)
    if rounding == "down":
        return math.nextafter(math.nextafter(value, -math.inf), -math.inf)
    return value


@dataclass(frozen=True)
class ExactValue:
    """A real number that is exact when it can afford to be.

    Exactly one representation is live: ``exact`` (a Fraction) or the
    ``(sign, log2)`` pair. ``sign`` is -1, 0 or 1; zero is always exact.
    """

    exact: Fraction | None = None
    sign: int = 0
    log2: float = -math.inf

    # construction -------------------------------------------------------

    @classmethod
    def of(cls, value: Number, rounding: str = "nearest", bit_limit: int = BIT_LIMIT) -> ExactValue:
        if isinstance(value, ExactValue):
            return value
        frac = Fraction(value)
        if max(frac.numerator.bit_length(), frac.denominator.bit_length()) <= bit_limit:
            return cls(exact=frac)
        return cls.from_log2(1 if frac > 0 else -1, _log2_fraction(abs(frac)), rounding)

    @classmethod
    def from_log2(cls, sign: int, log2: float, rounding: str = "nearest") -> ExactValue:
        if rounding not in _ROUNDINGS:
            raise ValueError(f"unknown rounding {rounding!r}")
        if sign == 0 or log2 == -math.inf:
            return cls(exact=Fraction(0))
        # magnitude rounding: an upper bound on a negative number rounds its magnitude down
        mag_rounding = rounding if sign > 0 else {"up": "down", "down": "up"}.get(rounding, rounding)
        return cls(exact=None, sign=1 if sign > 0 else -1, log2=_nudge(log2, mag_rounding))

    # inspection ---------------------------------------------------------

    @property
    def is_exact(self) -> bool:
        return self.exact is not None

    @property
    def mode(self) -> str:
        return "exact" if self.is_exact else "log2"

    def signum(self) -> int:
        if self.exact is not None:
            return (self.exact > 0) - (self.exact < 0)
        return self.sign

    def log2_magnitude(self) -> float:
        if self.exact is not None:
            return -math.inf if self.exact == 0 else _log2_fraction(abs(self.exact))
        return self.log2

    def to_float(self) -> float:
        if self.exact is not None:
            try:
                return float(self.exact)
            except OverflowError:
                return math.copysign(math.inf, self.exact)
        try:
            return self.sign * 2.0 ** self.log2
        except OverflowError:
            return self.sign * math.inf

    def to_fraction(self) -> Fraction:
        if self.exact is None:
            raise ValueError("value is held in log2 mode and has no exact form")
        return self.exact

    def __float__(self) -> float:
        return self.to_float()

    # arithmetic ---------------------------------------------------------

    def _binary(self, other: Number, op, rounding: str) -> ExactValue:
        other = ExactValue.of(other)
        if self.exact is not None and other.exact is not None:
            return ExactValue.of(op(self.exact, other.exact), rounding)
        return None  # caller handles the log-domain path

    def add(self, other: Number, rounding: str = "nearest") -> ExactValue:
        other = ExactValue.of(other)
        exact = self._binary(other, lambda a, b: a + b, rounding)
        if exact is not None:
            return exact
        signs = (self.signum(), other.signum())
        if signs[0] == 0:
            return other
        if signs[1] == 0:
            return self
        a, b = self.log2_magnitude(), other.log2_magnitude()
        hi, lo = max(a, b), min(a, b)
        if signs[0] == signs[1]:
            return ExactValue.from_log2(signs[0], hi + math.log2(1.0 + 2.0 ** (lo - hi)), rounding)
        big_sign = signs[0] if a >= b else signs[1]
        if hi == lo:
            return ExactValue.of(0)
        return ExactValue.from_log2(big_sign, hi + math.log2(1.0 - 2.0 ** (lo - hi)), rounding)

    def mul(self, other: Number, rounding: str = "nearest") -> ExactValue:
        other = ExactValue.of(other)
        exact = self._binary(other, lambda a, b: a * b, rounding)
        if exact is not None:
            return exact
        sign = self.signum() * other.signum()
        return ExactValue.from_log2(sign, self.log2_magnitude() + other.log2_magnitude(), rounding)

    def div(self, other: Number, rounding: str = "nearest") -> ExactValue:
        other = ExactValue.of(other)
        if other.signum() == 0:
            raise ZeroDivisionError("division by an exact zero")
        exact = self._binary(other, lambda a, b: a / b, rounding)
        if exact is not None:
            return exact
        sign = self.signum() * other.signum()
        return ExactValue.from_log2(sign, self.log2_magnitude() - other.log2_magnitude(), rounding)

    def pow(self, n: int, rounding: str = "nearest") -> ExactValue:
        if n < 0:
            return ExactValue.of(1).div(self.pow(-n, rounding), rounding)
        if self.exact is not None:
            bits = max(self.exact.numerator.bit_length(), self.exact.denominator.bit_length())
            if bits * n <= 2 * BIT_LIMIT:
                return ExactValue.of(self.exact ** n, rounding)
        sign = self.signum() ** n if n else 1
        if self.signum() == 0:
            return ExactValue.of(0 if n else 1)
        return ExactValue.from_log2(sign, self.log2_magnitude() * n, rounding)

    def root(self, n: int, rounding: str = "nearest") -> ExactValue:
        """Nonnegative n-th root, computed in the log domain unless n == 1."""
        if n < 1:
            raise ValueError("root degree must be positive")
        if self.signum() < 0:
            raise ValueError("root of a negative value")
        if n == 1 or self.signum() == 0:
            return self
        if self.exact is not None and self.exact == 1:
            return self
        return ExactValue.from_log2(1, self.log2_magnitude() / n, rounding)

    def min(self, other: Number) -> ExactValue:
        other = ExactValue.of(other)
        return self if self <= other else other

    def max(self, other: Number) -> ExactValue:
        other = ExactValue.of(other)
        return self if self >= other else other

    def __add__(self, other: Number) -> ExactValue:
        return self.add(other)

    __radd__ = __add__

    def __sub__(self, other: Number) -> ExactValue:
        return self.add(ExactValue.of(other).neg())

    def __rsub__(self, other: Number) -> ExactValue:
        return ExactValue.of(other).add(self.neg())

    def __mul__(self, other: Number) -> ExactValue:
        return self.mul(other)

    __rmul__ = __mul__

    def __truediv__(self, other: Number) -> ExactValue:
        return self.div(other)

    def __rtruediv__(self, other: Number) -> ExactValue:
        return ExactValue.of(other).div(self)

    def __pow__(self, n: int) -> ExactValue:
        return self.pow(n)

    def neg(self) -> ExactValue:
        if self.exact is not None:
            return ExactValue(exact=-self.exact)
        return ExactValue(exact=None, sign=-self.sign, log2=self.log2)

    __neg__ = neg

    # ordering -----------------------------------------------------------

    def _cmp(self, other: Number) -> int:
        other = ExactValue.of(other)
        if self.exact is not None and other.exact is not None:
            return (self.exact > other.exact) - (self.exact < other.exact)
        sa, sb = self.signum(), other.signum()
        if sa != sb:
            return (sa > sb) - (sa < sb)
        if sa == 0:
            return 0
        la, lb = self.log2_magnitude(), other.log2_magnitude()
        mag = (la > lb) - (la < lb)
        return mag * sa

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, (int, Fraction, ExactValue)):
            return NotImplemented
        return self._cmp(other) == 0

    def __hash__(self) -> int:
        if self.exact is not None:
            return hash(self.exact)
        return hash((self.sign, self.log2))

    def __lt__(self, other: Number) -> bool:
        return self._cmp(other) < 0

    def __le__(self, other: Number) -> bool:
        return self._cmp(other) <= 0

    def __gt__(self, other: Number) -> bool:
        return self._cmp(other) > 0

    def __ge__(self, other: Number) -> bool:
        return self._cmp(other) >= 0

    # display ------------------------------------------------------------

    def render(self) -> str:
        """Exact fraction when held exactly, else an approximate decimal plus log2."""
        if self.exact is not None:
            return str(self.exact)
        value = self.to_float()
        if math.isfinite(value) and value != 0:
            return f"≈{value:.6g} (log2 {self.log2:.6f})"
        sign = "-" if self.sign < 0 else ""
        return f"≈{sign}2^{self.log2:.6f}"

    def __repr__(self) -> str:
        return f"ExactValue({self.render()})"

    @classmethod
    def from_json(cls, data: dict) -> ExactValue:
        if data["mode"] == "exact":
            return cls(exact=Fraction(data["value"]))
        return cls(exact=None, sign=int(data["sign"]), log2=float(data["log2"]))

    def to_json(self) -> dict:
        if self.exact is not None:
            return {"mode": "exact", "value": str(self.exact), "float": self.to_float()}
        return {"mode": "log2", "sign": self.sign, "log2": self.log2, "float": self.to_float()}
