"""Exact rationals and closed rational intervals.

Rationals are :class:`fractions.Fraction` values throughout; this module only
adds the canonical ``p/q`` text form and the interval type with its exact
hull arithmetic.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

from .errors import ParseError, PossibleDivisionByZero

RationalLike = Union[Fraction, int, str]

_RATIONAL_RE = re.compile(r"^\s*([+-]?\d+)(?:\s*/\s*(\d+))?\s*$")
_DECIMAL_RE = re.compile(r"^\s*[+-]?(\d+\.\d*|\.\d+)\s*$")


def to_rational(value: RationalLike) -> Fraction:
    """Coerce ints, Fractions and ``p/q`` / decimal strings; floats are refused."""
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        m = _RATIONAL_RE.match(value)
        if m:
            den = int(m.group(2)) if m.group(2) else 1
            if den == 0:
                raise ParseError(f"zero denominator in {value!r}")
            return Fraction(int(m.group(1)), den)
        if _DECIMAL_RE.match(value):
            return Fraction(value.strip())
        raise ParseError(f"not a rational: {value!r}")
    raise TypeError(f"cannot interpret {type(value).__name__} as an exact rational")


def format_rational(q: Fraction) -> str:
    q = Fraction(q)
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


@dataclass(frozen=True)
class RatInterval:
    lo: Fraction
    hi: Fraction

    def __post_init__(self):
        object.__setattr__(self, "lo", to_rational(self.lo))
        object.__setattr__(self, "hi", to_rational(self.hi))
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, q: RationalLike) -> "RatInterval":
        q = to_rational(q)
        return cls(q, q)

    @property
    def width(self) -> Fraction:
        return self.hi - self.lo

    @property
    def mid(self) -> Fraction:
        return (self.lo + self.hi) / 2

    @property
    def is_point(self) -> bool:
        return self.lo == self.hi

    def __contains__(self, q) -> bool:
        if isinstance(q, RatInterval):
            return self.lo <= q.lo and q.hi <= self.hi
        return self.lo <= q <= self.hi

    def subset_of(self, other: "RatInterval") -> bool:
        return other.lo <= self.lo and self.hi <= other.hi

    def intersect(self, other: "RatInterval") -> "RatInterval":
        return RatInterval(max(self.lo, other.lo), min(self.hi, other.hi))

    def hull(self, other: "RatInterval") -> "RatInterval":
        return RatInterval(min(self.lo, other.lo), max(self.hi, other.hi))

    def __str__(self) -> str:
        return f"[{format_rational(self.lo)}, {format_rational(self.hi)}]"

    def to_json(self) -> list[str]:
        return [format_rational(self.lo), format_rational(self.hi)]

    @classmethod
    def from_json(cls, pair) -> "RatInterval":
        lo, hi = pair
        return cls(to_rational(lo), to_rational(hi))


def parse_interval(text: str) -> RatInterval:
    body = text.strip()
    if not (body.startswith("[") and body.endswith("]")):
        raise ParseError(f"not an interval: {text!r}")
    parts = body[1:-1].split(",")
    if len(parts) != 2:
        raise ParseError(f"not an interval: {text!r}")
    return RatInterval(to_rational(parts[0]), to_rational(parts[1]))


def iv_add(a: RatInterval, b: RatInterval) -> RatInterval:
    return RatInterval(a.lo + b.lo, a.hi + b.hi)


def iv_neg(a: RatInterval) -> RatInterval:
    return RatInterval(-a.hi, -a.lo)


def iv_sub(a: RatInterval, b: RatInterval) -> RatInterval:
    return RatInterval(a.lo - b.hi, a.hi - b.lo)


def iv_mul(a: RatInterval, b: RatInterval) -> RatInterval:
    products = (a.lo * b.lo, a.lo * b.hi, a.hi * b.lo, a.hi * b.hi)
    return RatInterval(min(products), max(products))


def iv_sqr(a: RatInterval) -> RatInterval:
    """Tight square: unlike ``iv_mul(a, a)`` it knows both factors are equal."""
    lo2, hi2 = a.lo * a.lo, a.hi * a.hi
    if a.lo >= 0:
        return RatInterval(lo2, hi2)
    if a.hi <= 0:
        return RatInterval(hi2, lo2)
    return RatInterval(Fraction(0), max(lo2, hi2))


def iv_div(a: RatInterval, b: RatInterval) -> RatInterval:
    if b.lo <= 0 <= b.hi:
        raise PossibleDivisionByZero(f"divisor {b} may contain 0")
    return iv_mul(a, RatInterval(1 / b.hi, 1 / b.lo))


def iv_scale(a: RatInterval, c: Fraction) -> RatInterval:
    return iv_mul(a, RatInterval(c, c))
