"""Certified interval evaluators for the builtin activation functions.

Every evaluator maps a rational box and a refinement ``depth`` to a closed
rational interval that is guaranteed to contain the image of the box.

Point enclosures use one canonical rule.  With ``r = 2**-(depth+1)`` and the
grid ``g = 2**-(depth+4)``, the enclosure of ``f(q)`` is::

    [floor_g(f(q) - r), ceil_g(f(q) + r)]

where ``floor_g``/``ceil_g`` round to the grid *exactly* (the transcendental
value is refined until it is separated from grid points).  Because the
endpoints are monotone functions of ``f(q)``:

* the enclosures are nested in ``depth`` (``r_{d+1} + g_{d+1} <= r_d``),
* box evaluation is inclusion-isotone (a sub-box never gets a wider answer),
* point widths are at most ``2r + 2g < 2**(1-depth)``.

Per-function shrinking constants (``width <= 2**(c_f - depth)`` on point
inputs inside ``[-8, 8]``): exp, sin and sigmoid have ``c_f = 1``; relu, abs
and id are exact (width 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Optional

from .errors import ExactEvalUnavailable
from .intervals import RatInterval, iv_add, iv_div, iv_neg

ZERO = Fraction(0)
ONE = Fraction(1)

SHRINK_CONSTANTS = {"exp": 1, "sin": 1, "sigmoid": 1, "relu": None, "abs": None, "id": None}


@dataclass(frozen=True)
class ActivationSpec:
    """A unary function symbol together with its certified evaluators.

    ``exact_eval`` may be partial: it raises :class:`ExactEvalUnavailable`
    where no exact rational value exists (e.g. ``exp`` away from 0).
    """

    name: str
    interval_eval: Callable[[RatInterval, int], RatInterval]
    exact_eval: Optional[Callable[[Fraction], Fraction]] = None
    value_at_zero: Optional[Fraction] = None

    def exact(self, q: Fraction) -> Fraction:
        if self.exact_eval is None:
            raise ExactEvalUnavailable(f"{self.name} has no exact evaluator")
        return self.exact_eval(Fraction(q))

    def interval(self, x: RatInterval, depth: int) -> RatInterval:
        return self.interval_eval(x, depth)


# -- fixed-point helpers -----------------------------------------------------

def _cdiv(a: int, b: int) -> int:
    return -((-a) // b)


def _scale_interval(lo: int, hi: int, num: int, den: int) -> tuple[int, int]:
    """Outward-rounded ``[lo, hi] * num / den`` on integers (den > 0)."""
    a, b = lo * num, hi * num
    if a > b:
        a, b = b, a
    return a // den, _cdiv(b, den)


# -- pi ----------------------------------------------------------------------

def _arctan_inv_bracket(m: int, terms: int) -> tuple[Fraction, Fraction]:
    """Bracket of arctan(1/m) from the alternating Taylor series.

    Consecutive partial sums enclose the limit, and the brackets for more
    terms are nested inside those for fewer.
    """
    total = Fraction(0)
    power = Fraction(1, m)
    m2 = m * m
    sums = []
    for k in range(terms + 1):
        term = power / (2 * k + 1)
        total += term if k % 2 == 0 else -term
        sums.append(total)
        power /= m2
    a, b = sums[-2], sums[-1]
    return (a, b) if a <= b else (b, a)


@lru_cache(maxsize=256)
def pi_enclosure(depth: int) -> RatInterval:
    """Nested enclosure of pi via Machin's formula 16 atan(1/5) - 4 atan(1/239).

    ``depth + 1`` terms of the atan(1/5) series are used, so the width is far
    below ``2**(1-depth)`` (about ``25**-depth``).
    """
    depth = max(depth, 0)
    a_lo, a_hi = _arctan_inv_bracket(5, depth + 1)
    b_lo, b_hi = _arctan_inv_bracket(239, depth // 2 + 1)
    return RatInterval(16 * a_lo - 4 * b_hi, 16 * a_hi - 4 * b_lo)


def _pi_for_bits(bits: int) -> RatInterval:
    # atan(1/5) series gains log2(25) > 4.6 bits per term
    return pi_enclosure(bits // 4 + 2)


# -- raw point enclosures ----------------------------------------------------

def _exp_bounds(q: Fraction, bits: int) -> tuple[Fraction, Fraction]:
    """Enclosure of exp(q) of absolute width at most ``2**-bits``.

    Halve the argument until ``|y| <= 1/2``, sum the Taylor series with the
    remainder bound ``2|y|**(n+1)/(n+1)!``, then square back up.
    """
    if q == 0:
        return ONE, ONE
    k = 0
    y = q
    while abs(y) > Fraction(1, 2):
        y /= 2
        k += 1
    # exp(q) < 2**(3q/2 + 1); relative error doubles per squaring
    magnitude = max(0, int(3 * q / 2) + 1)
    extra = 8
    while True:
        prec = bits + magnitude + 2 * k + extra
        scale = 1 << prec
        tl = th = scale
        sl = sh = scale
        n = 0
        yn, yd = y.numerator, y.denominator
        while True:
            n += 1
            tl, th = _scale_interval(tl, th, yn, yd * n)
            sl += tl
            sh += th
            bound = max(abs(tl), abs(th))
            if bound * abs(yn) * 2 <= yd * (n + 1):
                break
        rem = _cdiv(2 * max(abs(tl), abs(th)) * abs(yn), yd * (n + 1)) + 1
        lo, hi = sl - rem, sh + rem
        for _ in range(k):
            lo, hi = (lo * lo) >> prec, _cdiv(hi * hi, scale)
        lo_q, hi_q = Fraction(lo, scale), Fraction(hi, scale)
        if hi_q - lo_q <= Fraction(1, 1 << bits):
            return lo_q, hi_q
        extra += 16


def _sin_series(m_num: int, prec: int) -> tuple[int, int]:
    """Fixed-point enclosure of ``sin(m_num / 2**prec) * 2**prec``."""
    scale = 1 << prec
    tl = th = m_num
    sl = sh = m_num
    y2 = m_num * m_num
    den_base = scale * scale
    i = 0
    while True:
        i += 1
        tl, th = _scale_interval(tl, th, -y2, den_base * (2 * i) * (2 * i + 1))
        sl += tl
        sh += th
        nxt = _cdiv(max(abs(tl), abs(th)) * y2, den_base * (2 * i + 2) * (2 * i + 3)) + 1
        if nxt <= 2:
            # Lagrange remainder for sin is bounded by the next term
            return sl - nxt, sh + nxt


def _sin_bounds(q: Fraction, bits: int) -> tuple[Fraction, Fraction]:
    """Enclosure of sin(q) of absolute width at most ``2**-bits``."""
    if q == 0:
        return ZERO, ZERO
    extra = 8
    while True:
        prec = bits + extra
        if abs(q) <= 4:
            red_lo = red_hi = q
        else:
            k = round(q / Fraction(710, 113))  # 710/113 ~ 2pi; any k is sound
            kbits = abs(k).bit_length()
            pi = _pi_for_bits(prec + kbits + 4)
            if k > 0:
                red_lo, red_hi = q - 2 * k * pi.hi, q - 2 * k * pi.lo
            else:
                red_lo, red_hi = q - 2 * k * pi.lo, q - 2 * k * pi.hi
        mid = (red_lo + red_hi) / 2
        half = (red_hi - red_lo) / 2
        scale = 1 << prec
        m_num = (mid.numerator * scale) // mid.denominator
        # sin is 1-Lipschitz: cover the reduction width and the rounding of mid
        slack = half + Fraction(1, scale)
        lo, hi = _sin_series(m_num, prec)
        lo_q = Fraction(lo, scale) - slack
        hi_q = Fraction(hi, scale) + slack
        if hi_q - lo_q <= Fraction(1, 1 << bits):
            return lo_q, hi_q
        extra += 16


# -- canonical rounding ------------------------------------------------------

def _floor_grid(x: Fraction, grid_bits: int) -> Fraction:
    return Fraction((x.numerator << grid_bits) // x.denominator, 1 << grid_bits)


def _ceil_grid(x: Fraction, grid_bits: int) -> Fraction:
    return Fraction(_cdiv(x.numerator << grid_bits, x.denominator), 1 << grid_bits)


def _canonical(bounds: Callable[[Fraction, int], tuple[Fraction, Fraction]],
               q: Fraction, depth: int) -> RatInterval:
    margin = Fraction(1, 1 << (depth + 1))
    grid_bits = depth + 4
    bits = depth + 8
    while True:
        lo, hi = bounds(q, bits)
        a_lo, a_hi = _floor_grid(lo - margin, grid_bits), _floor_grid(hi - margin, grid_bits)
        b_lo, b_hi = _ceil_grid(lo + margin, grid_bits), _ceil_grid(hi + margin, grid_bits)
        if a_lo == a_hi and b_lo == b_hi:
            return RatInterval(a_lo, b_hi)
        if bits > 4096 + 8 * depth:
            # value sits (numerically) on a grid point; outward fallback stays sound
            return RatInterval(a_lo, b_hi)
        bits *= 2


@lru_cache(maxsize=65536)
def exp_point(q: Fraction, depth: int) -> RatInterval:
    return _canonical(_exp_bounds, q, depth)


@lru_cache(maxsize=65536)
def sin_point(q: Fraction, depth: int) -> RatInterval:
    return _canonical(_sin_bounds, q, depth).intersect(RatInterval(-ONE, ONE))


# -- box evaluators ----------------------------------------------------------

def ecf_exp(x: RatInterval, depth: int) -> RatInterval:
    lo = exp_point(x.lo, depth).lo
    hi = exp_point(x.hi, depth).hi
    return RatInterval(max(lo, ZERO), hi)


def ecf_sin(x: RatInterval, depth: int) -> RatInterval:
    full = RatInterval(-ONE, ONE)
    pi = pi_enclosure(depth + 4)
    if x.width >= 2 * pi.hi:
        return full
    out = sin_point(x.lo, depth).hull(sin_point(x.hi, depth))
    # critical points (k + 1/2) * pi where sin = (-1)**k
    k_min = math.floor(min(x.lo / 3, x.lo / 4)) - 1
    k_max = math.ceil(max(x.hi / 3, x.hi / 4)) + 1
    for k in range(k_min, k_max + 1):
        c = Fraction(2 * k + 1, 2)
        c_lo, c_hi = (c * pi.lo, c * pi.hi) if c > 0 else (c * pi.hi, c * pi.lo)
        if c_hi >= x.lo and c_lo <= x.hi:
            extreme = ONE if k % 2 == 0 else -ONE
            out = out.hull(RatInterval(extreme, extreme))
    return out.intersect(full)


def ecf_sigmoid(x: RatInterval, depth: int) -> RatInterval:
    one = RatInterval(ONE, ONE)
    return iv_div(one, iv_add(one, ecf_exp(iv_neg(x), depth)))


def ecf_relu(x: RatInterval, depth: int = 0) -> RatInterval:
    return RatInterval(max(ZERO, x.lo), max(ZERO, x.hi))


def ecf_abs(x: RatInterval, depth: int = 0) -> RatInterval:
    if x.lo >= 0:
        return x
    if x.hi <= 0:
        return iv_neg(x)
    return RatInterval(ZERO, max(-x.lo, x.hi))


def ecf_id(x: RatInterval, depth: int = 0) -> RatInterval:
    return x


def _only_at_zero(name: str, value: Fraction) -> Callable[[Fraction], Fraction]:
    def exact(q: Fraction) -> Fraction:
        if q == 0:
            return value
        raise ExactEvalUnavailable(f"{name}({q}) is not an exact rational")
    return exact


BUILTINS: dict[str, ActivationSpec] = {
    "exp": ActivationSpec("exp", ecf_exp, _only_at_zero("exp", ONE), ONE),
    "sin": ActivationSpec("sin", ecf_sin, _only_at_zero("sin", ZERO), ZERO),
    "sigmoid": ActivationSpec("sigmoid", ecf_sigmoid, _only_at_zero("sigmoid", Fraction(1, 2)),
                              Fraction(1, 2)),
    "relu": ActivationSpec("relu", ecf_relu, lambda q: max(ZERO, q), ZERO),
    "abs": ActivationSpec("abs", ecf_abs, abs, ZERO),
    "id": ActivationSpec("id", ecf_id, lambda q: q, ZERO),
}


def polynomial_activation(name: str, coefficients: list) -> ActivationSpec:
    """Activation ``x -> sum c_i x**i`` with exact rational coefficients.

    Interval evaluation uses the tight power hull per monomial, so it is exact
    on point inputs.
    """
    coeffs = [Fraction(c) for c in coefficients]

    def exact(q: Fraction) -> Fraction:
        return sum((c * q ** i for i, c in enumerate(coeffs)), ZERO)

    def power_hull(x: RatInterval, i: int) -> RatInterval:
        a, b = x.lo ** i, x.hi ** i
        lo, hi = min(a, b), max(a, b)
        if i % 2 == 0 and x.lo < 0 < x.hi:
            lo = ZERO
        return RatInterval(lo, hi)

    def interval(x: RatInterval, depth: int) -> RatInterval:
        acc = RatInterval(coeffs[0] if coeffs else ZERO, coeffs[0] if coeffs else ZERO)
        for i, c in enumerate(coeffs[1:], start=1):
            p = power_hull(x, i)
            term = RatInterval(min(c * p.lo, c * p.hi), max(c * p.lo, c * p.hi))
            acc = iv_add(acc, term)
        return acc

    return ActivationSpec(name, interval, exact, exact(ZERO))
