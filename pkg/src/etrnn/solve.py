"""Semi-decision of strict existential formulas by fair rational enumeration.

Enumeration of Q (``enumerate_rationals(1, i)``): index 0 is 0; index
``2k-1`` is ``+cw(k)`` and ``2k`` is ``-cw(k)``, where ``cw(k) =
fusc(k)/fusc(k+1)`` is the k-th Calkin-Wilf rational (1, 1/2, 2, 1/3, 3/2, ...).
Tuples of length ``n >= 2`` unpair the index with the Cantor pairing into a head
index and the index of the remaining ``n-1`` coordinates.

The search dovetails over cells ``(index, level)``; stage ``t`` covers the
cells with ``max(index, level) = t-1``.  Level ``l`` evaluates at depth
``min(DEPTH_BASE + DEPTH_STEP * l, max_depth)``.  Points refuted at some depth
are never retried (refutation is sound at every depth).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Union

from .errors import PossibleDivisionByZero, UnsupportedConstructError
from .evaluate import eval_term_interval
from .formula import (
    DEFAULT_SIGNATURE, Add, And, Apply, Const, Div, Eq, Exists, Formula, Lt, Mul, Neg, Not, Or,
    Signature, Term, Var, all_variables, desugar_negation, free_variables, is_strict_fragment, render,
)
from .intervals import RatInterval, format_rational, iv_add
from .normalize import NameSupply, TauPolynomial, standardize_apart, strip_exists

DEPTH_BASE = 4
DEPTH_STEP = 4


# -- enumeration ------------------------------------------------------------------


def fusc(n: int) -> int:
    """Stern's diatomic sequence."""
    a, b = 1, 0
    while n:
        if n & 1:
            b += a
        else:
            a += b
        n >>= 1
    return b


def calkin_wilf(k: int) -> Fraction:
    return Fraction(fusc(k), fusc(k + 1))


def calkin_wilf_index(q: Fraction) -> int:
    a, b = q.numerator, q.denominator
    if a <= 0:
        raise ValueError("positive rationals only")
    bits = []
    while (a, b) != (1, 1):
        if a < b:
            b -= a
            bits.append("0")
        else:
            a -= b
            bits.append("1")
    return int("1" + "".join(reversed(bits)), 2)


def _unpair(z: int) -> tuple[int, int]:
    w = (math.isqrt(8 * z + 1) - 1) // 2
    y = z - w * (w + 1) // 2
    return w - y, y


def _pair(x: int, y: int) -> int:
    return (x + y) * (x + y + 1) // 2 + y


def enumerate_rationals(n: int, index: int) -> tuple[Fraction, ...]:
    if n < 0 or index < 0:
        raise ValueError("arity and index must be non-negative")
    if n == 0:
        return ()
    if n == 1:
        if index == 0:
            return (Fraction(0),)
        k = (index + 1) // 2
        q = calkin_wilf(k)
        return (q if index % 2 else -q,)
    head, rest = _unpair(index)
    return enumerate_rationals(1, head) + enumerate_rationals(n - 1, rest)


def rational_index(qs: tuple) -> int:
    """Inverse of :func:`enumerate_rationals`."""
    qs = tuple(Fraction(q) for q in qs)
    if len(qs) == 0:
        return 0
    if len(qs) == 1:
        q = qs[0]
        if q == 0:
            return 0
        k = calkin_wilf_index(abs(q))
        return 2 * k - 1 if q > 0 else 2 * k
    return _pair(rational_index(qs[:1]), rational_index(qs[1:]))


# -- certification ---------------------------------------------------------------


def _linear(t: Term, scale: Fraction, out: dict) -> None:
    """Accumulate ``scale * t`` as a linear form over non-linear subterms (key None = constant)."""
    if isinstance(t, Const):
        out[None] = out.get(None, 0) + scale * t.value
    elif isinstance(t, Add):
        _linear(t.left, scale, out)
        _linear(t.right, scale, out)
    elif isinstance(t, Neg):
        _linear(t.arg, -scale, out)
    elif isinstance(t, Mul) and isinstance(t.left, Const):
        _linear(t.right, scale * t.left.value, out)
    elif isinstance(t, Mul) and isinstance(t.right, Const):
        _linear(t.left, scale * t.right.value, out)
    elif isinstance(t, Div) and isinstance(t.right, Const) and t.right.value != 0:
        _linear(t.left, scale / t.right.value, out)
    else:
        out[t] = out.get(t, 0) + scale


def _form_term(form: Mapping) -> Term:
    acc: Term = Const(form.get(None, 0))
    for atom, c in form.items():
        if atom is not None and c != 0:
            acc = Add(acc, Mul(Const(c), atom))
    return acc


def _atom_form(f: Lt) -> dict:
    form: dict = {}
    _linear(f.left, Fraction(1), form)
    _linear(f.right, Fraction(-1), form)
    return form


def _enclose(t: Term, box, sig, depth) -> Optional[RatInterval]:
    try:
        return eval_term_interval(t, box, sig, depth)
    except PossibleDivisionByZero:
        return None


def _certify_atom(f: Lt, box, sig, depth) -> Optional[bool]:
    enc = _enclose(Add(f.left, Neg(f.right)), box, sig, depth)
    if enc is None:
        return None
    if enc.hi < 0:
        return True
    if enc.lo >= 0:
        return False
    return None


def _conjuncts(f: Formula) -> list[Formula]:
    if isinstance(f, And):
        return _conjuncts(f.left) + _conjuncts(f.right)
    return [f]


def _certify(f: Formula, box, sig, depth) -> Optional[bool]:
    if isinstance(f, Lt):
        return _certify_atom(f, box, sig, depth)
    if isinstance(f, Exists):
        return _certify(f.body, box, sig, depth)
    if isinstance(f, Or):
        a = _certify(f.left, box, sig, depth)
        if a is True:
            return True
        b = _certify(f.right, box, sig, depth)
        if b is True:
            return True
        return False if (a is False and b is False) else None
    if isinstance(f, And):
        parts = _conjuncts(f)
        results = [_certify(p, box, sig, depth) for p in parts]
        if any(r is False for r in results):
            return False
        if all(r is True for r in results):
            return True
        # two atoms that cannot both be negative on the box
        lts = [p for p, r in zip(parts, results) if isinstance(p, Lt) and r is None]
        forms = [_atom_form(p) for p in lts]
        for i in range(len(forms)):
            for j in range(i + 1, len(forms)):
                total = dict(forms[i])
                for k, c in forms[j].items():
                    total[k] = total.get(k, 0) + c
                enc = _enclose(_form_term(total), box, sig, depth)
                if enc is not None and enc.lo >= 0:
                    return False
        return None
    raise UnsupportedConstructError(f"{type(f).__name__} is not allowed in a strict formula")


def _strict(f: Formula) -> Formula:
    g = desugar_negation(f)
    if not is_strict_fragment(g):
        raise UnsupportedConstructError("formula contains equality atoms; only strict formulas are accepted")
    return g


def certify_at_box(f: Formula, box: Mapping[str, RatInterval], depth: int,
                   sig: Signature = DEFAULT_SIGNATURE) -> Optional[bool]:
    """True/False when certified on the whole box, None when undecided."""
    return _certify(_strict(f), dict(box), sig, depth)


# -- search ---------------------------------------------------------------------


@dataclass(frozen=True)
class Budget:
    max_index: int = 20000
    max_depth: int = 40
    seconds: Optional[float] = None

    def __post_init__(self):
        if self.max_index <= 0 or self.max_depth <= 0 or (self.seconds is not None and self.seconds <= 0):
            raise ValueError("budget entries must be positive")

    @property
    def levels(self) -> int:
        return max(0, math.ceil((self.max_depth - DEPTH_BASE) / DEPTH_STEP)) + 1

    def depth(self, level: int) -> int:
        return min(DEPTH_BASE + DEPTH_STEP * level, self.max_depth)


@dataclass
class WitnessBox:
    box: dict[str, RatInterval]
    depth: int
    formula: Formula
    point: dict[str, Fraction]
    index: int

    @property
    def center(self) -> dict[str, Fraction]:
        return {k: v.mid for k, v in self.box.items()}

    def to_json(self) -> dict:
        return {k: [format_rational(v.lo), format_rational(v.hi)] for k, v in self.box.items()}


@dataclass
class Sat:
    witness: WitnessBox


@dataclass
class FoundPoint:
    point: dict[str, Fraction]
    depth: int
    enclosure: RatInterval


@dataclass
class Unknown:
    reason: str
    cells: int = 0


def _cells(budget: Budget):
    """Cells (index, level) in dovetail order."""
    levels = budget.levels
    t = 0
    while True:
        t += 1
        top = t - 1
        if top >= budget.max_index and top >= levels:
            return
        if top < budget.max_index:
            for level in range(min(top + 1, levels)):
                yield top, level
        if top < levels:
            for index in range(min(top, budget.max_index)):
                yield index, top


def _point_box(names, point) -> dict[str, RatInterval]:
    return {v: RatInterval.point(q) for v, q in zip(names, point)}


def _expand(f: Formula, names, point, depth: int, sig, max_depth: int, halvings: int = 64):
    for d in range(depth, max_depth + 1):
        for k in range(halvings):
            r = Fraction(1, 2 ** k)
            box = {v: RatInterval(q - r, q + r) for v, q in zip(names, point)}
            if _certify(f, box, sig, d) is True:
                return box, d
    return None


def solve(f: Formula, budget: Budget = Budget(), sig: Signature = DEFAULT_SIGNATURE) -> Union[Sat, Unknown]:
    g = _strict(f)
    g = standardize_apart(g, NameSupply(all_variables(g)))
    matrix, bound = strip_exists(g)
    names = free_variables(g) + [v for v in bound if v not in free_variables(g)]
    start = time.monotonic()
    refuted: set[int] = set()
    cells = 0
    for index, level in _cells(budget):
        if index in refuted:
            continue
        if budget.seconds is not None and time.monotonic() - start > budget.seconds:
            return Unknown("time budget exhausted", cells)
        cells += 1
        point = enumerate_rationals(len(names), index)
        depth = budget.depth(level)
        verdict = _certify(matrix, _point_box(names, point), sig, depth)
        if verdict is False:
            refuted.add(index)
        elif verdict is True:
            found = _expand(matrix, names, point, depth, sig, max(depth, budget.max_depth))
            if found is not None:
                box, d = found
                return Sat(WitnessBox(box, d, matrix, dict(zip(names, point)), index))
    return Unknown("index/depth budget exhausted", cells)


def approx_feasible(P: Union[TauPolynomial, Term], d, eps, budget: Budget = Budget(),
                    sig: Signature = DEFAULT_SIGNATURE) -> Union[FoundPoint, Unknown]:
    """Search ``[-d, d]^n`` for a rational point with certified ``|P| < eps``."""
    d, eps = Fraction(d), Fraction(eps)
    if d <= 0 or eps <= 0:
        raise ValueError("d and eps must be positive")
    if isinstance(P, TauPolynomial):
        term, names = P.to_term(), P.variables
    else:
        from .formula import term_variables
        term, names = P, list(term_variables(P))
    start = time.monotonic()
    skip: set[int] = set()
    cells = 0
    for index, level in _cells(budget):
        if index in skip:
            continue
        if budget.seconds is not None and time.monotonic() - start > budget.seconds:
            return Unknown("time budget exhausted", cells)
        point = enumerate_rationals(len(names), index)
        if any(abs(q) > d for q in point):
            skip.add(index)
            continue
        cells += 1
        depth = budget.depth(level)
        enc = _enclose(term, _point_box(names, point), sig, depth)
        if enc is None:
            continue
        if -eps < enc.lo and enc.hi < eps:
            return FoundPoint(dict(zip(names, point)), depth, enc)
        if enc.lo >= eps or enc.hi <= -eps:
            skip.add(index)
    return Unknown("index/depth budget exhausted", cells)
