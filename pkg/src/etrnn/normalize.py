"""Rewriting existential formulas into INV-FLAT constraint systems and 4-FEAS polynomials.

The pipeline is::

    desugar_negation -> standardize_apart -> flatten_functions
        -> eliminate_minus_div -> to_equational -> to_invflat

and every stage appends to a :class:`~etrnn.schedule.Schedule` so a witness
of the input can be replayed into a witness of the output.

``to_equational`` targets the four intermediate forms ``x = 1``,
``x + y = z``, ``x * y = 1`` and ``x = f(y)``.  General products are not among
them, so they are built from inversions (all witnesses stay rational):

* ``dsq(p) = p^2`` for ``p`` not in {0, -1}: ``1/p - 1/(p+1) = 1/(p^2+p)``;
  6 intermediate constraints.
* ``square(t)`` for any ``t``: ``((t+m)^2 + (t-m)^2)/2 - m^2`` with an
  auxiliary ``m = |t| + 2`` keeping every ``dsq`` argument away from 0 and -1;
  23 constraints.
* ``prod(x, y) = (square(x+y) - square(x-y))/4``; 51 constraints.
* ``a < b``: slack ``s = b - a`` written as a sum of four squares and
  inverted (``s * u = 1``); a positive rational is always a sum of four
  rational squares, so rational witnesses suffice.  About 100 constraints.
* disjunctions: each side collapses to one residual (sum of squares of its
  residuals when it has several) and the residuals are multiplied.
* rational constants ``p/q``: binary doubling chains, ``O(log p + log q)``.

``to_invflat`` turns every intermediate constraint into at most three INV-FLAT
constraints.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Union

from .errors import EtrnnError, ExactEvalUnavailable, ParseError, PossibleDivisionByZero
from .evaluate import eval_term_interval
from .formula import (
    DEFAULT_SIGNATURE, Add, And, Apply, Const, Div, Eq, Exists, Formula, Lt, Mul, Neg, Not, Or,
    Signature, Term, Var, all_variables, conj, desugar_negation, exists_many, free_variables,
    render, render_term,
)
from .intervals import RatInterval, format_rational, iv_add
from .schedule import Define, ExtendedAssignment, FourSquares, ReciprocalOrZero, Schedule

# -- INV-FLAT constraints ----------------------------------------------------


@dataclass(frozen=True)
class UnitConstraint:
    x: str

    @property
    def variables(self) -> tuple[str, ...]:
        return (self.x,)


@dataclass(frozen=True)
class AddConstraint:
    x: str
    y: str
    z: str

    @property
    def variables(self) -> tuple[str, ...]:
        return (self.x, self.y, self.z)


@dataclass(frozen=True)
class InvConstraint:
    x: str
    y: str

    @property
    def variables(self) -> tuple[str, ...]:
        return (self.x, self.y)


@dataclass(frozen=True)
class FunConstraint:
    x: str
    fname: str
    y: str

    @property
    def variables(self) -> tuple[str, ...]:
        return (self.x, self.y)


InvFlatConstraint = Union[UnitConstraint, AddConstraint, InvConstraint, FunConstraint]


def render_constraint(c: InvFlatConstraint) -> str:
    if isinstance(c, UnitConstraint):
        return f"unit {c.x}"
    if isinstance(c, AddConstraint):
        return f"add {c.x} {c.y} {c.z}"
    if isinstance(c, InvConstraint):
        return f"inv {c.x} {c.y}"
    return f"fun {c.x} {c.fname} {c.y}"


def constraint_meaning(c: InvFlatConstraint) -> str:
    if isinstance(c, UnitConstraint):
        return f"{c.x} = 1"
    if isinstance(c, AddConstraint):
        return f"{c.x} + {c.y} + {c.z} = 0"
    if isinstance(c, InvConstraint):
        return f"{c.x} * {c.y} + 1 = 0"
    return f"{c.x} + {c.fname}({c.y}) = 0"


@dataclass
class ConstraintSystem:
    constraints: list[InvFlatConstraint]
    provenance: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.provenance:
            self.provenance = [""] * len(self.constraints)
        if len(self.provenance) != len(self.constraints):
            raise ValueError("provenance must have one entry per constraint")

    @property
    def variables(self) -> list[str]:
        seen: dict[str, None] = {}
        for c in self.constraints:
            for v in c.variables:
                seen.setdefault(v, None)
        return list(seen)

    def __len__(self) -> int:
        return len(self.constraints)

    def to_text(self) -> str:
        return "".join(render_constraint(c) + "\n" for c in self.constraints)

    @classmethod
    def from_text(cls, text: str, sig: Signature = DEFAULT_SIGNATURE) -> "ConstraintSystem":
        constraints: list[InvFlatConstraint] = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            kind, args = parts[0], parts[1:]
            arity = {"unit": 1, "add": 3, "inv": 2, "fun": 3}.get(kind)
            if arity is None:
                raise ParseError(f"unknown constraint kind {kind!r}", lineno, 1)
            if len(args) != arity:
                raise ParseError(f"{kind} takes {arity} arguments", lineno, 1)
            if kind == "unit":
                constraints.append(UnitConstraint(*args))
            elif kind == "add":
                constraints.append(AddConstraint(*args))
            elif kind == "inv":
                constraints.append(InvConstraint(*args))
            else:
                sig[args[1]]
                constraints.append(FunConstraint(*args))
        return cls(constraints)


def check_constraint(c: InvFlatConstraint, ext: Union[ExtendedAssignment, Mapping[str, Fraction]],
                     sig: Signature = DEFAULT_SIGNATURE, depth: int = 30) -> Optional[bool]:
    """True/False when decided exactly or certified by intervals, else None."""
    if not isinstance(ext, ExtendedAssignment):
        ext = ExtendedAssignment(dict(ext))
    vals, ivs = ext.values, ext.intervals

    def iv(name: str) -> Optional[RatInterval]:
        if name in vals:
            return RatInterval.point(vals[name])
        return ivs.get(name)

    if all(v in vals for v in c.variables):
        if isinstance(c, UnitConstraint):
            return vals[c.x] == 1
        if isinstance(c, AddConstraint):
            return vals[c.x] + vals[c.y] + vals[c.z] == 0
        if isinstance(c, InvConstraint):
            return vals[c.x] * vals[c.y] + 1 == 0
        try:
            return vals[c.x] + sig[c.fname].exact(vals[c.y]) == 0
        except ExactEvalUnavailable:
            pass
    boxes = [iv(v) for v in c.variables]
    if any(b is None for b in boxes):
        return None
    env = dict(zip(c.variables, boxes))
    if isinstance(c, UnitConstraint):
        t: Term = Add(Var(c.x), Const(-1))
    elif isinstance(c, AddConstraint):
        t = Add(Add(Var(c.x), Var(c.y)), Var(c.z))
    elif isinstance(c, InvConstraint):
        t = Add(Mul(Var(c.x), Var(c.y)), Const(1))
    else:
        t = Add(Var(c.x), Apply(c.fname, Var(c.y)))
    enc = eval_term_interval(t, env, sig, depth)
    if enc.lo > 0 or enc.hi < 0:
        return False
    return None


def check_system(system: ConstraintSystem, ext, sig: Signature = DEFAULT_SIGNATURE,
                 depth: int = 30) -> list[Optional[bool]]:
    return [check_constraint(c, ext, sig, depth) for c in system.constraints]


# -- fresh names -------------------------------------------------------------


class NameSupply:
    """Deterministic fresh names ``_<prefix><n>`` that avoid every reserved name."""

    def __init__(self, reserved: Iterable[str] = ()):
        self.used = set(reserved)
        self.counter = 0

    def fresh(self, prefix: str = "t") -> str:
        while True:
            self.counter += 1
            name = f"_{prefix}{self.counter}"
            if name not in self.used:
                self.used.add(name)
                return name


# -- formula-level rewrites --------------------------------------------------


def _rename_term(t: Term, mapping: Mapping[str, str]) -> Term:
    if isinstance(t, Var):
        return Var(mapping.get(t.name, t.name))
    if isinstance(t, Const):
        return t
    if isinstance(t, (Neg, Apply)):
        arg = _rename_term(t.arg, mapping)
        return Neg(arg) if isinstance(t, Neg) else Apply(t.fname, arg)
    return type(t)(_rename_term(t.left, mapping), _rename_term(t.right, mapping))


def standardize_apart(f: Formula, names: Optional[NameSupply] = None,
                      schedule: Optional[Schedule] = None) -> Formula:
    """Rename bound variables that clash with free variables or each other."""
    names = names or NameSupply(all_variables(f))
    taken = set(free_variables(f))

    def walk(g: Formula, mapping: dict) -> Formula:
        if isinstance(g, (Lt, Eq)):
            return type(g)(_rename_term(g.left, mapping), _rename_term(g.right, mapping))
        if isinstance(g, Not):
            return Not(walk(g.arg, mapping))
        if isinstance(g, (And, Or)):
            return type(g)(walk(g.left, mapping), walk(g.right, mapping))
        if isinstance(g, Exists):
            var = g.var
            if var in taken:
                var = names.fresh("b")
                if schedule is not None:
                    schedule.define(var, Var(g.var))
            taken.add(var)
            return Exists(var, walk(g.body, {**mapping, g.var: var}))
        raise TypeError(f"not a formula: {g!r}")

    return walk(f, {})


def strip_exists(f: Formula) -> tuple[Formula, list[str]]:
    """Drop the quantifiers of a negation-free, standardized-apart formula."""
    bound: list[str] = []

    def walk(g: Formula) -> Formula:
        if isinstance(g, Exists):
            bound.append(g.var)
            return walk(g.body)
        if isinstance(g, (And, Or)):
            return type(g)(walk(g.left), walk(g.right))
        if isinstance(g, Not):
            raise EtrnnError("strip_exists expects a negation-free formula")
        return g

    return walk(f), bound


def _map_atoms(f: Formula, fn) -> Formula:
    if isinstance(f, (Lt, Eq)):
        return fn(f)
    if isinstance(f, (And, Or)):
        return type(f)(_map_atoms(f.left, fn), _map_atoms(f.right, fn))
    if isinstance(f, Exists):
        return Exists(f.var, _map_atoms(f.body, fn))
    if isinstance(f, Not):
        raise EtrnnError("expected a negation-free formula; run desugar_negation first")
    raise TypeError(f"not a formula: {f!r}")


def _wrap_defs(atom: Formula, defs: list[tuple[str, Formula]]) -> Formula:
    if not defs:
        return atom
    return exists_many([v for v, _ in defs], conj([c for _, c in defs] + [atom]))


def flatten_functions(f: Formula, names: Optional[NameSupply] = None,
                      schedule: Optional[Schedule] = None) -> Formula:
    """Give every function application a variable argument.

    ``g(t)`` with a non-variable ``t`` becomes ``g(y)`` under ``exists y (y = t & ...)``
    placed around the atom; innermost applications are handled first.
    """
    names = names or NameSupply(all_variables(f))
    schedule = schedule if schedule is not None else Schedule()

    def rewrite_atom(atom: Formula) -> Formula:
        defs: list[tuple[str, Formula]] = []

        def term(t: Term) -> Term:
            if isinstance(t, (Var, Const)):
                return t
            if isinstance(t, Apply):
                arg = term(t.arg)
                if isinstance(arg, Var):
                    return Apply(t.fname, arg)
                y = names.fresh("y")
                defs.append((y, Eq(Var(y), arg)))
                schedule.define(y, arg)
                return Apply(t.fname, Var(y))
            if isinstance(t, Neg):
                return Neg(term(t.arg))
            return type(t)(term(t.left), term(t.right))

        new = type(atom)(term(atom.left), term(atom.right))
        return _wrap_defs(new, defs)

    return _map_atoms(f, rewrite_atom)


def eliminate_minus_div(f: Formula, names: Optional[NameSupply] = None,
                        schedule: Optional[Schedule] = None) -> Formula:
    """Replace ``-t`` by a fresh ``x`` with ``x + t = 0`` and ``a / b`` by ``x`` with ``x * b = a``.

    Negated or divided literals fold into constants instead.
    """
    names = names or NameSupply(all_variables(f))
    schedule = schedule if schedule is not None else Schedule()

    def rewrite_atom(atom: Formula) -> Formula:
        defs: list[tuple[str, Formula]] = []

        def term(t: Term) -> Term:
            if isinstance(t, (Var, Const)):
                return t
            if isinstance(t, Apply):
                return Apply(t.fname, term(t.arg))
            if isinstance(t, Neg):
                inner = term(t.arg)
                if isinstance(inner, Const):
                    return Const(-inner.value)
                x = names.fresh("n")
                defs.append((x, Eq(Add(Var(x), inner), Const(0))))
                schedule.define(x, Neg(inner))
                return Var(x)
            if isinstance(t, Div):
                num, den = term(t.left), term(t.right)
                if isinstance(num, Const) and isinstance(den, Const) and den.value != 0:
                    return Const(num.value / den.value)
                x = names.fresh("q")
                defs.append((x, Eq(Mul(Var(x), den), num)))
                schedule.define(x, Div(num, den))
                return Var(x)
            return type(t)(term(t.left), term(t.right))

        new = type(atom)(term(atom.left), term(atom.right))
        return _wrap_defs(new, defs)

    return _map_atoms(f, rewrite_atom)


@dataclass
class Prepared:
    """A formula after the formula-level rewrites, ready for encoding."""

    source: Formula
    formula: Formula
    matrix: Formula
    original_variables: list[str]
    schedule: Schedule
    names: NameSupply


def prepare(f: Formula) -> Prepared:
    names = NameSupply(all_variables(f))
    schedule = Schedule()
    g = desugar_negation(f)
    g = standardize_apart(g, names, schedule)
    g = flatten_functions(g, names, schedule)
    g = eliminate_minus_div(g, names, schedule)
    matrix, _ = strip_exists(g)
    return Prepared(f, g, matrix, all_variables(f), schedule, names)


# -- intermediate equational forms -------------------------------------------


@dataclass(frozen=True)
class IOne:
    x: str


@dataclass(frozen=True)
class ISum:
    """x + y = z"""

    x: str
    y: str
    z: str


@dataclass(frozen=True)
class IInv:
    """x * y = 1"""

    x: str
    y: str


@dataclass(frozen=True)
class IFun:
    """x = f(y)"""

    x: str
    fname: str
    y: str


Intermediate = Union[IOne, ISum, IInv, IFun]


@dataclass
class EquationalSystem:
    constraints: list[Intermediate]
    provenance: list[str]
    schedule: Schedule


def _v(name: str) -> Var:
    return Var(name)


class _Equational:
    def __init__(self, names: NameSupply, schedule: Schedule):
        self.names = names
        self.schedule = schedule
        self.out: list[Intermediate] = []
        self.prov: list[str] = []
        self.source = ""
        self._one: Optional[str] = None
        self._zero: Optional[str] = None
        self._consts: dict[Fraction, str] = {}
        self._terms: dict[Term, str] = {}

    def emit(self, c: Intermediate) -> None:
        self.out.append(c)
        self.prov.append(self.source)

    def fresh(self, prefix: str, definition: Optional[Term] = None) -> str:
        v = self.names.fresh(prefix)
        if definition is not None:
            self.schedule.define(v, definition)
        return v

    @property
    def one(self) -> str:
        if self._one is None:
            self._one = self.fresh("one", Const(1))
            self.emit(IOne(self._one))
        return self._one

    @property
    def zero(self) -> str:
        if self._zero is None:
            self._zero = self.fresh("zero", Const(0))
            self.emit(ISum(self._zero, self._zero, self._zero))
        return self._zero

    # linear helpers

    def add(self, a: str, b: str) -> str:
        z = self.fresh("s", Add(_v(a), _v(b)))
        self.emit(ISum(a, b, z))
        return z

    def sub(self, a: str, b: str) -> str:
        z = self.fresh("d", Add(_v(a), Neg(_v(b))))
        self.emit(ISum(z, b, a))
        return z

    def half(self, a: str) -> str:
        h = self.fresh("h", Mul(Const(Fraction(1, 2)), _v(a)))
        self.emit(ISum(h, h, a))
        return h

    def neg(self, a: str) -> str:
        n = self.fresh("m", Neg(_v(a)))
        self.emit(ISum(n, a, self.zero))
        return n

    def equal(self, a: str, b: str) -> None:
        if a != b:
            self.emit(ISum(a, self.zero, b))

    def multiple(self, v: str, n: int) -> str:
        """``n * v`` for an integer ``n >= 1`` by doubling."""
        acc: Optional[str] = None
        power = v
        while True:
            if n & 1:
                acc = power if acc is None else self.add(acc, power)
            n >>= 1
            if not n:
                return acc  # type: ignore[return-value]
            power = self.add(power, power)

    def const(self, c: Fraction) -> str:
        c = Fraction(c)
        if c in self._consts:
            return self._consts[c]
        if c == 1:
            v = self.one
        elif c == 0:
            v = self.zero
        elif c < 0:
            v = self.neg(self.const(-c))
        elif c.denominator == 1:
            v = self.multiple(self.one, c.numerator)
        else:
            v = self.fresh("c", Const(c))
            self.equal(self.multiple(v, c.denominator), self.const(Fraction(c.numerator)))
        self._consts[c] = v
        return v

    def scale(self, v: str, c: Fraction) -> str:
        if c == 0:
            return self.zero
        if c == 1:
            return v
        if c < 0:
            return self.neg(self.scale(v, -c))
        if c.denominator == 1:
            return self.multiple(v, c.numerator)
        x = self.fresh("k", Mul(Const(c), _v(v)))
        self.equal(self.multiple(x, c.denominator), self.multiple(v, c.numerator))
        return x

    # multiplication via inversions

    def dsq(self, p: str) -> str:
        """``p^2`` for ``p`` outside {0, -1}."""
        p1 = self.add(p, self.one)
        a = self.fresh("i", Div(Const(1), _v(p)))
        self.emit(IInv(p, a))
        b = self.fresh("i", Div(Const(1), _v(p1)))
        self.emit(IInv(p1, b))
        q = self.sub(a, b)
        r = self.fresh("i", Div(Const(1), _v(q)))
        self.emit(IInv(q, r))
        return self.sub(r, p)

    def square(self, t: str) -> str:
        m = self.fresh("g", Add(Apply("abs", _v(t)), Const(2)))
        plus = self.add(t, m)
        minus = self.sub(t, m)
        both = self.add(self.dsq(plus), self.dsq(minus))
        return self.sub(self.half(both), self.dsq(m))

    def product(self, x: str, y: str) -> str:
        if x == y:
            return self.square(x)
        diff = self.sub(self.square(self.add(x, y)), self.square(self.sub(x, y)))
        return self.half(self.half(diff))

    # terms and formulas

    def term(self, t: Term) -> str:
        if isinstance(t, Var):
            return t.name
        if isinstance(t, Const):
            return self.const(t.value)
        if t in self._terms:
            return self._terms[t]
        if isinstance(t, Add):
            v = self.add(self.term(t.left), self.term(t.right))
        elif isinstance(t, Mul):
            if isinstance(t.left, Const):
                v = self.scale(self.term(t.right), t.left.value)
            elif isinstance(t.right, Const):
                v = self.scale(self.term(t.left), t.right.value)
            else:
                v = self.product(self.term(t.left), self.term(t.right))
        elif isinstance(t, Apply):
            arg = self.term(t.arg)
            v = self.fresh("f", Apply(t.fname, _v(arg)))
            self.emit(IFun(v, t.fname, arg))
        else:
            raise EtrnnError(f"unexpected {type(t).__name__} node; eliminate minus/division first")
        self._terms[t] = v
        return v

    def positive(self, s: str) -> tuple[str, str]:
        """Sum of four squares equal to the slack, plus its reciprocal variable."""
        vs = tuple(self.names.fresh("w") for _ in range(4))
        self.schedule.add(FourSquares(vs, s))  # type: ignore[arg-type]
        total = self.square(vs[0])
        for w in vs[1:]:
            total = self.add(total, self.square(w))
        u = self.names.fresh("u")
        self.schedule.add(ReciprocalOrZero(u, s))
        return total, u

    def assert_top(self, f: Formula) -> None:
        self.source = render(f)
        if isinstance(f, And):
            self.assert_top(f.left)
            self.assert_top(f.right)
        elif isinstance(f, Eq):
            if isinstance(f.left, Var) and f.right == Const(1):
                self.emit(IOne(f.left.name))
            elif isinstance(f.right, Var) and f.left == Const(1):
                self.emit(IOne(f.right.name))
            else:
                self.equal(self.term(f.left), self.term(f.right))
        elif isinstance(f, Lt):
            a, b = self.term(f.left), self.term(f.right)
            s = self.sub(b, a)
            total, u = self.positive(s)
            self.equal(total, s)
            self.emit(IInv(s, u))
        elif isinstance(f, Or):
            self.equal(self.residual(f), self.zero)
        else:
            raise EtrnnError(f"unexpected {type(f).__name__} in a prepared formula")

    def residuals(self, f: Formula) -> list[str]:
        if isinstance(f, Eq):
            return [self.sub(self.term(f.left), self.term(f.right))]
        if isinstance(f, Lt):
            a, b = self.term(f.left), self.term(f.right)
            s = self.sub(b, a)
            total, u = self.positive(s)
            return [self.sub(s, total), self.sub(self.product(s, u), self.one)]
        if isinstance(f, And):
            return self.residuals(f.left) + self.residuals(f.right)
        if isinstance(f, Or):
            return [self.residual(f)]
        raise EtrnnError(f"unexpected {type(f).__name__} in a prepared formula")

    def collapse(self, rs: list[str]) -> str:
        if len(rs) == 1:
            return rs[0]
        total = self.square(rs[0])
        for r in rs[1:]:
            total = self.add(total, self.square(r))
        return total

    def residual(self, f: Formula) -> str:
        if isinstance(f, Or):
            return self.product(self.collapse(self.residuals(f.left)),
                                self.collapse(self.residuals(f.right)))
        return self.collapse(self.residuals(f))


def to_equational(f: Formula, names: Optional[NameSupply] = None,
                  schedule: Optional[Schedule] = None) -> EquationalSystem:
    """Encode a flattened, minus/division-free formula with the four intermediate forms."""
    names = names or NameSupply(all_variables(f))
    schedule = schedule if schedule is not None else Schedule()
    matrix, _ = strip_exists(f)
    builder = _Equational(names, schedule)
    builder.assert_top(matrix)
    return EquationalSystem(builder.out, builder.prov, schedule)


def to_invflat(eq: EquationalSystem, names: NameSupply,
               schedule: Optional[Schedule] = None) -> ConstraintSystem:
    """Rewrite intermediate constraints with at most three INV-FLAT constraints each.

    ``x + y = z`` becomes ``v+v+v = 0, z+u+v = 0, x+y+u = 0``; ``x * y = 1``
    becomes ``v+v+v = 0, y+y'+v = 0, x*y'+1 = 0``; ``x = f(y)`` becomes
    ``v+v+v = 0, x+x'+v = 0, x'+f(y) = 0``.
    """
    schedule = schedule if schedule is not None else eq.schedule
    out: list[InvFlatConstraint] = []
    prov: list[str] = []

    def zero() -> str:
        v = names.fresh("v")
        schedule.define(v, Const(0))
        out.append(AddConstraint(v, v, v))
        return v

    for c, source in zip(eq.constraints, eq.provenance):
        start = len(out)
        if isinstance(c, IOne):
            out.append(UnitConstraint(c.x))
        elif isinstance(c, ISum):
            v = zero()
            u = names.fresh("u")
            schedule.define(u, Neg(Add(_v(c.x), _v(c.y))))
            out.append(AddConstraint(c.z, u, v))
            out.append(AddConstraint(c.x, c.y, u))
        elif isinstance(c, IInv):
            v = zero()
            y2 = names.fresh("r")
            schedule.define(y2, Neg(_v(c.y)))
            out.append(AddConstraint(c.y, y2, v))
            out.append(InvConstraint(c.x, y2))
        else:
            v = zero()
            x2 = names.fresh("r")
            schedule.define(x2, Neg(_v(c.x)))
            out.append(AddConstraint(c.x, x2, v))
            out.append(FunConstraint(x2, c.fname, c.y))
        prov.extend([source] * (len(out) - start))
    return ConstraintSystem(out, prov)


@dataclass
class NormalizationResult:
    system: ConstraintSystem
    schedule: Schedule
    original_variables: list[str]
    equational: EquationalSystem


def normalize(f: Formula) -> NormalizationResult:
    """Formula to INV-FLAT system with the full witness-extension schedule."""
    prep = prepare(f)
    eq = to_equational(prep.formula, prep.names, prep.schedule)
    system = to_invflat(eq, prep.names, prep.schedule)
    return NormalizationResult(system, prep.schedule, prep.original_variables, eq)


# -- tau-polynomials ---------------------------------------------------------

Monomial = tuple  # sorted tuple of (atom, exponent); atoms are Var or Apply terms


def _atom_key(atom: Term) -> str:
    return render_term(atom)


def _mono_mul(a: Monomial, b: Monomial) -> Monomial:
    exps: dict[Term, int] = {}
    for atom, e in a + b:
        exps[atom] = exps.get(atom, 0) + e
    return tuple(sorted(exps.items(), key=lambda item: _atom_key(item[0])))


class Poly:
    """Sparse polynomial with rational coefficients over variable and application atoms."""

    __slots__ = ("terms",)

    def __init__(self, terms: Optional[Mapping[Monomial, Fraction]] = None):
        self.terms: dict[Monomial, Fraction] = {m: Fraction(c) for m, c in (terms or {}).items() if c != 0}

    @classmethod
    def const(cls, c) -> "Poly":
        return cls({(): Fraction(c)})

    @classmethod
    def atom(cls, t: Term) -> "Poly":
        return cls({((t, 1),): Fraction(1)})

    def __add__(self, other: "Poly") -> "Poly":
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, 0) + c
        return Poly(out)

    def __neg__(self) -> "Poly":
        return Poly({m: -c for m, c in self.terms.items()})

    def __sub__(self, other: "Poly") -> "Poly":
        return self + (-other)

    def __mul__(self, other: "Poly") -> "Poly":
        out: dict[Monomial, Fraction] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = _mono_mul(m1, m2)
                out[m] = out.get(m, 0) + c1 * c2
        return Poly(out)

    def __eq__(self, other) -> bool:
        return isinstance(other, Poly) and self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    @property
    def degree(self) -> int:
        return max((sum(e for _, e in m) for m in self.terms), default=0)

    def atoms(self) -> list[Term]:
        seen: dict[Term, None] = {}
        for m in self.terms:
            for atom, _ in m:
                seen.setdefault(atom, None)
        return sorted(seen, key=_atom_key)

    def to_term(self) -> Term:
        if not self.terms:
            return Const(0)
        out: Optional[Term] = None
        for m in sorted(self.terms, key=lambda m: (-sum(e for _, e in m), [(_atom_key(a), e) for a, e in m])):
            c = self.terms[m]
            factors: list[Term] = [a for a, e in m for _ in range(e)]
            mono: Optional[Term] = None
            for fct in factors:
                mono = fct if mono is None else Mul(mono, fct)
            negative = c < 0
            mag = -c if negative else c
            if mono is None:
                piece: Term = Const(mag)
            elif mag != 1:
                piece = Mul(Const(mag), mono)
            else:
                piece = mono
            if out is None:
                out = Neg(piece) if negative else piece
            else:
                out = Add(out, Neg(piece)) if negative else Add(out, piece)
        return out  # type: ignore[return-value]

    def __repr__(self) -> str:
        return f"Poly({render_term(self.to_term())})"


@dataclass
class TauPolynomial:
    """``P = sum of residual^2``; ``residuals`` each have degree <= 2."""

    residuals: list[Poly]
    schedule: Schedule
    original_variables: list[str]

    @property
    def expanded(self) -> Poly:
        total = Poly()
        for r in self.residuals:
            total = total + r * r
        return total

    @property
    def degree(self) -> int:
        return self.expanded.degree

    @property
    def variables(self) -> list[str]:
        seen: dict[str, None] = {}
        for r in self.residuals:
            for atom in r.atoms():
                for v in ([atom.name] if isinstance(atom, Var) else
                          [atom.arg.name] if isinstance(atom.arg, Var) else []):
                    seen.setdefault(v, None)
        return list(seen)

    def to_term(self) -> Term:
        out: Optional[Term] = None
        for r in self.residuals:
            rt = r.to_term()
            sq = Mul(rt, rt)
            out = sq if out is None else Add(out, sq)
        return out if out is not None else Const(0)

    def render(self) -> str:
        return render_term(self.to_term())

    def render_expanded(self) -> str:
        return render_term(self.expanded.to_term())

    def evaluate_exact(self, values: Mapping[str, Fraction], sig: Signature = DEFAULT_SIGNATURE) -> Fraction:
        from .evaluate import eval_term_exact
        return eval_term_exact(self.to_term(), values, sig)

    def evaluate_interval(self, env: Mapping[str, RatInterval], sig: Signature = DEFAULT_SIGNATURE,
                          depth: int = 30) -> RatInterval:
        return eval_term_interval(self.to_term(), env, sig, depth)

    def evaluate(self, ext: ExtendedAssignment, sig: Signature = DEFAULT_SIGNATURE,
                 depth: int = 30) -> Union[Fraction, RatInterval, None]:
        """Exact value when possible, else an enclosure; None if the extension is partial."""
        if ext.missing:
            return None
        try:
            return self.evaluate_exact(ext.values, sig)
        except (ExactEvalUnavailable, EtrnnError):
            env = {k: RatInterval.point(v) for k, v in ext.values.items()}
            env.update(ext.intervals)
            return self.evaluate_interval(env, sig, depth)


class _FeasBuilder:
    def __init__(self, names: NameSupply, schedule: Schedule):
        self.names = names
        self.schedule = schedule
        self.defs: list[Poly] = []

    def fresh(self, prefix: str, p: Poly) -> Poly:
        """A fresh variable ``z`` with global residual ``z - p``."""
        z = self.names.fresh(prefix)
        self.schedule.define(z, p.to_term())
        zp = Poly.atom(Var(z))
        self.defs.append(zp - p)
        return zp

    def lower(self, p: Poly) -> Poly:
        return p if p.degree <= 1 else self.fresh("z", p)

    def term(self, t: Term) -> Poly:
        if isinstance(t, Var):
            return Poly.atom(t)
        if isinstance(t, Const):
            return Poly.const(t.value)
        if isinstance(t, Apply):
            if not isinstance(t.arg, (Var, Const)):
                raise EtrnnError("function arguments must be variables or constants; flatten first")
            return Poly.atom(t)
        if isinstance(t, Add):
            return self.term(t.left) + self.term(t.right)
        if isinstance(t, Mul):
            a, b = self.term(t.left), self.term(t.right)
            if a.degree + b.degree > 2:
                a, b = self.lower(a), self.lower(b)
            return a * b
        raise EtrnnError(f"unexpected {type(t).__name__} node; eliminate minus/division first")

    def lt(self, f: Lt) -> list[Poly]:
        s = self.fresh("s", self.term(f.right) - self.term(f.left))
        s_name = _only_var(s)
        vs = tuple(self.names.fresh("w") for _ in range(4))
        self.schedule.add(FourSquares(vs, s_name))  # type: ignore[arg-type]
        u = self.names.fresh("u")
        self.schedule.add(ReciprocalOrZero(u, s_name))
        total = Poly()
        for v in vs:
            total = total + Poly.atom(Var(v)) * Poly.atom(Var(v))
        return [s - total, s * Poly.atom(Var(u)) - Poly.const(1)]

    def residuals(self, f: Formula) -> list[Poly]:
        if isinstance(f, Eq):
            return [self.term(f.left) - self.term(f.right)]
        if isinstance(f, Lt):
            return self.lt(f)
        if isinstance(f, And):
            return self.residuals(f.left) + self.residuals(f.right)
        if isinstance(f, Or):
            return [self.collapse(self.residuals(f.left)) * self.collapse(self.residuals(f.right))]
        raise EtrnnError(f"unexpected {type(f).__name__} in a prepared formula")

    def collapse(self, rs: list[Poly]) -> Poly:
        """A degree <= 1 polynomial vanishing exactly when all of ``rs`` do."""
        if len(rs) == 1:
            return self.lower(rs[0])
        total = Poly()
        for r in rs:
            rho = self.lower(r)
            total = total + rho * rho
        return self.fresh("e", total)


def _only_var(p: Poly) -> str:
    (m,) = p.terms
    return m[0][0].name


def build_4feas(f: Formula) -> TauPolynomial:
    """A tau-polynomial of degree <= 4 with a root iff ``f`` is satisfiable."""
    prep = prepare(f)
    builder = _FeasBuilder(prep.names, prep.schedule)
    residuals = builder.residuals(prep.matrix)
    return TauPolynomial(residuals + builder.defs, prep.schedule, prep.original_variables)


def ast_size(node) -> int:
    """Node count, with each constant weighted by its bit length."""
    if isinstance(node, Const):
        return 1 + node.value.numerator.bit_length() + node.value.denominator.bit_length()
    if isinstance(node, Var):
        return 1
    if isinstance(node, (Neg, Not, Apply)):
        return 1 + ast_size(node.arg)
    if isinstance(node, Exists):
        return 1 + ast_size(node.body)
    return 1 + ast_size(node.left) + ast_size(node.right)


__all__ = [
    "AddConstraint", "ConstraintSystem", "EquationalSystem", "FunConstraint", "IFun", "IInv",
    "IOne", "ISum", "InvConstraint", "Poly", "TauPolynomial", "build_4feas", "InvFlatConstraint", "NameSupply", "NormalizationResult",
    "UnitConstraint", "ast_size", "check_constraint", "check_system", "constraint_meaning",
    "eliminate_minus_div", "flatten_functions", "normalize", "prepare", "render_constraint",
    "standardize_apart", "strip_exists", "to_equational", "to_invflat",
]
