"""Terms and formulas of existential real arithmetic with unary functions.

Concrete syntax::

    formula := "exists" var formula | disj
    disj    := conj ("|" conj)*
    conj    := neg ("&" neg)*
    neg     := "not" neg | cmp
    cmp     := sum (("<" | "=") sum)?
    sum     := prod (("+" | "-") prod)*
    prod    := unary (("*" | "/") unary)*
    unary   := "-" unary | atom
    atom    := number | var | fname "(" sum ")" | "(" formula-or-sum ")"

Numbers are integers, decimals (``0.25``) or fractions written without
spaces (``3/4``); ``3 / 4`` with spaces is a division node.  A minus sign
directly in front of a number literal is folded into the constant.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Optional, Union

from .ecf import BUILTINS, ActivationSpec
from .errors import ParseError, UnknownFunctionError, UnsupportedConstructError
from .intervals import format_rational

# -- AST ---------------------------------------------------------------------


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    value: Fraction

    def __post_init__(self):
        object.__setattr__(self, "value", Fraction(self.value))


@dataclass(frozen=True)
class Add:
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class Mul:
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class Neg:
    arg: "Term"


@dataclass(frozen=True)
class Div:
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class Apply:
    fname: str
    arg: "Term"


Term = Union[Var, Const, Add, Mul, Neg, Div, Apply]


@dataclass(frozen=True)
class Lt:
    left: Term
    right: Term


@dataclass(frozen=True)
class Eq:
    left: Term
    right: Term


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Not:
    arg: "Formula"


@dataclass(frozen=True)
class Exists:
    var: str
    body: "Formula"


Formula = Union[Lt, Eq, And, Or, Not, Exists]

TERM_TYPES = (Var, Const, Add, Mul, Neg, Div, Apply)
FORMULA_TYPES = (Lt, Eq, And, Or, Not, Exists)


def conj(parts: Iterable[Formula]) -> Formula:
    """Left-nested conjunction of a non-empty sequence."""
    it = iter(parts)
    try:
        out = next(it)
    except StopIteration:
        raise ValueError("empty conjunction") from None
    for p in it:
        out = And(out, p)
    return out


def disj(parts: Iterable[Formula]) -> Formula:
    it = iter(parts)
    out = next(it)
    for p in it:
        out = Or(out, p)
    return out


def exists_many(names: Iterable[str], body: Formula) -> Formula:
    for name in reversed(list(names)):
        body = Exists(name, body)
    return body


# -- signature ---------------------------------------------------------------


class Signature(Mapping[str, ActivationSpec]):
    """Immutable registry of unary function symbols.

    The builtins (exp, sin, sigmoid, relu, abs, id) are always present.
    """

    def __init__(self, extra: Iterable[ActivationSpec] = ()):
        table = dict(BUILTINS)
        for spec in extra:
            if spec.name in table and table[spec.name] is not spec:
                raise ValueError(f"duplicate function symbol {spec.name!r}")
            table[spec.name] = spec
        self._table = table

    def __getitem__(self, name: str) -> ActivationSpec:
        try:
            return self._table[name]
        except KeyError:
            raise UnknownFunctionError(f"unknown function symbol {name!r}") from None

    def __iter__(self) -> Iterator[str]:
        return iter(self._table)

    def __len__(self) -> int:
        return len(self._table)

    def __contains__(self, name) -> bool:
        return name in self._table

    def with_activation(self, spec: ActivationSpec) -> "Signature":
        extra = [s for n, s in self._table.items() if n not in BUILTINS]
        return Signature(extra + [spec])


DEFAULT_SIGNATURE = Signature()

# -- lexer -------------------------------------------------------------------

KEYWORDS = {"exists", "not"}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>\d+/\d+|\d+\.\d*|\.\d+|\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<op>[()+\-*/<=&|])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "ws":
            chunk = m.group()
            if "\n" in chunk:
                line += chunk.count("\n")
                line_start = pos + chunk.rindex("\n") + 1
        else:
            tokens.append(_Token(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    tokens.append(_Token("eof", "", line, pos - line_start + 1))
    return tokens


def _number_value(text: str) -> Fraction:
    return Fraction(text)


# -- parser ------------------------------------------------------------------


class _Parser:
    def __init__(self, text: str, sig: Signature):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.sig = sig

    @property
    def tok(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        t = self.tokens[self.pos]
        self.pos += 1
        return t

    def error(self, message: str, tok: Optional[_Token] = None) -> ParseError:
        t = tok or self.tok
        return ParseError(message, t.line, t.column)

    def expect(self, text: str) -> _Token:
        if self.tok.text != text or self.tok.kind == "eof":
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")
        return self.advance()

    def is_op(self, text: str) -> bool:
        return self.tok.kind == "op" and self.tok.text == text

    # each level returns a Term or a Formula; operators check operand kinds

    def formula_or_sum(self):
        if self.tok.kind == "ident" and self.tok.text == "exists":
            self.advance()
            var = self.advance()
            if var.kind != "ident" or var.text in KEYWORDS:
                raise self.error("expected a variable after 'exists'", var)
            body = self.formula_or_sum()
            return Exists(var.text, self.as_formula(body, var))
        return self.disjunction()

    def disjunction(self):
        start = self.tok
        left = self.conjunction()
        while self.is_op("|"):
            op = self.advance()
            right = self.conjunction()
            left = Or(self.as_formula(left, start), self.as_formula(right, op))
        return left

    def conjunction(self):
        start = self.tok
        left = self.negation()
        while self.is_op("&"):
            op = self.advance()
            right = self.negation()
            left = And(self.as_formula(left, start), self.as_formula(right, op))
        return left

    def negation(self):
        if self.tok.kind == "ident" and self.tok.text == "not":
            t = self.advance()
            return Not(self.as_formula(self.negation(), t))
        if self.tok.kind == "ident" and self.tok.text == "exists":
            return self.formula_or_sum()
        return self.comparison()

    def comparison(self):
        start = self.tok
        left = self.sum()
        if self.is_op("<") or self.is_op("="):
            op = self.advance()
            right = self.sum()
            node = Lt if op.text == "<" else Eq
            return node(self.as_term(left, start), self.as_term(right, op))
        return left

    def sum(self):
        start = self.tok
        left = self.product()
        while self.is_op("+") or self.is_op("-"):
            op = self.advance()
            right = self.as_term(self.product(), op)
            left = self.as_term(left, start)
            left = Add(left, right if op.text == "+" else Neg(right))
        return left

    def product(self):
        start = self.tok
        left = self.unary()
        while self.is_op("*") or self.is_op("/"):
            op = self.advance()
            right = self.as_term(self.unary(), op)
            left = self.as_term(left, start)
            left = Mul(left, right) if op.text == "*" else Div(left, right)
        return left

    def unary(self):
        if self.is_op("-"):
            op = self.advance()
            if self.tok.kind == "number":
                return Const(-_number_value(self.advance().text))
            return Neg(self.as_term(self.unary(), op))
        return self.atom()

    def atom(self):
        t = self.tok
        if t.kind == "number":
            self.advance()
            return Const(_number_value(t.text))
        if t.kind == "ident":
            if t.text in KEYWORDS:
                raise self.error(f"unexpected keyword {t.text!r}")
            self.advance()
            if self.is_op("("):
                if t.text not in self.sig:
                    raise UnknownFunctionError(
                        f"unknown function symbol {t.text!r} (line {t.line}, column {t.column})")
                self.advance()
                arg = self.as_term(self.sum(), t)
                self.expect(")")
                return Apply(t.text, arg)
            return Var(t.text)
        if self.is_op("("):
            self.advance()
            inner = self.formula_or_sum()
            self.expect(")")
            return inner
        found = t.text or "end of input"
        raise self.error(f"unexpected {found!r}")

    def as_term(self, node, tok: _Token) -> Term:
        if not isinstance(node, TERM_TYPES):
            raise self.error("expected a term, found a formula", tok)
        return node

    def as_formula(self, node, tok: _Token) -> Formula:
        if not isinstance(node, FORMULA_TYPES):
            raise self.error("expected a formula, found a term", tok)
        return node

    def finish(self):
        if self.tok.kind != "eof":
            raise self.error(f"unexpected {self.tok.text!r} after end of expression")


def parse(text: str, sig: Signature = DEFAULT_SIGNATURE) -> Formula:
    p = _Parser(text, sig)
    node = p.formula_or_sum()
    p.finish()
    if not isinstance(node, FORMULA_TYPES):
        raise ParseError("expected a formula, found a term", 1, 1)
    return node


def parse_term(text: str, sig: Signature = DEFAULT_SIGNATURE) -> Term:
    p = _Parser(text, sig)
    node = p.sum()
    p.finish()
    return node


# -- printer -----------------------------------------------------------------

_PREC_SUM, _PREC_PROD, _PREC_UNARY = 1, 2, 3


def _term_prec(t: Term) -> int:
    if isinstance(t, Add):
        return _PREC_SUM
    if isinstance(t, (Mul, Div)):
        return _PREC_PROD
    if isinstance(t, Neg):
        return _PREC_UNARY
    if isinstance(t, Const) and t.value < 0:
        return _PREC_UNARY
    return 4


def _wrap(s: str, cond: bool) -> str:
    return f"({s})" if cond else s


def render_term(t: Term) -> str:
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Const):
        return format_rational(t.value)
    if isinstance(t, Apply):
        return f"{t.fname}({render_term(t.arg)})"
    if isinstance(t, Neg):
        a = t.arg
        # keep "-3" for Const(-3); a negated literal needs parentheses
        needs = _term_prec(a) < _PREC_UNARY or isinstance(a, Const)
        inner = render_term(a)
        if not needs and inner.startswith("-"):
            return f"- {inner}"
        return "-" + _wrap(inner, needs)
    if isinstance(t, Add):
        left = render_term(t.left)
        if isinstance(t.right, Neg):
            r = t.right.arg
            right = _wrap(render_term(r), _term_prec(r) <= _PREC_SUM)
            return f"{left} - {right}"
        right = _wrap(render_term(t.right), _term_prec(t.right) <= _PREC_SUM)
        return f"{left} + {right}"
    if isinstance(t, (Mul, Div)):
        op = "*" if isinstance(t, Mul) else "/"
        left = _wrap(render_term(t.left), _term_prec(t.left) < _PREC_PROD)
        right = _wrap(render_term(t.right), _term_prec(t.right) <= _PREC_PROD)
        return f"{left} {op} {right}"
    raise TypeError(f"not a term: {t!r}")


_PREC_OR, _PREC_AND, _PREC_NOT, _PREC_ATOM = 1, 2, 3, 4


def _formula_prec(f: Formula) -> int:
    if isinstance(f, Exists):
        return 0
    if isinstance(f, Or):
        return _PREC_OR
    if isinstance(f, And):
        return _PREC_AND
    if isinstance(f, Not):
        return _PREC_NOT
    return _PREC_ATOM


def render(f: Formula) -> str:
    if isinstance(f, Lt):
        return f"{render_term(f.left)} < {render_term(f.right)}"
    if isinstance(f, Eq):
        return f"{render_term(f.left)} = {render_term(f.right)}"
    if isinstance(f, Exists):
        return f"exists {f.var} ({render(f.body)})"
    if isinstance(f, Not):
        return "not " + _wrap(render(f.arg), _formula_prec(f.arg) < _PREC_NOT)
    if isinstance(f, (And, Or)):
        prec = _formula_prec(f)
        op = "&" if isinstance(f, And) else "|"
        left = _wrap(render(f.left), _formula_prec(f.left) < prec)
        right = _wrap(render(f.right), _formula_prec(f.right) <= prec)
        return f"{left} {op} {right}"
    raise TypeError(f"not a formula: {f!r}")


def to_json(node) -> object:
    """Plain JSON tree of an AST (used by the ``parse`` command)."""
    kind = type(node).__name__
    if isinstance(node, Var):
        return {"kind": kind, "name": node.name}
    if isinstance(node, Const):
        return {"kind": kind, "value": format_rational(node.value)}
    if isinstance(node, Apply):
        return {"kind": kind, "fname": node.fname, "arg": to_json(node.arg)}
    if isinstance(node, (Neg, Not)):
        return {"kind": kind, "arg": to_json(node.arg)}
    if isinstance(node, Exists):
        return {"kind": kind, "var": node.var, "body": to_json(node.body)}
    return {"kind": kind, "left": to_json(node.left), "right": to_json(node.right)}


# -- traversals --------------------------------------------------------------


def term_variables(t: Term, out: Optional[dict] = None) -> dict:
    out = {} if out is None else out
    if isinstance(t, Var):
        out.setdefault(t.name, None)
    elif isinstance(t, (Neg, Apply)):
        term_variables(t.arg, out)
    elif isinstance(t, (Add, Mul, Div)):
        term_variables(t.left, out)
        term_variables(t.right, out)
    return out


def _free(f: Formula, bound: frozenset, out: dict) -> None:
    if isinstance(f, (Lt, Eq)):
        for side in (f.left, f.right):
            for name in term_variables(side):
                if name not in bound:
                    out.setdefault(name, None)
    elif isinstance(f, Not):
        _free(f.arg, bound, out)
    elif isinstance(f, (And, Or)):
        _free(f.left, bound, out)
        _free(f.right, bound, out)
    elif isinstance(f, Exists):
        _free(f.body, bound | {f.var}, out)


def free_variables(f: Formula) -> list[str]:
    """Free variables in order of first occurrence."""
    out: dict = {}
    _free(f, frozenset(), out)
    return list(out)


def all_variables(f: Formula) -> list[str]:
    """Free and bound variable names, first occurrence order."""
    out: dict = {}

    def walk(g):
        if isinstance(g, (Lt, Eq)):
            term_variables(g.left, out)
            term_variables(g.right, out)
        elif isinstance(g, Not):
            walk(g.arg)
        elif isinstance(g, (And, Or)):
            walk(g.left)
            walk(g.right)
        elif isinstance(g, Exists):
            out.setdefault(g.var, None)
            walk(g.body)

    walk(f)
    return list(out)


def function_symbols(node) -> set[str]:
    if isinstance(node, Apply):
        return {node.fname} | function_symbols(node.arg)
    if isinstance(node, (Neg, Not)):
        return function_symbols(node.arg)
    if isinstance(node, Exists):
        return function_symbols(node.body)
    if isinstance(node, (Var, Const)):
        return set()
    return function_symbols(node.left) | function_symbols(node.right)


def atoms(f: Formula) -> Iterator[Formula]:
    if isinstance(f, (Lt, Eq)):
        yield f
    elif isinstance(f, Not):
        yield from atoms(f.arg)
    elif isinstance(f, (And, Or)):
        yield from atoms(f.left)
        yield from atoms(f.right)
    elif isinstance(f, Exists):
        yield from atoms(f.body)


def desugar_negation(f: Formula) -> Formula:
    """Push negations into atoms; the result contains no ``Not`` node.

    ``not (a < b)`` becomes ``b < a | a = b`` and ``not (a = b)`` becomes
    ``a < b | b < a``.  A negated quantifier leaves the existential fragment
    and is rejected.
    """
    if isinstance(f, (Lt, Eq)):
        return f
    if isinstance(f, And):
        return And(desugar_negation(f.left), desugar_negation(f.right))
    if isinstance(f, Or):
        return Or(desugar_negation(f.left), desugar_negation(f.right))
    if isinstance(f, Exists):
        return Exists(f.var, desugar_negation(f.body))
    if isinstance(f, Not):
        return _negate(f.arg)
    raise TypeError(f"not a formula: {f!r}")


def _negate(f: Formula) -> Formula:
    if isinstance(f, Lt):
        return Or(Lt(f.right, f.left), Eq(f.left, f.right))
    if isinstance(f, Eq):
        return Or(Lt(f.left, f.right), Lt(f.right, f.left))
    if isinstance(f, Not):
        return desugar_negation(f.arg)
    if isinstance(f, And):
        return Or(_negate(f.left), _negate(f.right))
    if isinstance(f, Or):
        return And(_negate(f.left), _negate(f.right))
    if isinstance(f, Exists):
        raise UnsupportedConstructError("negated existential quantifier is outside the existential fragment")
    raise TypeError(f"not a formula: {f!r}")


def is_strict_fragment(f: Formula) -> bool:
    return not any(isinstance(a, Eq) for a in atoms(desugar_negation(f)))
