"""Exact and certified-interval evaluation of terms and formulas."""

from __future__ import annotations

from fractions import Fraction
from typing import Mapping

from .errors import ExactEvalUnavailable, PossibleDivisionByZero, ValidationError
from .formula import (
    DEFAULT_SIGNATURE, Add, And, Apply, Const, Div, Eq, Exists, Formula, Lt, Mul, Neg, Not, Or,
    Signature, Term, Var,
)
from .intervals import RatInterval, iv_add, iv_div, iv_mul, iv_neg, iv_sqr


def eval_term_interval(t: Term, env: Mapping[str, RatInterval], sig: Signature = DEFAULT_SIGNATURE,
                       depth: int = 20) -> RatInterval:
    """Sound enclosure of ``t`` over the box ``env``; nested in ``depth``."""
    if isinstance(t, Var):
        try:
            return env[t.name]
        except KeyError:
            raise ValidationError(f"unbound variable {t.name!r}") from None
    if isinstance(t, Const):
        return RatInterval(t.value, t.value)
    if isinstance(t, Add):
        return iv_add(eval_term_interval(t.left, env, sig, depth),
                      eval_term_interval(t.right, env, sig, depth))
    if isinstance(t, Mul):
        if t.left == t.right:
            return iv_sqr(eval_term_interval(t.left, env, sig, depth))
        return iv_mul(eval_term_interval(t.left, env, sig, depth),
                      eval_term_interval(t.right, env, sig, depth))
    if isinstance(t, Neg):
        return iv_neg(eval_term_interval(t.arg, env, sig, depth))
    if isinstance(t, Div):
        return iv_div(eval_term_interval(t.left, env, sig, depth),
                      eval_term_interval(t.right, env, sig, depth))
    if isinstance(t, Apply):
        return sig[t.fname].interval(eval_term_interval(t.arg, env, sig, depth), depth)
    raise TypeError(f"not a term: {t!r}")


def eval_term_exact(t: Term, env: Mapping[str, Fraction], sig: Signature = DEFAULT_SIGNATURE) -> Fraction:
    if isinstance(t, Var):
        try:
            return Fraction(env[t.name])
        except KeyError:
            raise ValidationError(f"unbound variable {t.name!r}") from None
    if isinstance(t, Const):
        return t.value
    if isinstance(t, Add):
        return eval_term_exact(t.left, env, sig) + eval_term_exact(t.right, env, sig)
    if isinstance(t, Mul):
        return eval_term_exact(t.left, env, sig) * eval_term_exact(t.right, env, sig)
    if isinstance(t, Neg):
        return -eval_term_exact(t.arg, env, sig)
    if isinstance(t, Div):
        den = eval_term_exact(t.right, env, sig)
        if den == 0:
            raise PossibleDivisionByZero("division by zero")
        return eval_term_exact(t.left, env, sig) / den
    if isinstance(t, Apply):
        return sig[t.fname].exact(eval_term_exact(t.arg, env, sig))
    raise TypeError(f"not a term: {t!r}")


def holds(f: Formula, env: Mapping[str, Fraction], sig: Signature = DEFAULT_SIGNATURE) -> bool:
    """Exact truth of ``f`` where ``env`` also supplies witnesses for bound variables.

    An atom whose terms are undefined (division by zero) is false, matching the
    partial-function reading of terms.
    """
    if isinstance(f, (Lt, Eq)):
        try:
            a = eval_term_exact(f.left, env, sig)
            b = eval_term_exact(f.right, env, sig)
        except PossibleDivisionByZero:
            return False
        return a < b if isinstance(f, Lt) else a == b
    if isinstance(f, And):
        return holds(f.left, env, sig) and holds(f.right, env, sig)
    if isinstance(f, Or):
        return holds(f.left, env, sig) or holds(f.right, env, sig)
    if isinstance(f, Not):
        return not holds(f.arg, env, sig)
    if isinstance(f, Exists):
        if f.var not in env:
            raise ExactEvalUnavailable(f"no witness supplied for bound variable {f.var!r}")
        return holds(f.body, env, sig)
    raise TypeError(f"not a formula: {f!r}")
