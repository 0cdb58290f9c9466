from fractions import Fraction

import pytest
from hypothesis import assume, given, settings, strategies as st

from etrnn.errors import ParseError, PossibleDivisionByZero, UnknownFunctionError, UnsupportedConstructError
from etrnn.evaluate import eval_term_exact, holds
from etrnn.formula import (
    Add, And, Apply, atoms as formula_atoms, Const, Div, Eq, Exists, Lt, Mul, Neg, Not, Or, Var, desugar_negation,
    free_variables, is_strict_fragment, parse, parse_term, render, render_term,
)


def test_parse_exists():
    assert parse("exists x (x < 1)") == Exists("x", Lt(Var("x"), Const(1)))


def test_parse_sin_conjunction():
    f = parse("sin(y) = 0 & 4 < y & y < 7")
    assert f == And(And(Eq(Apply("sin", Var("y")), Const(0)), Lt(Const(4), Var("y"))), Lt(Var("y"), Const(7)))


def test_parse_sigmoid_term():
    assert parse_term("sigmoid(0)") == Apply("sigmoid", Const(0))


def test_numeric_literals():
    assert parse_term("3/4") == Const(Fraction(3, 4))
    assert parse_term("3 / 4") == Div(Const(3), Const(4))
    assert parse_term("0.25") == Const(Fraction(1, 4))
    assert parse_term("-2") == Const(-2)
    assert parse_term("-x") == Neg(Var("x"))


def test_precedence():
    assert parse_term("a + b * c") == Add(Var("a"), Mul(Var("b"), Var("c")))
    assert parse("a < b & c < d | e = f") == Or(And(Lt(Var("a"), Var("b")), Lt(Var("c"), Var("d"))),
                                                Eq(Var("e"), Var("f")))


def test_parse_errors_have_position():
    with pytest.raises(ParseError) as exc:
        parse("x <\n (1")
    assert exc.value.line == 2


def test_unknown_function():
    with pytest.raises(UnknownFunctionError):
        parse("tanh(x) < 0")


def test_desugar_examples():
    x, y = Var("x"), Var("y")
    assert desugar_negation(Not(Lt(x, y))) == Or(Lt(y, x), Eq(x, y))
    assert desugar_negation(Not(Eq(x, y))) == Or(Lt(x, y), Lt(y, x))
    a, b, c, d = (Var(n) for n in "abcd")
    assert desugar_negation(Not(And(Lt(a, b), Lt(c, d)))) == Or(Or(Lt(b, a), Eq(a, b)), Or(Lt(d, c), Eq(c, d)))


def test_negated_exists_rejected():
    with pytest.raises(UnsupportedConstructError):
        desugar_negation(Not(Exists("x", Lt(Var("x"), Const(0)))))


def test_free_variables():
    assert free_variables(Exists("x", Lt(Var("x"), Var("y")))) == ["y"]
    assert free_variables(parse("x < 1")) == ["x"]
    assert free_variables(parse("exists x (x < 1)")) == []


def test_strict_fragment():
    assert is_strict_fragment(parse("x < 1"))
    assert not is_strict_fragment(parse("x = 1"))
    assert not is_strict_fragment(parse("sin(y) = 0 & 4 < y"))
    assert not is_strict_fragment(parse("not (x < 1)"))


# -- properties ------------------------------------------------------------------

names = st.sampled_from(["x", "y", "z"])
consts = st.fractions(min_value=-20, max_value=20, max_denominator=9).map(Const)
terms = st.recursive(
    st.one_of(names.map(Var), consts),
    lambda sub: st.one_of(
        st.builds(Add, sub, sub), st.builds(Mul, sub, sub), st.builds(Neg, sub), st.builds(Div, sub, sub),
        st.builds(Apply, st.sampled_from(["relu", "abs", "id", "exp"]), sub)),
    max_leaves=8)
atoms = st.one_of(st.builds(Lt, terms, terms), st.builds(Eq, terms, terms))
formulas = st.recursive(
    atoms,
    lambda sub: st.one_of(st.builds(And, sub, sub), st.builds(Or, sub, sub), st.builds(Not, sub),
                          st.builds(Exists, names, sub)),
    max_leaves=6)


@settings(max_examples=300, deadline=None)
@given(terms)
def test_term_round_trip(t):
    assert parse_term(render_term(t)) == t


@settings(max_examples=300, deadline=None)
@given(formulas)
def test_formula_round_trip(f):
    assert parse(render(f)) == f


quantifier_free = st.recursive(
    atoms.filter(lambda a: "exp" not in render(a)),
    lambda sub: st.one_of(st.builds(And, sub, sub), st.builds(Or, sub, sub), st.builds(Not, sub)),
    max_leaves=6)


@settings(max_examples=200, deadline=None)
@given(quantifier_free, st.fixed_dictionaries({n: st.fractions(-5, 5, max_denominator=4) for n in "xyz"}))
def test_desugar_preserves_truth_idempotent_and_free_vars(f, env):
    # the rewrite of a negated atom presumes its terms are defined
    for a in formula_atoms(f):
        try:
            eval_term_exact(a.left, env), eval_term_exact(a.right, env)
        except PossibleDivisionByZero:
            assume(False)
    g = desugar_negation(f)
    assert desugar_negation(g) == g
    assert set(free_variables(g)) == set(free_variables(f))
    assert holds(g, env) == holds(f, env)
