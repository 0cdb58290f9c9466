"""Random generators with planted rational witnesses."""

from __future__ import annotations

import random
from fractions import Fraction

from etrnn.ecf import polynomial_activation
from etrnn.evaluate import eval_term_exact, holds
from etrnn.formula import (
    DEFAULT_SIGNATURE, Add, And, Apply, Const, Div, Eq, Exists, Lt, Mul, Neg, Not, Or, Var,
)
from etrnn.normalize import AddConstraint, ConstraintSystem, FunConstraint, InvConstraint, UnitConstraint

SQUARE = polynomial_activation("sq", [0, 0, 1])
SHIFTED_SQUARE = polynomial_activation("sq1", [1, 0, 1])
TEST_SIG = DEFAULT_SIGNATURE.with_activation(SQUARE).with_activation(SHIFTED_SQUARE)
EXACT_FUNCS = ("relu", "abs", "id", "sq")


def small_rational(rng: random.Random, num: int = 6, den: int = 4) -> Fraction:
    return Fraction(rng.randint(-num, num), rng.randint(1, den))


def random_term(rng, env, depth):
    names = list(env)
    if depth == 0 or rng.random() < 0.3:
        if rng.random() < 0.7:
            return Var(rng.choice(names))
        return Const(small_rational(rng))
    kind = rng.choice(("add", "mul", "neg", "div", "app", "app"))
    if kind == "add":
        return Add(random_term(rng, env, depth - 1), random_term(rng, env, depth - 1))
    if kind == "mul":
        return Mul(random_term(rng, env, depth - 1), random_term(rng, env, depth - 1))
    if kind == "neg":
        return Neg(random_term(rng, env, depth - 1))
    if kind == "div":
        num, den = random_term(rng, env, depth - 1), random_term(rng, env, depth - 1)
        if eval_term_exact(den, env, TEST_SIG) == 0:
            den = Add(den, Const(1))
        return Div(num, den)
    return Apply(rng.choice(EXACT_FUNCS), random_term(rng, env, depth - 1))


def true_atom(rng, env):
    t = random_term(rng, env, 2)
    v = eval_term_exact(t, env, TEST_SIG)
    if rng.random() < 0.5:
        return Eq(t, Const(v))
    return Lt(t, Const(v + Fraction(rng.randint(1, 4), rng.randint(1, 3))))


def any_atom(rng, env):
    t = random_term(rng, env, 2)
    return Lt(t, Const(small_rational(rng))) if rng.random() < 0.5 else Eq(t, Const(small_rational(rng)))


def true_formula(rng, env, depth):
    r = rng.random()
    if depth == 0 or r < 0.3:
        return true_atom(rng, env)
    if r < 0.65:
        return And(true_formula(rng, env, depth - 1), true_formula(rng, env, depth - 1))
    if r < 0.9:
        good = true_formula(rng, env, depth - 1)
        other = any_atom(rng, env)
        return Or(good, other) if rng.random() < 0.5 else Or(other, good)
    # negation of a false atom
    t = random_term(rng, env, 1)
    v = eval_term_exact(t, env, TEST_SIG)
    return Not(Eq(t, Const(v + 1))) if rng.random() < 0.5 else Not(Lt(t, Const(v)))


def planted_formula(seed: int):
    """(formula, witness) with the witness covering free and bound variables."""
    rng = random.Random(seed)
    names = [f"x{i}" for i in range(rng.randint(1, 3))]
    env = {n: small_rational(rng) for n in names}
    f = true_formula(rng, env, 2)
    bound = [n for n in names if rng.random() < 0.4]
    for n in reversed(bound):
        f = Exists(n, f)
    assert holds(f, env, TEST_SIG)
    return f, env


def planted_system(seed: int, n_constraints: int = 8):
    """Random INV-FLAT system over {id, relu, abs, sq} with a planted witness."""
    rng = random.Random(seed)
    s: dict[str, Fraction] = {}
    counter = iter(range(10 ** 6))

    def fresh(value):
        name = f"v{next(counter)}"
        s[name] = Fraction(value)
        return name

    for _ in range(rng.randint(1, 3)):
        fresh(small_rational(rng) or 1)
    constraints = []
    for _ in range(n_constraints):
        kind = rng.choice(("unit", "add", "add", "inv", "inv", "fun", "fun"))
        names = list(s)
        if kind == "unit":
            ones = [n for n in names if s[n] == 1]
            x = rng.choice(ones) if ones and rng.random() < 0.5 else fresh(1)
            constraints.append(UnitConstraint(x))
        elif kind == "add":
            x, y = rng.choice(names), rng.choice(names)
            z = fresh(-(s[x] + s[y]))
            args = [x, y, z]
            rng.shuffle(args)
            constraints.append(AddConstraint(*args))
        elif kind == "inv":
            nonzero = [n for n in names if s[n] != 0]
            x = rng.choice(nonzero) if nonzero else fresh(2)
            y = fresh(-1 / s[x])
            constraints.append(InvConstraint(x, y) if rng.random() < 0.5 else InvConstraint(y, x))
        else:
            f = rng.choice(EXACT_FUNCS)
            y = rng.choice(names)
            x = fresh(-TEST_SIG[f].exact(s[y]))
            constraints.append(FunConstraint(x, f, y))
    return ConstraintSystem(constraints), s
