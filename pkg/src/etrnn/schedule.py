"""Witness-extension schedules.

Every rewrite that introduces an auxiliary variable records how to compute it
from variables defined earlier.  Replaying the schedule on a satisfying
assignment of the source formula yields a satisfying assignment of the
rewritten system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Union

from .errors import EtrnnError, ExactEvalUnavailable, ParseError, PossibleDivisionByZero
from .evaluate import eval_term_exact, eval_term_interval
from .formula import DEFAULT_SIGNATURE, Signature, Term, parse_term, render_term, term_variables
from .intervals import RatInterval, format_rational, to_rational


@dataclass(frozen=True)
class Define:
    var: str
    term: Term


@dataclass(frozen=True)
class FourSquares:
    """``outputs`` get rationals whose squares sum to ``source`` (zeros if source <= 0)."""

    outputs: tuple[str, str, str, str]
    source: str


@dataclass(frozen=True)
class ReciprocalOrZero:
    var: str
    source: str


Step = Union[Define, FourSquares, ReciprocalOrZero]


def step_targets(step: Step) -> tuple[str, ...]:
    if isinstance(step, FourSquares):
        return step.outputs
    return (step.var,)


def step_inputs(step: Step) -> list[str]:
    if isinstance(step, Define):
        return list(term_variables(step.term))
    return [step.source]


def four_squares(n: int) -> tuple[int, int, int, int]:
    """Integers a >= b >= c >= d >= 0 with a^2 + b^2 + c^2 + d^2 = n."""
    if n < 0:
        raise ValueError("negative argument")
    if n == 0:
        return 0, 0, 0, 0
    # strip factors of 4: n = 4^k m, decompose m and scale by 2^k
    k = 0
    while n % 4 == 0:
        n //= 4
        k += 1
    scale = 1 << k
    a = math.isqrt(n)
    while a >= 0:
        r1 = n - a * a
        b = min(math.isqrt(r1), a)
        while b >= 0 and 3 * b * b >= r1 - 0:
            r2 = r1 - b * b
            c = min(math.isqrt(r2), b)
            while c >= 0 and 2 * c * c >= r2:
                d2 = r2 - c * c
                d = math.isqrt(d2)
                if d * d == d2 and d <= c:
                    return a * scale, b * scale, c * scale, d * scale
                c -= 1
            b -= 1
        a -= 1
    raise AssertionError("Lagrange's theorem violated")  # unreachable


def rational_four_squares(q: Fraction) -> tuple[Fraction, Fraction, Fraction, Fraction]:
    # p/r = (p*r) / r^2
    p, r = q.numerator, q.denominator
    return tuple(Fraction(x, r) for x in four_squares(p * r))  # type: ignore[return-value]


@dataclass
class ExtendedAssignment:
    values: dict[str, Fraction]
    intervals: dict[str, RatInterval] = field(default_factory=dict)
    missing: list[str] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return not self.missing and not self.intervals


@dataclass
class Schedule:
    steps: list[Step] = field(default_factory=list)

    def add(self, step: Step) -> None:
        self.steps.append(step)

    def define(self, var: str, term: Term) -> None:
        self.steps.append(Define(var, term))

    def extend(self, other: "Schedule") -> "Schedule":
        return Schedule(self.steps + other.steps)

    def defined(self) -> list[str]:
        return [v for s in self.steps for v in step_targets(s)]

    def is_acyclic(self, base: set[str]) -> bool:
        known = set(base)
        for step in self.steps:
            if any(v not in known for v in step_inputs(step)):
                return False
            known.update(step_targets(step))
        return True

    def evaluate(self, assignment: Mapping[str, Fraction], sig: Signature = DEFAULT_SIGNATURE,
                 depth: int = 30) -> ExtendedAssignment:
        """Replay the schedule.

        Variables whose value is not an exact rational (e.g. a ``sin``
        auxiliary) get a certified interval when possible; otherwise they are
        listed as missing and the extension is partial.
        """
        values = {k: to_rational(v) for k, v in assignment.items()}
        intervals: dict[str, RatInterval] = {}
        missing: list[str] = []
        for step in self.steps:
            targets = step_targets(step)
            if any(t in values for t in targets):
                continue
            inputs = step_inputs(step)
            if any(v in missing or (v not in values and v not in intervals) for v in inputs):
                missing.extend(targets)
                continue
            if all(v in values for v in inputs):
                try:
                    for name, val in zip(targets, _run_exact(step, values, sig)):
                        values[name] = val
                    continue
                except ExactEvalUnavailable:
                    pass
            if isinstance(step, Define):
                env = {v: intervals.get(v) or RatInterval.point(values[v]) for v in inputs}
                try:
                    intervals[step.var] = eval_term_interval(step.term, env, sig, depth)
                    continue
                except PossibleDivisionByZero:
                    pass
            missing.extend(targets)
        return ExtendedAssignment(values, intervals, missing)

    def to_json(self) -> list[dict]:
        out = []
        for step in self.steps:
            if isinstance(step, Define):
                out.append({"kind": "define", "var": step.var, "term": render_term(step.term)})
            elif isinstance(step, FourSquares):
                out.append({"kind": "four_squares", "outputs": list(step.outputs), "source": step.source})
            else:
                out.append({"kind": "reciprocal_or_zero", "var": step.var, "source": step.source})
        return out

    @classmethod
    def from_json(cls, data: list, sig: Signature = DEFAULT_SIGNATURE) -> "Schedule":
        steps: list[Step] = []
        for item in data:
            kind = item.get("kind")
            if kind == "define":
                steps.append(Define(item["var"], parse_term(item["term"], sig)))
            elif kind == "four_squares":
                steps.append(FourSquares(tuple(item["outputs"]), item["source"]))
            elif kind == "reciprocal_or_zero":
                steps.append(ReciprocalOrZero(item["var"], item["source"]))
            else:
                raise ParseError(f"unknown schedule step kind {kind!r}")
        return cls(steps)


def _run_exact(step: Step, values: Mapping[str, Fraction], sig: Signature) -> tuple[Fraction, ...]:
    if isinstance(step, Define):
        return (eval_term_exact(step.term, values, sig),)
    src = values[step.source]
    if isinstance(step, FourSquares):
        if src <= 0:
            return (Fraction(0),) * 4
        return rational_four_squares(src)
    return (1 / src if src != 0 else Fraction(0),)


def extend_witness(schedule: Schedule, assignment: Mapping[str, Fraction],
                   sig: Signature = DEFAULT_SIGNATURE, depth: int = 30) -> ExtendedAssignment:
    return schedule.evaluate(assignment, sig, depth)


def format_assignment(values: Mapping[str, Fraction]) -> dict[str, str]:
    return {k: format_rational(v) for k, v in values.items()}


def parse_assignment(data: Mapping[str, object]) -> dict[str, Fraction]:
    out = {}
    for k, v in data.items():
        if not isinstance(v, (str, int)) or isinstance(v, bool):
            raise EtrnnError(f"assignment value for {k!r} must be a 'p/q' string")
        out[k] = to_rational(v)
    return out


def optional_value(ext: ExtendedAssignment, name: str) -> Optional[Union[Fraction, RatInterval]]:
    if name in ext.values:
        return ext.values[name]
    return ext.intervals.get(name)
