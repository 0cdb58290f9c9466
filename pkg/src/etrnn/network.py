"""Neural architectures, training instances and solution verification."""

from __future__ import annotations

import enum
import graphlib
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Optional, Union

import fastjsonschema

from .errors import EtrnnError, MalformedSolutionError, ValidationError
from .evaluate import eval_term_exact, eval_term_interval
from .formula import DEFAULT_SIGNATURE, Add, Const, Mul, Neg, Signature, Term, Var, parse_term, render_term, term_variables
from .intervals import RatInterval, format_rational, iv_add, iv_mul, iv_sqr, iv_sub, to_rational

ROLES = ("input", "hidden", "output")
PRECS = ("eq", "leq", "lt")


def edge_id(src: str, dst: str) -> str:
    return f"{src}->{dst}"


@dataclass(frozen=True)
class Neuron:
    id: str
    role: str
    activation: str = "id"


@dataclass
class Architecture:
    neurons: list[Neuron]
    edges: list[tuple[str, str]]

    def __post_init__(self):
        self._by_id = {n.id: n for n in self.neurons}
        self._preds: dict[str, list[str]] = {n.id: [] for n in self.neurons}
        for src, dst in self.edges:
            if dst in self._preds:
                self._preds[dst].append(src)
        self._order: Optional[list[str]] = None

    def neuron(self, nid: str) -> Neuron:
        return self._by_id[nid]

    @property
    def inputs(self) -> list[str]:
        return [n.id for n in self.neurons if n.role == "input"]

    @property
    def outputs(self) -> list[str]:
        return [n.id for n in self.neurons if n.role == "output"]

    @property
    def non_inputs(self) -> list[str]:
        return [n.id for n in self.neurons if n.role != "input"]

    @property
    def edge_ids(self) -> list[str]:
        return [edge_id(s, d) for s, d in self.edges]

    def predecessors(self, nid: str) -> list[str]:
        return self._preds[nid]

    def topological_order(self) -> list[str]:
        if self._order is None:
            ts = graphlib.TopologicalSorter({n.id: self._preds[n.id] for n in self.neurons})
            try:
                self._order = list(ts.static_order())
            except graphlib.CycleError as exc:
                raise ValidationError(f"architecture has a cycle: {exc.args[1]}") from None
        return self._order

    def validate(self, sig: Signature = DEFAULT_SIGNATURE) -> None:
        if len(self._by_id) != len(self.neurons):
            raise ValidationError("duplicate neuron id")
        seen = set()
        for src, dst in self.edges:
            if src not in self._by_id or dst not in self._by_id:
                raise ValidationError(f"edge {edge_id(src, dst)} references an unknown neuron")
            if (src, dst) in seen:
                raise ValidationError(f"duplicate edge {edge_id(src, dst)}")
            seen.add((src, dst))
            if self._by_id[dst].role == "input":
                raise ValidationError(f"input neuron {dst} has an incoming edge")
            if self._by_id[src].role == "output":
                raise ValidationError(f"output neuron {src} has an outgoing edge")
        for n in self.neurons:
            if n.role not in ROLES:
                raise ValidationError(f"neuron {n.id} has unknown role {n.role!r}")
            if n.role != "input":
                sig[n.activation]
        self.topological_order()


@dataclass
class DataPoint:
    inputs: dict[str, Fraction]
    outputs: dict[str, Fraction]


@dataclass(frozen=True)
class SymbolicWeight:
    """A real weight given by a closed term, e.g. ``-(f(0))``."""

    term: Term


Weight = Union[Fraction, SymbolicWeight, RatInterval]


@dataclass
class WeightAssignment:
    w: dict[str, Weight] = field(default_factory=dict)
    b: dict[str, Weight] = field(default_factory=dict)

    def weight(self, eid: str) -> Weight:
        return self.w.get(eid, Fraction(1))

    def bias(self, nid: str) -> Weight:
        return self.b.get(nid, Fraction(0))


def _weight_exact(v: Weight, sig: Signature) -> Fraction:
    if isinstance(v, SymbolicWeight):
        return eval_term_exact(v.term, {}, sig)
    if isinstance(v, RatInterval):
        if not v.is_point:
            raise EtrnnError("interval weight in exact evaluation")
        return v.lo
    return v


def _weight_interval(v: Weight, sig: Signature, depth: int) -> RatInterval:
    if isinstance(v, SymbolicWeight):
        return eval_term_interval(v.term, {}, sig, depth)
    if isinstance(v, RatInterval):
        return v
    return RatInterval.point(v)


class Cost:
    """Cost expression over ``out_k`` / ``target_k`` slots (k = 1..m, output order)."""

    def __init__(self, expr: Optional[Term] = None):
        self.expr = expr

    @property
    def is_squared_error(self) -> bool:
        return self.expr is None

    @staticmethod
    def squared_error_term(m: int) -> Term:
        total: Optional[Term] = None
        for k in range(1, m + 1):
            diff = Add(Var(f"out_{k}"), Neg(Var(f"target_{k}")))
            total = Mul(diff, diff) if total is None else Add(total, Mul(diff, diff))
        return total if total is not None else Const(0)

    def exact(self, outs: list[Fraction], targets: list[Fraction], sig: Signature) -> Fraction:
        if self.expr is None:
            return sum(((o - t) ** 2 for o, t in zip(outs, targets)), Fraction(0))
        env = _slots(outs, targets)
        return eval_term_exact(self.expr, env, sig)

    def interval(self, outs: list[RatInterval], targets: list[Fraction], sig: Signature,
                 depth: int) -> RatInterval:
        if self.expr is None:
            total = RatInterval.point(0)
            for o, t in zip(outs, targets):
                total = iv_add(total, iv_sqr(iv_sub(o, RatInterval.point(t))))
            return total
        env = _slots(outs, [RatInterval.point(t) for t in targets])
        return eval_term_interval(self.expr, env, sig, depth)

    def validate(self, m: int) -> None:
        if self.expr is None:
            return
        allowed = {f"out_{k}" for k in range(1, m + 1)} | {f"target_{k}" for k in range(1, m + 1)}
        bad = [v for v in term_variables(self.expr) if v not in allowed]
        if bad:
            raise ValidationError(f"cost references unknown slots {bad}")

    def to_json(self) -> dict:
        if self.expr is None:
            return {"kind": "squared_error"}
        return {"kind": "expr", "expr": render_term(self.expr)}

    @classmethod
    def from_json(cls, data: Mapping, sig: Signature = DEFAULT_SIGNATURE) -> "Cost":
        if data["kind"] == "squared_error":
            return cls()
        return cls(parse_term(data["expr"], sig))


def _slots(outs, targets) -> dict:
    env = {f"out_{k}": v for k, v in enumerate(outs, start=1)}
    env.update({f"target_{k}": v for k, v in enumerate(targets, start=1)})
    return env


@dataclass
class TrainingInstance:
    arch: Architecture
    active_edges: set[str]
    active_neurons: set[str]
    data_points: list[DataPoint]
    cost: Cost = field(default_factory=Cost)
    prec: str = "eq"
    delta: Fraction = Fraction(0)
    meta: dict = field(default_factory=dict)

    def validate(self, sig: Signature = DEFAULT_SIGNATURE) -> None:
        self.arch.validate(sig)
        eids = set(self.arch.edge_ids)
        if not self.active_edges <= eids:
            raise ValidationError(f"unknown active edges {sorted(self.active_edges - eids)}")
        if not self.active_neurons <= set(self.arch.non_inputs):
            raise ValidationError("active neurons must be non-input neurons")
        if self.prec not in PRECS:
            raise ValidationError(f"prec must be one of {PRECS}")
        ins, outs = set(self.arch.inputs), set(self.arch.outputs)
        for i, d in enumerate(self.data_points):
            if set(d.inputs) != ins or set(d.outputs) != outs:
                raise ValidationError(f"data point {i} does not cover exactly the inputs and outputs")
        self.cost.validate(len(self.arch.outputs))


class Verdict(enum.Enum):
    CERTIFIED_TRUE = "CertifiedTrue"
    CERTIFIED_FALSE = "CertifiedFalse"
    UNKNOWN = "Unknown"

    @property
    def exit_code(self) -> int:
        return {"CertifiedTrue": 0, "CertifiedFalse": 1, "Unknown": 2}[self.value]


def _plan(arch: Architecture, wa: WeightAssignment, resolve) -> list:
    """Topologically ordered (neuron, activation, bias, [(pred, weight)]) with resolved parameters."""
    plan = []
    for v in arch.topological_order():
        n = arch.neuron(v)
        if n.role == "input":
            plan.append((v, None, None, None))
            continue
        plan.append((v, n.activation, resolve(wa.bias(v)),
                     [(u, resolve(wa.weight(edge_id(u, v)))) for u in arch.predecessors(v)]))
    return plan


def _run_exact(plan, d: DataPoint, sig: Signature) -> dict[str, Fraction]:
    g: dict[str, Fraction] = {}
    for v, act, bias, preds in plan:
        if act is None:
            g[v] = Fraction(d.inputs[v])
            continue
        total = bias
        for u, w in preds:
            total += g[u] if w == 1 else w * g[u]
        g[v] = sig[act].exact(total)
    return g


def _run_interval(plan, d: DataPoint, depth: int, sig: Signature) -> dict[str, RatInterval]:
    g: dict[str, RatInterval] = {}
    for v, act, bias, preds in plan:
        if act is None:
            g[v] = RatInterval.point(d.inputs[v])
            continue
        total = bias
        for u, w in preds:
            total = iv_add(total, iv_mul(w, g[u]))
        g[v] = sig[act].interval(total, depth)
    return g


def neural_eval_exact(arch: Architecture, wa: WeightAssignment, d: DataPoint,
                      sig: Signature = DEFAULT_SIGNATURE) -> dict[str, Fraction]:
    return _run_exact(_plan(arch, wa, lambda v: _weight_exact(v, sig)), d, sig)


def neural_eval_interval(arch: Architecture, wa: WeightAssignment, d: DataPoint, depth: int = 30,
                         sig: Signature = DEFAULT_SIGNATURE) -> dict[str, RatInterval]:
    return _run_interval(_plan(arch, wa, lambda v: _weight_interval(v, sig, depth)), d, depth, sig)


def check_fixed(inst: TrainingInstance, wa: WeightAssignment) -> None:
    """Inactive edges must carry weight 1 and inactive neurons bias 0."""
    for eid, v in wa.w.items():
        if eid not in inst.active_edges and not (isinstance(v, Fraction) and v == 1):
            raise MalformedSolutionError(f"inactive edge {eid} must have weight 1")
    for nid, v in wa.b.items():
        if nid not in inst.active_neurons and not (isinstance(v, Fraction) and v == 0):
            raise MalformedSolutionError(f"inactive neuron {nid} must have bias 0")
    missing = sorted(e for e in inst.active_edges if e not in wa.w)
    missing += sorted(n for n in inst.active_neurons if n not in wa.b)
    if missing:
        raise MalformedSolutionError(f"missing active parameters: {missing}")


def total_error(inst: TrainingInstance, wa: WeightAssignment, mode: str = "exact", depth: int = 30,
                sig: Signature = DEFAULT_SIGNATURE) -> Union[Fraction, RatInterval]:
    outs = inst.arch.outputs
    if mode == "exact":
        total = Fraction(0)
        plan = _plan(inst.arch, wa, lambda v: _weight_exact(v, sig))
        for d in inst.data_points:
            g = _run_exact(plan, d, sig)
            total += inst.cost.exact([g[o] for o in outs], [d.outputs[o] for o in outs], sig)
        return total
    if mode != "interval":
        raise EtrnnError(f"unknown mode {mode!r}")
    acc = RatInterval.point(0)
    plan = _plan(inst.arch, wa, lambda v: _weight_interval(v, sig, depth))
    for d in inst.data_points:
        g = _run_interval(plan, d, depth, sig)
        acc = iv_add(acc, inst.cost.interval([g[o] for o in outs], [d.outputs[o] for o in outs], sig, depth))
    return acc


def _compare_exact(value: Fraction, prec: str, delta: Fraction) -> bool:
    if prec == "eq":
        return value == delta
    if prec == "leq":
        return value <= delta
    return value < delta


def verdict_for_enclosure(enc: RatInterval, prec: str, delta: Fraction) -> Verdict:
    if prec == "lt":
        if enc.hi < delta:
            return Verdict.CERTIFIED_TRUE
        if enc.lo >= delta:
            return Verdict.CERTIFIED_FALSE
    elif prec == "leq":
        if enc.hi <= delta:
            return Verdict.CERTIFIED_TRUE
        if enc.lo > delta:
            return Verdict.CERTIFIED_FALSE
    else:
        # equality is never certified from an enclosure of positive width
        if enc.lo > delta or enc.hi < delta:
            return Verdict.CERTIFIED_FALSE
    return Verdict.UNKNOWN


def verify(inst: TrainingInstance, wa: WeightAssignment, mode: str = "exact", depth: int = 30,
           sig: Signature = DEFAULT_SIGNATURE) -> Verdict:
    check_fixed(inst, wa)
    if mode == "exact":
        value = total_error(inst, wa, "exact", depth, sig)
        return Verdict.CERTIFIED_TRUE if _compare_exact(value, inst.prec, inst.delta) else Verdict.CERTIFIED_FALSE
    return verdict_for_enclosure(total_error(inst, wa, "interval", depth, sig), inst.prec, inst.delta)


def perturbation_box(wa: WeightAssignment, active_edges, active_neurons, radius: Fraction) -> WeightAssignment:
    """Replace every active rational parameter by the interval of the given radius around it."""
    def widen(v: Weight) -> Weight:
        if isinstance(v, Fraction):
            return RatInterval(v - radius, v + radius)
        return v
    return WeightAssignment({k: widen(v) if k in active_edges else v for k, v in wa.w.items()},
                            {k: widen(v) if k in active_neurons else v for k, v in wa.b.items()})


def stable_radius(inst: TrainingInstance, wa: WeightAssignment, depth: int = 30, max_k: int = 64,
                  sig: Signature = DEFAULT_SIGNATURE) -> Optional[int]:
    """Least ``k <= max_k`` such that the whole box of radius ``2^-k`` around the
    active parameters is certified; every point of that box then verifies at ``depth``."""
    if inst.prec == "eq":
        return None
    for k in range(max_k + 1):
        box = perturbation_box(wa, inst.active_edges, inst.active_neurons, Fraction(1, 2 ** k))
        enc = total_error(inst, box, "interval", depth, sig)
        if verdict_for_enclosure(enc, inst.prec, inst.delta) is Verdict.CERTIFIED_TRUE:
            return k
    return None


# -- JSON ---------------------------------------------------------------------

_RAT = {"type": "string", "pattern": r"^-?\d+(/\d+)?$"}

INSTANCE_SCHEMA = {
    "type": "object",
    "required": ["neurons", "edges", "data_points", "cost", "prec", "delta", "meta"],
    "additionalProperties": False,
    "properties": {
        "neurons": {"type": "array", "items": {
            "type": "object", "required": ["id", "role", "activation"], "additionalProperties": False,
            "properties": {"id": {"type": "string"}, "role": {"enum": list(ROLES)},
                           "activation": {"type": "string"}}}},
        "edges": {"type": "array", "items": {
            "type": "object", "required": ["from", "to", "active"], "additionalProperties": False,
            "properties": {"from": {"type": "string"}, "to": {"type": "string"}, "active": {"type": "boolean"}}}},
        "active_neurons": {"type": "array", "items": {"type": "string"}},
        "data_points": {"type": "array", "items": {
            "type": "object", "required": ["inputs", "outputs"], "additionalProperties": False,
            "properties": {"inputs": {"type": "object", "additionalProperties": _RAT},
                           "outputs": {"type": "object", "additionalProperties": _RAT}}}},
        "cost": {"oneOf": [
            {"type": "object", "required": ["kind"], "additionalProperties": False,
             "properties": {"kind": {"const": "squared_error"}}},
            {"type": "object", "required": ["kind", "expr"], "additionalProperties": False,
             "properties": {"kind": {"const": "expr"}, "expr": {"type": "string"}}}]},
        "prec": {"enum": list(PRECS)},
        "delta": _RAT,
        "meta": {"type": "object"},
    },
}

_WEIGHT = {"oneOf": [_RAT, {"type": "object", "required": ["term"], "additionalProperties": False,
                            "properties": {"term": {"type": "string"}}}]}

WEIGHTS_SCHEMA = {
    "type": "object",
    "required": ["w", "b"],
    "additionalProperties": False,
    "properties": {"w": {"type": "object", "additionalProperties": _WEIGHT},
                   "b": {"type": "object", "additionalProperties": _WEIGHT}},
}


_VALIDATORS: dict[str, Callable] = {}


def _check_schema(data, schema, what: str) -> None:
    if what not in _VALIDATORS:
        _VALIDATORS[what] = fastjsonschema.compile(schema)
    try:
        _VALIDATORS[what](data)
    except fastjsonschema.JsonSchemaValueException as exc:
        path = "/".join(str(p) for p in exc.path[1:])
        raise ValidationError(f"{what} schema error at /{path}: {exc.message}") from None


def _rat_map(m: Mapping[str, Fraction]) -> dict[str, str]:
    return {k: format_rational(v) for k, v in m.items()}


def instance_to_json(inst: TrainingInstance) -> dict:
    out = {
        "neurons": [{"id": n.id, "role": n.role, "activation": n.activation} for n in inst.arch.neurons],
        "edges": [{"from": s, "to": d, "active": edge_id(s, d) in inst.active_edges} for s, d in inst.arch.edges],
        "data_points": [{"inputs": _rat_map(d.inputs), "outputs": _rat_map(d.outputs)} for d in inst.data_points],
        "cost": inst.cost.to_json(),
        "prec": inst.prec,
        "delta": format_rational(inst.delta),
        "meta": inst.meta,
    }
    if inst.active_neurons:
        out["active_neurons"] = sorted(inst.active_neurons)
    return out


def instance_from_json(data: Mapping, sig: Signature = DEFAULT_SIGNATURE) -> TrainingInstance:
    _check_schema(data, INSTANCE_SCHEMA, "instance")
    arch = Architecture([Neuron(n["id"], n["role"], n["activation"]) for n in data["neurons"]],
                        [(e["from"], e["to"]) for e in data["edges"]])
    inst = TrainingInstance(
        arch=arch,
        active_edges={edge_id(e["from"], e["to"]) for e in data["edges"] if e["active"]},
        active_neurons=set(data.get("active_neurons", [])),
        data_points=[DataPoint({k: to_rational(v) for k, v in d["inputs"].items()},
                               {k: to_rational(v) for k, v in d["outputs"].items()}) for d in data["data_points"]],
        cost=Cost.from_json(data["cost"], sig),
        prec=data["prec"],
        delta=to_rational(data["delta"]),
        meta=dict(data["meta"]),
    )
    inst.validate(sig)
    return inst


def _weight_to_json(v: Weight):
    if isinstance(v, SymbolicWeight):
        return {"term": render_term(v.term)}
    if isinstance(v, RatInterval):
        raise EtrnnError("interval weights are not serializable")
    return format_rational(v)


def weights_to_json(wa: WeightAssignment) -> dict:
    return {"w": {k: _weight_to_json(v) for k, v in wa.w.items()},
            "b": {k: _weight_to_json(v) for k, v in wa.b.items()}}


def weights_from_json(data: Mapping, sig: Signature = DEFAULT_SIGNATURE) -> WeightAssignment:
    _check_schema(data, WEIGHTS_SCHEMA, "weights")

    def load(v) -> Weight:
        if isinstance(v, dict):
            term = parse_term(v["term"], sig)
            if term_variables(term):
                raise ValidationError("symbolic weights must be closed terms")
            return SymbolicWeight(term)
        return to_rational(v)

    return WeightAssignment({k: load(v) for k, v in data["w"].items()},
                            {k: load(v) for k, v in data["b"].items()})
