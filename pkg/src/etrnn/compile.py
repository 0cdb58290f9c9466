"""INV-FLAT constraint systems to neural-network training instances, with witness maps.

Layout per variable ``x``: input ``i:x`` -> hidden ``j:x`` (the edge weight is
the value of ``x``).  Per constraint ``C`` and position ``k``: ``p:C:k -> q:C:k
-> h:C:k -> o:C`` plus ``j:x_k -> h:C:k``.  An inversion ``C = Inv(x, y)``
reads ``y`` through a private neuron ``m:C`` fed by ``j:y`` and the extra input
``e:C``; the active edge ``m:C -> h:C:2`` carries ``-x``.  Keeping ``e:C`` off
``j:y`` matters: otherwise the probe data points of ``C`` set ``j:y = 1`` and
disturb every other constraint that mentions ``y``.

When the system has an inversion, each function constraint ``C'`` also gets a
correction path ``r:C' -> t:C' -> o:C'`` whose trained weight absorbs
``f(0)``, the value the ``f`` neuron emits on inversion probe data points.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional

from . import __version__
from .errors import MalformedSolutionError, ValidationError
from .formula import Apply, Const, Neg, Var
from .network import (
    Architecture, Cost, DataPoint, Neuron, SymbolicWeight, TrainingInstance, WeightAssignment, edge_id,
)
from .normalize import (
    AddConstraint, ConstraintSystem, FunConstraint, InvConstraint, NameSupply, UnitConstraint,
)
from .schedule import Schedule


def positions(c) -> list[str]:
    """Variables of ``c`` by position (x1 = 1, x1+x2+x3 = 0, x1*x2+1 = 0, x1+f(x2) = 0)."""
    if isinstance(c, UnitConstraint):
        return [c.x]
    if isinstance(c, AddConstraint):
        return [c.x, c.y, c.z]
    return [c.x, c.y]


def kind_of(c) -> str:
    return {UnitConstraint: "unit", AddConstraint: "add", InvConstraint: "inv", FunConstraint: "fun"}[type(c)]


# -- preprocessing ------------------------------------------------------------


def preprocess(system: ConstraintSystem, names: Optional[NameSupply] = None,
               schedule: Optional[Schedule] = None) -> tuple[ConstraintSystem, Schedule]:
    """Remove ``Inv(x, x)`` and give function constraints private copies of arguments used by inversions."""
    names = names or NameSupply(system.variables)
    schedule = schedule if schedule is not None else Schedule()
    inv_vars = {v for c in system.constraints if isinstance(c, InvConstraint) for v in c.variables}
    out, prov = [], []

    def copy_of(x: str) -> tuple[str, list]:
        z, u, y = names.fresh("pz"), names.fresh("pu"), names.fresh("py")
        schedule.define(z, Const(0))
        schedule.define(u, Neg(Var(x)))
        schedule.define(y, Var(x))
        return y, [AddConstraint(z, z, z), AddConstraint(x, u, z), AddConstraint(y, u, z)]

    for c, src in zip(system.constraints, system.provenance):
        if isinstance(c, InvConstraint) and c.x == c.y:
            y, gadget = copy_of(c.x)
            new = gadget + [InvConstraint(c.x, y)]
        elif isinstance(c, FunConstraint) and c.y in inv_vars:
            y, gadget = copy_of(c.y)
            new = gadget + [FunConstraint(c.x, c.fname, y)]
        else:
            new = [c]
        out.extend(new)
        prov.extend([src] * len(new))
    return ConstraintSystem(out, prov), schedule


def is_preprocessed(system: ConstraintSystem) -> bool:
    return not any(isinstance(c, InvConstraint) and c.x == c.y for c in system.constraints)


# -- gadget index ---------------------------------------------------------------


@dataclass
class ConstraintGadget:
    cid: str
    kind: str
    variables: list[str]
    fname: Optional[str]
    o: str
    h: list[str]
    q: list[str]
    p: list[str]
    e: Optional[str] = None
    m: Optional[str] = None
    r: Optional[str] = None
    t: Optional[str] = None

    @property
    def neuron_ids(self) -> list[str]:
        ids = [self.o, *self.h, *self.q, *self.p]
        return ids + [n for n in (self.e, self.m, self.r, self.t) if n is not None]

    def to_json(self) -> dict:
        out = {"id": self.cid, "kind": self.kind, "variables": self.variables, "o": self.o,
               "h": self.h, "q": self.q, "p": self.p}
        for key in ("fname", "e", "m", "r", "t"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        return out

    @classmethod
    def from_json(cls, d: Mapping) -> "ConstraintGadget":
        return cls(d["id"], d["kind"], list(d["variables"]), d.get("fname"), d["o"], list(d["h"]),
                   list(d["q"]), list(d["p"]), d.get("e"), d.get("m"), d.get("r"), d.get("t"))


@dataclass
class GadgetIndex:
    i: dict[str, str]
    j: dict[str, str]
    constraints: list[ConstraintGadget]
    corrections: bool
    schedule: Schedule = field(default_factory=Schedule)

    @property
    def variables(self) -> list[str]:
        return list(self.i)

    def to_json(self) -> dict:
        return {
            "variables": {x: {"i": self.i[x], "j": self.j[x]} for x in self.i},
            "constraints": [g.to_json() for g in self.constraints],
            "corrections": self.corrections,
            "schedule": self.schedule.to_json(),
        }

    @classmethod
    def from_json(cls, data: Mapping, sig=None) -> "GadgetIndex":
        from .formula import DEFAULT_SIGNATURE
        variables = data["variables"]
        return cls({x: v["i"] for x, v in variables.items()}, {x: v["j"] for x, v in variables.items()},
                   [ConstraintGadget.from_json(g) for g in data["constraints"]], bool(data["corrections"]),
                   Schedule.from_json(data.get("schedule", []), sig or DEFAULT_SIGNATURE))


# -- compilation ------------------------------------------------------------------


def compile_system(system: ConstraintSystem, corrections: bool = True) -> tuple[TrainingInstance, GadgetIndex]:
    if not is_preprocessed(system):
        raise ValidationError("system contains Inv(x, x); run preprocess first")
    W = system.variables
    has_inv = any(isinstance(c, InvConstraint) for c in system.constraints)
    neurons: list[Neuron] = []
    edges: list[tuple[str, str]] = []
    active: set[str] = set()

    def edge(src: str, dst: str, is_active: bool = False) -> None:
        edges.append((src, dst))
        if is_active:
            active.add(edge_id(src, dst))

    i_ids = {x: f"i:{x}" for x in W}
    j_ids = {x: f"j:{x}" for x in W}
    for x in W:
        neurons += [Neuron(i_ids[x], "input"), Neuron(j_ids[x], "hidden")]
        edge(i_ids[x], j_ids[x], True)

    gadgets: list[ConstraintGadget] = []
    for n, c in enumerate(system.constraints, start=1):
        cid = f"C{n}"
        xs = positions(c)
        fname = c.fname if isinstance(c, FunConstraint) else None
        ks = range(1, len(xs) + 1)
        g = ConstraintGadget(cid, kind_of(c), xs, fname, f"o:{cid}", [f"h:{cid}:{k}" for k in ks],
                             [f"q:{cid}:{k}" for k in ks], [f"p:{cid}:{k}" for k in ks])
        if isinstance(c, InvConstraint):
            g.e, g.m = f"e:{cid}", f"m:{cid}"
        if isinstance(c, FunConstraint) and corrections and has_inv:
            g.r, g.t = f"r:{cid}", f"t:{cid}"
        for k, x in enumerate(xs):
            act = fname if (fname is not None and k == 1) else "id"
            neurons += [Neuron(g.p[k], "input"), Neuron(g.q[k], "hidden"), Neuron(g.h[k], "hidden", act)]
            edge(g.p[k], g.q[k], True)
            edge(g.q[k], g.h[k])
            if g.m is not None and k == 1:
                neurons += [Neuron(g.e, "input"), Neuron(g.m, "hidden")]
                edge(j_ids[x], g.m)
                edge(g.e, g.m)
                edge(g.m, g.h[k], True)
            else:
                edge(j_ids[x], g.h[k])
        if g.r is not None:
            neurons += [Neuron(g.r, "input"), Neuron(g.t, "hidden")]
            edge(g.r, g.t, True)
        neurons.append(Neuron(g.o, "output"))
        for h in g.h:
            edge(h, g.o)
        if g.t is not None:
            edge(g.t, g.o)
        gadgets.append(g)

    arch = Architecture(neurons, edges)
    inputs, outputs = arch.inputs, arch.outputs
    data: list[DataPoint] = []

    d_in = {v: Fraction(0) for v in inputs}
    d_out = {v: Fraction(0) for v in outputs}
    for x in W:
        d_in[i_ids[x]] = Fraction(1)
    for g in gadgets:
        if g.kind == "inv":
            d_in[g.p[0]] = d_in[g.p[1]] = Fraction(1)
        if g.kind == "unit":
            d_out[g.o] = Fraction(1)
    data.append(DataPoint(d_in, d_out))

    for g in gadgets:
        if g.kind != "inv":
            continue
        x, y = g.variables
        for probe, (ix, iy, e, o) in ((x, (1, 0, 1, 0)), (y, (0, 1, 0, 1))):
            d_in = {v: Fraction(0) for v in inputs}
            d_out = {v: Fraction(0) for v in outputs}
            d_in[i_ids[x]], d_in[i_ids[y]], d_in[g.e] = Fraction(ix), Fraction(iy), Fraction(e)
            d_out[g.o] = Fraction(o)
            for other in gadgets:
                if other is g:
                    continue
                for k, v in enumerate(other.variables):
                    if v == probe:
                        d_in[other.p[k]] = Fraction(1)
                if other.r is not None:
                    d_in[other.r] = Fraction(1)
            data.append(DataPoint(d_in, d_out))

    n_inv = sum(g.kind == "inv" for g in gadgets)
    meta = {
        "tool": "etrnn",
        "version": __version__,
        "source_sha256": hashlib.sha256(system.to_text().encode()).hexdigest(),
        "variables": len(W),
        "constraints": len(gadgets),
        "inversions": n_inv,
        "functions": sum(g.kind == "fun" for g in gadgets),
        "neurons": len(neurons),
        "edges": len(edges),
        "data_points": len(data),
        "corrections": corrections and has_inv,
    }
    inst = TrainingInstance(arch, active, set(), data, Cost(), "eq", Fraction(0), meta)
    return inst, GadgetIndex(i_ids, j_ids, gadgets, corrections and has_inv)


# -- witness maps ---------------------------------------------------------------------


def witness_forward(index: GadgetIndex, s: Mapping[str, Fraction],
                    inst: Optional[TrainingInstance] = None) -> WeightAssignment:
    """Weights realizing the assignment ``s``; with ``inst`` given, inactive edges and biases are filled in."""
    missing = [x for x in index.variables if x not in s]
    if missing:
        raise ValidationError(f"assignment misses variables {missing}")
    w: dict = {}
    for x in index.variables:
        w[edge_id(index.i[x], index.j[x])] = Fraction(s[x])
    for g in index.constraints:
        vals = [Fraction(s[v]) for v in g.variables]
        if g.kind == "inv":
            sx, sy = vals
            w[edge_id(g.m, g.h[1])] = -sx
            w[edge_id(g.p[0], g.q[0])] = -sx
            w[edge_id(g.p[1], g.q[1])] = sx * sy
        else:
            for k, v in enumerate(vals):
                w[edge_id(g.p[k], g.q[k])] = -v
        if g.r is not None:
            w[edge_id(g.r, g.t)] = SymbolicWeight(Neg(Apply(g.fname, Const(0))))
    b: dict = {}
    if inst is not None:
        for eid in inst.arch.edge_ids:
            w.setdefault(eid, Fraction(1))
        b = {v: Fraction(0) for v in inst.arch.non_inputs}
        w = {eid: w[eid] for eid in inst.arch.edge_ids}
    return WeightAssignment(w, b)


def witness_backward(index: GadgetIndex, wa: WeightAssignment) -> dict[str, Fraction]:
    s = {}
    for x in index.variables:
        eid = edge_id(index.i[x], index.j[x])
        if eid not in wa.w:
            raise MalformedSolutionError(f"missing active weight {eid}")
        v = wa.w[eid]
        if not isinstance(v, Fraction):
            raise MalformedSolutionError(f"weight {eid} is not rational")
        s[x] = v
    return s


def size_report(inst: TrainingInstance, index: GadgetIndex) -> dict:
    per_constraint = [len(g.neuron_ids) - (1 if g.e else 0) for g in index.constraints]
    return {
        "variable_neurons": 2 * len(index.variables),
        "max_gadget_neurons": max(per_constraint, default=0),
        "e_neurons": sum(1 for g in index.constraints if g.e),
        "inversion_data_points": len(inst.data_points) - 1,
        "total_neurons": len(inst.arch.neurons),
    }
