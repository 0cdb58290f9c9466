import json
import random
from fractions import Fraction

import pytest

from etrnn.errors import MalformedSolutionError, ValidationError
from etrnn.formula import parse_term
from etrnn.intervals import RatInterval
from etrnn.network import (
    Architecture, Cost, DataPoint, Neuron, SymbolicWeight, TrainingInstance, Verdict, WeightAssignment,
    instance_from_json, instance_to_json, neural_eval_exact, neural_eval_interval, perturbation_box,
    stable_radius, total_error, verdict_for_enclosure, verify, weights_from_json, weights_to_json,
)

F = Fraction


def chain(act="id"):
    return Architecture([Neuron("i", "input"), Neuron("j", "output", act)], [("i", "j")])


def test_single_edge():
    g = neural_eval_exact(chain(), WeightAssignment({"i->j": F(3)}, {"j": F(0)}), DataPoint({"i": F(2)}, {"j": F(0)}))
    assert g["j"] == 6


def test_two_predecessors_with_bias():
    arch = Architecture([Neuron("u1", "input"), Neuron("u2", "input"), Neuron("v", "output")],
                        [("u1", "v"), ("u2", "v")])
    g = neural_eval_exact(arch, WeightAssignment({}, {"v": F(1)}), DataPoint({"u1": F(2), "u2": F(5)}, {"v": F(0)}))
    assert g["v"] == 8


def test_relu_neuron():
    g = neural_eval_exact(chain("relu"), WeightAssignment({"i->j": F(-5, 4)}), DataPoint({"i": F(2)}, {"j": F(0)}))
    assert g["j"] == 0


def test_interval_examples():
    d0 = DataPoint({"i": F(0)}, {"j": F(0)})
    assert F(1, 2) in neural_eval_interval(chain("sigmoid"), WeightAssignment(), d0, 10)["j"]
    g = neural_eval_interval(chain("exp"), WeightAssignment(), DataPoint({"i": F(1)}, {"j": F(0)}), 30)["j"]
    assert g.width <= F(2) ** -20 and F(2718281, 10 ** 6) < g.hi and g.lo < F(2718282, 10 ** 6)


def random_network(rng, acts=("id", "relu", "abs")):
    n_in, n_hidden, n_out = rng.randint(1, 3), rng.randint(0, 5), rng.randint(1, 3)
    neurons = [Neuron(f"i{k}", "input") for k in range(n_in)]
    neurons += [Neuron(f"h{k}", "hidden", rng.choice(acts)) for k in range(n_hidden)]
    neurons += [Neuron(f"o{k}", "output", rng.choice(acts)) for k in range(n_out)]
    edges = []
    for idx, n in enumerate(neurons):
        if n.role == "input":
            continue
        for m in neurons[:idx]:
            if m.role != "output" and rng.random() < 0.6:
                edges.append((m.id, n.id))
    arch = Architecture(neurons, edges)
    wa = WeightAssignment({e: F(rng.randint(-6, 6), rng.randint(1, 3)) for e in arch.edge_ids},
                          {v: F(rng.randint(-3, 3), 2) for v in arch.non_inputs})
    d = DataPoint({v: F(rng.randint(-4, 4), rng.randint(1, 3)) for v in arch.inputs},
                  {v: F(rng.randint(-2, 2)) for v in arch.outputs})
    return arch, wa, d


def test_exact_in_interval_and_order_independent():
    rng = random.Random(5)
    for _ in range(500):
        arch, wa, d = random_network(rng)
        exact = neural_eval_exact(arch, wa, d)
        iv = neural_eval_interval(arch, wa, d, 10)
        assert all(iv[v].is_point and exact[v] in iv[v] for v in exact)
        shuffled = Architecture(list(reversed(arch.neurons)), list(reversed(arch.edges)))
        assert neural_eval_exact(shuffled, wa, d) == exact


def test_cycle_rejected():
    arch = Architecture([Neuron("a", "hidden"), Neuron("b", "hidden")], [("a", "b"), ("b", "a")])
    with pytest.raises(ValidationError):
        arch.validate()


def simple_instance(prec="eq", delta=F(0), act="id"):
    arch = chain(act)
    return TrainingInstance(arch, {"i->j"}, set(), [DataPoint({"i": F(1)}, {"j": F(1)})], Cost(), prec, delta)


def test_total_error():
    inst = simple_instance()
    assert total_error(inst, WeightAssignment({"i->j": F(1)})) == 0
    assert total_error(inst, WeightAssignment({"i->j": F(4)})) == 9
    assert 9 in total_error(inst, WeightAssignment({"i->j": F(4)}), "interval")


def test_custom_cost_expression():
    inst = simple_instance()
    inst.cost = Cost(parse_term("abs(out_1 - target_1)"))
    assert total_error(inst, WeightAssignment({"i->j": F(4)})) == 3


def test_verify_examples():
    inst = simple_instance()
    assert verify(inst, WeightAssignment({"i->j": F(1)})) is Verdict.CERTIFIED_TRUE
    assert verdict_for_enclosure(RatInterval(F(4), F(5)), "lt", F(1)) is Verdict.CERTIFIED_FALSE
    assert verdict_for_enclosure(RatInterval(F(0), F(2) ** -40), "eq", F(0)) is Verdict.UNKNOWN
    assert verdict_for_enclosure(RatInterval(F(0), F(1, 2)), "leq", F(1, 2)) is Verdict.CERTIFIED_TRUE


def test_fixed_weight_violation():
    inst = simple_instance()
    inst.active_edges = set()
    with pytest.raises(MalformedSolutionError):
        verify(inst, WeightAssignment({"i->j": F(2)}))
    with pytest.raises(MalformedSolutionError):
        verify(simple_instance(), WeightAssignment({}, {"j": F(1)}))


def test_lt_stability_under_depth():
    inst = simple_instance("lt", F(1, 100), "exp")
    inst.data_points = [DataPoint({"i": F(0)}, {"j": F(1)})]
    wa = WeightAssignment({"i->j": F(1, 1000)})
    first = None
    for d in range(0, 40):
        v = verify(inst, wa, "interval", d)
        if v is Verdict.CERTIFIED_TRUE and first is None:
            first = d
        if first is not None:
            assert v is not Verdict.CERTIFIED_FALSE
    assert first is not None


def test_symbolic_weight_and_json_round_trip():
    inst = simple_instance("leq", F(1, 3), "relu")
    inst.meta = {"note": "x"}
    doc = instance_to_json(inst)
    text = json.dumps(doc, sort_keys=True)
    again = instance_to_json(instance_from_json(json.loads(text)))
    assert json.dumps(again, sort_keys=True) == text
    wa = WeightAssignment({"i->j": SymbolicWeight(parse_term("-(relu(0)) + 1"))}, {"j": F(0)})
    back = weights_from_json(weights_to_json(wa))
    assert total_error(inst, back) == 0


def test_schema_errors():
    doc = instance_to_json(simple_instance())
    doc["prec"] = "gt"
    with pytest.raises(ValidationError):
        instance_from_json(doc)
    doc = instance_to_json(simple_instance())
    doc["delta"] = 0.5
    with pytest.raises(ValidationError):
        instance_from_json(doc)


def test_perturbation_openness():
    inst = simple_instance("lt", F(1, 10), "sigmoid")
    inst.data_points = [DataPoint({"i": F(1)}, {"j": F(1, 2)})]
    wa = WeightAssignment({"i->j": F(0)})
    depth = 30
    k = stable_radius(inst, wa, depth)
    assert k is not None
    rng = random.Random(9)
    r = F(1, 2 ** k)
    for _ in range(100):
        w = F(rng.randint(-10 ** 6, 10 ** 6), 10 ** 6) * r
        assert verify(inst, WeightAssignment({"i->j": w}), "interval", depth) is Verdict.CERTIFIED_TRUE
    box = perturbation_box(wa, inst.active_edges, set(), r)
    assert isinstance(box.w["i->j"], RatInterval)
