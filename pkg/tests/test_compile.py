import random
from fractions import Fraction

import pytest

from corpus import TEST_SIG, planted_system
from etrnn.compile import (
    GadgetIndex, compile_system, preprocess, size_report, witness_backward, witness_forward,
)
from etrnn.errors import MalformedSolutionError, ValidationError
from etrnn.network import Verdict, WeightAssignment, verify
from etrnn.normalize import (
    AddConstraint, ConstraintSystem, FunConstraint, InvConstraint, UnitConstraint, check_system,
)

F = Fraction


def test_preprocess_self_inversion():
    sys, sched = preprocess(ConstraintSystem([InvConstraint("x", "x")]))
    c = sys.constraints
    z, u, y = c[0].x, c[1].y, c[2].x
    assert c == [AddConstraint(z, z, z), AddConstraint("x", u, z), AddConstraint(y, u, z), InvConstraint("x", y)]
    ext = sched.evaluate({"x": F(3)})
    assert (ext.values[z], ext.values[u], ext.values[y]) == (0, -3, 3)


def test_preprocess_without_inversions_is_identity():
    sys = ConstraintSystem([UnitConstraint("x"), FunConstraint("y", "relu", "x")])
    assert preprocess(sys)[0].constraints == sys.constraints


def test_preprocess_duplicates_function_argument():
    sys, sched = preprocess(ConstraintSystem([InvConstraint("a", "b"), FunConstraint("x", "relu", "b")]))
    fun = sys.constraints[-1]
    assert isinstance(fun, FunConstraint) and fun.y != "b"
    ext = sched.evaluate({"a": F(2), "b": F(-1, 2), "x": F(0)})
    assert all(check_system(sys, ext))


def test_unit_gadget_size():
    inst, index = compile_system(ConstraintSystem([UnitConstraint("x")]))
    ids = {n.id for n in inst.arch.neurons}
    assert ids == {"i:x", "j:x", "o:C1", "h:C1:1", "q:C1:1", "p:C1:1"}
    # (i,j), (j,h), (h,o), (p,q), (q,h)
    assert len(inst.arch.edges) == 5
    assert len(inst.data_points) == 1


def test_self_inversion_rejected():
    with pytest.raises(ValidationError):
        compile_system(ConstraintSystem([InvConstraint("x", "x")]))


def test_forward_unit():
    inst, index = compile_system(ConstraintSystem([UnitConstraint("x")]))
    wa = witness_forward(index, {"x": F(1)})
    assert wa.w["i:x->j:x"] == 1 and wa.w["p:C1:1->q:C1:1"] == -1


def test_forward_inversion():
    inst, index = compile_system(ConstraintSystem([InvConstraint("x", "y")]))
    wa = witness_forward(index, {"x": F(2), "y": F(-1, 2)}, inst)
    assert wa.w["m:C1->h:C1:2"] == -2
    assert wa.w["p:C1:2->q:C1:2"] == -1
    assert wa.w["p:C1:1->q:C1:1"] == -2
    assert verify(inst, wa) is Verdict.CERTIFIED_TRUE


def test_forward_correction_weight_term():
    sys = ConstraintSystem([InvConstraint("a", "b"), FunConstraint("x", "relu", "y")])
    inst, index = compile_system(sys)
    wa = witness_forward(index, {"a": F(1), "b": F(-1), "x": F(0), "y": F(0)}, inst)
    from etrnn.evaluate import eval_term_exact
    assert eval_term_exact(wa.w["r:C2->t:C2"].term, {}) == 0
    assert verify(inst, wa) is Verdict.CERTIFIED_TRUE


def test_backward():
    inst, index = compile_system(ConstraintSystem([UnitConstraint("x")]))
    assert witness_backward(index, WeightAssignment({"i:x->j:x": F(5, 3)})) == {"x": F(5, 3)}
    with pytest.raises(MalformedSolutionError):
        witness_backward(index, WeightAssignment({}))


def test_unit_solution_forces_one():
    inst, index = compile_system(ConstraintSystem([UnitConstraint("x")]))
    for v in (F(0), F(2), F(-1), F(1, 2)):
        wa = witness_forward(index, {"x": v}, inst)
        assert verify(inst, wa) is Verdict.CERTIFIED_FALSE
    for pq in (F(-3), F(0), F(7)):
        wa = witness_forward(index, {"x": F(1)}, inst)
        wa.w["p:C1:1->q:C1:1"] = pq
        if verify(inst, wa) is Verdict.CERTIFIED_TRUE:
            assert witness_backward(index, wa) == {"x": 1}


def test_sidecar_round_trip():
    sys, sched = preprocess(ConstraintSystem([InvConstraint("x", "x"), FunConstraint("y", "abs", "x")]))
    inst, index = compile_system(sys)
    index.schedule = sched
    again = GadgetIndex.from_json(index.to_json())
    assert again.to_json() == index.to_json()


def _planted(seed):
    sys, s = planted_system(seed, 4 + seed % 10)
    sys, sched = preprocess(sys)
    s = sched.evaluate(s, TEST_SIG).values
    return sys, {x: s[x] for x in sys.variables}


def test_corpus_round_trip_and_sizes():
    for seed in range(60):
        sys, s = _planted(seed)
        inst, index = compile_system(sys)
        inst.validate(TEST_SIG)
        wa = witness_forward(index, s, inst)
        assert verify(inst, wa, sig=TEST_SIG) is Verdict.CERTIFIED_TRUE
        assert witness_backward(index, wa) == s
        n_inv = sum(isinstance(c, InvConstraint) for c in sys.constraints)
        rep = size_report(inst, index)
        assert rep["variable_neurons"] == 2 * len(sys.variables)
        assert rep["max_gadget_neurons"] <= 10
        assert rep["e_neurons"] == n_inv
        assert rep["inversion_data_points"] == 2 * n_inv


def test_soundness_on_mutated_weights():
    rng = random.Random(12)
    for seed in range(30):
        sys, s = _planted(seed)
        inst, index = compile_system(sys)
        wa = witness_forward(index, s, inst)
        for _ in range(5):
            eid = rng.choice(sorted(inst.active_edges))
            if not isinstance(wa.w[eid], Fraction):
                continue
            mutated = WeightAssignment(dict(wa.w), dict(wa.b))
            mutated.w[eid] = wa.w[eid] + rng.choice([F(0), F(1), F(-1, 2)])
            if verify(inst, mutated, sig=TEST_SIG) is Verdict.CERTIFIED_TRUE:
                assert all(check_system(sys, witness_backward(index, mutated), TEST_SIG))
