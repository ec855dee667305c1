import dataclasses
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import cvar_lp
from resilient_flow.instances import make_instance, toy_instance
from resilient_flow.model import (DduMatrix, FirstStageDesign, InvalidProbability, classify_joint_scenarios,
                                  cvar_of_costs, ddu_k_max, ddu_probability, tail_count, validate_instance)
from resilient_flow.replica import replica_instance


def test_replica_shape_and_library():
    inst = replica_instance()
    assert (inst.n_nodes, inst.n_arcs, inst.n_commodities, inst.n_scenarios) == (16, 28, 4, 9)
    assert validate_instance(inst) == []
    assert inst.base_prob.tolist() == [0.15, 0.20, 0.15, 0.10, 0.10, 0.08, 0.10, 0.07, 0.05]
    assert inst.shortage_penalty.tolist() == [25.0, 40.0, 50.0, 35.0]


def test_mass_preservation_violation():
    inst = toy_instance()
    D = inst.ddu.delta.copy()
    D[0, 2] += 0.001
    errs = validate_instance(inst.replace(ddu=DduMatrix(D, inst.ddu.k)))
    assert len([e for e in errs if "mass preservation" in e]) == 1
    assert "gulf_hub_p" in errs[0]


def test_zero_dependence_cap_rejected():
    inst = toy_instance()
    corr = (dataclasses.replace(inst.corridors[0], dependence_cap=0.0),) + inst.corridors[1:]
    errs = validate_instance(inst.replace(corridors=corr))
    assert len(errs) == 1 and "dependence cap" in errs[0]


def test_probability_sum_violation():
    inst = toy_instance()
    scen = (dataclasses.replace(inst.scenarios[0], base_prob=0.5),) + inst.scenarios[1:]
    assert any("sum to" in e for e in validate_instance(inst.replace(scenarios=scen)))


def test_ddu_trivial_cases():
    inst = toy_instance()
    y = np.ones(inst.n_arcs)
    assert np.array_equal(ddu_probability(inst, y, k=0.0), inst.base_prob)
    assert np.array_equal(ddu_probability(inst, np.zeros(inst.n_arcs)), inst.base_prob)
    p = ddu_probability(inst, FirstStageDesign(y, inst.storage_cap))
    assert p.sum() == pytest.approx(1.0, abs=1e-12)


def test_ddu_outside_validity_raises():
    inst = toy_instance()
    km = ddu_k_max(inst)
    worst = None
    for bits in itertools.product((0.0, 1.0), repeat=inst.n_arcs):
        p = inst.base_prob + 1.01 * km * inst.ddu.delta @ np.array(bits)
        if p.min() < -1e-9:
            worst = np.array(bits)
            break
    assert worst is not None
    with pytest.raises(InvalidProbability):
        ddu_probability(inst, worst, k=1.01 * km)


def test_k_max_no_shifts_is_infinite():
    inst = toy_instance()
    assert ddu_k_max(inst.replace(ddu=DduMatrix(np.zeros_like(inst.ddu.delta), 1.0))) == np.inf


def test_k_max_three_arc_example():
    # one scenario at p = 0.05 loses 0.01 in total when every arc is on
    commodities = [("oil", 0.1, 10.0)]
    nodes = [("s", "supply", {"oil": 5}, {}, {"oil": 5}), ("d", "demand", {}, {"oil": 5}, {})]
    arcs = [(f"a{j}", "s", "d", "k", 1.0, 5, 1.0) for j in range(3)]
    scen = [("rare", 0.05, {}, {}), ("common", 0.95, {"k": 0.5}, {})]
    D = np.array([[-0.005, -0.003, -0.002], [0.005, 0.003, 0.002]])
    inst = make_instance(commodities, nodes, [("k", 1.0)], arcs, scen, D)
    assert ddu_k_max(inst) == pytest.approx(5.0, rel=1e-12)
    mins = [ddu_probability(inst, np.array(b), k=5.0).min() for b in itertools.product((0.0, 1.0), repeat=3)]
    assert min(mins) == pytest.approx(0.0, abs=1e-15) and min(mins) >= -1e-15


def test_replica_k_max():
    assert ddu_k_max(replica_instance()) == pytest.approx(6.7, rel=1e-12)


def test_cvar_degenerate():
    assert cvar_of_costs([0.3, 0.7], [5.0, 5.0], 0.9) == pytest.approx((5.0, 5.0))


def test_cvar_single_atom_tail():
    p = replica_instance().base_prob
    c = [19450.00, 47592.75, 58171.00, 63187.00, 19450.00, 70211.88, 42709.25, 65953.00, 39458.20]
    cvar, var = cvar_of_costs(p, c, 0.95)
    assert cvar == pytest.approx(70211.88, abs=1e-9) and var == pytest.approx(70211.88, abs=1e-9)
    _, v50 = cvar_of_costs(p, c, 0.5)
    assert tail_count(c, v50) == 4


def test_cvar_rejects_bad_alpha():
    with pytest.raises(ValueError):
        cvar_of_costs([1.0], [1.0], 1.0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0.01, 1.0), st.floats(-1e3, 1e3)), min_size=1, max_size=10),
       st.floats(0.05, 0.99))
def test_cvar_matches_lp(atoms, alpha):
    p = np.array([a[0] for a in atoms])
    p /= p.sum()
    c = np.array([a[1] for a in atoms])
    cvar, var = cvar_of_costs(p, c, alpha)
    assert cvar == pytest.approx(cvar_lp(p, c, alpha), abs=1e-6 * max(1.0, abs(cvar)))
    assert p @ c - 1e-9 <= cvar + 1e-9 and cvar <= c.max() + 1e-9
    assert var <= cvar + 1e-9


def test_joint_classification():
    inst = replica_instance()
    joint = classify_joint_scenarios(inst)
    assert joint == {"dual_disruption", "insurance_spike", "closure_bypass", "delayed_recovery"}
    mass = sum(s.base_prob for s in inst.scenarios if s.id in joint)
    assert mass == pytest.approx(0.30, abs=1e-12)
    assert "baseline_normal" not in joint
