import numpy as np
import pytest

from resilient_flow.extensive import solve_ef
from resilient_flow.instances import make_instance, toy_instance, trapped_supply_instance
from resilient_flow.lp import farkas_violation
from resilient_flow.model import FirstStageDesign
from resilient_flow.recourse import (InfeasibleDesign, build_scenario_block, evaluate_design, make_feasibility_cut,
                                     make_optimality_cut, min_recourse_over_inventory, recourse_cost, solve_recourse)
from resilient_flow.replica import replica_instance


def random_designs(inst, rng, n):
    return [FirstStageDesign(rng.integers(0, 2, inst.n_arcs).astype(float),
                             rng.uniform(0, 1, inst.storage_cap.shape) * inst.storage_cap) for _ in range(n)]


def test_no_route_means_full_shortage():
    inst = make_instance([("oil", 0.1, 7.0)],
                         [("s", "supply", {"oil": 3}, {}, {"oil": 3}), ("d", "demand", {}, {"oil": 5}, {})],
                         [("k", 1.0)], [("a", "s", "d", "k", 1.0, 0, 1.0)], [("only", 1.0, {}, {})])
    sol = solve_recourse(inst, 0, FirstStageDesign.empty(inst))
    assert sol.objective == pytest.approx(5 * 7.0 + 0.1 * 3)
    assert sol.shortage.sum() == pytest.approx(5.0)
    assert solve_ef(inst).objective == pytest.approx(35.3)


def test_objective_matches_recomputed_cost():
    inst = toy_instance()
    for d in random_designs(inst, np.random.default_rng(0), 5):
        for s in range(inst.n_scenarios):
            sol = solve_recourse(inst, s, d)
            if sol.optimal:
                ref = recourse_cost(inst, s, sol.x, sol.inventory, sol.shortage)
                assert sol.objective == pytest.approx(ref, rel=1e-9, abs=1e-9)


def test_trapped_supply_is_infeasible_with_ray():
    inst = trapped_supply_instance()
    design = FirstStageDesign.empty(inst)
    sol = solve_recourse(inst, 0, design)
    assert sol.status == "infeasible"
    block = build_scenario_block(inst, 0)
    assert farkas_violation(block.program(design.y, design.W), sol.farkas_ray) >= 1e-7
    cut = make_feasibility_cut(sol, inst)
    assert cut.value(design.y, design.W) > 0
    with pytest.raises(InfeasibleDesign):
        evaluate_design(inst, design)


def test_feasibility_cuts_admit_feasible_designs():
    inst = trapped_supply_instance()
    rng = np.random.default_rng(1)
    cuts = []
    for d in random_designs(inst, rng, 30):
        for s in range(inst.n_scenarios):
            sol = solve_recourse(inst, s, d)
            if not sol.optimal:
                cuts.append((make_feasibility_cut(sol, inst), d))
    assert cuts
    feasible = [d for d in random_designs(inst, rng, 60)
                if all(solve_recourse(inst, s, d).optimal for s in range(inst.n_scenarios))]
    assert feasible
    for cut, gen in cuts:
        assert cut.value(gen.y, gen.W) > 0
        for d in feasible:
            assert cut.value(d.y, d.W) <= 1e-6


def test_optimality_cut_tight_and_valid():
    inst = toy_instance()
    rng = np.random.default_rng(2)
    gens = random_designs(inst, rng, 5)
    others = random_designs(inst, rng, 20)
    q_other = [[solve_recourse(inst, s, d) for s in range(inst.n_scenarios)] for d in others]
    for g in gens:
        for s in range(inst.n_scenarios):
            sol = solve_recourse(inst, s, g)
            if not sol.optimal:
                continue
            cut = make_optimality_cut(sol, inst)
            assert cut.value(g.y, g.W) == pytest.approx(sol.objective, abs=1e-6 * max(1.0, abs(sol.objective)))
            for d, row in zip(others, q_other):
                if row[s].optimal:
                    assert cut.value(d.y, d.W) <= row[s].objective + 1e-6 * max(1.0, abs(row[s].objective))


def test_inactive_arc_has_zero_cut_coefficient():
    inst = toy_instance()
    y = np.ones(inst.n_arcs)
    y[5] = 0.0
    d = FirstStageDesign(y, inst.storage_cap)
    cut = make_optimality_cut(solve_recourse(inst, 0, d), inst)
    assert cut.arc_coef[5] == pytest.approx(0.0, abs=1e-9)


def test_min_over_inventory_is_a_lower_bound():
    inst = toy_instance()
    for d in random_designs(inst, np.random.default_rng(3), 10):
        for s in range(inst.n_scenarios):
            sol = solve_recourse(inst, s, d)
            if sol.optimal:
                assert min_recourse_over_inventory(inst, s, d.y) <= sol.objective + 1e-7


def test_replica_baseline_has_no_shortage():
    inst = replica_instance()
    sol = solve_ef(inst)
    base = inst.scenarios.index(next(s for s in inst.scenarios if s.id == "baseline_normal"))
    assert sol.recourse[base].shortage.sum() == pytest.approx(0.0, abs=1e-6)
