import itertools

import numpy as np
import pytest

from resilient_flow.benders import (BendersOptions, BendersState, check_group_cuts, cut_pool_stats, make_group_cuts,
                                    pool_violation, run_benders)
from resilient_flow.extensive import solve_ef
from resilient_flow.instances import (random_instance, replicate_scenarios, toy_instance, trapped_supply_instance,
                                      vmc_toy_instance)
from resilient_flow.recourse import min_recourse_over_inventory

SMALL = {"toy6": toy_instance, "trapped": trapped_supply_instance, "vmc_toy": vmc_toy_instance}


@pytest.mark.parametrize("name", sorted(SMALL))
def test_benders_matches_ef(name):
    inst = SMALL[name]()
    ef = solve_ef(inst)
    res = run_benders(inst)
    assert res.state.converged
    assert res.objective == pytest.approx(ef.objective, rel=1e-6)
    assert pool_violation(res.state, inst, res.state.incumbent) <= 1e-6 * max(1.0, abs(ef.objective))


@pytest.mark.parametrize("options", [BendersOptions(ddu_on=False), BendersOptions(risk_on=False),
                                     BendersOptions(cut_retention=("prune_slack", 2)),
                                     BendersOptions(mip_method="bnb")])
def test_benders_variants_match_ef(options):
    inst = toy_instance()
    ef = solve_ef(inst, ddu_on=options.ddu_on, risk_on=options.risk_on)
    res = run_benders(inst, options)
    assert res.state.converged
    assert res.objective == pytest.approx(ef.objective, rel=1e-6)


def test_random_instances():
    rng = np.random.default_rng(9)
    for _ in range(4):
        inst = random_instance(rng, n_arcs=7, n_scenarios=4, n_commodities=2)
        assert run_benders(inst).objective == pytest.approx(solve_ef(inst).objective, rel=1e-6)


def test_trace_is_monotone():
    st = run_benders(toy_instance()).state
    lb = [t["lower_bound"] for t in st.trace]
    ub = [t["upper_bound"] for t in st.trace if np.isfinite(t["upper_bound"])]
    assert all(b >= a - 1e-9 for a, b in zip(lb, lb[1:]))
    assert all(b <= a + 1e-9 for a, b in zip(ub, ub[1:]))
    assert st.gap < 1e-6


def test_single_scenario_converges():
    inst = toy_instance().subset_scenarios([0], probs=[1.0])
    res = run_benders(inst)
    assert res.state.converged
    assert res.objective == pytest.approx(solve_ef(inst).objective, rel=1e-6)


def test_replication_invariance_on_toy():
    base = run_benders(toy_instance())
    for factor in (3, 9):
        res = run_benders(replicate_scenarios(toy_instance(), factor))
        assert res.objective == pytest.approx(base.objective, rel=1e-9)
        assert abs(res.state.iteration - base.state.iteration) <= 3


def test_cut_count_grows_linearly():
    base = run_benders(toy_instance()).state.total_cuts
    tripled = run_benders(replicate_scenarios(toy_instance(), 3)).state.total_cuts
    assert 0.8 * 3 * base <= tripled <= 1.2 * 3 * base


def test_zero_iterations_zero_cuts():
    assert cut_pool_stats(BendersState())["total_cuts"] == 0


def test_iteration_limit_is_flagged():
    res = run_benders(toy_instance(), BendersOptions(max_iter=1))
    assert not res.state.converged and res.state.flagged == "iteration limit reached"


def test_trapped_generates_feasibility_cuts():
    st = run_benders(trapped_supply_instance()).state
    assert any(p.kind == "feas" for p in st.pool)


def test_undisrupted_corridor_gets_no_group_cut():
    inst = toy_instance()
    cuts = make_group_cuts(inst)
    assert "pipe" not in {c.corridor for c in cuts}
    assert {c.corridor for c in cuts} == {"strait", "canal"}


@pytest.mark.parametrize("name", sorted(SMALL))
def test_safe_group_cuts_are_valid_and_neutral(name):
    inst = SMALL[name]()
    assert check_group_cuts(inst, make_group_cuts(inst, "safe")) == []
    plain = run_benders(inst)
    grouped = run_benders(inst, BendersOptions(group_cuts=True))
    assert grouped.state.converged
    assert grouped.objective == pytest.approx(plain.objective, rel=1e-9)


def test_group_cut_base_is_minimum_over_designs():
    inst = trapped_supply_instance()
    (cut,) = make_group_cuts(inst)
    brute = min(min_recourse_over_inventory(inst, cut.scenario, np.array(b))
                for b in itertools.product((0.0, 1.0), repeat=inst.n_arcs))
    assert cut.base == pytest.approx(brute, rel=1e-9)


def test_unknown_group_cut_mode():
    with pytest.raises(ValueError):
        make_group_cuts(toy_instance(), "aggressive")
