import numpy as np
import pytest
import scipy.sparse as sp
from scipy.optimize import linprog

from oracles import complementary_slackness, random_lp, vertex_enumeration
from resilient_flow.lp import (LinearProgram, dual_objective, farkas_violation, from_lp_format, solve_lp,
                               to_lp_format, warm_start_resolve)

METHODS = ("simplex", "highs")


@pytest.mark.parametrize("method", METHODS)
def test_single_row(method):
    lp = LinearProgram.from_rows([1.0], [([1.0], ">=", 3.0)])
    r = solve_lp(lp, method)
    assert r.optimal
    assert r.x[0] == pytest.approx(3.0)
    assert r.dual[0] == pytest.approx(1.0)


@pytest.mark.parametrize("method", METHODS)
def test_contradictory_rows_give_farkas_ray(method):
    lp = LinearProgram.from_rows([0.0], [([1.0], "<=", -1.0)])
    r = solve_lp(lp, method)
    assert r.status == "infeasible"
    assert farkas_violation(lp, r.farkas_ray) >= 1e-7


@pytest.mark.parametrize("method", METHODS)
def test_unbounded(method):
    lp = LinearProgram.from_rows([-1.0, 0.0], [([1.0, -1.0], "<=", 1.0)])
    assert solve_lp(lp, method).status == "unbounded"


def test_vertex_enumeration_oracle():
    rng = np.random.default_rng(1)
    for _ in range(5):
        m, n = 6, 5
        A = rng.uniform(-1, 2, (m, n))
        b = rng.uniform(1, 5, m)
        c = -rng.uniform(0, 1, n)
        # keep it bounded
        A = np.vstack([A, np.ones(n)])
        b = np.append(b, 10.0)
        lp = LinearProgram(c, sp.csr_matrix(A), ("<=",) * (m + 1), b, np.zeros(n), np.full(n, np.inf))
        ref = vertex_enumeration(c, A, b)
        assert solve_lp(lp, "simplex").objective == pytest.approx(ref, abs=1e-8)


def test_random_10x20_matches_scipy():
    rng = np.random.default_rng(2)
    A = rng.normal(size=(10, 20))
    x0 = rng.uniform(0, 1, 20)
    b = A @ x0 + rng.uniform(0, 1, 10)
    c = rng.uniform(-1, 1, 20)
    lp = LinearProgram(c, sp.csr_matrix(A), ("<=",) * 10, b, np.zeros(20), np.full(20, 2.0))
    ref = linprog(c, A_ub=A, b_ub=b, bounds=[(0, 2)] * 20, method="highs")
    assert solve_lp(lp, "simplex").objective == pytest.approx(ref.fun, abs=1e-8)


@pytest.mark.parametrize("method", METHODS)
def test_certificates_on_random_programs(method):
    rng = np.random.default_rng(3)
    for _ in range(40):
        lp = random_lp(rng)
        r = solve_lp(lp, method)
        assert r.optimal
        assert lp.primal_residual(r.x) <= 1e-7
        assert abs(r.objective - dual_objective(lp, r.dual)) <= 1e-7 * max(1.0, abs(r.objective))
        assert complementary_slackness(lp, r.x, r.dual) <= 1e-6
        bad = random_lp(rng, infeasible=True)
        rb = solve_lp(bad, method)
        assert rb.status == "infeasible"
        assert farkas_violation(bad, rb.farkas_ray) >= 1e-7


def test_methods_agree():
    rng = np.random.default_rng(4)
    for _ in range(30):
        lp = random_lp(rng)
        a, b = solve_lp(lp, "simplex"), solve_lp(lp, "highs")
        assert a.objective == pytest.approx(b.objective, rel=1e-8, abs=1e-8)


def test_warm_start_unchanged_program():
    lp = random_lp(np.random.default_rng(5))
    cold = solve_lp(lp, "simplex")
    warm = warm_start_resolve(lp, cold.basis, "simplex")
    assert warm.objective == pytest.approx(cold.objective, abs=1e-12)
    assert warm.iterations <= 1


def test_warm_start_after_rhs_perturbation():
    rng = np.random.default_rng(6)
    for _ in range(20):
        lp = random_lp(rng)
        cold = solve_lp(lp, "simplex")
        db = 1e-3 * rng.normal(size=lp.n_rows)
        moved = lp.with_rhs(lp.b + db)
        warm = warm_start_resolve(moved, cold.basis, "simplex")
        ref = solve_lp(moved, "highs")
        assert warm.status == ref.status
        if ref.optimal:
            assert warm.objective == pytest.approx(ref.objective, rel=1e-9, abs=1e-9)
            # the optimal value is convex in b with subgradient equal to the old dual
            assert warm.objective >= cold.objective + cold.dual @ db - 1e-9


def test_warm_start_after_objective_flip():
    rng = np.random.default_rng(7)
    lp = random_lp(rng)
    cold = solve_lp(lp, "simplex")
    flipped = lp.with_objective(-lp.c)
    warm = warm_start_resolve(flipped, cold.basis, "simplex")
    assert warm.objective == pytest.approx(solve_lp(flipped, "highs").objective, abs=1e-9)


def test_lp_format_round_trip():
    lp = random_lp(np.random.default_rng(8))
    back = from_lp_format(to_lp_format(lp))
    assert solve_lp(back).objective == pytest.approx(solve_lp(lp).objective, abs=1e-9)


def test_bad_input_rejected():
    with pytest.raises(ValueError):
        LinearProgram.from_rows([1.0], [([1.0], "<", 1.0)])
    with pytest.raises(ValueError):
        LinearProgram.from_rows([np.nan], [([1.0], "<=", 1.0)])
