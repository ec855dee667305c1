import itertools

import numpy as np
import pytest

from resilient_flow.lp import LinearProgram
from resilient_flow.milp import MixedIntegerProgram, solve_milp


def knapsack(rng, n=8):
    v = rng.integers(5, 30, n).astype(float)
    w = rng.integers(3, 15, n).astype(float)
    cap = float(w.sum() // 2)
    # second row couples two items
    rows = [(w, "<=", cap), (np.eye(n)[0] + np.eye(n)[1], "<=", 1.0)]
    lp = LinearProgram.from_rows(-v, rows, bounds=[(0, 1)] * n)
    best = min(-v @ np.array(b) for b in itertools.product((0, 1), repeat=n)
               if w @ np.array(b) <= cap and b[0] + b[1] <= 1)
    return MixedIntegerProgram(lp, np.arange(n)), best


@pytest.mark.parametrize("method", ["bnb", "highs"])
def test_knapsack_matches_enumeration(method):
    rng = np.random.default_rng(0)
    for _ in range(5):
        mip, best = knapsack(rng)
        res = solve_milp(mip, method=method)
        assert res.status == "optimal"
        assert res.objective == pytest.approx(best, abs=1e-9)
        assert np.all(np.isin(res.incumbent, (0.0, 1.0)))


def test_mixed_continuous_part():
    # min -x - 2y, x + y <= 1.5, y binary, 0 <= x <= 1
    lp = LinearProgram.from_rows([-1.0, -2.0], [([1.0, 1.0], "<=", 1.5)], bounds=[(0, 1), (0, 1)])
    res = solve_milp(MixedIntegerProgram(lp, [1]), method="bnb")
    assert res.objective == pytest.approx(-2.5)
    assert res.incumbent[1] == 1.0 and res.incumbent[0] == pytest.approx(0.5)


def test_all_binaries_fixed_by_bounds():
    lp = LinearProgram.from_rows([1.0, 1.0], [([1.0, 1.0], ">=", 1.0)], bounds=[(1, 1), (0, 1)])
    res = solve_milp(MixedIntegerProgram(lp, [0, 1]), method="bnb")
    assert res.objective == pytest.approx(1.0)
    assert res.nodes_explored <= 1


def test_infeasible_program():
    lp = LinearProgram.from_rows([1.0], [([1.0], ">=", 0.5), ([1.0], "<=", 0.7)], bounds=[(0, 1)])
    for method in ("bnb", "highs"):
        res = solve_milp(MixedIntegerProgram(lp, [0]), method=method)
        assert res.status == "infeasible" and res.incumbent is None


def test_bound_trace_monotone():
    mip, best = knapsack(np.random.default_rng(3), n=10)
    res = solve_milp(mip, method="bnb")
    lbs = np.array(res.bound_trace)
    assert res.objective == pytest.approx(best, abs=1e-9)
    assert lbs.size > 0 and np.all(np.diff(lbs) >= -1e-9)
    assert lbs[-1] <= res.objective + 1e-9


def test_binary_bounds_checked():
    lp = LinearProgram.from_rows([1.0], [([1.0], "<=", 3.0)], bounds=[(0, 3)])
    with pytest.raises(ValueError):
        MixedIntegerProgram(lp, [0])
