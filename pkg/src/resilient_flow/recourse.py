"""Scenario recourse LPs, design evaluation and Benders cut generation.

For a scenario ``s`` the recourse block is written with the first-stage decisions on
the right-hand side::

    A_s z  (senses)  b0_s + Ty_s @ y + TW_s @ vec(W),     lo <= z <= hi

with ``z = [x (A*C) | I (N*C) | u (demand pairs)]``.  Flow balance rows read
``out - in - u + I = W + r - d``, capacity rows ``x_ac <= theta*ucap * y_a`` and
corridor rows ``sum_{a in l} x - Phi_l * sum x <= 0`` (omitted when ``Phi_l = 1``).
Ending inventory caps ``I <= L`` are variable bounds.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .lp import (
    EQ,
    LE,
    Basis,
    LinearProgram,
    LpResult,
    bound_terms,
    solve_lp,
    warm_start_resolve,
)
from .model import FirstStageDesign, Instance, RiskParams, cvar_of_costs, ddu_probability

ZERO_DUAL = 1e-9


class InfeasibleDesign(RuntimeError):
    def __init__(self, message, scenarios=()):
        super().__init__(message)
        self.scenarios = tuple(scenarios)


@dataclass(frozen=True, eq=False)
class ScenarioBlock:
    scenario: int
    lp: LinearProgram  # rhs holds b0; solve with rhs(design)
    b0: np.ndarray
    Ty: sp.csr_matrix  # (rows, A)
    TW: sp.csr_matrix  # (rows, N*C)
    n_x: int
    n_I: int
    demand_pairs: np.ndarray  # flat (i*C + c) indices carrying a shortage variable
    flow_rows: np.ndarray
    cap_rows: np.ndarray  # row index per capacity row
    cap_pairs: np.ndarray  # flat (a*C + c) per capacity row
    corridor_rows: np.ndarray

    def rhs(self, y, W) -> np.ndarray:
        return self.b0 + self.Ty @ np.asarray(y, dtype=float) + self.TW @ np.asarray(W, dtype=float).ravel()

    def program(self, y, W) -> LinearProgram:
        return self.lp.with_rhs(self.rhs(y, W))


@dataclass
class RecourseSolution:
    scenario: int
    status: str  # "optimal" | "infeasible"
    objective: float = float("nan")
    x: Optional[np.ndarray] = None
    inventory: Optional[np.ndarray] = None
    shortage: Optional[np.ndarray] = None
    dual: Optional[np.ndarray] = None
    reduced_costs: Optional[np.ndarray] = None
    farkas_ray: Optional[np.ndarray] = None
    basis: Optional[Basis] = None

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


@dataclass(frozen=True, eq=False)
class OptimalityCut:
    """``Q_s(y, W) >= constant + arc_coef @ y + inv_coef @ vec(W)``."""

    scenario: int
    constant: float
    arc_coef: np.ndarray
    inv_coef: np.ndarray

    def value(self, y, W) -> float:
        return float(self.constant + self.arc_coef @ np.asarray(y, float) + self.inv_coef @ np.asarray(W, float).ravel())


@dataclass(frozen=True, eq=False)
class FeasibilityCut:
    """Feasible designs satisfy ``constant + arc_coef @ y + inv_coef @ vec(W) <= 0``."""

    scenario: int
    constant: float
    arc_coef: np.ndarray
    inv_coef: np.ndarray

    def value(self, y, W) -> float:
        return float(self.constant + self.arc_coef @ np.asarray(y, float) + self.inv_coef @ np.asarray(W, float).ravel())


@dataclass(frozen=True)
class DesignEvaluation:
    objective: float
    fixed_cost: float
    holding_cost: float
    expected: float
    cvar: float
    var: float
    per_scenario: np.ndarray
    probs: np.ndarray


# ---------------------------------------------------------------------------
# block construction


def _flat_pairs(instance: Instance):
    return np.flatnonzero(instance.demand.ravel() > 0)


def build_scenario_block(instance: Instance, s: int) -> ScenarioBlock:
    return _cached_block(instance, s)


@lru_cache(maxsize=4096)
def _cached_block(instance: Instance, s: int) -> ScenarioBlock:
    A, N, C = instance.n_arcs, instance.n_nodes, instance.n_commodities
    n_x, n_I = A * C, N * C
    dpairs = _flat_pairs(instance)
    n_u = dpairs.size
    n = n_x + n_I + n_u
    cap = instance.effective_capacity[s]  # (A, C)
    cost = instance.scenario_cost[s]

    rows, cols, vals = [], [], []
    senses: list[str] = []
    b0: list[float] = []
    ty_r, ty_c, ty_v = [], [], []
    tw_r, tw_c = [], []

    tail, head = instance.arc_tail, instance.arc_head
    r = instance.supply
    dem = instance.demand
    u_col = {int(p): n_x + n_I + k for k, p in enumerate(dpairs)}

    # flow balance
    flow_rows = []
    for i in range(N):
        out_arcs = np.flatnonzero(tail == i)
        in_arcs = np.flatnonzero(head == i)
        for c in range(C):
            row = len(b0)
            flow_rows.append(row)
            for a in out_arcs:
                rows.append(row); cols.append(a * C + c); vals.append(1.0)
            for a in in_arcs:
                rows.append(row); cols.append(a * C + c); vals.append(-1.0)
            rows.append(row); cols.append(n_x + i * C + c); vals.append(1.0)
            p = i * C + c
            if p in u_col:
                rows.append(row); cols.append(u_col[p]); vals.append(-1.0)
            senses.append(EQ)
            b0.append(float(r[i, c] - dem[i, c]))
            tw_r.append(row); tw_c.append(p)

    # capacity / admissibility
    cap_rows, cap_pairs = [], []
    upper = np.full(n, np.inf)
    for a in range(A):
        for c in range(C):
            if cap[a, c] > 0:
                row = len(b0)
                cap_rows.append(row)
                cap_pairs.append(a * C + c)
                rows.append(row); cols.append(a * C + c); vals.append(1.0)
                senses.append(LE)
                b0.append(0.0)
                ty_r.append(row); ty_c.append(a); ty_v.append(float(cap[a, c]))
            else:
                upper[a * C + c] = 0.0

    # corridor dependence caps
    corridor_rows = []
    phi = instance.dependence_cap
    corr = instance.arc_corridor
    for l in range(len(instance.corridors)):
        if phi[l] >= 1.0:
            continue
        members = np.flatnonzero(corr == l)
        if members.size == 0:
            continue
        row = len(b0)
        corridor_rows.append(row)
        inside = np.zeros(A, dtype=bool)
        inside[members] = True
        for a in range(A):
            coef = (1.0 if inside[a] else 0.0) - phi[l]
            if coef == 0.0:
                continue
            for c in range(C):
                if upper[a * C + c] == 0.0:
                    continue
                rows.append(row); cols.append(a * C + c); vals.append(coef)
        senses.append(LE)
        b0.append(0.0)

    m = len(b0)
    Amat = sp.csr_matrix((vals, (rows, cols)), shape=(m, n))
    obj = np.concatenate(
        [
            cost.ravel(),
            np.repeat(instance.holding_cost[None, :], N, axis=0).ravel(),
            instance.shortage_penalty[dpairs % C],
        ]
    )
    lower = np.zeros(n)
    upper[n_x : n_x + n_I] = instance.storage_cap.ravel()
    b0 = np.array(b0)
    lp = LinearProgram(obj, Amat, tuple(senses), b0, lower, upper)
    Ty = sp.csr_matrix((ty_v, (ty_r, ty_c)), shape=(m, A))
    TW = sp.csr_matrix((np.ones(len(tw_r)), (tw_r, tw_c)), shape=(m, N * C))
    return ScenarioBlock(
        s,
        lp,
        b0,
        Ty,
        TW,
        n_x,
        n_I,
        dpairs,
        np.array(flow_rows, dtype=int),
        np.array(cap_rows, dtype=int),
        np.array(cap_pairs, dtype=int),
        np.array(corridor_rows, dtype=int),
    )


def split_solution(instance: Instance, block: ScenarioBlock, z):
    A, N, C = instance.n_arcs, instance.n_nodes, instance.n_commodities
    x = z[: block.n_x].reshape(A, C)
    I = z[block.n_x : block.n_x + block.n_I].reshape(N, C)
    u = np.zeros(N * C)
    u[block.demand_pairs] = z[block.n_x + block.n_I :]
    return x, I, u.reshape(N, C)


def recourse_cost(instance: Instance, s: int, x, inventory, shortage) -> float:
    """Transport + holding + shortage cost of a scenario recourse plan."""
    c = instance.scenario_cost[s]
    h = instance.holding_cost
    pi = instance.shortage_penalty
    demand_mask = instance.demand > 0
    return float(np.sum(c * x) + np.sum(inventory * h[None, :]) + np.sum(np.where(demand_mask, shortage, 0.0) * pi[None, :]))


# ---------------------------------------------------------------------------
# solving


def _as_design(design) -> FirstStageDesign:
    return design if isinstance(design, FirstStageDesign) else FirstStageDesign(*design)


def solve_recourse(
    instance: Instance,
    s: int,
    design,
    basis: Optional[Basis] = None,
    method: str = "auto",
) -> RecourseSolution:
    """Solve the scenario-``s`` recourse LP at a fixed design."""
    design = _as_design(design)
    block = build_scenario_block(instance, s)
    lp = block.program(design.y, design.W)
    res = warm_start_resolve(lp, basis, method) if basis is not None else solve_lp(lp, method)
    return _wrap(instance, block, res)


def _wrap(instance, block, res: LpResult) -> RecourseSolution:
    if res.status == "infeasible":
        return RecourseSolution(block.scenario, "infeasible", farkas_ray=res.farkas_ray)
    if res.status != "optimal":
        raise RuntimeError(f"recourse LP for scenario {block.scenario} is {res.status}")
    x, I, u = split_solution(instance, block, res.x)
    return RecourseSolution(
        block.scenario,
        "optimal",
        objective=res.objective,
        x=x,
        inventory=I,
        shortage=u,
        dual=res.dual,
        reduced_costs=res.reduced_costs,
        basis=res.basis,
    )


def solve_all_scenarios(instance: Instance, design, bases: Optional[dict] = None, method: str = "auto") -> list:
    bases = {} if bases is None else bases
    out = []
    for s in range(instance.n_scenarios):
        sol = solve_recourse(instance, s, design, bases.get(s), method)
        if sol.basis is not None:
            bases[s] = sol.basis
        out.append(sol)
    return out


# ---------------------------------------------------------------------------
# cuts


def make_optimality_cut(solution: RecourseSolution, instance: Instance) -> OptimalityCut:
    if not solution.optimal or solution.dual is None:
        raise ValueError("optimality cuts need duals from an optimal recourse solve")
    block = build_scenario_block(instance, solution.scenario)
    y = solution.dual
    d = block.lp.c - block.lp.A.T @ y
    d = np.where(np.abs(d) < ZERO_DUAL, 0.0, d)
    bt = bound_terms(d, block.lp.lower, block.lp.upper)
    if not np.isfinite(bt):
        raise ValueError("dual solution is not dual feasible")
    constant = float(block.b0 @ y) + bt
    return OptimalityCut(solution.scenario, constant, np.asarray(block.Ty.T @ y).ravel(), np.asarray(block.TW.T @ y).ravel())


def make_feasibility_cut(solution: RecourseSolution, instance: Instance) -> FeasibilityCut:
    if solution.status != "infeasible" or solution.farkas_ray is None:
        raise ValueError("feasibility cuts need a Farkas ray from an infeasible recourse solve")
    block = build_scenario_block(instance, solution.scenario)
    f = solution.farkas_ray
    g = block.lp.A.T @ f
    g = np.where(np.abs(g) < 1e-12, 0.0, g)
    box_max = -bound_terms(-g, block.lp.lower, block.lp.upper)
    constant = float(block.b0 @ f) - box_max
    return FeasibilityCut(solution.scenario, constant, np.asarray(block.Ty.T @ f).ravel(), np.asarray(block.TW.T @ f).ravel())


def min_recourse_over_inventory(instance: Instance, s: int, y, method: str = "auto") -> float:
    """``min_{0 <= W <= L} Q_s(y, W)``; a lower bound on ``Q_s`` for every design with arcs in ``y``."""
    block = build_scenario_block(instance, s)
    lp = block.lp
    NC = block.TW.shape[1]
    # move W to the left-hand side as extra columns
    A = sp.hstack([lp.A, -block.TW]).tocsr()
    c = np.concatenate([lp.c, np.zeros(NC)])
    lower = np.concatenate([lp.lower, np.zeros(NC)])
    upper = np.concatenate([lp.upper, instance.storage_cap.ravel()])
    b = block.b0 + block.Ty @ np.asarray(y, dtype=float)
    res = solve_lp(LinearProgram(c, A, lp.senses, b, lower, upper), method)
    if res.status != "optimal":
        return np.inf
    return res.objective


# ---------------------------------------------------------------------------
# design evaluation


def evaluate_design(
    instance: Instance,
    design,
    probs=None,
    risk: Optional[RiskParams] = None,
    bases: Optional[dict] = None,
    method: str = "auto",
) -> DesignEvaluation:
    """Total cost of a first-stage design; DDU probabilities at the design by default."""
    design = _as_design(design)
    risk = instance.risk if risk is None else risk
    p = ddu_probability(instance, design) if probs is None else np.asarray(probs, dtype=float)
    sols = solve_all_scenarios(instance, design, bases, method)
    bad = [s.scenario for s in sols if not s.optimal]
    if bad:
        names = ", ".join(instance.scenarios[s].id for s in bad)
        raise InfeasibleDesign(f"design infeasible under scenario(s) {names}", bad)
    q = np.array([s.objective for s in sols])
    return summarize(instance, design, p, q, risk)


def summarize(instance: Instance, design: FirstStageDesign, p, q, risk: RiskParams) -> DesignEvaluation:
    fixed, hold = design.first_stage_cost(instance)
    expected = float(p @ q)
    cvar, var = cvar_of_costs(p, q, risk.alpha)
    total = fixed + hold + (1 - risk.lam) * expected + risk.lam * cvar
    return DesignEvaluation(total, fixed, hold, expected, cvar, var, q, np.asarray(p))


def design_objective(instance: Instance, design, probs=None, risk=None) -> float:
    """Objective of a design, or ``inf`` if some scenario is infeasible."""
    try:
        return evaluate_design(instance, design, probs, risk).objective
    except InfeasibleDesign:
        return np.inf
