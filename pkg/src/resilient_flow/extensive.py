"""Deterministic-equivalent MILP with McCormick-linearised decision-dependent probabilities.

Variable layout (one flat vector)::

    y (A) | W (N*C) | per scenario z_s | Q (S) | nu | xi (S) | w (pairs) | v (pairs)

``w_as`` and ``v_as`` stand for ``y_a * Q_s`` and ``y_a * xi_s`` and are created only for
pairs with a nonzero probability shift.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .lp import EQ, GE, LE, LinearProgram, solve_lp
from .milp import MilpResult, MixedIntegerProgram, solve_milp
from .model import FirstStageDesign, Instance, ddu_probability
from .recourse import (
    DesignEvaluation,
    RecourseSolution,
    build_scenario_block,
    evaluate_design,
    solve_recourse,
    split_solution,
)


@dataclass(frozen=True)
class EfOptions:
    ddu_on: bool = True
    risk_on: bool = True
    fixed_probs: Optional[np.ndarray] = None
    fixed_design: Optional[FirstStageDesign] = None
    big_m: str = "uniform"  # "uniform" | "per_scenario"
    mip_method: str = "auto"  # "bnb" | "highs" | "auto"
    rel_gap: float = 1e-9
    node_limit: int = 200_000


@dataclass(eq=False)
class EfArtifacts:
    instance: Instance
    options: EfOptions
    mip: MixedIntegerProgram
    index: dict  # symbol -> index array
    big_m_q: np.ndarray  # (S, A)
    big_m_xi: np.ndarray
    pairs: np.ndarray  # (P, 2) scenario/arc pairs carrying product variables
    probs: np.ndarray  # fixed probabilities when DDU is off, else base probabilities
    lam: float
    alpha: float


@dataclass
class EfSolution:
    design: FirstStageDesign
    recourse: list
    objective: float
    fixed_cost: float
    holding_cost: float
    expected_recourse: float
    cvar: float
    var_threshold: float
    ddu_probs: np.ndarray
    mip_objective: float
    mccormick_residual: float
    nodes_explored: int
    gap: float
    evaluation: DesignEvaluation
    status: str = "optimal"

    @property
    def per_scenario(self) -> np.ndarray:
        return self.evaluation.per_scenario


class InfeasibleModel(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# big-M


@lru_cache(maxsize=4096)
def _recourse_upper_bound(instance: Instance, s: int) -> float:
    """Largest recourse cost of any optimal plan for any design (LP over the relaxed design box).

    Optimal plans never hold shortage and ending stock of the same pair (cutting both
    by the same amount keeps balance and saves ``pi + h``), so ``u + I <= max(d, L)``
    is added to the maximisation.
    """
    block = build_scenario_block(instance, s)
    lp = block.lp
    A_, NC = instance.n_arcs, block.TW.shape[1]
    n = lp.n_vars + A_ + NC
    dp = block.demand_pairs
    k = np.arange(dp.size)
    excl = sp.csr_matrix(
        (np.ones(2 * dp.size), (np.concatenate([k, k]), np.concatenate([block.n_x + dp, block.n_x + block.n_I + k]))),
        shape=(dp.size, n),
    )
    A = sp.vstack([sp.hstack([lp.A, -block.Ty, -block.TW]), excl]).tocsr()
    L = instance.storage_cap.ravel()
    b = np.concatenate([block.b0, np.maximum(instance.demand.ravel()[dp], L[dp])])
    senses = tuple(lp.senses) + (LE,) * dp.size
    c = np.concatenate([-lp.c, np.zeros(A_ + NC)])
    lower = np.concatenate([lp.lower, np.zeros(A_ + NC)])
    upper = np.concatenate([lp.upper, np.ones(A_), L])
    res = solve_lp(LinearProgram(c, A, senses, b, lower, upper), "highs")
    if res.status == "optimal":
        return -res.objective
    if res.status == "infeasible":
        return 0.0  # scenario infeasible for every design
    raise InfeasibleModel(f"recourse cost of scenario {s} is unbounded")


def big_m_bounds(instance: Instance, mode: str = "uniform") -> tuple[np.ndarray, np.ndarray]:
    """McCormick bounds ``(M_Q, M_xi)``, each shaped ``(S, A)``.

    When every supply is covered by local demand (``r <= d``), doing nothing is feasible
    for every design and ``sum_D pi*d + sum h*L`` bounds every optimal recourse cost.
    Otherwise each scenario gets the LP maximum of its recourse cost over the relaxed
    design box, which bounds every feasible plan.  ``mode="uniform"`` takes the maximum
    over scenarios.
    """
    S, A = instance.n_scenarios, instance.n_arcs
    if mode not in ("uniform", "per_scenario"):
        raise ValueError(f"unknown big-M mode {mode!r}")
    simple = np.all(instance.supply <= instance.demand)
    if simple:
        m = float(
            np.sum(instance.demand * instance.shortage_penalty[None, :])
            + np.sum(instance.storage_cap * instance.holding_cost[None, :])
        )
        per = np.full(S, m)
    else:
        per = np.array([_recourse_upper_bound(instance, s) for s in range(S)])
        per = per * (1 + 1e-9) + 1e-6
    if mode == "uniform":
        per = np.full(S, float(np.max(per)))
    MQ = np.repeat(per[:, None], A, axis=1)
    return MQ, MQ.copy()


# ---------------------------------------------------------------------------
# build


def build_extensive_form(instance: Instance, options: EfOptions = EfOptions()) -> EfArtifacts:
    S, A, N, C = instance.n_scenarios, instance.n_arcs, instance.n_nodes, instance.n_commodities
    NC = N * C
    if options.fixed_probs is not None:
        probs = np.asarray(options.fixed_probs, dtype=float)
        if probs.shape != (S,) or abs(probs.sum() - 1.0) > 1e-9 or np.any(probs < -1e-12):
            raise ValueError("fixed_probs must be a probability vector over the scenario library")
    else:
        probs = np.array(instance.base_prob)
    lam = instance.risk.lam if options.risk_on else 0.0
    alpha = instance.risk.alpha
    use_risk = lam > 0
    delta = instance.ddu.effective if options.ddu_on else np.zeros((S, A))
    if options.ddu_on and options.fixed_probs is not None:
        raise ValueError("fixed_probs requires ddu_on=False")
    pairs = np.argwhere(delta != 0.0)
    P = pairs.shape[0]

    blocks = [build_scenario_block(instance, s) for s in range(S)]
    nz = [b.lp.n_vars for b in blocks]

    off = 0
    idx = {}

    def take(name, n):
        nonlocal off
        idx[name] = np.arange(off, off + n)
        off += n

    take("y", A)
    take("W", NC)
    z_off = []
    for s in range(S):
        z_off.append(off)
        off += nz[s]
    idx["z_offsets"] = np.array(z_off)
    take("Q", S)
    if use_risk:
        take("nu", 1)
        take("xi", S)
    take("w", P)
    if use_risk:
        take("v", P)
    n = off

    lower = np.zeros(n)
    upper = np.full(n, np.inf)
    upper[idx["y"]] = 1.0
    upper[idx["W"]] = instance.storage_cap.ravel()
    for s, b in enumerate(blocks):
        sl = slice(z_off[s], z_off[s] + nz[s])
        lower[sl] = b.lp.lower
        upper[sl] = b.lp.upper
    if use_risk:
        lower[idx["nu"]] = -np.inf

    if options.fixed_design is not None:
        fd = options.fixed_design
        lower[idx["y"]] = upper[idx["y"]] = np.round(fd.y)
        lower[idx["W"]] = upper[idx["W"]] = np.clip(fd.W.ravel(), 0, instance.storage_cap.ravel())

    blocks_A = []
    senses: list[str] = []
    rhs: list[np.ndarray] = []

    def add(mat, sense, b):
        mat = sp.csr_matrix(mat)
        blocks_A.append(mat)
        senses.extend([sense] * mat.shape[0] if isinstance(sense, str) else sense)
        rhs.append(np.atleast_1d(np.asarray(b, dtype=float)))

    def cols(mat_parts):
        """Assemble a row block from {start index: sparse submatrix}."""
        m = next(iter(mat_parts.values())).shape[0]
        r_, c_, v_ = [], [], []
        for start, sub in mat_parts.items():
            sub = sp.coo_matrix(sub)
            r_.append(sub.row)
            c_.append(sub.col + start)
            v_.append(sub.data)
        return sp.csr_matrix((np.concatenate(v_), (np.concatenate(r_), np.concatenate(c_))), shape=(m, n))

    # scenario blocks: A_s z_s - Ty y - TW W (sense) b0
    for s, b in enumerate(blocks):
        mat = cols({z_off[s]: b.lp.A, idx["y"][0]: -b.Ty, idx["W"][0]: -b.TW})
        add(mat, list(b.lp.senses), b.b0)
    # Q_s = c_s z_s
    for s, b in enumerate(blocks):
        mat = cols({idx["Q"][s]: sp.csr_matrix([[1.0]]), z_off[s]: sp.csr_matrix(-b.lp.c.reshape(1, -1))})
        add(mat, EQ, 0.0)
    if use_risk:
        # xi_s - Q_s + nu >= 0
        eye = sp.identity(S, format="csr")
        mat = cols({idx["xi"][0]: eye, idx["Q"][0]: -eye, idx["nu"][0]: sp.csr_matrix(np.ones((S, 1)))})
        add(mat, GE, np.zeros(S))

    MQ, MXI = big_m_bounds(instance, options.big_m)
    if P:
        ps, pa = pairs[:, 0], pairs[:, 1]
        eyeP = sp.identity(P, format="csr")
        Ysel = sp.csr_matrix((np.ones(P), (np.arange(P), pa)), shape=(P, A))
        Qsel = sp.csr_matrix((np.ones(P), (np.arange(P), ps)), shape=(P, S))
        families = [("w", "Q", MQ[ps, pa])]
        if use_risk:
            families.append(("v", "xi", MXI[ps, pa]))
        for prod, base, M in families:
            Md = sp.diags(M)
            # prod >= base - M (1 - y)  ->  prod - base - M y >= -M
            add(cols({idx[prod][0]: eyeP, idx[base][0]: -Qsel, idx["y"][0]: -Md @ Ysel}), GE, -M)
            # prod <= base
            add(cols({idx[prod][0]: eyeP, idx[base][0]: -Qsel}), LE, np.zeros(P))
            # prod <= M y
            add(cols({idx[prod][0]: eyeP, idx["y"][0]: -Md @ Ysel}), LE, np.zeros(P))

    Afull = sp.vstack(blocks_A).tocsr()
    b = np.concatenate(rhs)

    c = np.zeros(n)
    c[idx["y"]] = instance.fixed_cost
    c[idx["W"]] = np.repeat(instance.holding_cost[None, :], N, axis=0).ravel()
    c[idx["Q"]] = (1 - lam) * probs
    if P:
        c[idx["w"]] = (1 - lam) * delta[pairs[:, 0], pairs[:, 1]]
    if use_risk:
        c[idx["nu"]] = lam
        c[idx["xi"]] = lam * probs / (1 - alpha)
        if P:
            c[idx["v"]] = lam / (1 - alpha) * delta[pairs[:, 0], pairs[:, 1]]

    lp = LinearProgram(c, Afull, tuple(senses), b, lower, upper)
    mip = MixedIntegerProgram(lp, idx["y"])
    return EfArtifacts(instance, options, mip, idx, MQ, MXI, pairs, probs, lam, alpha)


# ---------------------------------------------------------------------------
# solve


def _choose_method(art: EfArtifacts) -> str:
    m = art.options.mip_method
    if m != "auto":
        return m
    lp = art.mip.lp
    return "bnb" if (art.instance.n_arcs <= 12 and lp.n_rows * lp.n_vars <= 400_000) else "highs"


def solve_extensive_form(art: EfArtifacts) -> EfSolution:
    inst = art.instance
    method = _choose_method(art)
    res: MilpResult = solve_milp(art.mip, art.options.rel_gap, art.options.node_limit, method=method)
    if res.incumbent is None:
        raise InfeasibleModel(f"extensive form is {res.status}")
    x = res.incumbent
    idx = art.index
    y = np.round(x[idx["y"]])
    W = x[idx["W"]].reshape(inst.n_nodes, inst.n_commodities)
    W = np.clip(W, 0.0, inst.storage_cap)
    design = FirstStageDesign(y, W)
    if art.options.ddu_on:
        probs = ddu_probability(inst, design)
    else:
        probs = art.probs
    Q = x[idx["Q"]]

    # McCormick residuals at the incumbent
    resid = 0.0
    if art.pairs.shape[0]:
        ps, pa = art.pairs[:, 0], art.pairs[:, 1]
        resid = float(np.max(np.abs(x[idx["w"]] - y[pa] * Q[ps])))
        if "v" in idx:
            resid = max(resid, float(np.max(np.abs(x[idx["v"]] - y[pa] * x[idx["xi"]][ps]))))

    recourse = []
    for s in range(inst.n_scenarios):
        block = build_scenario_block(inst, s)
        z = x[idx["z_offsets"][s] : idx["z_offsets"][s] + block.lp.n_vars]
        xs, Is, us = split_solution(inst, block, z)
        recourse.append(RecourseSolution(s, "optimal", objective=float(Q[s]), x=xs, inventory=Is, shortage=us))

    risk = inst.risk if art.lam > 0 else type(inst.risk)(0.0, inst.risk.alpha)
    ev = evaluate_design(inst, design, probs, risk)
    # zero-probability scenarios leave Q slack in the MILP; re-solve their plans
    fresh = [
        s for s in range(inst.n_scenarios)
        if abs(Q[s] - ev.per_scenario[s]) > 1e-6 * max(1.0, abs(ev.per_scenario[s]))
    ]
    for s in fresh:
        recourse[s] = solve_recourse(inst, s, design)
    return EfSolution(
        design=design,
        recourse=recourse,
        objective=ev.objective,
        fixed_cost=ev.fixed_cost,
        holding_cost=ev.holding_cost,
        expected_recourse=ev.expected,
        cvar=ev.cvar,
        var_threshold=ev.var,
        ddu_probs=np.asarray(probs),
        mip_objective=res.objective,
        mccormick_residual=resid,
        nodes_explored=res.nodes_explored,
        gap=res.gap,
        evaluation=ev,
        status=res.status,
    )


def solve_ef(instance: Instance, **options) -> EfSolution:
    """Convenience wrapper: build and solve with keyword options."""
    return solve_extensive_form(build_extensive_form(instance, EfOptions(**options)))
