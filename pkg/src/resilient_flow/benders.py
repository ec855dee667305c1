"""Multi-cut Benders decomposition with decision-dependent probabilities and CVaR.

Master variables::

    y (A) | W (N*C) | phi (S) | nu | eta (S) | wphi (pairs) | weta (pairs)

``phi_s`` underestimates the scenario recourse cost, ``eta_s`` the CVaR excess, and the
``w`` blocks linearise ``y_a * phi_s`` and ``y_a * eta_s`` exactly as in the extensive form.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp

from .extensive import EfSolution, big_m_bounds
from .lp import EQ, GE, LE, LinearProgram
from .milp import MixedIntegerProgram, solve_milp
from .model import FirstStageDesign, Instance, RiskParams, ddu_probability
from .recourse import (
    FeasibilityCut,
    OptimalityCut,
    RecourseSolution,
    build_scenario_block,
    make_feasibility_cut,
    make_optimality_cut,
    min_recourse_over_inventory,
    solve_recourse,
    summarize,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BendersOptions:
    epsilon: float = 1e-6
    max_iter: int = 200
    group_cuts: bool = False
    group_cut_mode: str = "safe"  # "safe" | "heuristic"
    cut_retention: Union[str, tuple] = "keep_all"  # or ("prune_slack", age)
    ddu_on: bool = True
    risk_on: bool = True
    mip_method: str = "auto"
    master_gap: float = 1e-9  # final master tolerance; early masters use a looser one
    cut_tol: float = 1e-7


@dataclass(frozen=True)
class GroupCut:
    """``phi_s >= base + sum_{a in corridor} margin_a * (1 - y_a)``."""

    corridor: str
    scenario: int
    base: float
    margins: dict  # arc index -> margin
    heuristic: bool = False

    def value(self, y) -> float:
        return self.base + sum(m * (1 - y[a]) for a, m in self.margins.items())


@dataclass
class _PooledCut:
    cut: object
    kind: str  # "opt" | "feas" | "group"
    iteration: int
    slack_age: int = 0
    design: Optional[FirstStageDesign] = None  # generating design of an opt/feas cut
    sticky: bool = False  # regenerated after pruning; kept for good


@dataclass
class BendersState:
    iteration: int = 0
    lower_bound: float = -np.inf
    upper_bound: float = np.inf
    incumbent: Optional[FirstStageDesign] = None
    trace: list = field(default_factory=list)
    pool: list = field(default_factory=list)
    converged: bool = False
    flagged: str = ""
    total_cuts: int = 0

    @property
    def gap(self) -> float:
        if not np.isfinite(self.upper_bound):
            return np.inf
        return (self.upper_bound - self.lower_bound) / max(1.0, abs(self.upper_bound))


@dataclass
class BendersResult:
    solution: Optional[EfSolution]
    state: BendersState

    @property
    def objective(self) -> float:
        return self.state.upper_bound


# ---------------------------------------------------------------------------
# group cuts


def make_group_cuts(instance: Instance, mode: str = "safe") -> list:
    """Corridor group-failure lower bounds on ``phi_s``.

    The base bound is ``min_W Q_s`` with every arc active, which no design can beat.
    In ``"heuristic"`` mode each corridor arc gets the increase caused by dropping it
    alone; such margins are not valid in general (see :func:`check_group_cuts`).
    """
    if mode not in ("safe", "heuristic"):
        raise ValueError(f"unknown group cut mode {mode!r}")
    A = instance.n_arcs
    ones = np.ones(A)
    cuts = []
    base_cache = {}
    for l, corr in enumerate(instance.corridors):
        members = np.flatnonzero(instance.arc_corridor == l)
        for s, sc in enumerate(instance.scenarios):
            if sc.capacity_of(corr.id) >= 1.0:
                continue
            if s not in base_cache:
                base_cache[s] = min_recourse_over_inventory(instance, s, ones)
            base = base_cache[s]
            if not np.isfinite(base):
                continue
            margins = {}
            if mode == "heuristic":
                for a in members:
                    y = ones.copy()
                    y[a] = 0.0
                    q = min_recourse_over_inventory(instance, s, y)
                    margins[int(a)] = float(max(0.0, q - base)) if np.isfinite(q) else 0.0
            cuts.append(GroupCut(corr.id, s, float(base), margins, mode == "heuristic"))
    return cuts


def check_group_cuts(instance: Instance, cuts, max_arcs: int = 12) -> list:
    """Enumerate every design (``|A| <= max_arcs``) and list violated cuts as (cut, y, Q)."""
    import itertools

    if instance.n_arcs > max_arcs:
        raise ValueError("too many arcs to enumerate")
    bad = []
    cache = {}
    for bits in itertools.product((0.0, 1.0), repeat=instance.n_arcs):
        y = np.array(bits)
        for cut in cuts:
            key = (bits, cut.scenario)
            if key not in cache:
                cache[key] = min_recourse_over_inventory(instance, cut.scenario, y)
            q = cache[key]
            if np.isfinite(q) and q < cut.value(y) - 1e-6 * max(1.0, abs(q)):
                bad.append((cut, y, q))
    return bad


# ---------------------------------------------------------------------------
# master


class _Master:
    def __init__(self, instance: Instance, options: BendersOptions, phi_floor=None):
        self.inst = instance
        self.opt = options
        S, A = instance.n_scenarios, instance.n_arcs
        NC = instance.n_nodes * instance.n_commodities
        self.lam = instance.risk.lam if options.risk_on else 0.0
        self.alpha = instance.risk.alpha
        self.use_risk = self.lam > 0
        delta = instance.ddu.effective if options.ddu_on else np.zeros((S, A))
        self.delta = delta
        self.pairs = np.argwhere(delta != 0.0)
        P = self.pairs.shape[0]
        off = 0
        self.idx = {}
        for name, size in [("y", A), ("W", NC), ("phi", S)] + (
            [("nu", 1), ("eta", S)] if self.use_risk else []
        ) + [("wphi", P)] + ([("weta", P)] if self.use_risk else []):
            self.idx[name] = np.arange(off, off + size)
            off += size
        self.n = off
        lo = np.zeros(off)
        hi = np.full(off, np.inf)
        hi[self.idx["y"]] = 1.0
        hi[self.idx["W"]] = instance.storage_cap.ravel()
        if self.use_risk:
            lo[self.idx["nu"]] = -np.inf
        # design-independent lower bounds on phi (safe group cuts) enter as bounds
        self.floor = np.zeros(S) if phi_floor is None else np.maximum(0.0, np.asarray(phi_floor, dtype=float))
        lo[self.idx["phi"]] = self.floor
        self.lower, self.upper = lo, hi
        p = instance.base_prob
        c = np.zeros(off)
        c[self.idx["y"]] = instance.fixed_cost
        c[self.idx["W"]] = np.repeat(instance.holding_cost[None, :], instance.n_nodes, axis=0).ravel()
        c[self.idx["phi"]] = (1 - self.lam) * p
        if P:
            dv = delta[self.pairs[:, 0], self.pairs[:, 1]]
            c[self.idx["wphi"]] = (1 - self.lam) * dv
        if self.use_risk:
            c[self.idx["nu"]] = self.lam
            c[self.idx["eta"]] = self.lam * p / (1 - self.alpha)
            if P:
                c[self.idx["weta"]] = self.lam / (1 - self.alpha) * dv
        self.c = c
        MQ, _ = big_m_bounds(instance)
        self.M = MQ
        self._base_rows()

    def _base_rows(self):
        rows, senses, rhs = [], [], []
        S = self.inst.n_scenarios
        idx = self.idx
        n = self.n

        def row(entries, sense, b):
            r = np.zeros(n)
            for j, v in entries:
                r[j] += v
            rows.append(r)
            senses.append(sense)
            rhs.append(b)

        if self.use_risk:
            nu = idx["nu"][0]
            for s in range(S):
                row([(idx["eta"][s], 1.0), (idx["phi"][s], -1.0), (nu, 1.0)], GE, 0.0)
        fams = [("wphi", "phi")] + ([("weta", "eta")] if self.use_risk else [])
        for k, (s, a) in enumerate(self.pairs):
            M = self.M[s, a]
            ya = idx["y"][a]
            for prod, base in fams:
                pj, bj = idx[prod][k], idx[base][s]
                row([(pj, 1.0), (bj, -1.0), (ya, -M)], GE, -M)
                row([(pj, 1.0), (ya, -M)], LE, 0.0)
                floor = self.floor[s] if prod == "wphi" else 0.0
                if floor > 0:
                    # envelope over [floor, M] instead of [0, M]
                    row([(pj, 1.0), (bj, -1.0), (ya, -floor)], LE, -floor)
                    row([(pj, 1.0), (ya, -floor)], GE, 0.0)
                else:
                    row([(pj, 1.0), (bj, -1.0)], LE, 0.0)
        self.base_A = sp.csr_matrix(np.array(rows).reshape(len(rows), n)) if rows else sp.csr_matrix((0, n))
        self.base_senses = senses
        self.base_b = np.array(rhs, dtype=float)

    def cut_row(self, pooled: _PooledCut):
        n, idx = self.n, self.idx
        r = np.zeros(n)
        cut = pooled.cut
        if pooled.kind == "opt":
            # phi_s - Gamma y - Lambda W >= Theta
            r[idx["phi"][cut.scenario]] = 1.0
            r[idx["y"]] = -cut.arc_coef
            r[idx["W"]] = -cut.inv_coef
            return r, GE, cut.constant
        if pooled.kind == "feas":
            r[idx["y"]] = cut.arc_coef
            r[idx["W"]] = cut.inv_coef
            return r, LE, -cut.constant
        # group: phi_s + sum mu_a y_a >= base + sum mu_a
        r[idx["phi"][cut.scenario]] = 1.0
        for a, m in cut.margins.items():
            r[idx["y"][a]] = m
        return r, GE, cut.base + sum(cut.margins.values())

    def program(self, pool) -> MixedIntegerProgram:
        # margin-free group cuts are already phi bounds
        extra = [self.cut_row(p) for p in pool if p.kind != "group" or p.cut.margins]
        if extra:
            A = sp.vstack([self.base_A, sp.csr_matrix(np.array([e[0] for e in extra]))]).tocsr()
            senses = tuple(self.base_senses) + tuple(e[1] for e in extra)
            b = np.concatenate([self.base_b, [e[2] for e in extra]])
        else:
            A, senses, b = self.base_A, tuple(self.base_senses), self.base_b
        lp = LinearProgram(self.c, A, senses, b, self.lower, self.upper)
        return MixedIntegerProgram(lp, self.idx["y"])

    def method(self) -> str:
        if self.opt.mip_method != "auto":
            return self.opt.mip_method
        return "bnb" if self.inst.n_arcs <= 12 else "highs"


# ---------------------------------------------------------------------------
# main loop


def run_benders(instance: Instance, options: BendersOptions = BendersOptions()) -> BendersResult:
    """Algorithm: master MILP, scenario fan-out, one cut per violated scenario, repeat."""
    t0 = time.perf_counter()
    state = BendersState()
    S = instance.n_scenarios
    floor = np.zeros(S)
    if options.group_cuts:
        for gc in make_group_cuts(instance, options.group_cut_mode):
            state.pool.append(_PooledCut(gc, "group", 0))
            if not gc.margins:
                floor[gc.scenario] = max(floor[gc.scenario], gc.base)
    master = _Master(instance, options, floor)
    bases: dict = {}
    probs_fixed = None if options.ddu_on else np.array(instance.base_prob)
    risk = instance.risk if master.use_risk else RiskParams(0.0, instance.risk.alpha)
    prune_age = None
    if isinstance(options.cut_retention, tuple):
        if options.cut_retention[0] != "prune_slack":
            raise ValueError(f"unknown cut retention {options.cut_retention!r}")
        prune_age = int(options.cut_retention[1])
    elif options.cut_retention != "keep_all":
        raise ValueError(f"unknown cut retention {options.cut_retention!r}")
    best_eval = None
    pruned_keys: set = set()  # (scenario, design) of pruned optimality cuts

    for it in range(1, options.max_iter + 1):
        state.iteration = it
        mip = master.program(state.pool)
        # the master bound is valid at any gap, so only tighten as the outer gap closes
        tol = max(options.master_gap, min(1e-4, 0.1 * state.gap)) if np.isfinite(state.gap) else 1e-4
        res = solve_milp(mip, tol, 1_000_000, method=master.method())
        if res.incumbent is None:
            state.flagged = "master infeasible"
            break
        x = res.incumbent
        lb_it = min(res.lower_bound, res.objective) if np.isfinite(res.lower_bound) else res.objective
        state.lower_bound = max(state.lower_bound, lb_it)
        y = np.round(x[master.idx["y"]])
        W = np.clip(x[master.idx["W"]], 0, instance.storage_cap.ravel()).reshape(instance.storage_cap.shape)
        design = FirstStageDesign(y, W)
        phi = x[master.idx["phi"]]

        # slack bookkeeping for pruning
        if prune_age is not None:
            for p in state.pool:
                r, sense, b = master.cut_row(p)
                act = r @ x
                slack = act - b if sense == GE else b - act
                p.slack_age = p.slack_age + 1 if slack > 1e-6 * max(1.0, abs(b)) else 0

        new_cuts = []
        q = np.zeros(S)
        feasible = True
        for s in range(S):
            sol = solve_recourse(instance, s, design, bases.get(s))
            if sol.basis is not None:
                bases[s] = sol.basis
            if not sol.optimal:
                feasible = False
                new_cuts.append(_PooledCut(make_feasibility_cut(sol, instance), "feas", it, design=design))
                continue
            q[s] = sol.objective
            if q[s] > phi[s] + options.cut_tol * max(1.0, abs(q[s])):
                cut = _PooledCut(make_optimality_cut(sol, instance), "opt", it, design=design)
                # a cut can be pruned only once, which rules out cycling
                cut.sticky = _cut_key(s, design) in pruned_keys
                new_cuts.append(cut)
        if feasible:
            p = ddu_probability(instance, design) if probs_fixed is None else probs_fixed
            ev = summarize(instance, design, p, q, risk)
            if ev.objective < state.upper_bound:
                state.upper_bound = ev.objective
                state.incumbent = design
                best_eval = ev
        # the bound sandwich can cross only through round-off
        state.lower_bound = min(state.lower_bound, state.upper_bound) if np.isfinite(state.upper_bound) else state.lower_bound
        state.pool.extend(new_cuts)
        state.total_cuts += len(new_cuts)
        if prune_age is not None:
            keep = []
            for p in state.pool:
                if p.kind == "opt" and not p.sticky and p.slack_age >= prune_age:
                    pruned_keys.add(_cut_key(p.cut.scenario, p.design))
                else:
                    keep.append(p)
            state.pool = keep
        gap = state.gap
        state.trace.append(
            {
                "iteration": it,
                "lower_bound": state.lower_bound,
                "upper_bound": state.upper_bound,
                "abs_gap": state.upper_bound - state.lower_bound,
                "pct_gap": 100.0 * gap if np.isfinite(gap) else np.inf,
                "cuts_added": len(new_cuts),
                "wall_time": time.perf_counter() - t0,
            }
        )
        log.debug("iteration %d: LB %.6f UB %.6f cuts %d", it, state.lower_bound, state.upper_bound, len(new_cuts))
        if gap < options.epsilon or (not new_cuts and feasible):
            state.converged = True
            break
    else:
        state.flagged = "iteration limit reached"

    solution = None
    if state.incumbent is not None:
        solution = _solution_from(instance, state.incumbent, best_eval)
    return BendersResult(solution, state)


def _cut_key(s: int, design: FirstStageDesign) -> tuple:
    return s, design.y.tobytes(), np.round(design.W, 9).tobytes()


def _solution_from(instance, design, ev) -> EfSolution:
    recourse = [solve_recourse(instance, s, design) for s in range(instance.n_scenarios)]
    return EfSolution(
        design=design,
        recourse=recourse,
        objective=ev.objective,
        fixed_cost=ev.fixed_cost,
        holding_cost=ev.holding_cost,
        expected_recourse=ev.expected,
        cvar=ev.cvar,
        var_threshold=ev.var,
        ddu_probs=ev.probs,
        mip_objective=ev.objective,
        mccormick_residual=0.0,
        nodes_explored=0,
        gap=0.0,
        evaluation=ev,
    )


def cut_pool_stats(state: BendersState) -> dict:
    per_iter = [t["cuts_added"] for t in state.trace]
    return {
        "total_cuts": int(sum(per_iter)),
        "active_cuts": sum(1 for p in state.pool if p.kind != "group"),
        "group_cuts": sum(1 for p in state.pool if p.kind == "group"),
        "per_iteration": per_iter,
    }


def pool_violation(state: BendersState, instance: Instance, design: FirstStageDesign, options=BendersOptions()) -> float:
    """Largest violation of the final cut pool at ``design`` (with phi set to the true recourse)."""
    q = np.array([solve_recourse(instance, s, design).objective for s in range(instance.n_scenarios)])
    worst = 0.0
    for p in state.pool:
        cut = p.cut
        if p.kind == "opt":
            worst = max(worst, cut.value(design.y, design.W) - q[cut.scenario])
        elif p.kind == "feas":
            worst = max(worst, cut.value(design.y, design.W))
        else:
            worst = max(worst, cut.value(design.y) - q[cut.scenario])
    return worst
