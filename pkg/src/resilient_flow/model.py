"""Domain types, instance validation, decision-dependent probabilities and CVaR."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Optional, Sequence

import numpy as np

NODE_KINDS = ("supply", "transshipment", "demand")

PROB_SUM_TOL = 1e-9
MASS_TOL = 1e-12


class InvalidProbability(ValueError):
    """A delta/k combination produced a negative scenario probability."""


@dataclass(frozen=True)
class Commodity:
    id: str
    holding_cost: float
    shortage_penalty: float


@dataclass(frozen=True)
class Node:
    id: str
    kind: str
    supply: tuple  # per commodity, in instance commodity order
    demand: tuple
    storage_cap: tuple


@dataclass(frozen=True)
class Arc:
    id: str
    tail: str
    head: str
    corridor: str
    fixed_cost: float
    capacity: tuple  # per commodity
    cost: tuple
    admissible: tuple  # 0/1 per commodity


@dataclass(frozen=True)
class Corridor:
    id: str
    dependence_cap: float
    maritime: bool = True


@dataclass(frozen=True)
class Scenario:
    id: str
    name: str
    base_prob: float
    capacity_mult: Mapping[str, float]  # corridor id -> multiplier; missing means 1
    cost_mult: Mapping[str, float]
    admissibility_override: Mapping[tuple, int] = field(default_factory=dict)  # (arc id, commodity id) -> 0/1

    def capacity_of(self, corridor: str) -> float:
        return float(self.capacity_mult.get(corridor, 1.0))

    def cost_of(self, corridor: str) -> float:
        return float(self.cost_mult.get(corridor, 1.0))


@dataclass(frozen=True, eq=False)
class DduMatrix:
    """Probability shifts ``delta[s, a]`` and the magnitude multiplier ``k``."""

    delta: np.ndarray
    k: float = 1.0

    def __post_init__(self):
        d = np.array(self.delta, dtype=float)
        d.setflags(write=False)
        object.__setattr__(self, "delta", d)

    def scaled(self, k: float) -> "DduMatrix":
        return DduMatrix(self.delta, float(k))

    @property
    def effective(self) -> np.ndarray:
        return self.k * self.delta


@dataclass(frozen=True)
class RiskParams:
    lam: float = 0.5
    alpha: float = 0.95


@dataclass(frozen=True)
class Settings:
    """Solver knobs carried with an instance (overridable from the command line)."""

    epsilon: float = 1e-6
    max_iter: int = 200
    mip_gap: float = 1e-9
    feas_tol: float = 1e-7
    opt_tol: float = 1e-7


@dataclass(frozen=True, eq=False)
class Instance:
    nodes: tuple
    arcs: tuple
    corridors: tuple
    commodities: tuple
    scenarios: tuple
    ddu: DduMatrix
    risk: RiskParams = RiskParams()
    settings: Settings = Settings()
    name: str = "instance"

    def __post_init__(self):
        for f in ("nodes", "arcs", "corridors", "commodities", "scenarios"):
            object.__setattr__(self, f, tuple(getattr(self, f)))

    # -- index helpers ------------------------------------------------------

    @cached_property
    def node_index(self) -> dict:
        return {n.id: i for i, n in enumerate(self.nodes)}

    @cached_property
    def arc_index(self) -> dict:
        return {a.id: j for j, a in enumerate(self.arcs)}

    @cached_property
    def corridor_index(self) -> dict:
        return {c.id: j for j, c in enumerate(self.corridors)}

    @cached_property
    def commodity_index(self) -> dict:
        return {c.id: j for j, c in enumerate(self.commodities)}

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_arcs(self) -> int:
        return len(self.arcs)

    @property
    def n_commodities(self) -> int:
        return len(self.commodities)

    @property
    def n_scenarios(self) -> int:
        return len(self.scenarios)

    # -- dense parameter arrays ---------------------------------------------

    def _frozen(self, a):
        a = np.asarray(a, dtype=float)
        a.setflags(write=False)
        return a

    @cached_property
    def supply(self) -> np.ndarray:
        return self._frozen([n.supply for n in self.nodes]).reshape(self.n_nodes, self.n_commodities)

    @cached_property
    def demand(self) -> np.ndarray:
        return self._frozen([n.demand for n in self.nodes]).reshape(self.n_nodes, self.n_commodities)

    @cached_property
    def storage_cap(self) -> np.ndarray:
        return self._frozen([n.storage_cap for n in self.nodes]).reshape(self.n_nodes, self.n_commodities)

    @cached_property
    def holding_cost(self) -> np.ndarray:
        return self._frozen([c.holding_cost for c in self.commodities])

    @cached_property
    def shortage_penalty(self) -> np.ndarray:
        return self._frozen([c.shortage_penalty for c in self.commodities])

    @cached_property
    def fixed_cost(self) -> np.ndarray:
        return self._frozen([a.fixed_cost for a in self.arcs])

    @cached_property
    def base_prob(self) -> np.ndarray:
        return self._frozen([s.base_prob for s in self.scenarios])

    @cached_property
    def arc_tail(self) -> np.ndarray:
        return np.array([self.node_index[a.tail] for a in self.arcs], dtype=int)

    @cached_property
    def arc_head(self) -> np.ndarray:
        return np.array([self.node_index[a.head] for a in self.arcs], dtype=int)

    @cached_property
    def arc_corridor(self) -> np.ndarray:
        return np.array([self.corridor_index[a.corridor] for a in self.arcs], dtype=int)

    @cached_property
    def dependence_cap(self) -> np.ndarray:
        return self._frozen([c.dependence_cap for c in self.corridors])

    @cached_property
    def _scenario_arrays(self):
        S, A, C = self.n_scenarios, self.n_arcs, self.n_commodities
        cap = np.array([a.capacity for a in self.arcs], dtype=float).reshape(A, C)
        cost = np.array([a.cost for a in self.arcs], dtype=float).reshape(A, C)
        theta = np.array([a.admissible for a in self.arcs], dtype=float).reshape(A, C)
        ucap = np.empty((S, A, C))
        ucost = np.empty((S, A, C))
        utheta = np.empty((S, A, C))
        for s, sc in enumerate(self.scenarios):
            cm = np.array([sc.capacity_of(a.corridor) for a in self.arcs])
            km = np.array([sc.cost_of(a.corridor) for a in self.arcs])
            ucap[s] = cap * cm[:, None]
            ucost[s] = cost * km[:, None]
            th = theta.copy()
            for (aid, cid), v in sc.admissibility_override.items():
                th[self.arc_index[aid], self.commodity_index[cid]] = float(v)
            utheta[s] = th
        for a in (ucap, ucost, utheta):
            a.setflags(write=False)
        return ucap, ucost, utheta

    @property
    def scenario_capacity(self) -> np.ndarray:
        """``(S, A, C)`` scenario arc capacity before admissibility."""
        return self._scenario_arrays[0]

    @property
    def scenario_cost(self) -> np.ndarray:
        return self._scenario_arrays[1]

    @property
    def scenario_admissibility(self) -> np.ndarray:
        return self._scenario_arrays[2]

    @property
    def effective_capacity(self) -> np.ndarray:
        """``theta * capacity`` per scenario, arc and commodity."""
        return self.scenario_admissibility * self.scenario_capacity

    # -- derived instances ----------------------------------------------------

    def replace(self, **changes) -> "Instance":
        return dataclasses.replace(self, **changes)

    def with_probs(self, probs) -> "Instance":
        probs = np.asarray(probs, dtype=float)
        scen = tuple(dataclasses.replace(s, base_prob=float(p)) for s, p in zip(self.scenarios, probs))
        return self.replace(scenarios=scen)

    def with_k(self, k: float) -> "Instance":
        return self.replace(ddu=self.ddu.scaled(k))

    def with_risk(self, lam: Optional[float] = None, alpha: Optional[float] = None) -> "Instance":
        return self.replace(
            risk=RiskParams(self.risk.lam if lam is None else lam, self.risk.alpha if alpha is None else alpha)
        )

    def without_ddu(self) -> "Instance":
        return self.with_k(0.0)

    def subset_scenarios(self, idx: Sequence[int], probs=None) -> "Instance":
        idx = list(idx)
        scen = [self.scenarios[i] for i in idx]
        if probs is not None:
            scen = [dataclasses.replace(s, base_prob=float(p)) for s, p in zip(scen, probs)]
        delta = self.ddu.delta[idx]
        return self.replace(scenarios=tuple(scen), ddu=DduMatrix(delta, self.ddu.k))


@dataclass(frozen=True, eq=False)
class FirstStageDesign:
    y: np.ndarray  # (A,) 0/1
    W: np.ndarray  # (N, C)

    def __post_init__(self):
        y = np.array(self.y, dtype=float).ravel()
        W = np.array(self.W, dtype=float)
        y.setflags(write=False)
        W.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "W", W)

    @classmethod
    def empty(cls, instance: Instance) -> "FirstStageDesign":
        return cls(np.zeros(instance.n_arcs), np.zeros((instance.n_nodes, instance.n_commodities)))

    @classmethod
    def full(cls, instance: Instance) -> "FirstStageDesign":
        return cls(np.ones(instance.n_arcs), np.array(instance.storage_cap))

    @property
    def n_active(self) -> int:
        return int(np.sum(self.y > 0.5))

    def total_inventory(self) -> float:
        return float(np.sum(self.W))

    def first_stage_cost(self, instance: Instance) -> tuple[float, float]:
        """``(activation cost, holding cost of W)``."""
        fixed = float(instance.fixed_cost @ self.y)
        hold = float(np.sum(self.W * instance.holding_cost[None, :]))
        return fixed, hold


# ---------------------------------------------------------------------------
# validation


def validate_instance(instance: Instance) -> list[str]:
    """Return a list of human-readable rule violations (empty when valid)."""
    v: list[str] = []
    C = instance.n_commodities
    comm_ids = [c.id for c in instance.commodities]
    for name, ids in (
        ("node", [n.id for n in instance.nodes]),
        ("arc", [a.id for a in instance.arcs]),
        ("corridor", [c.id for c in instance.corridors]),
        ("commodity", comm_ids),
        ("scenario", [s.id for s in instance.scenarios]),
    ):
        seen = set()
        for i in ids:
            if i in seen:
                v.append(f"{name} {i!r}: duplicate id")
            seen.add(i)

    for c in instance.commodities:
        if not (c.holding_cost >= 0):
            v.append(f"commodity {c.id!r}: holding cost must be >= 0")
        if not (c.shortage_penalty > 0):
            v.append(f"commodity {c.id!r}: shortage penalty must be > 0")

    for n in instance.nodes:
        if n.kind not in NODE_KINDS:
            v.append(f"node {n.id!r}: unknown kind {n.kind!r}")
        for label, vals in (("supply", n.supply), ("demand", n.demand), ("storage_cap", n.storage_cap)):
            if len(vals) != C:
                v.append(f"node {n.id!r}: {label} needs {C} entries")
            elif any(not (x >= 0) for x in vals):
                v.append(f"node {n.id!r}: {label} must be >= 0")
        if n.kind == "supply" and not any(x > 0 for x in n.supply):
            v.append(f"node {n.id!r}: supply node without positive supply")
        if n.kind == "demand" and not any(x > 0 for x in n.demand):
            v.append(f"node {n.id!r}: demand node without positive demand")

    corridor_ids = {c.id for c in instance.corridors}
    node_ids = {n.id for n in instance.nodes}
    for c in instance.corridors:
        if not (0 < c.dependence_cap <= 1):
            v.append(f"corridor {c.id!r}: dependence cap {c.dependence_cap} outside (0, 1]")

    for a in instance.arcs:
        if a.tail not in node_ids:
            v.append(f"arc {a.id!r}: unknown tail node {a.tail!r}")
        if a.head not in node_ids:
            v.append(f"arc {a.id!r}: unknown head node {a.head!r}")
        if a.tail == a.head:
            v.append(f"arc {a.id!r}: tail equals head")
        if a.corridor not in corridor_ids:
            v.append(f"arc {a.id!r}: unknown corridor {a.corridor!r}")
        if not (a.fixed_cost >= 0):
            v.append(f"arc {a.id!r}: fixed cost must be >= 0")
        for label, vals in (("capacity", a.capacity), ("cost", a.cost), ("admissible", a.admissible)):
            if len(vals) != C:
                v.append(f"arc {a.id!r}: {label} needs {C} entries")
        if any(not (x >= 0) for x in a.capacity):
            v.append(f"arc {a.id!r}: capacity must be >= 0")
        if any(x not in (0, 1) for x in a.admissible):
            v.append(f"arc {a.id!r}: admissibility must be 0 or 1")

    arc_ids = {a.id for a in instance.arcs}
    for s in instance.scenarios:
        if not (s.base_prob >= 0):
            v.append(f"scenario {s.id!r}: probability must be >= 0")
        for cid, m in s.capacity_mult.items():
            if cid not in corridor_ids:
                v.append(f"scenario {s.id!r}: unknown corridor {cid!r}")
            if not (m >= 0):
                v.append(f"scenario {s.id!r}: capacity multiplier for {cid!r} must be >= 0")
        for cid, m in s.cost_mult.items():
            if cid not in corridor_ids:
                v.append(f"scenario {s.id!r}: unknown corridor {cid!r}")
            if not (m >= 0) or not math.isfinite(m):
                v.append(f"scenario {s.id!r}: cost multiplier for {cid!r} must be finite and >= 0")
        for (aid, cid), val in s.admissibility_override.items():
            if aid not in arc_ids or cid not in comm_ids:
                v.append(f"scenario {s.id!r}: override refers to unknown arc/commodity ({aid!r}, {cid!r})")
            if val not in (0, 1):
                v.append(f"scenario {s.id!r}: override must be 0 or 1")
    if instance.scenarios:
        total = float(sum(s.base_prob for s in instance.scenarios))
        if abs(total - 1.0) > PROB_SUM_TOL:
            v.append(f"scenario library: probabilities sum to {total:.12g}, expected 1")
    else:
        v.append("scenario library: empty")

    delta = instance.ddu.delta
    if delta.shape != (instance.n_scenarios, instance.n_arcs):
        v.append(f"ddu: delta has shape {delta.shape}, expected {(instance.n_scenarios, instance.n_arcs)}")
    else:
        col = delta.sum(axis=0)
        for j in np.flatnonzero(np.abs(col) > MASS_TOL):
            v.append(f"ddu: arc {instance.arcs[j].id!r} shifts sum to {col[j]:.3g}, mass preservation requires 0")
        if not (instance.ddu.k >= 0):
            v.append("ddu: multiplier k must be >= 0")
        else:
            worst = instance.base_prob + instance.ddu.k * np.minimum(delta, 0).sum(axis=1)
            for s in np.flatnonzero(worst < -MASS_TOL):
                v.append(
                    f"ddu: scenario {instance.scenarios[s].id!r} can reach probability {worst[s]:.3g} "
                    f"at k={instance.ddu.k}; k_max is {ddu_k_max(instance):.6g}"
                )

    if not (0 <= instance.risk.lam <= 1):
        v.append(f"risk: lambda {instance.risk.lam} outside [0, 1]")
    if not (0 < instance.risk.alpha < 1):
        v.append(f"risk: alpha {instance.risk.alpha} outside (0, 1)")
    return v


# ---------------------------------------------------------------------------
# decision-dependent probabilities


def ddu_probability(instance: Instance, design, k: Optional[float] = None) -> np.ndarray:
    """``p_s(y) = pbar_s + k * sum_a delta[s, a] * y_a``.

    ``design`` may be a :class:`FirstStageDesign` or a bare y vector.
    """
    y = design.y if isinstance(design, FirstStageDesign) else np.asarray(design, dtype=float)
    k = instance.ddu.k if k is None else k
    p = instance.base_prob + k * (instance.ddu.delta @ y)
    if np.any(p < -1e-9):
        s = int(np.argmin(p))
        raise InvalidProbability(
            f"scenario {instance.scenarios[s].id!r} gets probability {p[s]:.3g} (k={k} outside the validity region)"
        )
    return p


def ddu_k_max(instance: Instance) -> float:
    """Largest k for which every binary y yields nonnegative probabilities."""
    worst = -np.minimum(instance.ddu.delta, 0).sum(axis=1)
    mask = worst > 0
    if not np.any(mask):
        return math.inf
    return float(np.min(instance.base_prob[mask] / worst[mask]))


# ---------------------------------------------------------------------------
# CVaR


def cvar_of_costs(probs, costs, alpha: float) -> tuple[float, float]:
    """Closed-form CVaR of a discrete cost distribution.

    Returns ``(cvar, var)`` where ``var`` is the smallest minimiser ``nu`` of
    ``nu + E[(cost - nu)^+] / (1 - alpha)``.
    """
    p = np.asarray(probs, dtype=float)
    c = np.asarray(costs, dtype=float)
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    order = np.argsort(c, kind="stable")
    cs, ps = c[order], p[order]
    cdf = np.cumsum(ps)
    # smallest atom whose cdf reaches alpha; the atom straddling the quantile sits in the tail
    pos = int(np.searchsorted(cdf, alpha - 1e-12, side="left"))
    pos = min(pos, c.size - 1)
    var = float(cs[pos])
    cvar = var + float(p @ np.maximum(c - var, 0.0)) / (1.0 - alpha)
    return cvar, var


def tail_count(costs, var: float, tol: float = 1e-9) -> int:
    """Number of scenarios strictly above the VaR threshold."""
    return int(np.sum(np.asarray(costs) > var + tol))


# ---------------------------------------------------------------------------
# scenario classification


def disrupted_corridors(instance: Instance, scenario: Scenario, maritime_only: bool = True) -> set:
    out = set()
    for c in instance.corridors:
        if maritime_only and not c.maritime:
            continue
        if scenario.capacity_of(c.id) < 1.0:
            out.add(c.id)
    return out


def classify_joint_scenarios(instance: Instance) -> set:
    """Scenarios with capacity multipliers below 1 on two or more maritime corridors."""
    return {s.id for s in instance.scenarios if len(disrupted_corridors(instance, s)) >= 2}


def joint_mask(instance: Instance) -> np.ndarray:
    ids = classify_joint_scenarios(instance)
    return np.array([s.id in ids for s in instance.scenarios])
