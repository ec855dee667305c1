"""Bundled instances, random instance generation and scenario replication."""

from __future__ import annotations

from typing import Mapping, Optional, Sequence

import numpy as np

from .model import (
    Arc,
    Commodity,
    Corridor,
    DduMatrix,
    Instance,
    Node,
    RiskParams,
    Scenario,
    Settings,
)


def make_instance(
    commodities: Sequence[tuple],
    nodes: Sequence[tuple],
    corridors: Sequence[tuple],
    arcs: Sequence[tuple],
    scenarios: Sequence[tuple],
    delta=None,
    k: float = 1.0,
    risk: RiskParams = RiskParams(),
    name: str = "instance",
    settings: Settings = Settings(),
) -> Instance:
    """Assemble an :class:`Instance` from compact tuples.

    * commodity: ``(id, holding_cost, shortage_penalty)``
    * node: ``(id, kind, supply, demand, storage)`` with per-commodity dicts
    * corridor: ``(id, dependence_cap[, maritime])``
    * arc: ``(id, tail, head, corridor, fixed_cost, capacity, cost[, admissible])``;
      ``capacity``/``cost`` are dicts or scalars, missing admissibility means 1 wherever
      capacity is positive
    * scenario: ``(id, prob, capacity_mult, cost_mult[, overrides])``
    * ``delta``: ``(S, A)`` array or dict ``{(scenario id, arc id): value}``
    """
    comm = tuple(Commodity(c[0], float(c[1]), float(c[2])) for c in commodities)
    cids = [c.id for c in comm]

    def vec(d, default=0.0):
        if isinstance(d, Mapping):
            return tuple(float(d.get(c, default)) for c in cids)
        return tuple(float(d) for _ in cids)

    node_objs = tuple(Node(n[0], n[1], vec(n[2]), vec(n[3]), vec(n[4])) for n in nodes)
    corr = tuple(Corridor(c[0], float(c[1]), bool(c[2]) if len(c) > 2 else True) for c in corridors)
    arc_objs = []
    for a in arcs:
        cap = vec(a[5])
        cost = vec(a[6])
        adm = tuple(int(v) for v in vec(a[7], 1.0)) if len(a) > 7 else tuple(int(v > 0) for v in cap)
        arc_objs.append(Arc(a[0], a[1], a[2], a[3], float(a[4]), cap, cost, adm))
    scen = tuple(
        Scenario(s[0], s[0], float(s[1]), dict(s[2]), dict(s[3]), dict(s[4]) if len(s) > 4 else {})
        for s in scenarios
    )
    S, A = len(scen), len(arc_objs)
    if delta is None:
        D = np.zeros((S, A))
    elif isinstance(delta, Mapping):
        D = np.zeros((S, A))
        sidx = {s.id: i for i, s in enumerate(scen)}
        aidx = {a.id: j for j, a in enumerate(arc_objs)}
        for (sid, aid), v in delta.items():
            D[sidx[sid], aidx[aid]] = v
    else:
        D = np.asarray(delta, dtype=float)
    return Instance(node_objs, tuple(arc_objs), corr, comm, scen, DduMatrix(D, k), risk, settings, name)


def balanced_delta(pos: Mapping[int, Sequence[int]], S: int, A: int, magnitude) -> np.ndarray:
    """Column-balanced shift matrix.

    ``pos[a]`` lists scenarios receiving mass when arc ``a`` is active; the remaining
    scenarios give it up in equal parts.  ``magnitude`` is a scalar or per-arc array.
    """
    mag = np.broadcast_to(np.asarray(magnitude, dtype=float), (A,))
    D = np.zeros((S, A))
    for a in range(A):
        gain = list(pos.get(a, ()))
        if not gain or mag[a] == 0:
            continue
        lose = [s for s in range(S) if s not in gain]
        D[gain, a] = mag[a] / len(gain)
        D[lose, a] = -mag[a] / len(lose)
    return project_zero_mass(D)


def project_zero_mass(D: np.ndarray) -> np.ndarray:
    """Shift each column so it sums to zero, keeping structural zeros where possible."""
    D = np.array(D, dtype=float)
    for a in range(D.shape[1]):
        col = D[:, a]
        nz = col != 0
        if not nz.any():
            continue
        col[nz] -= col.sum() / nz.sum()
        # clean the remaining round-off into the largest entry
        col[np.argmax(np.abs(col))] -= col.sum()
        D[:, a] = col
    return D


# ---------------------------------------------------------------------------
# 6-node enumeration toy


def toy_instance() -> Instance:
    """Six nodes, two commodities, ten arcs, four scenarios."""
    commodities = [("oil", 0.3, 25.0), ("gas", 0.8, 40.0)]
    nodes = [
        ("gulf", "supply", {"oil": 100, "gas": 60}, {}, {"oil": 100, "gas": 60}),
        ("west", "supply", {"oil": 40}, {}, {"oil": 40}),
        ("hub", "transshipment", {}, {}, {}),
        ("north", "demand", {}, {"oil": 60, "gas": 30}, {"oil": 40, "gas": 20}),
        ("south", "demand", {}, {"oil": 50, "gas": 20}, {"oil": 30, "gas": 10}),
        ("east", "demand", {}, {"oil": 30, "gas": 10}, {"oil": 20}),
    ]
    corridors = [("strait", 0.7), ("canal", 0.6), ("cape", 0.9), ("pipe", 1.0, False)]
    arcs = [
        ("gulf_hub_s", "gulf", "hub", "strait", 30, {"oil": 120, "gas": 60}, {"oil": 1.0, "gas": 1.5}),
        ("gulf_north_s", "gulf", "north", "strait", 25, {"oil": 60, "gas": 30}, {"oil": 3.0, "gas": 4.0}),
        ("gulf_hub_p", "gulf", "hub", "pipe", 40, {"oil": 40}, {"oil": 2.0}),
        ("hub_north_c", "hub", "north", "canal", 20, {"oil": 80, "gas": 40}, {"oil": 1.0, "gas": 1.2}),
        ("hub_south_c", "hub", "south", "canal", 20, {"oil": 60, "gas": 30}, {"oil": 1.5, "gas": 2.0}),
        ("hub_east_k", "hub", "east", "cape", 30, {"oil": 50, "gas": 20}, {"oil": 4.0, "gas": 5.0}),
        ("west_north_k", "west", "north", "cape", 15, {"oil": 40}, {"oil": 2.0}),
        ("west_south_k", "west", "south", "cape", 15, {"oil": 40}, {"oil": 3.0}),
        ("gulf_south_k", "gulf", "south", "cape", 35, {"oil": 50, "gas": 30}, {"oil": 6.0, "gas": 7.0}),
        ("hub_east_c", "hub", "east", "canal", 20, {"oil": 40, "gas": 20}, {"oil": 2.0, "gas": 2.5}),
    ]
    scenarios = [
        ("baseline", 0.4, {}, {}),
        ("strait_partial", 0.3, {"strait": 0.3}, {"strait": 2.0}),
        ("canal_closure", 0.2, {"canal": 0.1}, {"canal": 3.0, "cape": 1.3}),
        ("joint", 0.1, {"strait": 0.2, "canal": 0.2}, {"strait": 2.5, "canal": 3.0, "cape": 1.5}),
    ]
    corridor_of = [a[3] for a in arcs]
    exposure = {"strait": [1, 3], "canal": [2, 3], "cape": [0], "pipe": [0]}
    pos = {a: exposure[c] for a, c in enumerate(corridor_of)}
    delta = balanced_delta(pos, len(scenarios), len(arcs), 0.02)
    return make_instance(commodities, nodes, corridors, arcs, scenarios, delta, name="toy6")


def trapped_supply_instance() -> Instance:
    """Supply exceeds local storage, so designs without an outlet are infeasible."""
    commodities = [("oil", 0.3, 25.0)]
    nodes = [
        ("well", "supply", {"oil": 50}, {}, {"oil": 10}),
        ("port", "transshipment", {}, {}, {}),
        ("city", "demand", {}, {"oil": 40}, {"oil": 20}),
    ]
    corridors = [("sea", 0.8), ("land", 1.0, False)]
    arcs = [
        ("well_port", "well", "port", "sea", 10, 60, 1.0),
        ("port_city", "port", "city", "sea", 10, 60, 1.0),
        ("well_city", "well", "city", "land", 30, 30, 2.0),
    ]
    scenarios = [
        ("calm", 0.6, {}, {}),
        ("storm", 0.4, {"sea": 0.2}, {"sea": 2.0}),
    ]
    delta = np.array([[0.01, 0.01, -0.02], [-0.01, -0.01, 0.02]])
    return make_instance(commodities, nodes, corridors, arcs, scenarios, delta, name="trapped")


def vmc_toy_instance() -> Instance:
    """Correlated corridor failures make an expensive bypass worth building.

    Two regions are served over two exposed corridors; cheap cross links absorb a
    single failure, so the bypass only pays off when both corridors fail together.
    The correlated library puts far more mass on that joint state than the product
    of its marginals does.
    """
    commodities = [("oil", 0.1, 30.0)]
    nodes = [
        ("src", "supply", {"oil": 20}, {}, {"oil": 20}),
        ("a", "demand", {}, {"oil": 10}, {}),
        ("b", "demand", {}, {"oil": 10}, {}),
        ("hub", "transshipment", {}, {}, {}),
    ]
    corridors = [("north", 1.0), ("south", 1.0), ("bypass", 1.0), ("land", 1.0, False)]
    arcs = [
        ("src_a", "src", "a", "north", 1, 20, 1.0),
        ("src_b", "src", "b", "south", 1, 20, 1.0),
        ("a_b", "a", "b", "land", 1, 10, 1.0),
        ("b_a", "b", "a", "land", 1, 10, 1.0),
        ("src_hub", "src", "hub", "bypass", 50, 10, 1.0),
        ("hub_a", "hub", "a", "bypass", 1, 10, 1.0),
    ]
    scenarios = [
        ("calm", 0.60, {}, {}),
        ("north_out", 0.05, {"north": 0.0}, {"north": 2.0}),
        ("south_out", 0.05, {"south": 0.0}, {"south": 2.0}),
        ("both_out", 0.30, {"north": 0.0, "south": 0.0}, {"north": 2.0, "south": 2.0}),
    ]
    return make_instance(commodities, nodes, corridors, arcs, scenarios, None, k=0.0,
                         risk=RiskParams(0.0, 0.95), name="vmc_toy")


# ---------------------------------------------------------------------------
# random instances for oracle checks


def random_instance(rng: np.random.Generator, n_arcs: int = 6, n_scenarios: int = 3, n_commodities: int = 1,
                    risk: Optional[RiskParams] = None, ddu_scale: float = 0.02) -> Instance:
    """Random feasible instance: every supply node can buffer its own output."""
    C = n_commodities
    cids = [f"c{j}" for j in range(C)]
    commodities = [(c, float(rng.uniform(0.1, 1.0)), float(rng.uniform(15, 60))) for c in cids]
    n_supply = int(rng.integers(1, 3))
    n_demand = int(rng.integers(1, 3))
    nodes = []
    for i in range(n_supply):
        r = {c: float(rng.integers(10, 60)) for c in cids}
        nodes.append((f"s{i}", "supply", r, {}, dict(r)))
    nodes.append(("t0", "transshipment", {}, {}, {}))
    for i in range(n_demand):
        d = {c: float(rng.integers(10, 50)) for c in cids}
        L = {c: float(rng.integers(0, 30)) for c in cids}
        nodes.append((f"d{i}", "demand", {}, d, L))
    corridors = [("k0", float(rng.choice([0.6, 0.8, 1.0]))), ("k1", float(rng.choice([0.7, 1.0]))), ("k2", 1.0)]
    supply_ids = [n[0] for n in nodes if n[1] == "supply"]
    demand_ids = [n[0] for n in nodes if n[1] == "demand"]
    pairs = [(s, "t0") for s in supply_ids] + [("t0", d) for d in demand_ids] + [
        (s, d) for s in supply_ids for d in demand_ids
    ]
    arcs = []
    for a in range(n_arcs):
        tail, head = pairs[a % len(pairs)] if a < len(pairs) else pairs[int(rng.integers(len(pairs)))]
        cap = {c: float(rng.integers(10, 80)) for c in cids}
        cost = {c: float(rng.uniform(0.5, 6.0)) for c in cids}
        arcs.append((f"a{a}", tail, head, f"k{a % 3}", float(rng.uniform(2, 30)), cap, cost))
    S = n_scenarios
    scen = [("base", 0.0, {}, {})]
    for s in range(1, S):
        hit = f"k{int(rng.integers(0, 2))}"
        caps = {hit: float(rng.uniform(0.0, 0.6))}
        costs = {hit: float(rng.uniform(1.2, 4.0))}
        if rng.random() < 0.4:
            other = "k1" if hit == "k0" else "k0"
            caps[other] = float(rng.uniform(0.2, 0.9))
        scen.append((f"s{s}", 0.0, caps, costs))
    p = rng.dirichlet(np.ones(S)) * 0.8 + 0.2 / S
    p = p / p.sum()
    scen = [(sc[0], float(pp), sc[2], sc[3]) for sc, pp in zip(scen, p)]
    scen[-1] = (scen[-1][0], 1.0 - sum(x[1] for x in scen[:-1]), scen[-1][2], scen[-1][3])
    D = rng.normal(size=(S, n_arcs)) * (rng.random((S, n_arcs)) < 0.7)
    D = project_zero_mass(D)
    neg = -np.minimum(D, 0).sum(axis=1)
    if np.any(neg > 0):
        # scale so that k = 1 sits strictly inside the validity region
        D *= min(ddu_scale / max(np.max(np.abs(D)), 1e-12),
                 0.9 * float(np.min(np.array([sc[1] for sc in scen])[neg > 0] / neg[neg > 0])))
    if risk is None:
        risk = RiskParams(float(rng.choice([0.0, 0.3, 0.5, 1.0])), float(rng.choice([0.5, 0.8, 0.95])))
    return make_instance(commodities, nodes, corridors, arcs, scen, project_zero_mass(D), 1.0, risk,
                         name=f"random{n_arcs}x{S}")


def replicate_scenarios(instance: Instance, factor: int) -> Instance:
    """Pure replication: every scenario repeated ``factor`` times with probability divided."""
    import dataclasses

    if factor < 1:
        raise ValueError("replication factor must be >= 1")
    if factor == 1:
        return instance
    scen = []
    for r in range(factor):
        for s in instance.scenarios:
            scen.append(dataclasses.replace(s, id=f"{s.id}__r{r}", base_prob=s.base_prob / factor))
    delta = np.tile(instance.ddu.delta, (factor, 1)) / factor
    return instance.replace(scenarios=tuple(scen), ddu=DduMatrix(delta, instance.ddu.k),
                            name=f"{instance.name}_x{factor}")


def bundled_instances() -> dict:
    from .replica import replica_instance

    return {
        "replica": replica_instance(),
        "toy6": toy_instance(),
        "vmc_toy": vmc_toy_instance(),
        "trapped": trapped_supply_instance(),
    }
