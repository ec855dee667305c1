"""Sixteen-node, twenty-eight-arc replica of an import-dependent energy network.

Anchors taken from the published calibration: shortage penalties, holding costs,
corridor dependence caps, strategic storage totals (2700/450/400/800), activation
cost 2.0 and the nine-scenario disruption library.  Arc capacities and costs are
chosen here.  A ``direct`` corridor (no chokepoint, never disrupted) carries the
open-sea legs from Fujairah and Gorgon.
"""

from __future__ import annotations

import numpy as np

from .instances import make_instance, project_zero_mass
from .model import Instance, RiskParams

CORRIDORS = ("hormuz", "bab_suez", "cape", "pipe", "direct")

# id, Hormuz cap, Hormuz cost, B-S cap, B-S cost, Cape cost, pipe cap, probability
SCENARIO_LIBRARY = (
    ("baseline_normal", 1.00, 1.00, 1.00, 1.00, 1.00, 1.00, 0.15),
    ("hormuz_partial", 0.20, 2.50, 1.00, 1.00, 1.00, 1.00, 0.20),
    ("hormuz_sev_sel", 0.10, 4.00, 1.00, 1.20, 1.30, 1.00, 0.15),
    ("hormuz_closure", 0.05, 6.00, 1.00, 1.30, 1.50, 1.00, 0.10),
    ("bab_suez_severe", 1.00, 1.00, 0.25, 3.00, 1.80, 1.00, 0.10),
    ("dual_disruption", 0.15, 3.50, 0.20, 3.50, 2.00, 1.00, 0.08),
    ("insurance_spike", 0.60, 3.00, 0.50, 2.50, 1.80, 1.00, 0.10),
    ("closure_bypass", 0.05, 6.00, 0.80, 1.50, 1.60, 1.50, 0.07),
    ("delayed_recovery", 0.40, 2.00, 0.60, 1.80, 1.40, 1.00, 0.05),
)

K_MAX_TARGET = 6.7
ACTIVATION_COST = 2.0


def _scenarios():
    out = []
    for sid, hcap, hcost, bcap, bcost, ccost, pcap, p in SCENARIO_LIBRARY:
        caps = {"hormuz": hcap, "bab_suez": bcap, "cape": 1.0, "pipe": pcap, "direct": 1.0}
        costs = {"hormuz": hcost, "bab_suez": bcost, "cape": ccost, "pipe": 1.0, "direct": 1.0}
        out.append((sid, p, caps, costs))
    return out


def replica_delta(arc_corridors, scenarios) -> np.ndarray:
    """Shifts toward scenarios that disrupt the arc's corridor, balanced per arc.

    Every exposed arc moves the same total mass ``m``; ``m`` is set so the worst
    scenario reaches zero exactly at ``k = K_MAX_TARGET``.
    """
    S, A = len(scenarios), len(arc_corridors)
    D = np.zeros((S, A))
    for a, corr in enumerate(arc_corridors):
        gain = [s for s, sc in enumerate(scenarios) if sc[2][corr] < 1.0 or sc[3][corr] > 1.0]
        if not gain or len(gain) == S:
            continue
        lose = [s for s in range(S) if s not in gain]
        D[gain, a] = 1.0 / len(gain)
        D[lose, a] = -1.0 / len(lose)
    pbar = np.array([sc[1] for sc in scenarios])
    worst = -np.minimum(D, 0).sum(axis=1)
    m = np.min(pbar[worst > 0] / worst[worst > 0]) / K_MAX_TARGET
    return project_zero_mass(D * m)


def replica_instance(risk: RiskParams = RiskParams(0.5, 0.95)) -> Instance:
    commodities = [
        ("crude", 0.3, 25.0),
        ("lng", 0.8, 40.0),
        ("lpg", 0.5, 50.0),
        ("fertilizer", 0.2, 35.0),
    ]
    nodes = [
        # supply terminals buffer their own output
        ("ras_tanura", "supply", {"crude": 1300, "lpg": 300}, {}, {"crude": 1300, "lpg": 300}),
        ("habshan", "supply", {"crude": 900}, {}, {"crude": 900}),
        ("ras_laffan", "supply", {"lng": 900, "lpg": 500}, {}, {"lng": 900, "lpg": 500}),
        ("jubail", "supply", {"fertilizer": 300}, {}, {"fertilizer": 300}),
        ("primorsk", "supply", {"crude": 400, "fertilizer": 150}, {}, {"crude": 400, "fertilizer": 150}),
        ("bonny", "supply", {"crude": 700, "lng": 30}, {}, {"crude": 700, "lng": 30}),
        ("houston", "supply", {"lng": 30, "lpg": 100}, {}, {"lng": 30, "lpg": 100}),
        ("gorgon", "supply", {"lng": 80, "lpg": 40}, {}, {"lng": 80, "lpg": 40}),
        ("yanbu", "transshipment", {}, {}, {}),
        ("fujairah", "transshipment", {}, {}, {}),
        ("jamnagar", "demand", {}, {"crude": 1500}, {"crude": 1000}),
        ("mumbai", "demand", {}, {"crude": 1300, "lpg": 500, "fertilizer": 250},
         {"crude": 1000, "lpg": 250, "fertilizer": 300}),
        ("vizag", "demand", {}, {"crude": 900, "lpg": 400}, {"crude": 700, "lpg": 150}),
        ("dahej", "demand", {}, {"lng": 600}, {"lng": 300}),
        ("kochi", "demand", {}, {"lng": 300}, {"lng": 150}),
        ("paradip", "demand", {}, {"fertilizer": 400}, {"fertilizer": 500}),
    ]
    corridors = [("hormuz", 0.7), ("bab_suez", 0.5), ("cape", 0.8), ("pipe", 1.0, False), ("direct", 1.0)]
    f = ACTIVATION_COST
    arcs = [
        # Hormuz
        ("rt_jamnagar", "ras_tanura", "jamnagar", "hormuz", f, {"crude": 1000, "lpg": 200}, {"crude": 4.0, "lpg": 5.0}),
        ("rt_mumbai", "ras_tanura", "mumbai", "hormuz", f, {"crude": 800, "lpg": 300}, {"crude": 4.2, "lpg": 5.2}),
        ("rt_vizag", "ras_tanura", "vizag", "hormuz", f, {"crude": 600, "lpg": 200}, {"crude": 5.0, "lpg": 6.0}),
        ("hab_jamnagar", "habshan", "jamnagar", "hormuz", f, {"crude": 800}, {"crude": 3.8}),
        ("rl_dahej", "ras_laffan", "dahej", "hormuz", f, {"lng": 600}, {"lng": 4.5}),
        ("rl_kochi", "ras_laffan", "kochi", "hormuz", f, {"lng": 300}, {"lng": 5.0}),
        ("rl_mumbai", "ras_laffan", "mumbai", "hormuz", f, {"lpg": 300}, {"lpg": 5.0}),
        ("jub_paradip", "jubail", "paradip", "hormuz", f, {"fertilizer": 300}, {"fertilizer": 5.0}),
        ("jub_mumbai", "jubail", "mumbai", "hormuz", f, {"fertilizer": 300}, {"fertilizer": 4.5}),
        # pipelines around the strait
        ("petroline", "ras_tanura", "yanbu", "pipe", f, {"crude": 700}, {"crude": 1.5}),
        ("adcop", "habshan", "fujairah", "pipe", f, {"crude": 600}, {"crude": 1.2}),
        # Red Sea / Suez
        ("yanbu_jamnagar", "yanbu", "jamnagar", "bab_suez", f, {"crude": 500}, {"crude": 4.5}),
        ("yanbu_mumbai", "yanbu", "mumbai", "bab_suez", f, {"crude": 400}, {"crude": 4.5}),
        ("pri_mumbai", "primorsk", "mumbai", "bab_suez", f, {"crude": 400, "fertilizer": 150}, {"crude": 6.0, "fertilizer": 6.0}),
        ("hou_kochi", "houston", "kochi", "bab_suez", f, {"lng": 30, "lpg": 60}, {"lng": 7.0, "lpg": 7.0}),
        # open sea
        ("fuj_jamnagar", "fujairah", "jamnagar", "direct", f, {"crude": 400}, {"crude": 2.5}),
        ("fuj_mumbai", "fujairah", "mumbai", "direct", f, {"crude": 400}, {"crude": 2.7}),
        ("fuj_vizag", "fujairah", "vizag", "direct", f, {"crude": 300}, {"crude": 3.5}),
        ("gor_dahej", "gorgon", "dahej", "direct", f, {"lng": 60}, {"lng": 7.0}),
        ("gor_kochi", "gorgon", "kochi", "direct", f, {"lng": 60}, {"lng": 6.5}),
        ("gor_vizag", "gorgon", "vizag", "direct", f, {"lpg": 40}, {"lpg": 6.5}),
        # Cape of Good Hope
        ("bon_jamnagar", "bonny", "jamnagar", "cape", f, {"crude": 400}, {"crude": 8.0}),
        ("bon_dahej", "bonny", "dahej", "cape", f, {"lng": 30}, {"lng": 8.5}),
        ("pri_paradip", "primorsk", "paradip", "cape", f, {"fertilizer": 150}, {"fertilizer": 9.0}),
        ("hou_mumbai", "houston", "mumbai", "cape", f, {"lpg": 60}, {"lpg": 9.0}),
        ("hou_dahej", "houston", "dahej", "cape", f, {"lng": 30}, {"lng": 9.5}),
        ("hou_vizag", "houston", "vizag", "cape", f, {"lpg": 40}, {"lpg": 9.5}),
        ("bon_vizag", "bonny", "vizag", "cape", f, {"crude": 300}, {"crude": 8.5}),
    ]
    scenarios = _scenarios()
    delta = replica_delta([a[3] for a in arcs], scenarios)
    return make_instance(commodities, nodes, corridors, arcs, scenarios, delta, k=1.0, risk=risk, name="replica16")
