"""CSV calibration bundles: parsing with line-level diagnostics, serialization, hashing.

A bundle is a directory holding

* ``commodities.csv``: ``id, holding_cost, shortage_penalty``
* ``nodes.csv``: ``id, kind`` then ``supply_<c>``, ``demand_<c>``, ``storage_<c>`` per commodity
* ``corridors.csv``: ``id, dependence_cap, maritime``
* ``arcs.csv``: ``id, tail, head, corridor, fixed_cost`` then ``capacity_<c>``, ``cost_<c>``,
  ``admissible_<c>`` per commodity
* ``scenarios.csv``: ``id`` then ``<corridor>_cap`` / ``<corridor>_cost`` multiplier columns
  (absent columns mean 1) then ``prob``
* ``ddu.csv``: long form ``scenario, arc, delta`` (absent pairs mean 0)
* ``config.csv``: ``key, value`` rows for name, lam, alpha, k and solver settings
* ``admissibility.csv`` (optional): ``scenario, arc, commodity, admissible`` overrides

Numbers use a decimal point and no thousands separators regardless of locale.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from pathlib import Path
from typing import Iterable, Union

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
    validate_instance,
)

FILES = ("commodities", "nodes", "corridors", "arcs", "scenarios", "ddu", "config")
OPTIONAL_FILES = ("admissibility",)
SETTING_KEYS = ("epsilon", "max_iter", "mip_gap", "feas_tol", "opt_tol")


class BundleError(ValueError):
    """Input problems found while reading a bundle; ``errors`` lists every diagnostic."""

    def __init__(self, errors: list):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


# ---------------------------------------------------------------------------
# serialization


def _table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([v if isinstance(v, str) else _fmt(v) for v in r])
    return buf.getvalue()


def serialize(instance: Instance) -> dict:
    """Canonical CSV text for every bundle file, keyed by file stem."""
    cids = [c.id for c in instance.commodities]
    out = {}
    out["commodities"] = _table(
        ["id", "holding_cost", "shortage_penalty"],
        [(c.id, c.holding_cost, c.shortage_penalty) for c in instance.commodities],
    )
    out["nodes"] = _table(
        ["id", "kind"] + [f"supply_{c}" for c in cids] + [f"demand_{c}" for c in cids] + [f"storage_{c}" for c in cids],
        [(n.id, n.kind, *n.supply, *n.demand, *n.storage_cap) for n in instance.nodes],
    )
    out["corridors"] = _table(
        ["id", "dependence_cap", "maritime"],
        [(c.id, c.dependence_cap, bool(c.maritime)) for c in instance.corridors],
    )
    out["arcs"] = _table(
        ["id", "tail", "head", "corridor", "fixed_cost"]
        + [f"capacity_{c}" for c in cids]
        + [f"cost_{c}" for c in cids]
        + [f"admissible_{c}" for c in cids],
        [
            (a.id, a.tail, a.head, a.corridor, a.fixed_cost, *a.capacity, *a.cost, *[int(v) for v in a.admissible])
            for a in instance.arcs
        ],
    )
    # multiplier columns that differ from 1 somewhere, corridor order, capacity before cost
    cols = []
    for corr in instance.corridors:
        for kind, getter in (("cap", Scenario.capacity_of), ("cost", Scenario.cost_of)):
            if any(getter(s, corr.id) != 1.0 for s in instance.scenarios):
                cols.append((f"{corr.id}_{kind}", corr.id, getter))
    named = any(s.name != s.id for s in instance.scenarios)
    out["scenarios"] = _table(
        ["id"] + (["name"] if named else []) + [c[0] for c in cols] + ["prob"],
        [
            (s.id, *([s.name] if named else []), *[g(s, cid) for _, cid, g in cols], s.base_prob)
            for s in instance.scenarios
        ],
    )
    D = instance.ddu.delta
    out["ddu"] = _table(
        ["scenario", "arc", "delta"],
        [
            (instance.scenarios[s].id, instance.arcs[a].id, float(D[s, a]))
            for s in range(D.shape[0])
            for a in range(D.shape[1])
            if D[s, a] != 0.0
        ],
    )
    st = instance.settings
    out["config"] = _table(
        ["key", "value"],
        [
            ("name", instance.name),
            ("lam", instance.risk.lam),
            ("alpha", instance.risk.alpha),
            ("k", instance.ddu.k),
            ("epsilon", st.epsilon),
            ("max_iter", int(st.max_iter)),
            ("mip_gap", st.mip_gap),
            ("feas_tol", st.feas_tol),
            ("opt_tol", st.opt_tol),
        ],
    )
    overrides = [
        (s.id, aid, cid, int(v)) for s in instance.scenarios for (aid, cid), v in sorted(s.admissibility_override.items())
    ]
    if overrides:
        out["admissibility"] = _table(["scenario", "arc", "commodity", "admissible"], overrides)
    return out


def instance_hash(instance: Instance) -> str:
    """64-bit digest of the canonical serialization, as 16 hex characters."""
    files = serialize(instance)
    h = hashlib.blake2b(digest_size=8)
    for stem in FILES + OPTIONAL_FILES:
        if stem in files:
            h.update(stem.encode())
            h.update(b"\0")
            h.update(files[stem].encode("utf-8"))
    return h.hexdigest()


def write_bundle(instance: Instance, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for stem, text in serialize(instance).items():
        (path / f"{stem}.csv").write_text(text, encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# parsing


class _Reader:
    """Collects diagnostics instead of stopping at the first problem."""

    def __init__(self, texts: dict):
        self.texts = texts
        self.errors: list[str] = []

    def rows(self, stem: str, required: Iterable[str], optional=False):
        if stem not in self.texts:
            if not optional:
                self.errors.append(f"{stem}.csv: file missing")
            return [], []
        reader = csv.DictReader(io.StringIO(self.texts[stem]))
        header = [h.strip() for h in (reader.fieldnames or [])]
        reader.fieldnames = header
        missing = [c for c in required if c not in header]
        if missing:
            self.errors.append(f"{stem}.csv: missing column(s) {', '.join(missing)}")
            return header, []
        out = []
        for line, row in enumerate(reader, start=2):
            if None in row:
                self.errors.append(f"{stem}.csv line {line}: more fields than header columns")
                continue
            out.append((line, {k: (v or "").strip() for k, v in row.items()}))
        return header, out

    def num(self, stem, line, row, col, integer=False, default=None):
        raw = row.get(col, "")
        if raw == "" and default is not None:
            return default
        try:
            val = int(raw) if integer else float(raw)
        except ValueError:
            self.errors.append(f"{stem}.csv line {line}: column '{col}': cannot parse {raw!r} as a number")
            return default if default is not None else 0.0
        if not math.isfinite(val):
            self.errors.append(f"{stem}.csv line {line}: column '{col}': value must be finite")
        return val

    def flag(self, stem, line, row, col):
        raw = row.get(col, "").lower()
        if raw in ("1", "true", "yes"):
            return True
        if raw in ("0", "false", "no"):
            return False
        self.errors.append(f"{stem}.csv line {line}: column '{col}': expected 0/1, got {raw!r}")
        return True


def parse_bundle(texts: dict) -> Instance:
    """Build an instance from file texts keyed by stem; raises :class:`BundleError`."""
    rd = _Reader(texts)

    _, crows = rd.rows("commodities", ["id", "holding_cost", "shortage_penalty"])
    commodities = []
    for line, r in crows:
        commodities.append(
            Commodity(r["id"], rd.num("commodities", line, r, "holding_cost"), rd.num("commodities", line, r, "shortage_penalty"))
        )
    cids = [c.id for c in commodities]
    if not cids and "commodities" in texts:
        rd.errors.append("commodities.csv: no commodities defined")

    def vec(stem, line, r, prefix, default=None):
        return tuple(rd.num(stem, line, r, f"{prefix}_{c}", default=default) for c in cids)

    node_cols = ["id", "kind"] + [f"{p}_{c}" for p in ("supply", "demand", "storage") for c in cids]
    _, nrows = rd.rows("nodes", node_cols)
    nodes = [
        Node(r["id"], r["kind"], vec("nodes", line, r, "supply"), vec("nodes", line, r, "demand"), vec("nodes", line, r, "storage"))
        for line, r in nrows
    ]
    node_ids = {n.id for n in nodes}

    _, korows = rd.rows("corridors", ["id", "dependence_cap"])
    corridors = [
        Corridor(
            r["id"],
            rd.num("corridors", line, r, "dependence_cap"),
            rd.flag("corridors", line, r, "maritime") if r.get("maritime", "") != "" else True,
        )
        for line, r in korows
    ]
    corridor_ids = {c.id for c in corridors}

    arc_cols = ["id", "tail", "head", "corridor", "fixed_cost"] + [f"{p}_{c}" for p in ("capacity", "cost") for c in cids]
    _, arows = rd.rows("arcs", arc_cols)
    arcs = []
    for line, r in arows:
        for end in ("tail", "head"):
            if r[end] not in node_ids:
                rd.errors.append(f"arcs.csv line {line}: arc {r['id']!r} references unknown node {r[end]!r} ({end})")
        if r["corridor"] not in corridor_ids:
            rd.errors.append(f"arcs.csv line {line}: arc {r['id']!r} references unknown corridor {r['corridor']!r}")
        cap = vec("arcs", line, r, "capacity")
        if all(f"admissible_{c}" in r and r[f"admissible_{c}"] != "" for c in cids):
            adm = tuple(int(rd.flag("arcs", line, r, f"admissible_{c}")) for c in cids)
        else:
            adm = tuple(int(v > 0) for v in cap)
        arcs.append(Arc(r["id"], r["tail"], r["head"], r["corridor"], rd.num("arcs", line, r, "fixed_cost"), cap,
                        vec("arcs", line, r, "cost"), adm))
    arc_ids = {a.id for a in arcs}

    sheader, srows = rd.rows("scenarios", ["id", "prob"])
    mult_cols = {}
    for col in sheader:
        if col in ("id", "prob", "name"):
            continue
        corr, _, kind = col.rpartition("_")
        if kind not in ("cap", "cost") or corr not in corridor_ids:
            rd.errors.append(f"scenarios.csv: column '{col}' does not name a corridor multiplier (<corridor>_cap or <corridor>_cost)")
            continue
        mult_cols[col] = (corr, kind)
    scen_rows = []
    for line, r in srows:
        caps = {c: rd.num("scenarios", line, r, col) for col, (c, k) in mult_cols.items() if k == "cap"}
        costs = {c: rd.num("scenarios", line, r, col) for col, (c, k) in mult_cols.items() if k == "cost"}
        scen_rows.append([r["id"], r.get("name") or r["id"], rd.num("scenarios", line, r, "prob"), caps, costs, {}])
    sidx = {row[0]: i for i, row in enumerate(scen_rows)}

    _, orows = rd.rows("admissibility", ["scenario", "arc", "commodity", "admissible"], optional=True)
    for line, r in orows:
        if r["scenario"] not in sidx:
            rd.errors.append(f"admissibility.csv line {line}: unknown scenario {r['scenario']!r}")
            continue
        if r["arc"] not in arc_ids or r["commodity"] not in cids:
            rd.errors.append(
                f"admissibility.csv line {line}: override for arc {r['arc']!r} names unknown arc or commodity {r['commodity']!r}"
            )
            continue
        scen_rows[sidx[r["scenario"]]][5][(r["arc"], r["commodity"])] = int(rd.flag("admissibility", line, r, "admissible"))
    scenarios = [Scenario(*row) for row in scen_rows]

    _, drows = rd.rows("ddu", ["scenario", "arc", "delta"])
    aidx = {a.id: j for j, a in enumerate(arcs)}
    D = np.zeros((len(scenarios), len(arcs)))
    for line, r in drows:
        bad = False
        if r["scenario"] not in sidx:
            rd.errors.append(f"ddu.csv line {line}: unknown scenario {r['scenario']!r} (arc {r['arc']!r})")
            bad = True
        if r["arc"] not in aidx:
            rd.errors.append(f"ddu.csv line {line}: unknown arc {r['arc']!r} (scenario {r['scenario']!r})")
            bad = True
        val = rd.num("ddu", line, r, "delta")
        if not bad:
            D[sidx[r["scenario"]], aidx[r["arc"]]] = val

    _, frows = rd.rows("config", ["key", "value"])
    cfg = {r["key"]: (line, r) for line, r in frows}

    def cfg_num(key, default, integer=False):
        if key not in cfg:
            return default
        line, r = cfg[key]
        return rd.num("config", line, r, "value", integer=integer)

    name = cfg["name"][1]["value"] if "name" in cfg else "instance"
    risk = RiskParams(cfg_num("lam", 0.5), cfg_num("alpha", 0.95))
    k = cfg_num("k", 1.0)
    d = Settings()
    settings = Settings(
        cfg_num("epsilon", d.epsilon), cfg_num("max_iter", d.max_iter, integer=True), cfg_num("mip_gap", d.mip_gap),
        cfg_num("feas_tol", d.feas_tol), cfg_num("opt_tol", d.opt_tol),
    )
    known = {"name", "lam", "alpha", "k", *SETTING_KEYS}
    for key, (line, _) in cfg.items():
        if key not in known:
            rd.errors.append(f"config.csv line {line}: unknown key {key!r}")

    if rd.errors:
        raise BundleError(rd.errors)
    inst = Instance(tuple(nodes), tuple(arcs), tuple(corridors), tuple(commodities), tuple(scenarios),
                    DduMatrix(D, k), risk, settings, name)
    problems = validate_instance(inst)
    if problems:
        raise BundleError(problems)
    return inst


def load_instance(path: Union[str, Path]) -> Instance:
    path = Path(path)
    if not path.is_dir():
        raise BundleError([f"{path}: bundle directory not found"])
    texts = {}
    for stem in FILES + OPTIONAL_FILES:
        f = path / f"{stem}.csv"
        if f.exists():
            texts[stem] = f.read_text(encoding="utf-8")
    return parse_bundle(texts)


def generate_bundled_instances(out_path: Union[str, Path]) -> list:
    """Write the replica and the three toys as bundles under ``out_path``."""
    from .instances import bundled_instances

    out = Path(out_path)
    return [write_bundle(inst, out / name) for name, inst in bundled_instances().items()]
