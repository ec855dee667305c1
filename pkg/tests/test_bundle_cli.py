import numpy as np
import pytest

from resilient_flow.bundle import (BundleError, generate_bundled_instances, instance_hash, load_instance, parse_bundle,
                                   serialize, write_bundle)
from resilient_flow.cli import main
from resilient_flow.extensive import solve_ef
from resilient_flow.instances import bundled_instances, toy_instance
from resilient_flow.replica import replica_instance


@pytest.fixture(scope="module")
def bundles(tmp_path_factory):
    out = tmp_path_factory.mktemp("bundles")
    generate_bundled_instances(out)
    return out


@pytest.mark.parametrize("name", ["replica", "toy6", "vmc_toy", "trapped"])
def test_round_trip_preserves_hash(bundles, name):
    original = bundled_instances()[name]
    loaded = load_instance(bundles / name)
    assert instance_hash(loaded) == instance_hash(original)
    assert serialize(loaded) == serialize(original)
    assert np.array_equal(loaded.ddu.delta, original.ddu.delta)


def test_replica_files():
    texts = serialize(replica_instance())
    rows = texts["scenarios"].splitlines()
    assert rows[4].split(",") == ["hormuz_closure", "0.05", "6.0", "1.0", "1.3", "1.5", "1.0", "0.1"]
    pis = [float(line.split(",")[2]) for line in texts["commodities"].splitlines()[1:]]
    assert pis == [25.0, 40.0, 50.0, 35.0]


def test_unknown_corridor_is_reported():
    texts = serialize(toy_instance())
    texts["arcs"] = texts["arcs"].replace("gulf_hub_s,gulf,hub,strait", "gulf_hub_s,gulf,hub,bosporus")
    with pytest.raises(BundleError) as err:
        parse_bundle(texts)
    msg = str(err.value)
    assert "gulf_hub_s" in msg and "bosporus" in msg


def test_unbalanced_delta_is_reported():
    texts = serialize(toy_instance())
    lines = texts["ddu"].splitlines()
    sid, aid, val = lines[1].split(",")
    lines[1] = f"{sid},{aid},{float(val) + 0.01!r}"
    texts["ddu"] = "\n".join(lines) + "\n"
    with pytest.raises(BundleError) as err:
        parse_bundle(texts)
    assert "mass preservation" in str(err.value) and aid in str(err.value)


def test_unparsable_number_names_the_line():
    texts = serialize(toy_instance())
    texts["commodities"] = texts["commodities"].replace("25.0", "lots")
    with pytest.raises(BundleError) as err:
        parse_bundle(texts)
    assert "commodities.csv line 2" in str(err.value)


def test_missing_file(tmp_path):
    write_bundle(toy_instance(), tmp_path / "b")
    (tmp_path / "b" / "arcs.csv").unlink()
    with pytest.raises(BundleError):
        load_instance(tmp_path / "b")


def test_toy_solves_fast(bundles):
    import time

    t = time.perf_counter()
    inst = load_instance(bundles / "toy6")
    solve_ef(inst)
    assert time.perf_counter() - t < 1.0


def test_cli_validate(bundles, capsys):
    assert main(["validate", str(bundles / "replica")]) == 0
    out = capsys.readouterr().out
    assert "16 nodes, 28 arcs, 4 commodities, 9 scenarios" in out


def test_cli_solve_ef_json(bundles, tmp_path):
    import json

    out = tmp_path / "sol.json"
    assert main(["solve-ef", str(bundles / "toy6"), "--json", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["objective"] == pytest.approx(solve_ef(toy_instance()).objective, rel=1e-9)


def test_cli_benders_trace(bundles, tmp_path):
    trace = tmp_path / "trace.tsv"
    assert main(["benders", str(bundles / "trapped"), "--trace-out", str(trace)]) == 0
    lines = trace.read_text().splitlines()
    assert lines[0].split("\t")[:3] == ["iteration", "lower_bound", "upper_bound"]
    lb = [float(x.split("\t")[1]) for x in lines[1:]]
    assert all(b >= a - 1e-9 for a, b in zip(lb, lb[1:]))


def test_cli_experiment_outputs(bundles, tmp_path):
    assert main(["experiment", "vss", str(bundles / "toy6"), "--out", str(tmp_path), "--plot-data"]) == 0
    assert (tmp_path / "vss.tsv").exists() and (tmp_path / "vss.json").exists()


def test_cli_input_errors(bundles, tmp_path, capsys):
    assert main(["experiment", "vep", str(bundles / "toy6"), "--ks", "0,50"]) == 2
    assert "validity region" in capsys.readouterr().err
    assert main(["validate", str(tmp_path / "nowhere")]) == 2
    assert main(["solve-ef", str(bundles / "toy6"), "--k", "-1"]) == 2
    assert main(["frobnicate"]) == 2


def test_cli_solve_error(tmp_path):
    from resilient_flow.instances import make_instance

    inst = make_instance([("oil", 0.2, 50.0)],
                         [("s", "supply", {"oil": 10}, {}, {"oil": 2}), ("d", "demand", {}, {"oil": 5}, {})],
                         [("k", 1.0)], [("sd", "s", "d", "k", 1.0, 3, 1.0)], [("only", 1.0, {}, {})])
    write_bundle(inst, tmp_path / "stuck")
    assert main(["solve-ef", str(tmp_path / "stuck")]) == 1
