from __future__ import annotations

import json
import subprocess
import sys

import pytest

from chainscope import boxgraph, raster
from chainscope.cli import main

LINEAR = "linear:1,1.6180339887498949"


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def report(capsys, *argv):
    code, out, err = run(capsys, *argv)
    assert code == 0, err
    return json.loads(out)


@pytest.fixture(scope="module")
def fig1_graph(tmp_path_factory):
    path = tmp_path_factory.mktemp("g") / "fig1.csgr"
    assert main(["build", "--flow", "figure1", "--n", "16", "--out", str(path)]) == 0
    return str(path)


def test_build_counts_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a.csgr", tmp_path / "b.csgr"
    code, out, _ = run(capsys, "build", "--flow", LINEAR, "--n", "16", "--out", str(a))
    assert code == 0 and out.startswith("nodes 256 ")
    run(capsys, "build", "--flow", LINEAR, "--n", "16", "--out", str(b))
    assert a.read_bytes() == b.read_bytes()
    assert boxgraph.load(a).num_nodes == 256


def test_build_json_and_refine(tmp_path, capsys):
    j = tmp_path / "c.json"
    assert run(capsys, "build", "--flow", "circle", "--n", "8", "--out", str(j))[0] == 0
    assert json.loads(j.read_text())["num_nodes"] == 8
    code, out, _ = run(capsys, "refine", "--flow", "circle", "--graph", str(j), "--out", str(tmp_path / "r.csgr"))
    assert code == 0 and out.startswith("nodes 16 ")


def test_qltest(fig1_graph, capsys):
    doc = report(capsys, "qltest", "--graph", fig1_graph, "--alpha", "1,0")
    assert doc["results"]["verdict"] == "QL" and doc["command"] == "qltest"
    assert doc["fingerprint"] == boxgraph.load(fig1_graph).fingerprint.hex()
    doc = report(capsys, "qltest", "--graph", fig1_graph, "--alpha=-1,0")
    assert doc["results"]["verdict"] == "NotQL" and doc["results"]["cycle"]


def test_reports_replay_modulo_wall_time(fig1_graph, capsys):
    docs = [report(capsys, "arec", "--graph", fig1_graph, "--alpha", "1,1") for _ in range(2)]
    for d in docs:
        d.pop("wall_time")
    assert docs[0] == docs[1]


def test_arec_rasters_differ(fig1_graph, tmp_path, capsys):
    images = {}
    for alpha in ("1,0", "1,1"):
        path = tmp_path / f"{alpha}.ppm"
        doc = report(capsys, "arec", "--graph", fig1_graph, "--alpha", alpha, "--raster", str(path))
        img = raster.read_ppm(path.read_bytes())
        assert img.shape == (16, 16, 3)
        assert int((img != 255).any(axis=2).sum()) == len(doc["results"]["nodes"])
        images[alpha] = img
    assert (images["1,0"] != images["1,1"]).any()


def test_faces_and_cone(fig1_graph, capsys):
    doc = report(capsys, "faces", "--graph", fig1_graph, "--alpha", "1,0", "--alpha", "0,1", "--alpha", "0,0")
    assert doc["results"]["problems"] == [] and len(doc["results"]["faces"]) == 3
    doc = report(capsys, "cone", "--graph", fig1_graph, "--probes", "8")
    assert len(doc["results"]["rays"]) == 3


def test_lyap_and_prescribe(fig1_graph, capsys):
    doc = report(capsys, "lyap", "--graph", fig1_graph, "--alpha", "1,1")
    assert doc["results"]["verified"] == "strong"
    doc = report(capsys, "prescribe", "--graph", fig1_graph, "--alpha", "0,0", "--values", "0:0")
    assert doc["results"]["feasible"] and doc["results"]["chain_values"]["0"] == "0"


def test_rec_with_build_flags(capsys):
    doc = report(capsys, "rec", "--flow", "circle", "--n", "16")
    assert doc["results"]["recurrent_nodes"] > 0
    assert doc["config"]["n"] == 16 and doc["config"]["flow"] == "circle"


def test_reduce(tmp_path, capsys):
    g = tmp_path / "c.json"
    run(capsys, "build", "--flow", "circle", "--n", "8", "--out", str(g))
    graph = boxgraph.load_any(g)
    loop = next(e for e in range(graph.num_edges) if graph.src[e] == graph.dst[e])
    walk = tmp_path / "w.json"
    walk.write_text(json.dumps([loop, loop, loop]))
    doc = report(capsys, "reduce", "--graph", str(g), "--walk", str(walk))
    res = doc["results"]
    assert res["closed"] and res["cycles"] == [[loop]] * 3
    assert res["walk_class"] == res["sum_class"] and res["walk_edges"] == res["sum_edges"]


def test_verify_appendix(capsys):
    doc = report(capsys, "verify-appendix", "--flow", LINEAR, "--n", "8", "--trials", "4")
    assert doc["results"]["violations"] == [] and doc["results"]["fried_outside"] == 0


def test_exit_codes(fig1_graph, tmp_path, capsys):
    assert run(capsys, "qltest", "--graph", str(tmp_path / "missing.csgr"), "--alpha", "1,0")[0] == 4
    assert run(capsys, "qltest", "--graph", fig1_graph, "--alpha", "1,0,0")[0] == 2
    assert run(capsys, "qltest", "--flow", "figure1", "--alpha", "1,0")[0] == 2
    assert run(capsys, "qltest", "--graph", fig1_graph, "--alpha", "one")[0] == 2
    assert run(capsys, "arec", "--graph", fig1_graph, "--alpha=-1,0")[0] == 3
    assert run(capsys, "lyap", "--graph", fig1_graph, "--alpha=-1,-1")[0] == 3
    bad = tmp_path / "bad.csgr"
    bad.write_bytes(b"garbage")
    assert run(capsys, "rec", "--graph", str(bad))[0] == 4
    with pytest.raises(SystemExit) as err:
        main(["qltest"])
    assert err.value.code == 2


def test_infeasible_prescription_exit(tmp_path, capsys):
    g = boxgraph.TransitionGraph.from_edges(
        4, [(0, 1, (0, 0)), (1, 0, (0, 0)), (2, 3, (0, 0)), (3, 2, (0, 0)), (1, 2, (0, 0))], 1.0, 2)
    path = tmp_path / "g.json"
    boxgraph.save_json(g, path)
    code, out, _ = run(capsys, "prescribe", "--graph", str(path), "--alpha", "0,0", "--values", "0:0,1:1")
    assert code == 3 and json.loads(out)["results"]["witness_path"]


def test_module_entry_point(tmp_path):
    out = tmp_path / "r.json"
    proc = subprocess.run([sys.executable, "-m", "chainscope", "rec", "--flow", "circle", "--n", "8",
                           "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(out.read_text())["command"] == "rec"
