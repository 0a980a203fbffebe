import io
import subprocess
import sys

import numpy as np
import pytest

from ftciso import fixtures as F
from ftciso.cli_io import (
    GraphFormatError,
    RunConfig,
    parse_graph,
    read_graph,
    run_command,
    serialize_graph,
)
from ftciso.graph_core import EmbeddedGraph


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("graphs")
    F.write_fixture_files(d)
    return d


def _run(*argv):
    out = io.StringIO()
    code = run_command([str(a) for a in argv], out)
    lines = [l.split() for l in out.getvalue().splitlines()]
    return code, {l[0]: l[1:] for l in lines if l}


# ---------------------------------------------------------------------------
# graph files

@pytest.mark.parametrize("g", [F.theta_two_vertex(), F.star3(), EmbeddedGraph.from_loops(list(F.hopf_link(20)))])
def test_round_trip_is_exact(g):
    back = parse_graph(serialize_graph(g))
    assert set(back.arcs) == set(g.arcs)
    for aid in g.arcs:
        assert np.array_equal(back.arcs[aid].points, g.arcs[aid].points)
        assert back.arcs[aid].closed == g.arcs[aid].closed
    assert serialize_graph(back) == serialize_graph(g)


@pytest.mark.parametrize("text,lineno", [
    ("nope\n", 1),
    ("# ftc-graph 1\nv a 0 0\n", 2),
    ("# ftc-graph 1\nv a 0 0 0\nv a 1 1 1\n", 3),
    ("# ftc-graph 1\np 0 0 0\n", 2),
    ("# ftc-graph 1\nv a 0 0 0\na x a b\n  p 0 0 0\n  p 1 0 0\n", 3),
    ("# ftc-graph 1\nq 1\n", 2),
    ("# ftc-graph 1\nv a 0 0 0\nv b 1 0 0\na x a b open\n", 4),
])
def test_parse_errors_name_the_line(text, lineno):
    with pytest.raises(GraphFormatError) as e:
        parse_graph(text)
    assert e.value.lineno == lineno


def test_parse_can_require_embedding():
    text = ("# ftc-graph 1\nv a -1 0 0\nv b 1 0 0\nv c 0 -1 0\nv d 0 1 0\n"
            "a x a b\n  p -1 0 0\n  p 1 0 0\na y c d\n  p 0 -1 0\n  p 0 1 0\n")
    assert len(parse_graph(text).arcs) == 2
    with pytest.raises(GraphFormatError):
        parse_graph(text, check_embedded=True)


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig(epsilon=0.0)
    with pytest.raises(ValueError):
        RunConfig(m=1)
    with pytest.raises(ValueError):
        RunConfig(mode="other")


# ---------------------------------------------------------------------------
# commands

def test_tc_and_thickness(files):
    code, out = _run("tc", files / "theta.graph")
    assert code == 0
    text = io.StringIO()
    run_command(["tc", str(files / "square.graph")], text)
    per_arc = [float(l.split()[2]) for l in text.getvalue().splitlines()]
    assert sum(per_arc) == pytest.approx(2 * np.pi)
    code, out = _run("thickness", files / "circle.graph")
    assert code == 0 and float(out["tau_hat"][0]) == pytest.approx(2 * np.cos(np.pi / 64))
    assert out["mechanism"] == ["self-distance"]


def test_closeness_and_thick_certificates(files):
    code, out = _run("closeness", files / "circle.graph", files / "circle_near.graph")
    assert code == 0 and float(out["delta"][0]) == pytest.approx(0.01 * np.sqrt(3))
    code, out = _run("certify-thick", files / "circle.graph", files / "circle_near.graph")
    assert code == 0 and out["certificate"] == ["issued"]
    code, out = _run("certify-thick", files / "circle.graph", files / "circle_far.graph")
    assert code == 2 and out["reason"] == ["delta-too-large"]


def test_ftc_certificate_and_frames(files, tmp_path):
    code, out = _run("certify-ftc", files / "trefoil.graph", files / "trefoil_perturbed.graph", "--epsilon", 0.1)
    assert code == 0 and out["certificate"] == ["issued"]
    prefix = tmp_path / "fr"
    code, out = _run("frames", files / "trefoil.graph", files / "trefoil_perturbed.graph",
                     "--epsilon", 0.1, "--m", 6, "--out", prefix)
    assert code == 0 and out["all_embedded"] == ["true"]
    index = (tmp_path / "fr_index.txt").read_text().split("\n")
    first = read_graph(tmp_path / index[0].split()[1])
    assert len(first.arcs) == 1


def test_neighborhood_mesh_export(files, tmp_path):
    code, out = _run("neighborhood", files / "square.graph", "--epsilon", 0.3, "--out", tmp_path / "nb")
    assert code == 0 and int(out["balls"][0]) >= 4
    text = (tmp_path / "nb.obj").read_text()
    assert text.startswith("v ") and "\nf " in text


def test_inscribe_and_round(files, tmp_path):
    code, _ = _run("inscribe", files / "circle.graph", "--h", 0.4, "--out", tmp_path / "ins.graph")
    assert code == 0 and len(read_graph(tmp_path / "ins.graph").arcs["k0"].points) < 65
    code, out = _run("round", files / "circle.graph", "--tau", 2.0, "--out", tmp_path / "r.graph")
    assert code == 0
    r = float(out["spacing"][0])
    assert 2.0 / 50 < r < 2.0 / 40
    assert float(out["min_radius"][0]) >= 5 * r * (1 - 1e-6)


def test_invariant_commands(files):
    code, out = _run("lk", files / "hopf.graph")
    assert code == 0 and abs(int(out["linking_number"][0])) == 1
    code, out = _run("det", files / "trefoil.graph")
    assert code == 0 and out["determinant"] == ["3"]
    code, out = _run("theta", "--delta", 0.0, "--tau", 1.0)
    assert float(out["theta"][0]) == pytest.approx(np.pi / 2)


def test_errors_exit_one(files, tmp_path, capsys):
    assert _run("tc", tmp_path / "missing.graph")[0] == 1
    assert _run("theta", "--delta", 1.0, "--tau", 1.0)[0] == 1
    assert _run("bogus")[0] == 1
    assert "error" in capsys.readouterr().err


def test_module_entry_point(files):
    res = subprocess.run([sys.executable, "-m", "ftciso.cli_io", "det", str(files / "trefoil.graph")],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and res.stdout.strip() == "determinant 3"
