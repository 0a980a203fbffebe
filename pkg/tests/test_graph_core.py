import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ftciso import fixtures as F
from ftciso.graph_core import (
    Arc,
    EmbeddedGraph,
    GraphError,
    arc_length,
    arc_pair_distance,
    corner_set,
    is_embedded,
    min_self_distance,
    one_sided_tangents,
    polyline_gap,
    polyline_pair_distances,
    random_rigid_motion,
    total_curvature,
    turning_angle,
)


def _dense_oracle(a, b, n=1001):
    """Distance between two single segments by dense sampling."""
    s = np.linspace(0, 1, n)[:, None]
    pa = a[0] + s * (a[1] - a[0])
    pb = b[0] + s * (b[1] - b[0])
    return float(np.linalg.norm(pa[:, None] - pb[None], axis=2).min())


# ---------------------------------------------------------------------------
# arc_length

def test_arc_length_examples():
    assert arc_length(np.array([[0, 0, 0], [3, 4, 0]], float)) == 5.0
    sq = np.vstack([F.square(), F.square()[:1]])
    assert arc_length(sq) == 4.0
    c = F.circle(64)
    assert arc_length(np.vstack([c, c[:1]])) == pytest.approx(64 * 2 * math.sin(math.pi / 64), abs=1e-12)
    assert 64 * 2 * math.sin(math.pi / 64) == pytest.approx(6.28066, abs=5e-6)


# ---------------------------------------------------------------------------
# tangents and turning

def test_one_sided_tangents():
    line = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], float)
    i, o = one_sided_tangents(line, 1)
    assert np.array_equal(i, o)
    i, o = one_sided_tangents(np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0]], float), 1)
    assert np.allclose(i, [1, 0, 0]) and np.allclose(o, [0, 1, 0])
    i, o = one_sided_tangents(np.array([[0, 0, 0], [1, 0, 0], [0.5, 0, 0]], float), 1)
    assert np.allclose(i, -o)


def test_one_sided_tangents_errors():
    with pytest.raises(GraphError):
        one_sided_tangents(np.array([[0, 0, 0], [1, 0, 0], [1, 0, 0], [2, 0, 0]], float), 2)
    with pytest.raises((GraphError, IndexError, ValueError)):
        one_sided_tangents(np.array([[0, 0, 0], [1, 0, 0]], float), 0)


def test_turning_angle_examples():
    x, y = np.array([1.0, 0, 0]), np.array([0, 1.0, 0])
    assert turning_angle(x, x) == 0.0
    assert turning_angle(x, y) == pytest.approx(math.pi / 2, abs=1e-15)
    assert turning_angle(x, -x) == pytest.approx(math.pi, abs=1e-15)


def test_reversed_arc_swaps_and_negates_tangents():
    pts = F.trefoil(20)[:8]
    arc = Arc(pts, "a", "b")
    rev = arc.reversed()
    for k in range(1, len(pts) - 1):
        i, o = one_sided_tangents(arc, k)
        ri, ro = one_sided_tangents(rev, len(pts) - 1 - k)
        assert np.allclose(ri, -o) and np.allclose(ro, -i)


# ---------------------------------------------------------------------------
# total curvature

def test_total_curvature_examples():
    assert total_curvature(np.array([[0, 0, 0], [2, 0, 0]], float)) == 0.0
    for n in (3, 7, 64):
        assert total_curvature(F.circle(n), closed=True) == pytest.approx(2 * math.pi, abs=1e-12)
    zig = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [2, 1, 0], [2, 2, 0]], float)
    assert total_curvature(zig) == pytest.approx(3 * math.pi / 2, abs=1e-15)


def test_total_curvature_excludes_open_endpoints():
    c = F.circle(16)
    open_tc = total_curvature(np.vstack([c, c[:1]]))
    closed_tc = total_curvature(c, closed=True)
    assert open_tc == pytest.approx(closed_tc - 2 * math.pi / 16, abs=1e-12)


def test_total_curvature_rigid_and_scale_invariant():
    rng = np.random.default_rng(0)
    k = F.trefoil(45)
    base = total_curvature(k, closed=True)
    for _ in range(10):
        m = random_rigid_motion(rng, 4.0)
        assert abs(total_curvature(m(rng.uniform(0.1, 10) * k), closed=True) - base) <= 1e-9


def test_refinement_monotone():
    rng = np.random.default_rng(1)
    k = F.trefoil(30)
    base = total_curvature(k, closed=True)
    # collinear insertion changes nothing
    mid = 0.5 * (k[3] + k[4])
    assert total_curvature(np.insert(k, 4, mid, axis=0), closed=True) == pytest.approx(base, abs=1e-12)
    # off-segment insertion never decreases it
    for _ in range(20):
        i = int(rng.integers(len(k) - 1))
        p = 0.5 * (k[i] + k[i + 1]) + rng.normal(size=3) * 0.05
        assert total_curvature(np.insert(k, i + 1, p, axis=0), closed=True) >= base - 1e-12


# ---------------------------------------------------------------------------
# distances

def test_arc_pair_distance_examples():
    a = np.array([[0, 0, 0], [1, 0, 0]], float)
    assert arc_pair_distance(a, a + [0, 0, 1]) == 1.0
    assert arc_pair_distance(a, np.array([[1, 0, 0], [2, 3, 0]], float)) == 0.0
    b = np.array([[0.5, -1, 0.5], [0.5, 1, 0.5]])
    # the frozen value 0.5 agrees with a dense-sampling oracle
    assert _dense_oracle(a, b) == pytest.approx(0.5, abs=1e-6)
    assert arc_pair_distance(a, b) == 0.5


coords = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


@settings(max_examples=150, deadline=None)
@given(arrays(float, (2, 3), elements=coords), arrays(float, (2, 3), elements=coords))
def test_segment_distance_matches_oracle(a, b):
    d = arc_pair_distance(a, b)
    oracle = _dense_oracle(a, b)
    assert d <= oracle + 1e-9
    # a sampled point pair lies within one sample spacing of the optimum
    spacing = (np.linalg.norm(a[1] - a[0]) + np.linalg.norm(b[1] - b[0])) / 1000
    assert oracle <= d + spacing + 1e-9
    assert d == pytest.approx(arc_pair_distance(b, a), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_polyline_gap_matches_all_pairs(seed):
    rng = np.random.default_rng(seed)
    a = np.cumsum(rng.normal(size=(int(rng.integers(2, 30)), 3)), 0)
    b = np.cumsum(rng.normal(size=(int(rng.integers(2, 30)), 3)), 0) + rng.normal(size=3) * 3
    assert polyline_gap(a, b) == pytest.approx(polyline_pair_distances(a, b).min(), abs=1e-12)


# ---------------------------------------------------------------------------
# corners

def test_corner_set_examples():
    c64 = EmbeddedGraph.from_loops([F.circle(64)])
    assert corner_set(c64, math.pi / 8) == []
    sq = EmbeddedGraph.from_loops([F.square()])
    found = corner_set(sq, math.pi / 8)
    assert len(found) == 4 and all(a == pytest.approx(math.pi / 2) for _, _, a in found)
    back = EmbeddedGraph.from_arc(np.array([[0, 0, 0], [1, 0, 0], [0.5, 0, 0], [0.5, 1, 0]], float))
    assert [(i, round(a, 12)) for _, i, a in corner_set(back, math.pi)] == [(1, round(math.pi, 12))]


# ---------------------------------------------------------------------------
# graph model

def test_graph_construction_and_embedding():
    g = F.theta_two_vertex()
    assert {g.degree(v) for v in g.vertices} == {3}
    assert is_embedded(g)
    assert is_embedded(F.star3())
    assert is_embedded(EmbeddedGraph.from_loops(list(F.hopf_link(24))))


def test_crossing_graph_is_not_embedded():
    a = np.array([[-1, 0, 0], [1, 0, 0]], float)
    b = np.array([[0, -1, 0], [0, 1, 0]], float)
    g = EmbeddedGraph({"a": a[0], "b": a[1], "c": b[0], "d": b[1]},
                      {"x": Arc(a, "a", "b"), "y": Arc(b, "c", "d")})
    assert min_self_distance(g) == 0.0
    assert not is_embedded(g)


def test_arc_endpoints_must_match_vertices():
    with pytest.raises(GraphError):
        EmbeddedGraph({"a": np.zeros(3), "b": np.ones(3)},
                      {"x": Arc(np.array([[0, 0, 0], [2, 2, 2]], float), "a", "b")})


def test_zero_length_segment_rejected():
    with pytest.raises(GraphError):
        Arc(np.array([[0, 0, 0], [0, 0, 0], [1, 0, 0]], float), "a", "b")
