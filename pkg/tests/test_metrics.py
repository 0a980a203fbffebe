import math

import numpy as np
import pytest

from ftciso import fixtures as F
from ftciso.graph_core import EmbeddedGraph, random_rigid_motion
from ftciso.metrics import (
    ArcMap,
    arc_closeness,
    chord_angle_modulus,
    default_correspondence,
    discrete_thickness,
    distortion,
    fractions,
    index_correspondence,
    measure_closeness,
    point_at,
    refine_correspondence,
)


def _graph(*loops):
    return EmbeddedGraph.from_loops([np.asarray(p, float) for p in loops])


def _discrete_frechet(p, q):
    """Plain dynamic program, kept independent of the numba kernel."""
    n, m = len(p), len(q)
    ca = [[0.0] * m for _ in range(n)]
    for i in range(n):
        for j in range(m):
            d = float(np.linalg.norm(p[i] - q[j]))
            if i == 0 and j == 0:
                ca[i][j] = d
            elif i == 0:
                ca[i][j] = max(ca[i][j - 1], d)
            elif j == 0:
                ca[i][j] = max(ca[i - 1][j], d)
            else:
                ca[i][j] = max(min(ca[i - 1][j], ca[i - 1][j - 1], ca[i][j - 1]), d)
    return ca[-1][-1]


def _ellipse(n, a, b):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    return np.column_stack([a * np.cos(t), b * np.sin(t), np.zeros(n)])


# ---------------------------------------------------------------------------
# closeness

def test_identical_graphs_are_zero_close():
    g = _graph(F.trefoil(40))
    r = measure_closeness(g, g, default_correspondence(g, g))
    assert (r.delta, r.theta) == (0.0, 0.0)


def test_translation_gives_its_length():
    g = _graph(F.trefoil(40))
    v = np.array([0.3, -0.4, 1.2])
    g2 = _graph(F.trefoil(40) + v)
    r = measure_closeness(g, g2, default_correspondence(g, g2))
    assert r.delta == pytest.approx(np.linalg.norm(v), abs=1e-12)
    assert r.theta <= 1e-7


@pytest.mark.parametrize("phi", [0.1, 0.5, 1.2])
def test_rotated_segment(phi):
    a = np.array([[-0.5, 0, 0], [0.5, 0, 0]])
    b = np.array([[-0.5 * math.cos(phi), -0.5 * math.sin(phi), 0], [0.5 * math.cos(phi), 0.5 * math.sin(phi), 0]])
    d, t = arc_closeness(a, b)
    s = np.linspace(0, 1, 2001)
    oracle = np.linalg.norm(point_at(a, s) - point_at(b, s), axis=1).max()
    assert oracle == pytest.approx(math.sin(phi / 2), abs=1e-12)
    assert d == pytest.approx(oracle, abs=1e-12)
    assert t == pytest.approx(phi, abs=1e-12)


def test_closeness_is_symmetric_under_inverse():
    rng = np.random.default_rng(3)
    g = _graph(F.figure_eight(50))
    g2 = F.perturb_graph(g, rng, 0.05)
    c = refine_correspondence(g, g2, default_correspondence(g, g2))
    r, ri = measure_closeness(g, g2, c), measure_closeness(g2, g, c.inverse())
    assert r.delta == pytest.approx(ri.delta, abs=1e-12)
    assert r.theta == pytest.approx(ri.theta, abs=1e-12)


@pytest.mark.parametrize("seed", range(8))
def test_refinement_never_worsens_delta_and_meets_frechet(seed):
    rng = np.random.default_rng(seed)
    p = np.cumsum(rng.normal(size=(int(rng.integers(3, 9)), 3)), 0)
    q = p[[0, -1]].copy()
    q = np.vstack([q[0], np.cumsum(rng.normal(size=(int(rng.integers(1, 7)), 3)), 0) + q[0], p[-1]])
    g = EmbeddedGraph.from_arc(p)
    g2 = EmbeddedGraph.from_arc(q)
    c0 = default_correspondence(g, g2)
    c = refine_correspondence(g, g2, c0)
    d0 = measure_closeness(g, g2, c0).delta
    d = measure_closeness(g, g2, c).delta
    assert d <= d0 + 1e-12
    u = np.union1d(fractions(p), fractions(q))
    assert d <= _discrete_frechet(point_at(p, u), point_at(q, u)) + 1e-6


def test_refinement_helps_warped_sampling():
    t = np.linspace(0, 1, 80) ** 2
    base = np.column_stack([np.cos(2 * np.pi * t[:-1]), np.sin(2 * np.pi * t[:-1]), 0 * t[:-1]])
    g = _graph(F.circle(79))
    g2 = _graph(base)
    c = index_correspondence(g, g2)
    idx = measure_closeness(g, g2, c).delta
    ref = measure_closeness(g, g2, refine_correspondence(g, g2, c)).delta
    assert ref < 0.1 * idx


def test_arcmap_validation():
    with pytest.raises(Exception):
        ArcMap("a", "b", np.array([0.0, 0.5, 0.5, 1.0]), np.array([0.0, 0.2, 0.4, 1.0]))
    with pytest.raises(Exception):
        ArcMap("a", "b", np.array([0.1, 1.0]), np.array([0.0, 1.0]))


# ---------------------------------------------------------------------------
# thickness

def test_regular_polygon_thickness():
    r = discrete_thickness(F.circle(64))
    assert r.min_rad == pytest.approx(1.0, abs=1e-12)
    assert r.dcsd == pytest.approx(2 * math.cos(math.pi / 64), abs=1e-12)
    assert r.tau_hat == pytest.approx(1.99759, abs=1e-5)
    big = discrete_thickness(3 * F.circle(64))
    assert big.tau_hat == pytest.approx(3 * r.tau_hat, rel=1e-12)


def test_flat_shapes_are_self_distance_limited():
    bone = discrete_thickness(F.bone())
    assert bone.mechanism == "self-distance"
    assert bone.tau_hat == pytest.approx(1.0, abs=1e-9)
    a, b = bone.pair_witness
    assert np.linalg.norm(a - b) == pytest.approx(1.0, abs=1e-9)
    # the stadium ties: caps of radius 1/2 and sides 1 apart
    st = discrete_thickness(F.stadium())
    assert st.tau_hat == pytest.approx(1.0, abs=1e-9)
    assert st.dcsd == pytest.approx(1.0, abs=1e-9)


def test_ellipse_is_curvature_limited():
    r = discrete_thickness(_ellipse(400, 3.0, 1.0))
    assert r.mechanism == "curvature"
    # smallest radius of curvature b^2/a
    assert r.min_rad == pytest.approx(1 / 3, rel=1e-3)


def test_thickness_rigid_invariant():
    rng = np.random.default_rng(5)
    k = F.trefoil(90)
    base = discrete_thickness(k).tau_hat
    for _ in range(5):
        m = random_rigid_motion(rng, 3.0)
        assert discrete_thickness(m(k)).tau_hat == pytest.approx(base, abs=1e-9)


def test_thickness_of_a_link():
    a, b = F.hopf_link(48)
    r = discrete_thickness([a, b])
    assert 0 < r.tau_hat <= discrete_thickness(a).tau_hat + 1e-12


# ---------------------------------------------------------------------------
# distortion and chord-angle modulus

def test_distortion_examples():
    assert distortion(np.array([[0, 0, 0], [1, 0, 0], [3, 0, 0]], float)) == 1.0
    t = np.linspace(0, np.pi, 513)
    semi = np.column_stack([np.cos(t), np.sin(t), 0 * t])
    assert distortion(semi) == pytest.approx(np.pi / 2, rel=1e-5)
    assert distortion(F.circle(256), closed=True) == pytest.approx(np.pi / 2, rel=0.01)


def test_chord_angle_modulus_examples():
    line = np.array([[0, 0, 0], [1, 0, 0], [2.5, 0, 0]], float)
    assert chord_angle_modulus(line, np.pi / 8) == 2.5
    ell = chord_angle_modulus(F.circle(256), np.pi / 8, closed=True)
    # an arc of a unit circle keeps its tangents within theta of the chord
    # up to length 2 theta
    assert ell == pytest.approx(np.pi / 4, rel=0.1)
    assert chord_angle_modulus(F.square(), np.pi / 8, closed=True) < 1.0
    with pytest.raises(ValueError):
        chord_angle_modulus(line, 0.0)
