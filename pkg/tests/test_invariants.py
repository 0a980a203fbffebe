import numpy as np
import pytest

from ftciso import fixtures as F
from ftciso.graph_core import GraphError, random_rigid_motion
from ftciso.invariants import (
    coloring_determinant,
    gauss_linking_integral,
    goeritz_matrix,
    knot_determinant,
    linking_number,
    make_theta,
    project_generic,
    zero_framed_parallel,
)

KNOTS = [("unknot", F.circle(24), 1), ("trefoil", F.trefoil(60), 3), ("figure-eight", F.figure_eight(80), 5)]


# ---------------------------------------------------------------------------
# linking

def test_linking_examples():
    a, b = F.hopf_link(48)
    assert abs(linking_number(a, b)) == 1
    assert linking_number(a, b) == -linking_number(a, b[::-1])
    c, d = F.far_circle_pair()
    assert linking_number(c, d) == 0
    t1, t2 = F.torus_link_2_4()
    assert abs(linking_number(t1, t2)) == 2


def test_linking_agrees_with_gauss_integral():
    for a, b in (F.hopf_link(48), F.torus_link_2_4(), F.far_circle_pair()):
        assert gauss_linking_integral(a, b) == pytest.approx(linking_number(a, b), abs=1e-6)


def test_linking_is_projection_and_motion_invariant():
    a, b = F.hopf_link(36)
    base = linking_number(a, b)
    rng = np.random.default_rng(0)
    for seed in range(5):
        m = random_rigid_motion(rng, 2.0)
        assert linking_number(m(a), m(b), seed=seed) == base


def test_linking_rejects_intersecting_curves():
    a = F.circle(16)
    with pytest.raises(GraphError):
        linking_number(a, a + [1.0, 0, 0])


# ---------------------------------------------------------------------------
# determinant

@pytest.mark.parametrize("name,knot,det", KNOTS, ids=[k[0] for k in KNOTS])
def test_knot_determinants(name, knot, det):
    assert knot_determinant(knot) == det
    assert coloring_determinant(knot) == det


@pytest.mark.parametrize("name,knot,det", KNOTS, ids=[k[0] for k in KNOTS])
def test_determinant_invariance(name, knot, det):
    rng = np.random.default_rng(1)
    for seed in range(4):
        m = random_rigid_motion(rng, 3.0)
        assert knot_determinant(m(knot), seed=seed) == det


def test_connected_sum_multiplies():
    k = F.splice_local_trefoil(F.trefoil(60), 20, 0.02)
    assert knot_determinant(k) == 9
    assert coloring_determinant(k) == 9


def test_goeritz_matrix_shape():
    G = goeritz_matrix(project_generic([F.trefoil(60)]))
    assert np.array_equal(G, G.T)
    assert np.all(G.sum(axis=1) == 0)


def test_determinant_needs_one_component():
    with pytest.raises(GraphError):
        knot_determinant(list(F.hopf_link(24)))


# ---------------------------------------------------------------------------
# theta graphs

def test_make_theta_and_zero_framing():
    k = F.trefoil(60)
    th = make_theta(k, k[3], k[30], eps=0.05)
    g = th.graph()
    assert th.embedded and th.max_move < 0.05
    assert sorted(g.degree(v) for v in g.vertices) == [3, 3]
    par, w = zero_framed_parallel(th, 0.01, return_twists=True)
    knot = np.vstack([th.alpha, th.gamma[1:-1]])
    assert linking_number(par, knot) == 0
    assert isinstance(w, int)


def test_make_theta_errors():
    k = F.circle(24)
    with pytest.raises(ValueError):
        make_theta(k, k[0], k[5], eps=0.0)
    with pytest.raises(GraphError):
        make_theta(k, k[0], k[0], eps=0.1)
