import math

import numpy as np
import pytest

from ftciso import fixtures as F
from ftciso.graph_core import EmbeddedGraph, GraphError, point_segment_distances, total_curvature, turning_angles
from ftciso.refine import dcsd_tube_check, equal_arclength_points, fillet_round, inscribe_polygon


def _loop(points):
    return EmbeddedGraph.from_loops([points])


# ---------------------------------------------------------------------------
# inscribed polygons

def test_inscribe_keeps_corners_and_subsamples():
    sq = F.square(per_side=40)
    g = inscribe_polygon(_loop(sq), 0.25)
    pts = g.arcs["k0"].points
    for corner in F.square():
        assert np.min(np.linalg.norm(pts - corner, axis=1)) == 0.0
    assert len(pts) - 1 == 16
    # every output vertex is an input vertex
    src = {tuple(p) for p in sq}
    assert all(tuple(p) in src for p in pts[:-1])


def test_inscribe_respects_turning_limit():
    c = F.circle(1024)
    theta = math.pi / 16
    g = inscribe_polygon(_loop(c), 2 * math.pi / 8, theta)
    pts = g.arcs["k0"].points
    assert len(pts) - 1 >= 32
    steps = np.diff(np.concatenate([[0.0], np.unwrap(np.arctan2(pts[:, 1], pts[:, 0]) % (2 * np.pi))]))
    # turning of the input between samples equals the angle they subtend
    assert np.max(np.abs(steps[1:])) <= theta + 2 * math.pi / 1024 + 1e-12


def test_inscribe_rejects_bad_spacing():
    with pytest.raises(ValueError):
        inscribe_polygon(_loop(F.square()), 0.0)


# ---------------------------------------------------------------------------
# equal spacing

@pytest.mark.parametrize("tau", [2.0, 0.7, 0.05])
def test_equal_arclength_spacing(tau):
    c = F.circle(400)
    pts, r = equal_arclength_points(c, tau)
    assert tau / 50 < r < tau / 40
    closed = np.vstack([c, c[:1]])
    cum = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(closed, axis=0), axis=1))])
    assert len(pts) * r == pytest.approx(cum[-1], rel=1e-12)


def test_equal_arclength_rejects_bad_tau():
    with pytest.raises(ValueError):
        equal_arclength_points(F.circle(16), 0.0)


# ---------------------------------------------------------------------------
# fillets

def test_square_fillet_closed_form():
    sq = 10 * F.square()
    out, rep = fillet_round(sq, 1.0)
    cut = math.sqrt(2) - 1
    assert rep.corner_cut == pytest.approx(cut, abs=1e-12)
    assert rep.d == pytest.approx(cut, abs=1e-9)
    assert rep.min_radius == pytest.approx(1.0, rel=1e-6)
    assert total_curvature(out, closed=True) == pytest.approx(total_curvature(sq, closed=True), abs=1e-6)
    # steps along the arcs stay under 0.05 rad
    assert np.max(turning_angles(out, closed=True)) <= 0.05 + 1e-12


def test_fillet_moves_no_point_beyond_corner_cut():
    rng = np.random.default_rng(0)
    t = np.sort(rng.uniform(0, 2 * np.pi, 12))
    p = np.column_stack([np.cos(t), np.sin(t), 0.1 * rng.normal(size=12)]) * 5
    turns = turning_angles(p, closed=True)
    edges = np.linalg.norm(np.diff(np.vstack([p, p[:1]]), axis=0), axis=1)
    rho = 0.9 * np.min(np.minimum(edges, np.roll(edges, 1)) / 2 / np.tan(turns / 2))
    out, rep = fillet_round(p, rho)
    closed = np.vstack([p, p[:1]])
    dist, _ = point_segment_distances(out[:, None], closed[None, :-1], closed[None, 1:])
    assert dist.min(axis=1).max() <= rep.corner_cut + 1e-9
    assert rep.corner_cut == pytest.approx(rho * np.max(1 / np.cos(turns / 2) - 1), rel=1e-12)


def test_fillet_infeasible_radius():
    with pytest.raises(GraphError):
        fillet_round(F.square(), 0.6)
    with pytest.raises(ValueError):
        fillet_round(F.square(), 0.0)


def test_fillet_pipeline_on_circle():
    c = F.circle(200)
    tau = 2.0
    pts, r = equal_arclength_points(c, tau)
    out, rep = fillet_round(pts, 5 * r, spacing=r)
    assert rep.radius_ok
    assert rep.min_radius >= 5 * r * (1 - 1e-6)
    assert dcsd_tube_check(out, tau / 5).passed


@pytest.mark.xfail(strict=True, reason="fillet offset exceeds (sec phi - 1) r / 2 at radius 5r")
def test_fillet_closeness_bound():
    c = F.circle(64)
    r = 2 * math.sin(math.pi / 64)
    _, rep = fillet_round(c, 5 * r)
    assert rep.closeness_ok


# ---------------------------------------------------------------------------
# tube check

def test_tube_check_witnesses():
    bone = F.bone()
    assert dcsd_tube_check(bone, 0.9).passed
    fail = dcsd_tube_check(bone, 1.1)
    assert not fail.passed and fail.witness_kind == "self-distance"
    a, b = fail.witness
    assert np.linalg.norm(a - b) == pytest.approx(1.0, abs=1e-9)
    t = np.linspace(0, 2 * np.pi, 400, endpoint=False)
    ellipse = np.column_stack([3 * np.cos(t), np.sin(t), 0 * t])
    fail = dcsd_tube_check(ellipse, 1.0)
    assert fail.witness_kind == "curvature" and len(fail.witness) == 3
