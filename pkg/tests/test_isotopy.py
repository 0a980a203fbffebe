import math

import numpy as np
import pytest

from ftciso import fixtures as F
from ftciso.certify import certify_ftc, certify_thick, neighborhood_for
from ftciso.graph_core import EmbeddedGraph, GraphError
from ftciso.isotopy import (
    PHASES,
    DisplacementField,
    assemble_frames,
    combing_isotopy,
    core_points,
    frame_times,
    hausdorff,
    leaf_isotopy,
    radial_ball_isotopy,
    smallness_verifier,
    worker_count,
)


def _loop(points):
    return EmbeddedGraph.from_loops([points])


# ---------------------------------------------------------------------------
# stage I

def test_radial_ball_isotopy_endpoints():
    rng = np.random.default_rng(0)
    c, r = np.zeros(3), 1.0
    pp, p = np.array([0.3, 0.1, 0.0]), np.array([-0.1, 0.2, 0.1])
    x = rng.uniform(-0.5, 0.5, size=(30, 3))
    assert np.allclose(radial_ball_isotopy(c, r, pp, x, 0.0, p), x)
    assert np.allclose(radial_ball_isotopy(c, r, pp, pp, 1.0, p), p)
    v = rng.normal(size=(10, 3))
    s = v / np.linalg.norm(v, axis=1)[:, None]
    for t in (0.3, 1.0):
        assert np.allclose(radial_ball_isotopy(c, r, pp, s, t, p), s)


# ---------------------------------------------------------------------------
# combing

def _wavy_strands():
    lam = np.linspace(0, 1, 40)
    a = np.column_stack([lam, 0.3 * np.sin(3 * lam) * lam, 0 * lam])
    b = np.column_stack([-lam, 0 * lam, 0.4 * lam ** 2])
    # end both strands on the unit sphere
    return [a / np.linalg.norm(a[-1]), b / np.linalg.norm(b[-1])]


def test_combing_endpoints():
    strands = _wavy_strands()
    start = combing_isotopy(np.zeros(3), 1.0, strands, 0.0)
    for s, m in zip(strands, start):
        assert np.allclose(s, m, atol=1e-12)
    end = combing_isotopy(np.zeros(3), 1.0, strands, 1.0)
    for s, m in zip(strands, end):
        exit_dir = s[-1] / np.linalg.norm(s[-1])
        dirs = m[1:] / np.linalg.norm(m[1:], axis=1)[:, None]
        assert np.allclose(dirs, exit_dir, atol=1e-12)
        # radii are preserved at every time
        assert np.allclose(np.linalg.norm(m, axis=1), np.linalg.norm(s, axis=1), atol=1e-12)


def test_combing_keeps_strands_apart():
    strands = _wavy_strands()
    for t in np.linspace(0, 1, 11):
        a, b = combing_isotopy(np.zeros(3), 1.0, strands, t)
        assert np.linalg.norm(a[1:] - b[1:], axis=1).min() > 0


def test_combing_rejects_non_monotone_strand():
    bad = np.array([[0, 0, 0], [0.5, 0, 0], [0.3, 0.1, 0], [1, 0, 0]], float)
    with pytest.raises(GraphError):
        combing_isotopy(np.zeros(3), 1.0, [bad], 0.5)


# ---------------------------------------------------------------------------
# stage J

def test_leaf_isotopy_preserves_leaves():
    _, _, model = neighborhood_for(_loop(F.trefoil(40)), 0.5)
    tube = max(model.tubes, key=lambda tb: len(tb.beta_samples))
    u = np.linspace(tube.beta_u[0], tube.beta_u[-1], 25)[1:-1]
    c0 = core_points(tube, u)
    rng = np.random.default_rng(1)
    off = rng.normal(size=(len(u), 3))
    src = tube.leaves.project(c0 + 0.4 * tube.disk_radius * off / np.linalg.norm(off, axis=1)[:, None], u)
    other = tube.leaves.project(c0 - 0.2 * tube.disk_radius * off / np.linalg.norm(off, axis=1)[:, None], u)
    for t in np.linspace(0, 1, 6):
        moved, carried = leaf_isotopy(tube, u, src, t, other)
        assert np.abs(tube.leaves.residual(moved, u)).max() <= 1e-7
        assert np.abs(tube.leaves.residual(carried, u)).max() <= 1e-7
    assert np.allclose(leaf_isotopy(tube, u, src, 0.0), src, atol=1e-12)
    assert np.allclose(leaf_isotopy(tube, u, src, 1.0), c0, atol=1e-12)


# ---------------------------------------------------------------------------
# frames

def test_frame_times_include_phases():
    t = frame_times(10)
    assert set(PHASES) <= set(t.tolist())
    assert np.all(np.diff(t) > 0)


def test_ftc_frames_run_from_second_graph_to_first():
    rng = np.random.default_rng(2)
    g = F.theta_two_vertex()
    nb = neighborhood_for(g, 0.5)
    g2 = F.perturb_graph(g, rng, 0.6 * nb[1].delta)
    cert = certify_ftc(g, g2, 0.5, neighborhood=nb)
    assert cert.issued
    fr = assemble_frames(g, g2, cert, m=12)
    assert fr.sound and np.all(fr.embedded)
    assert hausdorff(fr.frames[0], g2) <= 1e-9
    assert hausdorff(fr.frames[-1], g) <= 1e-9
    assert fr.max_displacement <= cert.motion_bound


def test_thick_frames():
    c = F.circle(48)
    c2 = c + [0.05, -0.02, 0.03]
    cert = certify_thick(c, c2)
    fr = assemble_frames(_loop(c), _loop(c2), cert, m=8)
    assert fr.sound
    assert fr.max_displacement == pytest.approx(math.sqrt(0.05 ** 2 + 0.02 ** 2 + 0.03 ** 2), abs=1e-12)


def test_frames_need_issued_certificate():
    g = _loop(F.square())
    far = _loop(F.square() + [0.4, 0, 0])
    cert = certify_ftc(g, far, 0.5)
    with pytest.raises(GraphError):
        assemble_frames(g, far, cert)


def test_worker_count(monkeypatch):
    monkeypatch.delenv("FTC_ISOTOPY_THREADS", raising=False)
    assert worker_count() == 1
    monkeypatch.setenv("FTC_ISOTOPY_THREADS", "junk")
    assert worker_count() == 1
    monkeypatch.setenv("FTC_ISOTOPY_THREADS", "1000")
    assert 1 <= worker_count() <= 1000


def test_hausdorff_translation():
    g = _loop(F.circle(32))
    assert hausdorff(g, _loop(F.circle(32) + [0, 0, 0.3])) == pytest.approx(0.3, abs=1e-12)


# ---------------------------------------------------------------------------
# smallness

def test_smallness_constant_and_linear_fields():
    rng = np.random.default_rng(3)
    p = rng.uniform(-1, 1, size=(300, 3))
    v = np.array([0.1, 0.2, -0.05])
    d, a = smallness_verifier(DisplacementField(p, np.tile(v, (300, 1))))
    assert d == pytest.approx(np.linalg.norm(v), abs=1e-15)
    assert a == 0.0
    A = np.diag([0.3, -0.1, 0.2])
    _, a = smallness_verifier(DisplacementField(p, p @ A.T))
    # the sampled Lipschitz constant never exceeds the operator norm
    assert a <= math.atan(0.3) + 1e-12
    assert a >= math.atan(0.3) - 0.02
    with pytest.raises(ValueError):
        smallness_verifier(DisplacementField(p[:1], p[:1]))
