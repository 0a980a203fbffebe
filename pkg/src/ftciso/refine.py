"""Inscribed polygons, equal-arclength resampling and fillet rounding."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph_core import (
    ANGLE_TOL,
    Arc,
    EmbeddedGraph,
    GraphError,
    _angle_between,
    cumulative_length,
    turning_angles,
)
from .metrics import (
    ThicknessReport,
    circumradii,
    default_correspondence,
    discrete_thickness,
    measure_closeness,
    point_at,
    refine_correspondence,
)

CORNER_ANGLE = math.pi / 8
# chord error below 1e-6 of the radius needs steps under sqrt(8e-6) rad
FILLET_STEP = min(0.05, math.sqrt(8e-6))


def inscribe_polygon(g: EmbeddedGraph, h: float, theta: float | None = None) -> EmbeddedGraph:
    """Subsample every arc at arclength about ``h``.

    Graph vertices and corners turning at least pi/8 are always kept.  With
    ``theta`` given, samples are also added so that the input turns by at
    most ``theta`` between consecutive samples.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    arcs = {}
    for aid, arc in g.arcs.items():
        pts = arc.points
        n = len(pts)
        turns = np.zeros(n)
        if n > 2:
            turns[1:-1] = turning_angles(pts)
        keep = {0, n - 1}
        keep.update(int(i) for i in np.nonzero(turns >= CORNER_ANGLE - ANGLE_TOL)[0])
        cum = cumulative_length(pts)
        fixed = sorted(keep)
        chosen = set(fixed)
        for a, b in zip(fixed[:-1], fixed[1:]):
            span = cum[b] - cum[a]
            k = max(1, int(round(span / h)))
            targets = cum[a] + span * np.arange(1, k) / k
            idx = np.searchsorted(cum, targets)
            idx = np.where(np.abs(cum[np.clip(idx - 1, 0, n - 1)] - targets) < np.abs(cum[np.clip(idx, 0, n - 1)] - targets),
                           idx - 1, idx)
            chosen.update(int(i) for i in np.clip(idx, a, b))
        if theta is not None:
            chosen = _limit_turning(turns, sorted(chosen), theta)
        sel = sorted(chosen)
        arcs[aid] = Arc(pts[sel], arc.head, arc.tail, arc.closed)
    return EmbeddedGraph(dict(g.vertices), arcs)


def _limit_turning(turns, chosen, theta):
    """Add samples so the turning strictly between samples stays <= theta."""
    out = set(chosen)
    for a, b in zip(chosen[:-1], chosen[1:]):
        acc = 0.0
        for i in range(a + 1, b):
            if acc + turns[i] > theta:
                out.add(i)
                acc = 0.0
            else:
                acc += turns[i]
    return out


def equal_arclength_points(k, tau: float):
    """Points at equal arclength r along a closed polyline, r in (tau/50, tau/40).

    r = L / n with n = round(L / (tau/45)), moved to the nearest count whose
    spacing lies strictly inside the interval.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    pts = np.asarray(k, dtype=float)
    closed_pts = pts if np.array_equal(pts[0], pts[-1]) else np.vstack([pts, pts[:1]])
    L = float(cumulative_length(closed_pts)[-1])
    lo, hi = tau / 50, tau / 40
    n0 = max(1, int(round(L / (tau / 45))))
    valid = [n for n in range(max(1, math.floor(L / hi)), math.ceil(L / lo) + 1) if lo < L / n < hi]
    if not valid:
        raise ValueError(f"no spacing in (tau/50, tau/40) divides length {L}")
    n = min(valid, key=lambda m: (abs(m - n0), m))
    r = L / n
    u = np.arange(n) / n
    return point_at(closed_pts, u), r


@dataclass(frozen=True)
class RoundingReport:
    spacing: float
    radius: float
    d: float
    phi: float
    min_radius: float
    corner_cut: float
    construction: str = "circular fillet"

    @property
    def radius_ok(self) -> bool:
        return self.radius >= 5 * self.spacing * (1 - 1e-12)

    @property
    def closeness_bound(self) -> float:
        """(sec phi - 1) r / 2 for the measured phi."""
        return (1 / math.cos(self.phi) - 1) * self.spacing / 2

    @property
    def closeness_ok(self) -> bool:
        return self.d <= self.closeness_bound


def _rotate(v, axis, ang):
    """Rodrigues rotation of vectors v about a unit axis by angles ang."""
    c, s = np.cos(ang)[:, None], np.sin(ang)[:, None]
    return v * c + np.cross(axis, v) * s + np.outer(1 - np.cos(ang), axis) * (v @ axis)[:, None]


def _fillet(prev, p, nxt, rho, idx):
    a = (p - prev) / np.linalg.norm(p - prev)
    b = (nxt - p) / np.linalg.norm(nxt - p)
    psi = float(_angle_between(a[None], b[None])[0])
    if psi < 1e-12:
        return p[None, :], 0.0
    if psi > math.pi - 1e-9:
        raise GraphError(f"corner {idx} folds back; no fillet exists")
    tl = rho * math.tan(psi / 2)
    half = 0.5 * min(np.linalg.norm(p - prev), np.linalg.norm(nxt - p))
    if not tl < half:
        raise GraphError(f"fillet radius {rho} infeasible at corner {idx}: tangent length "
                         f"{tl:.6g} exceeds half the shorter edge {half:.6g}")
    t1 = p - tl * a
    m = (b - a) / np.linalg.norm(b - a)
    center = p + math.hypot(rho, tl) * m
    axis = np.cross(a, b)
    axis /= np.linalg.norm(axis)
    steps = max(2, 2 * math.ceil(psi / FILLET_STEP / 2))
    ang = psi * np.arange(steps + 1) / steps
    arc = center + _rotate(np.broadcast_to(t1 - center, (steps + 1, 3)), axis, ang)
    return arc, rho * (1 / math.cos(psi / 2) - 1)


def fillet_round(p, rho: float, spacing: float | None = None, closed: bool = True):
    """Replace every corner of a polygon by a circular arc of radius ``rho``.

    Returns the dense polyline (closed polygons start at the middle of the
    first fillet) and a RoundingReport with the measured closeness to ``p``.
    """
    p = np.asarray(p, dtype=float)
    if closed and np.array_equal(p[0], p[-1]):
        p = p[:-1]
    if not rho > 0:
        raise ValueError("rho must be positive")
    n = len(p)
    pieces, cut = [], 0.0
    corners = range(n) if closed else range(1, n - 1)
    mids = {}
    for i in corners:
        arc, c = _fillet(p[i - 1], p[i], p[(i + 1) % n], rho, i)
        mids[i] = len(arc) // 2
        pieces.append(arc)
        cut = max(cut, c)
    if closed:
        first = pieces[0]
        m = mids[0]
        out = np.vstack([first[m:]] + pieces[1:] + [first[:m]])
    else:
        out = np.vstack([p[:1]] + pieces + [p[-1:]])
    keep = np.concatenate([[True], np.linalg.norm(np.diff(out, axis=0), axis=1) > 1e-15])
    out = out[keep]
    if closed and np.linalg.norm(out[-1] - out[0]) <= 1e-15:
        out = out[:-1]
    if spacing is None:
        edges = np.linalg.norm(np.diff(np.vstack([p, p[:1]]) if closed else p, axis=0), axis=1)
        spacing = float(edges.min())
    if closed:
        g1, g2 = EmbeddedGraph.from_loops([p]), EmbeddedGraph.from_loops([out])
    else:
        g1, g2 = EmbeddedGraph.from_arc(p), EmbeddedGraph.from_arc(out)
    c = refine_correspondence(g1, g2, default_correspondence(g1, g2))
    rep = measure_closeness(g1, g2, c)
    radii = circumradii(out) if closed else circumradii(out)[1:-1]
    return out, RoundingReport(spacing, rho, rep.delta, rep.theta, float(np.min(radii)), cut)


@dataclass(frozen=True)
class TubeCheck:
    passed: bool
    diameter: float
    thickness: ThicknessReport
    witness_kind: str  # "", "curvature" or "self-distance"
    witness: tuple | None


def dcsd_tube_check(l, diameter: float) -> TubeCheck:
    """Pass iff min(2 min_rad, dcsd) >= diameter; otherwise name the
    binding triple or doubly-critical pair."""
    rep = discrete_thickness(l)
    if rep.tau_hat >= diameter:
        return TubeCheck(True, diameter, rep, "", None)
    if rep.mechanism == "curvature":
        return TubeCheck(False, diameter, rep, "curvature", rep.triple_witness)
    return TubeCheck(False, diameter, rep, "self-distance", rep.pair_witness)
