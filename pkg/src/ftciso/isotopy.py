"""Explicit isotopies behind the certificates, sampled as frames.

An FTC certificate is realized in four phases over t in [0, 1]:

* I  [0, 1/4]: radial ball maps carry each p'_j to p_j;
* J1 [1/4, 1/2]: comb the strands in every ball to straight radii;
* J2 [1/2, 3/4]: slide each tube point along its leaf to the core arc,
  turning the radii in the balls with the exit points;
* J3 [3/4, 1]: uncomb the radii onto the strands of the target graph.

Only the graph is carried; frames hold its position at each sampled time.
Thick certificates use the straight-line homotopy along the correspondence.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .certify import (
    CornerDecomposition,
    IsotopyCertificate,
    NeighborhoodModel,
    Tube,
    _ball_exit,
    _densify,
    radial_map,
    solve_on_leaves,
    split_second,
)
from .graph_core import Arc, EmbeddedGraph, GraphError, min_self_distance
from .metrics import Correspondence, fractions, point_at

PHASES = (0.0, 0.25, 0.5, 0.75, 1.0)
EMBED_TOL = 1e-9


def _unit(v):
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return np.divide(v, n, out=np.zeros_like(v), where=n > 0)


# ---------------------------------------------------------------------------
# stage I

def radial_ball_isotopy(center, radius, p_prime, points, t, p=None):
    """Time-t image of ``points`` under the ball map moving p' to p.

    Linear on every segment from p' to the sphere, identity on the sphere.
    """
    return radial_map(points, center, radius, p_prime, t, target=p)


# ---------------------------------------------------------------------------
# combing

def _strand_at_radius(poly, center, radii):
    """Points of a radially monotone polyline at the given distances."""
    poly = np.asarray(poly, dtype=float)
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    rv = np.linalg.norm(poly - center, axis=1)
    seg = np.clip(np.searchsorted(rv, radii, side="left") - 1, 0, len(poly) - 2)
    a, b = poly[seg], poly[seg + 1]
    d = b - a
    f = a - center
    A = np.sum(d * d, axis=1)
    B = 2 * np.sum(f * d, axis=1)
    C = np.sum(f * f, axis=1) - radii ** 2
    disc = np.sqrt(np.maximum(B * B - 4 * A * C, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(A > 0, (-B + disc) / (2 * A), 0.0)
    t = np.clip(t, 0.0, 1.0)
    return a + t[:, None] * d


def _check_monotone(poly, center):
    r = np.linalg.norm(np.asarray(poly) - center, axis=1)
    if not np.all(np.diff(r) > 0):
        raise GraphError("strand is not radially monotone")


def combing_isotopy(center, radius, strands, t, radii=None):
    """Comb radially monotone strands from the sphere inward.

    Each strand runs from the center to the sphere.  At time t the sphere of
    scale lam shows the pattern that was on the sphere of scale
    lam + (1 - lam) t, so at t = 1 every strand is a straight radius.
    Returns the moved strands sampled at the scales ``radii`` (default: the
    scales of each strand's own vertices).
    """
    center = np.asarray(center, dtype=float)
    out = []
    for k, s in enumerate(strands):
        s = np.asarray(s, dtype=float)
        _check_monotone(s, center)
        lam = np.linalg.norm(s - center, axis=1) / radius if radii is None else np.asarray(radii, float)
        mu = lam + (1 - lam) * t
        dirs = _unit(_strand_at_radius(s, center, mu * radius) - center)
        out.append(center + (lam * radius)[:, None] * dirs)
    lam = np.linspace(0.02, 1.0, 50)
    for i in range(len(strands)):
        for j in range(i + 1, len(strands)):
            a = _unit(_strand_at_radius(strands[i], center, lam * radius) - center)
            b = _unit(_strand_at_radius(strands[j], center, lam * radius) - center)
            if np.min(np.linalg.norm(a - b, axis=1)) == 0:
                raise GraphError("two strands meet on a sphere")
    return out


# ---------------------------------------------------------------------------
# stage J

def _leaf_chart(tube: Tube, u, c0):
    """Orthonormal chart (c0, n, e1, e2) on the leaves at core points c0."""
    n = tube.leaves.normal(c0, u)
    a = np.where(np.abs(n[:, :1]) < 0.9, np.array([[1.0, 0, 0]]), np.array([[0, 1.0, 0]]))
    e1 = _unit(np.cross(n, a))
    return n, e1, np.cross(n, e1)


def _lift(tube: Tube, u, c0, n, e1, e2, w):
    """Point of leaf u whose projection to the tangent plane at c0 is w."""
    lv = tube.leaves
    k = lv.kappa(u)
    base = c0 + w[:, :1] * e1 + w[:, 1:] * e2
    out = base.copy()
    curved = np.abs(k) > 1e-12
    if np.any(curved):
        kk = k[curved]
        C = lv.origin + lv.center(u[curved])[:, None] * lv.axis
        v = base[curved] - C
        vn = np.sum(v * n[curved], axis=1)
        rad = vn * vn - np.sum(v * v, axis=1) + 1 / (kk * kk)
        if np.any(rad < 0):
            raise ValueError("chart point leaves the leaf")
        root = np.sqrt(rad)
        h1, h2 = -vn + root, -vn - root
        h = np.where(np.abs(h1) < np.abs(h2), h1, h2)
        out[curved] = base[curved] + h[:, None] * n[curved]
    return out


def core_points(tube: Tube, u):
    """Exact points of the core arc on leaves u."""
    return tube.core_point(u)


def leaf_isotopy(tube: Tube, u, sources, t, points=None):
    """Leaf-preserving move of one source point per leaf disk toward its center.

    Works in the tangent-plane chart of each leaf at the core point; the
    disk of chart radius r4 is coned from the moving source to its fixed
    boundary.  Returns the moved sources, and the moved ``points`` (one per
    source, on the same leaf) when given.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    sources = np.atleast_2d(np.asarray(sources, dtype=float))
    c0 = core_points(tube, u)
    n, e1, e2 = _leaf_chart(tube, u, c0)
    ws = np.column_stack([np.sum((sources - c0) * e1, 1), np.sum((sources - c0) * e2, 1)])
    r = tube.disk_radius
    if np.any(np.linalg.norm(ws, axis=1) > r):
        raise ValueError("source point lies outside its leaf disk")
    moved = _lift(tube, u, c0, n, e1, e2, (1 - t) * ws)
    if points is None:
        return moved
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    w = np.column_stack([np.sum((pts - c0) * e1, 1), np.sum((pts - c0) * e2, 1)])
    d = w - ws
    dd = np.sum(d * d, axis=1)
    sd = np.sum(ws * d, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        nu = (-sd + np.sqrt(np.maximum(sd * sd - dd * (np.sum(ws * ws, 1) - r * r), 0))) / dd
        mu = np.where(dd > 0, 1 / nu, 0.0)
    b = ws + np.where(dd[:, None] > 0, d * nu[:, None], 0.0)
    wt = (1 - t) * ws
    return moved, _lift(tube, u, c0, n, e1, e2, wt + mu[:, None] * (b - wt))


def _solve_monotone(poly, f, targets, iters=60, fv=None):
    """Points x on a polyline with f(x) = target, for f increasing along it."""
    poly = np.asarray(poly, dtype=float)
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    if fv is None:
        fv = f(poly)
    seg = np.clip(np.searchsorted(fv, targets, side="left") - 1, 0, len(poly) - 2)
    a, b = poly[seg], poly[seg + 1]
    lo = np.zeros(len(targets))
    hi = np.ones(len(targets))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        val = f(a + mid[:, None] * (b - a))
        below = val < targets
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    t = 0.5 * (lo + hi)
    exact_a = targets == fv[seg]
    exact_b = targets == fv[seg + 1]
    t = np.where(exact_a, 0.0, np.where(exact_b, 1.0, t))
    return a + t[:, None] * (b - a)


# ---------------------------------------------------------------------------
# material points of the FTC isotopy

def _merge(keys, pts, tol=1e-13):
    order = np.argsort(keys, kind="stable")
    keys, pts = keys[order], pts[order]
    keep = np.concatenate([[True], np.diff(keys) > tol])
    return keys[keep], pts[keep]


class _BallStrand:
    """Strand of the second graph in one ball, from p' to the sphere."""

    def __init__(self, center, radius, p_prime, g2_strand, g_strand, tube, leaf_u, per_segment):
        self.c, self.R, self.pp = center, radius, p_prime
        e = _ball_exit(g2_strand, center, radius)
        if e is None:
            raise GraphError("strand never leaves its ball")
        s0, t0 = e
        exit_pt = g2_strand[s0] + t0 * (g2_strand[s0 + 1] - g2_strand[s0])
        h = np.vstack([g2_strand[: s0 + 1], exit_pt])
        h = h[np.concatenate([[True], np.linalg.norm(np.diff(h, axis=0), axis=1) > 0])]
        ge = _ball_exit(g_strand, center, radius)
        gs0, gt0 = ge
        gexit = g_strand[gs0] + gt0 * (g_strand[gs0 + 1] - g_strand[gs0])
        gam = np.vstack([g_strand[: gs0 + 1], gexit])
        self.gam = gam[np.concatenate([[True], np.linalg.norm(np.diff(gam, axis=0), axis=1) > 0])]

        def lam_of(x):
            return np.linalg.norm(radial_map(x, center, radius, p_prime, 1.0) - center, axis=1) / radius

        dense = _densify(h, per_segment)
        lam = lam_of(dense)
        lam[-1] = 1.0
        if not np.all(np.diff(lam) > 0):
            raise GraphError("strand is not radial after the ball map")
        g_lam = np.linalg.norm(self.gam - center, axis=1)[1:-1] / radius
        extra = _solve_monotone(dense, lam_of, g_lam, fv=lam) if len(g_lam) else np.zeros((0, 3))
        self.lam, self.x0 = _merge(np.concatenate([lam, g_lam]), np.vstack([dense, extra]))
        self.sigma = radial_map(self.x0, center, radius, p_prime, 1.0)
        self.sigma[0] = center
        self.tube, self.leaf_u = tube, leaf_u
        u = np.array([float(leaf_u)])
        self.chart_c0 = self.gam[-1][None, :]
        self.chart = _leaf_chart(tube, u, self.chart_c0)
        n, e1, e2 = self.chart
        d = exit_pt - self.gam[-1]
        self.ws = np.array([[d @ e1[0], d @ e2[0]]])

    def _radius_dirs(self, poly, mu):
        return _unit(_strand_at_radius(poly, self.c, mu * self.R) - self.c)

    def at(self, phase, s):
        lam = self.lam
        rad = (lam * self.R)[:, None]
        if phase == 0:
            return radial_map(self.x0, self.c, self.R, self.pp, s)
        if phase == 1:
            return self.c + rad * self._radius_dirs(self.sigma, lam + (1 - lam) * s)
        if phase == 2:
            n, e1, e2 = self.chart
            u = np.array([float(self.leaf_u)])
            y = _lift(self.tube, u, self.chart_c0, n, e1, e2, (1 - s) * self.ws)
            return self.c + rad * _unit(y - self.c)
        return self.c + rad * self._radius_dirs(self.gam, lam + (1 - lam) * (1 - s))

    def at_many(self, phase, ss):
        """``at`` for several times of one phase in one vectorized pass."""
        ss = np.asarray(ss, dtype=float)
        k, lam = len(ss), self.lam
        rad = np.tile(lam * self.R, k)[:, None]
        if phase == 0:
            # the ball map is affine in t
            x1 = radial_map(self.x0, self.c, self.R, self.pp, 1.0)
            out = self.x0[None] + ss[:, None, None] * (x1 - self.x0)[None]
        elif phase == 2:
            n, e1, e2 = self.chart
            u = np.full(k, float(self.leaf_u))
            w = (1 - ss)[:, None] * self.ws
            y = _lift(self.tube, u, np.repeat(self.chart_c0, k, 0), np.repeat(n, k, 0),
                      np.repeat(e1, k, 0), np.repeat(e2, k, 0), w)
            out = self.c + (lam * self.R)[None, :, None] * _unit(y - self.c)[:, None, :]
        else:
            poly, sv = (self.sigma, ss) if phase == 1 else (self.gam, 1 - ss)
            mu = (lam[None] + (1 - lam)[None] * sv[:, None]).ravel()
            out = (self.c + rad * self._radius_dirs(poly, mu)).reshape(k, len(lam), 3)
        return list(out)


class _TubeStrand:
    """Part of a piece of the second graph outside the balls."""

    def __init__(self, tube: Tube, middle, per_segment):
        self.tube = tube
        f = tube.leaves.index
        dense = _densify(middle, per_segment)[1:-1]
        u = f(dense)
        bu = tube.beta_u
        beta_inner = tube.beta[1:-1]
        b_u = f(beta_inner) if len(beta_inner) else np.zeros(0)
        mid_u = f(middle)
        mid_u[0], mid_u[-1] = 0.0, 1.0
        extra = solve_on_leaves(tube.leaves, middle, mid_u, b_u) if len(b_u) else np.zeros((0, 3))
        keys, pts = _merge(np.concatenate([u, b_u]), np.vstack([dense, extra]))
        inside = (keys > 0) & (keys < 1)
        self.u, self.q = keys[inside], pts[inside]
        if len(self.u) and not np.all(np.diff(f(self.q)) > -1e-12):
            raise GraphError("piece is not monotone across the leaves")
        self.c0 = core_points(tube, self.u) if len(self.u) else np.zeros((0, 3))
        if len(b_u):
            # the core vertices themselves, exactly
            idx = np.searchsorted(self.u, b_u)
            ok = (idx < len(self.u))
            idx, bpts = idx[ok], beta_inner[ok]
            hit = np.abs(self.u[idx] - b_u[ok]) <= 1e-13
            self.c0[idx[hit]] = bpts[hit]
        self.chart = _leaf_chart(tube, self.u, self.c0) if len(self.u) else None
        if self.chart is not None:
            n, e1, e2 = self.chart
            d = self.q - self.c0
            self.ws = np.column_stack([np.sum(d * e1, 1), np.sum(d * e2, 1)])
            if np.any(np.linalg.norm(self.ws, axis=1) > tube.disk_radius):
                raise GraphError("piece leaves its tube")
        del bu

    def at(self, phase, s):
        if not len(self.u):
            return np.zeros((0, 3))
        if phase <= 1:
            return self.q
        if phase == 2:
            n, e1, e2 = self.chart
            return _lift(self.tube, self.u, self.c0, n, e1, e2, (1 - s) * self.ws)
        return self.c0

    def at_many(self, phase, ss):
        k = len(ss)
        if not len(self.u):
            return [np.zeros((0, 3))] * k
        if phase != 2:
            return [self.at(phase, 0.0)] * k
        n, e1, e2 = self.chart
        m = len(self.u)
        w = ((1 - np.asarray(ss, dtype=float))[:, None, None] * self.ws[None]).reshape(-1, 2)
        y = _lift(self.tube, np.tile(self.u, k), np.tile(self.c0, (k, 1)), np.tile(n, (k, 1)),
                  np.tile(e1, (k, 1)), np.tile(e2, (k, 1)), w)
        return list(y.reshape(k, m, 3))


@dataclass(frozen=True)
class IsotopyFrames:
    times: np.ndarray
    frames: list
    embedded: np.ndarray
    min_distance: np.ndarray
    displacement: np.ndarray
    max_displacement: float
    motion_bound: float

    @property
    def sound(self) -> bool:
        return bool(np.all(self.embedded)) and self.max_displacement <= self.motion_bound + 1e-9


def _phase(t):
    k = min(int(np.searchsorted(PHASES, t, side="right")) - 1, 3)
    return k, (t - PHASES[k]) / (PHASES[k + 1] - PHASES[k])


def _ftc_trajectory(g, g2, cert: IsotopyCertificate, per_segment):
    d: CornerDecomposition = cert.decomposition
    model: NeighborhoodModel = cert.neighborhood
    p2 = split_second(g2, d, cert.correspondence)
    r2 = model.chain.r2
    parts = []  # per subarc: head ball, tube, tail ball
    for k, s in enumerate(d.subarcs):
        tube = model.tubes[k]
        if len(tube.beta_samples) < 2:
            raise GraphError("degenerate tube: no frames for this decomposition")
        piece2 = p2.pieces[k]
        ch, ct = d.points[s.head], d.points[s.tail]
        head = _BallStrand(ch, r2, p2.points[s.head], piece2, s.points, tube, 0.0, per_segment)
        tail = _BallStrand(ct, r2, p2.points[s.tail], piece2[::-1], s.points[::-1], tube, 1.0, per_segment)
        e0 = _ball_exit(piece2, ch, r2)
        e1 = _ball_exit(piece2[::-1], ct, r2)
        n = len(piece2) - 1
        a = piece2[e0[0]] + e0[1] * (piece2[e0[0] + 1] - piece2[e0[0]])
        j = n - 1 - e1[0]
        b = piece2[j] + (1 - e1[1]) * (piece2[j + 1] - piece2[j])
        middle = np.vstack([a, piece2[e0[0] + 1: j + 1], b])
        middle = middle[np.concatenate([[True], np.linalg.norm(np.diff(middle, axis=0), axis=1) > 0])]
        parts.append((s, head, _TubeStrand(tube, middle, per_segment), tail))

    def at_many(times):
        ph = [_phase(float(t)) for t in times]
        result = [None] * len(times)
        for phase in sorted({p for p, _ in ph}):
            idx = [i for i, (p, _) in enumerate(ph) if p == phase]
            ss = [ph[i][1] for i in idx]
            arcs = [{} for _ in idx]
            for s, head, mid, tail in parts:
                hs, ms, ts = head.at_many(phase, ss), mid.at_many(phase, ss), tail.at_many(phase, ss)
                for a, h, m_, t_ in zip(arcs, hs, ms, ts):
                    a.setdefault(s.arc_id, []).append(np.vstack([h, m_, t_[::-1]]))
            for i, a in zip(idx, arcs):
                result[i] = {aid: np.vstack([segs[0]] + [x[1:] for x in segs[1:]]) for aid, segs in a.items()}
        return result

    return at_many


def _thick_trajectory(g, g2, c: Correspondence):
    data = {}
    for aid, arc in g.arcs.items():
        amap = c.maps[aid]
        arc2 = g2.arcs[amap.target].points
        u = np.unique(np.clip(np.concatenate([fractions(arc.points), amap.backward(fractions(arc2)), amap.s]), 0.0, 1.0))
        # rounding in the two fraction lists leaves near-duplicates; drop them
        keep = np.concatenate([np.diff(u) > 1e-12, [True]])
        keep[0] = True
        u = u[keep]
        P = point_at(arc.points, u)
        Q = point_at(arc2, amap.forward(u))
        P[0], P[-1] = arc.points[0], arc.points[-1]
        Q[0], Q[-1] = arc2[0], arc2[-1]
        data[aid] = (P, Q)
    return lambda times: [{aid: (1 - t) * Q + t * P for aid, (P, Q) in data.items()} for t in times]


def _frame_graph(g: EmbeddedGraph, arcs: dict) -> EmbeddedGraph:
    verts = {}
    out = {}
    for aid, pts in arcs.items():
        arc = g.arcs[aid]
        keep = np.concatenate([[True], np.linalg.norm(np.diff(pts, axis=0), axis=1) > 0])
        pts = pts[keep]
        verts.setdefault(arc.head, pts[0])
        verts.setdefault(arc.tail, pts[-1])
        pts[0], pts[-1] = verts[arc.head], verts[arc.tail]
        out[aid] = Arc(pts, arc.head, arc.tail, arc.closed)
    return EmbeddedGraph(verts, out)


def worker_count() -> int:
    """Frame workers from FTC_ISOTOPY_THREADS.

    0 or unset means auto, which is serial: frames are many small numpy
    calls and threads only add lock contention at desk scale.
    """
    try:
        n = int(os.environ.get("FTC_ISOTOPY_THREADS", "0"))
    except ValueError:
        n = 0
    return min(n, os.cpu_count() or 1) if n > 0 else 1


def frame_times(m: int = 50):
    return np.unique(np.concatenate([np.linspace(0, 1, m), PHASES]))


def assemble_frames(g: EmbeddedGraph, g2: EmbeddedGraph, cert: IsotopyCertificate,
                    m: int = 50, per_segment: int = 4, workers: int | None = None) -> IsotopyFrames:
    """Sample the isotopy carrying ``g2`` onto ``g`` at m uniform times plus
    the phase boundaries; check every frame for embeddedness."""
    if not cert.issued:
        raise GraphError("frames need an issued certificate")
    if cert.criterion == "thick":
        at = _thick_trajectory(g, g2, cert.correspondence)
    else:
        at = _ftc_trajectory(g, g2, cert, per_segment)
    times = frame_times(m)
    positions = at(times)
    start = positions[0]

    def one(pos):
        fg = _frame_graph(g, pos)
        md = min_self_distance(fg)
        d = max(float(np.linalg.norm(pos[a] - start[a], axis=1).max()) for a in pos)
        return fg, md, md > EMBED_TOL * fg.diameter(), d

    workers = worker_count() if workers is None else workers
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(one, positions))
    else:
        results = [one(pos) for pos in positions]
    frames = [r[0] for r in results]
    mins = [r[1] for r in results]
    emb = [r[2] for r in results]
    disp = [r[3] for r in results]
    disp = np.array(disp)
    return IsotopyFrames(times, frames, np.array(emb), np.array(mins), disp, float(disp.max()),
                         cert.motion_bound)


def hausdorff(a: EmbeddedGraph, b: EmbeddedGraph, per_segment: int = 4) -> float:
    """Hausdorff distance between two graphs (densified vertex samples)."""
    from .graph_core import point_segment_distances

    def one_way(x, y):
        pts = np.vstack([_densify(arc.points, per_segment) for arc in x.arcs.values()])
        p0 = np.vstack([arc.points[:-1] for arc in y.arcs.values()])
        p1 = np.vstack([arc.points[1:] for arc in y.arcs.values()])
        best = np.full(len(pts), np.inf)
        for i in range(0, len(p0), 256):
            dd, _ = point_segment_distances(pts[:, None], p0[None, i:i + 256], p1[None, i:i + 256])
            best = np.minimum(best, dd.min(axis=1))
        return float(best.max())

    return max(one_way(a, b), one_way(b, a))


# ---------------------------------------------------------------------------
# smallness

@dataclass(frozen=True)
class DisplacementField:
    points: np.ndarray
    vectors: np.ndarray
    bound: float = math.inf


def smallness_verifier(field: DisplacementField, chunk: int = 1024):
    """(max |f|, arctan of the sampled Lipschitz constant of f)."""
    p = np.asarray(field.points, dtype=float)
    f = np.asarray(field.vectors, dtype=float)
    if len(p) < 2:
        raise ValueError("need at least two samples")
    p, idx = np.unique(p, axis=0, return_index=True)
    f = f[idx]
    if len(p) < 2:
        raise ValueError("all samples coincide")
    delta = float(np.linalg.norm(f, axis=1).max())
    lam = 0.0
    for i in range(0, len(p), chunk):
        dp = np.linalg.norm(p[i:i + chunk, None] - p[None], axis=2)
        df = np.linalg.norm(f[i:i + chunk, None] - f[None], axis=2)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(dp > 0, df / dp, 0.0)
        lam = max(lam, float(ratio.max()))
    return delta, math.atan(lam)
