"""Closeness between embedded graphs, discrete thickness, distortion and the
chord-angle modulus.

Parameters along arcs are arclength fractions in [0, 1].  A correspondence
pairs arcs of two graphs and carries, per pair, an increasing piecewise-linear
map between their parameters given by breakpoints.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from numba import njit

from .graph_core import (
    ANGLE_TOL,
    Arc,
    EmbeddedGraph,
    GraphError,
    _angle_between,
    cumulative_length,
    segment_directions,
    turning_angles,
)


class CorrespondenceError(GraphError):
    pass


@dataclass(frozen=True)
class ArcMap:
    source: str
    target: str
    s: np.ndarray
    s2: np.ndarray

    def __post_init__(self):
        s, s2 = np.asarray(self.s, dtype=float), np.asarray(self.s2, dtype=float)
        if s.shape != s2.shape or len(s) < 2:
            raise CorrespondenceError("breakpoint lists must match and hold at least two entries")
        if s[0] != 0.0 or s2[0] != 0.0 or s[-1] != 1.0 or s2[-1] != 1.0:
            raise CorrespondenceError("parameter maps must run from (0,0) to (1,1)")
        if np.any(np.diff(s) <= 0) or np.any(np.diff(s2) <= 0):
            raise CorrespondenceError("parameter maps must be strictly increasing")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "s2", s2)

    def forward(self, u):
        return np.interp(u, self.s, self.s2)

    def backward(self, u):
        return np.interp(u, self.s2, self.s)

    def inverse(self) -> "ArcMap":
        return ArcMap(self.target, self.source, self.s2, self.s)


@dataclass(frozen=True)
class Correspondence:
    maps: dict
    mode: str = "default"

    def inverse(self) -> "Correspondence":
        return Correspondence({m.target: m.inverse() for m in self.maps.values()}, self.mode)


@dataclass(frozen=True)
class ClosenessReport:
    delta: float
    theta: float
    delta_witness: tuple = ()
    theta_witness: tuple = ()


@dataclass(frozen=True)
class ThicknessReport:
    tau_hat: float
    min_rad: float
    dcsd: float
    mechanism: str
    triple_witness: tuple = ()
    pair_witness: tuple = ()


# ---------------------------------------------------------------------------
# parameter helpers

def fractions(points) -> np.ndarray:
    cum = cumulative_length(points)
    return cum / cum[-1]


def point_at(points, u, frac=None) -> np.ndarray:
    """Points at arclength fractions ``u`` along a polyline."""
    if frac is None:
        frac = fractions(points)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return np.column_stack([np.interp(u, frac, points[:, k]) for k in range(3)])


def segment_index(frac, u) -> np.ndarray:
    """Index of the segment whose open parameter interval contains ``u``."""
    idx = np.searchsorted(frac, u, side="right") - 1
    return np.clip(idx, 0, len(frac) - 2)


def _pairing(g: EmbeddedGraph, g2: EmbeddedGraph, pairing=None) -> dict:
    if pairing is None:
        if set(g.arcs) == set(g2.arcs):
            pairing = {a: a for a in g.arcs}
        elif len(g.arcs) == len(g2.arcs):
            pairing = dict(zip(g.arcs, g2.arcs))
        else:
            raise CorrespondenceError("graphs have different numbers of arcs")
    if sorted(pairing) != sorted(g.arcs) or sorted(pairing.values()) != sorted(g2.arcs):
        raise CorrespondenceError("arc pairing is not a bijection")
    vmap = {}
    for a, b in pairing.items():
        arc, arc2 = g.arcs[a], g2.arcs[b]
        if arc.closed != arc2.closed:
            raise CorrespondenceError(f"arc {a} and {b} differ in closedness")
        for v, w in ((arc.head, arc2.head), (arc.tail, arc2.tail)):
            if vmap.setdefault(v, w) != w:
                raise CorrespondenceError(f"pairing does not respect incidences at vertex {v}")
    if len(set(vmap.values())) != len(vmap):
        raise CorrespondenceError("pairing identifies distinct vertices")
    return pairing


def default_correspondence(g: EmbeddedGraph, g2: EmbeddedGraph, pairing=None) -> Correspondence:
    """Pair arcs (by id, else by order) with proportional-arclength maps."""
    pairing = _pairing(g, g2, pairing)
    maps = {a: ArcMap(a, b, np.array([0.0, 1.0]), np.array([0.0, 1.0])) for a, b in pairing.items()}
    return Correspondence(maps, "default")


def index_correspondence(g: EmbeddedGraph, g2: EmbeddedGraph, pairing=None) -> Correspondence:
    """Pair vertex i of each arc with vertex i of its partner.

    Only valid when paired arcs have equal vertex counts.
    """
    pairing = _pairing(g, g2, pairing)
    maps = {}
    for a, b in pairing.items():
        pa, pb = g.arcs[a].points, g2.arcs[b].points
        if len(pa) != len(pb):
            raise CorrespondenceError(f"arcs {a} and {b} have different vertex counts")
        maps[a] = ArcMap(a, b, fractions(pa), fractions(pb))
    return Correspondence(maps, "index")


# ---------------------------------------------------------------------------
# closeness

def _arc_closeness(pa, pb, amap: ArcMap):
    fa, fb = fractions(pa), fractions(pb)
    u = np.unique(np.concatenate([amap.s, fa, amap.backward(fb)]))
    u = np.clip(u, 0.0, 1.0)
    u2 = amap.forward(u)
    xa = point_at(pa, u, fa)
    xb = point_at(pb, u2, fb)
    dist = np.linalg.norm(xa - xb, axis=1)
    k = int(np.argmax(dist))
    # both curves are affine in u between consecutive breakpoints, so the
    # distance is convex there and peaks at a breakpoint
    mid = 0.5 * (u[:-1] + u[1:])
    # slivers come from rounding in the two fraction lists; their midpoints
    # sit on a segment boundary and would pair the wrong segments
    keep = np.diff(u) > 1e-12
    mid = mid[keep]
    da = segment_directions(pa)[segment_index(fa, mid)]
    db = segment_directions(pb)[segment_index(fb, amap.forward(mid))]
    ang = _angle_between(da, db)
    j = int(np.argmax(ang)) if len(ang) else 0
    theta = float(ang[j]) if len(ang) else 0.0
    return float(dist[k]), (float(u[k]), xa[k], xb[k]), theta, (float(mid[j]) if len(mid) else 0.0,)


def measure_closeness(g: EmbeddedGraph, g2: EmbeddedGraph, c: Correspondence) -> ClosenessReport:
    """Sup of point distance and essential sup of tangent angle under ``c``.

    Corner parameters are a null set and are skipped for the angle.
    """
    delta, theta = 0.0, 0.0
    dw, tw = (), ()
    for aid, amap in c.maps.items():
        d, dwit, t, twit = _arc_closeness(g.arcs[aid].points, g2.arcs[amap.target].points, amap)
        if d > delta or not dw:
            delta, dw = d, (aid,) + dwit
        if t > theta or not tw:
            theta, tw = t, (aid,) + twit
    return ClosenessReport(delta, theta, dw, tw)


def arc_closeness(pa, pb, amap: ArcMap | None = None):
    """(delta, theta) between two bare polylines; proportional map by default."""
    if amap is None:
        amap = ArcMap("a", "b", np.array([0.0, 1.0]), np.array([0.0, 1.0]))
    d, _, t, _ = _arc_closeness(np.asarray(pa, float), np.asarray(pb, float), amap)
    return d, t


@njit(cache=True)
def _frechet_path(dist):
    n, m = dist.shape
    ca = np.full((n, m), np.inf)
    ca[0, 0] = dist[0, 0]
    for i in range(n):
        for j in range(m):
            if i == 0 and j == 0:
                continue
            best = np.inf
            if i > 0 and j > 0:
                best = ca[i - 1, j - 1]
            if i > 0 and ca[i - 1, j] < best:
                best = ca[i - 1, j]
            if j > 0 and ca[i, j - 1] < best:
                best = ca[i, j - 1]
            ca[i, j] = max(best, dist[i, j])
    # backtrack, preferring diagonal steps on ties
    path_i = np.empty(n + m, dtype=np.int64)
    path_j = np.empty(n + m, dtype=np.int64)
    i, j, k = n - 1, m - 1, 0
    while True:
        path_i[k] = i
        path_j[k] = j
        k += 1
        if i == 0 and j == 0:
            break
        bi, bj, bv = -1, -1, np.inf
        if i > 0 and j > 0:
            bi, bj, bv = i - 1, j - 1, ca[i - 1, j - 1]
        if i > 0 and ca[i - 1, j] < bv:
            bi, bj, bv = i - 1, j, ca[i - 1, j]
        if j > 0 and ca[i, j - 1] < bv:
            bi, bj, bv = i, j - 1, ca[i, j - 1]
        i, j = bi, bj
    return path_i[:k][::-1], path_j[:k][::-1]


def _spread(values, gaps_scale=1e-7):
    """Make a nondecreasing breakpoint list strictly increasing by fanning
    out runs of equal values inside a tiny window around the repeated value."""
    v = np.asarray(values, dtype=float).copy()
    uniq = np.unique(v)
    if len(uniq) == len(v):
        return v
    gap = np.diff(uniq).min() if len(uniq) > 1 else 1.0
    eta = gaps_scale * gap
    start = 0
    while start < len(v):
        end = start
        while end + 1 < len(v) and v[end + 1] == v[start]:
            end += 1
        run = end - start + 1
        if run > 1:
            base = v[start]
            if base == 0.0:
                offs = np.linspace(0.0, eta, run)
            elif base == 1.0:
                offs = np.linspace(-eta, 0.0, run)
            else:
                offs = np.linspace(-eta / 2, eta / 2, run)
            v[start:end + 1] = base + offs
        start = end + 1
    return v


def frechet_arc_map(pa, pb, source="a", target="b") -> ArcMap:
    """Monotone breakpoint map from a discrete Frechet coupling of the vertices."""
    # sample both arcs at the union of their vertex fractions so the
    # coupling can follow vertices of either curve
    fa = fb = np.union1d(fractions(pa), fractions(pb))
    pi, pj = _frechet_path(cdist(point_at(pa, fa), point_at(pb, fb)))
    s, s2 = _spread(fa[pi]), _spread(fb[pj])
    s[0], s2[0], s[-1], s2[-1] = 0.0, 0.0, 1.0, 1.0
    keep = np.ones(len(s), dtype=bool)
    last_a, last_b = -1.0, -1.0
    for k in range(len(s)):
        if s[k] <= last_a or s2[k] <= last_b:
            keep[k] = False
        else:
            last_a, last_b = s[k], s2[k]
    if not keep[-1]:
        keep[np.nonzero(keep)[0][-1]] = False
        keep[-1] = True
    return ArcMap(source, target, s[keep], s2[keep])


def refine_correspondence(g: EmbeddedGraph, g2: EmbeddedGraph, c: Correspondence, key=None) -> Correspondence:
    """Per arc, keep the best of the input map, the proportional map, a
    discrete-Frechet map and (for equal vertex counts) the vertex-index map.

    ``key(delta, theta)`` scores a candidate (smaller is better); the default
    compares delta first, then theta, so delta never increases relative to
    ``c``.
    """
    if key is None:
        key = lambda d, t: (d, t)  # noqa: E731
    maps = {}
    for aid, amap in c.maps.items():
        pa, pb = g.arcs[aid].points, g2.arcs[amap.target].points
        candidates = [amap, ArcMap(aid, amap.target, np.array([0.0, 1.0]), np.array([0.0, 1.0]))]
        try:
            candidates.append(frechet_arc_map(pa, pb, aid, amap.target))
        except CorrespondenceError:
            pass
        if len(pa) == len(pb):
            candidates.append(ArcMap(aid, amap.target, fractions(pa), fractions(pb)))
        scores = []
        for m in candidates:
            d, _, t, _ = _arc_closeness(pa, pb, m)
            scores.append(key(d, t))
        maps[aid] = candidates[min(range(len(candidates)), key=scores.__getitem__)]
    return Correspondence(maps, "refined")


# ---------------------------------------------------------------------------
# thickness

def _loop_points(k):
    if isinstance(k, Arc):
        k = k.points
    pts = np.asarray(k, dtype=float)
    if np.array_equal(pts[0], pts[-1]):
        pts = pts[:-1]
    return pts


def circumradii(pts) -> np.ndarray:
    """Circumradius of each cyclic consecutive triple (i-1, i, i+1); collinear gives inf."""
    a, b, c = np.roll(pts, 1, axis=0), pts, np.roll(pts, -1, axis=0)
    ab = np.linalg.norm(b - a, axis=1)
    bc = np.linalg.norm(c - b, axis=1)
    ca = np.linalg.norm(a - c, axis=1)
    area2 = np.linalg.norm(np.cross(b - a, c - a), axis=1)
    with np.errstate(divide="ignore"):
        r = ab * bc * ca / (2.0 * area2)
    r[area2 <= 1e-15 * ab * bc] = np.inf
    return r


def _critical_pairs_min(pts_list, tol=ANGLE_TOL, chunk=512):
    """Shortest doubly-critical chord over vertex pairs of the given loops."""
    pts = np.vstack(pts_list)
    comp = np.concatenate([np.full(len(p), k) for k, p in enumerate(pts_list)])
    local = np.concatenate([np.arange(len(p)) for p in pts_list])
    sizes = np.array([len(p) for p in pts_list])
    d_out = np.vstack([segment_directions(np.vstack([p, p[:1]])) for p in pts_list])
    d_in = np.vstack([np.roll(segment_directions(np.vstack([p, p[:1]])), 1, axis=0) for p in pts_list])
    turn = _angle_between(d_in, d_out)
    # the allowance is the full vertex turning: a chord perpendicular to one
    # neighbour is off from the other by exactly that angle
    slack = np.sin(turn + tol)
    n = len(pts)
    best, witness = np.inf, ()
    for lo in range(0, n, chunk):
        rows = np.arange(lo, min(n, lo + chunk))
        chord = pts[None, :, :] - pts[rows, None, :]
        length = np.linalg.norm(chord, axis=2)
        ok_i = (np.abs(np.einsum("rjk,rk->rj", chord, d_in[rows])) <= slack[rows, None] * length) & (
            np.abs(np.einsum("rjk,rk->rj", chord, d_out[rows])) <= slack[rows, None] * length
        )
        ok_j = (np.abs(np.einsum("rjk,jk->rj", chord, d_in)) <= slack[None, :] * length) & (
            np.abs(np.einsum("rjk,jk->rj", chord, d_out)) <= slack[None, :] * length
        )
        same = comp[rows, None] == comp[None, :]
        gap = np.abs(local[rows, None] - local[None, :])
        cyc = np.minimum(gap, sizes[comp[rows]][:, None] - gap)
        valid = ok_i & ok_j & ~(same & (cyc < 2))
        cand = np.where(valid, length, np.inf)
        k = np.unravel_index(np.argmin(cand), cand.shape)
        if cand[k] < best:
            best = float(cand[k])
            witness = (int(rows[k[0]]), int(k[1]))
    return best, witness, pts


def discrete_thickness(k, tol: float = ANGLE_TOL) -> ThicknessReport:
    """Discrete thickness estimate of a closed polyline (or a list of them).

    ``tau_hat = min(2 * min_rad, dcsd)`` where ``min_rad`` is the smallest
    circumradius of consecutive vertex triples and ``dcsd`` the shortest chord
    that is perpendicular to the curve at both ends, up to the local turning.
    Ties go to curvature.
    """
    loops = k if isinstance(k, (list, tuple)) else [k]
    loops = [_loop_points(p) for p in loops]
    if any(len(p) < 4 for p in loops):
        raise GraphError("discrete thickness needs closed polylines with at least 4 vertices")
    radii = [circumradii(p) for p in loops]
    min_rad, tri = np.inf, ()
    offset = 0
    for p, r in zip(loops, radii):
        j = int(np.argmin(r))
        if r[j] < min_rad:
            min_rad = float(r[j])
            n = len(p)
            tri = ((j - 1) % n + offset, j + offset, (j + 1) % n + offset)
        offset += len(p)
    dcsd, pair, allpts = _critical_pairs_min(loops, tol)
    tau = min(2 * min_rad, dcsd)
    mechanism = "curvature" if 2 * min_rad <= dcsd else "self-distance"
    triple = tuple(allpts[i] for i in tri) if tri else ()
    pairw = tuple(allpts[i] for i in pair) if pair else ()
    return ThicknessReport(float(tau), float(min_rad), float(dcsd), mechanism, triple, pairw)


# ---------------------------------------------------------------------------
# distortion and chord-angle modulus

def distortion(arc, closed: bool | None = None) -> float:
    """Largest ratio of arclength to chord over vertex pairs.

    Loops use the shorter of the two arcs between the pair.
    """
    if closed is None:
        closed = isinstance(arc, Arc) and arc.closed
    pts = arc.points if isinstance(arc, Arc) else np.asarray(arc, dtype=float)
    if closed and not np.array_equal(pts[0], pts[-1]):
        pts = np.vstack([pts, pts[:1]])
    cum = cumulative_length(pts)
    if closed:
        pts, cum = pts[:-1], cum
        total = cum[-1]
        cum = cum[:-1]
    s = np.abs(cum[:, None] - cum[None, :])
    if closed:
        s = np.minimum(s, total - s)
    chord = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(chord > 0, s / chord, 1.0)
    return float(max(1.0, ratio.max()))


def _subarcs_ok(pts, cum, ell, theta, closed) -> bool:
    n = len(pts) - 1 if closed else len(pts)
    if closed:
        base = pts[:-1]
        pts = np.vstack([base, base, base[:1]])
        total = cum[-1]
        cum = np.concatenate([cum[:-1], cum[:-1] + total, [2 * total]])
    dirs = segment_directions(pts)
    cos_t = np.cos(theta) - 1e-12
    for i in range(n):
        jmax = np.searchsorted(cum, cum[i] + ell * (1 + 1e-12), side="right") - 1
        if closed:
            jmax = min(jmax, i + n - 1)
        if jmax <= i + 1:
            continue
        js = np.arange(i + 2, jmax + 1)
        chord = pts[js] - pts[i]
        chord /= np.linalg.norm(chord, axis=1)[:, None]
        seg = dirs[i:jmax]
        dots = chord @ seg.T
        mask = np.arange(i, jmax)[None, :] < js[:, None]
        if np.any(mask & (dots < cos_t)):
            return False
    return True


def chord_angle_modulus(arc, theta: float, closed: bool | None = None, levels: int = 20) -> float:
    """Largest subarc length ell such that every subarc no longer than ell
    keeps its segment directions within ``theta`` of its endpoint chord.

    Subarc endpoints range over vertices and segment midpoints.  Scales are
    searched on the dyadic grid L, L/2, ..., L/2**levels and the bracketing
    interval is then bisected.
    """
    if not 0 < theta <= np.pi / 2:
        raise ValueError("theta must lie in (0, pi/2]")
    if closed is None:
        closed = isinstance(arc, Arc) and arc.closed
    pts = arc.points if isinstance(arc, Arc) else np.asarray(arc, dtype=float)
    if closed and not np.array_equal(pts[0], pts[-1]):
        pts = np.vstack([pts, pts[:1]])
    fine = np.empty((2 * len(pts) - 1, 3))
    fine[0::2] = pts
    fine[1::2] = 0.5 * (pts[:-1] + pts[1:])
    cum = cumulative_length(fine)
    total = cum[-1]
    if _subarcs_ok(fine, cum, total, theta, closed):
        return float(total)
    hi = total
    for k in range(1, levels + 1):
        ell = total / 2 ** k
        if _subarcs_ok(fine, cum, ell, theta, closed):
            lo = ell
            break
        hi = ell
    else:
        raise ValueError("no positive chord-angle scale at the finest grid level; curve too rough")
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        if _subarcs_ok(fine, cum, mid, theta, closed):
            lo = mid
        else:
            hi = mid
    return float(lo)
