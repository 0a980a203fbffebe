"""Isotopy certificates for nearby polygonal graphs.

Two sufficient criteria are implemented.  ``certify_thick`` handles links with
a positive (discrete) thickness and certifies closeness below the
thickness-dependent angle bound.  ``certify_ftc`` works for any embedded
polygonal graph: it cuts the graph into low-curvature pieces, builds balls
around the cut points and thin foliated tubes around the pieces, and checks
that the second graph runs through that neighborhood transversally.

A refusal never claims the graphs are not isotopic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graph_core import (
    ANGLE_TOL,
    Arc,
    EmbeddedGraph,
    GraphError,
    _angle_between,
    cumulative_length,
    point_segment_distances,
    segment_directions,
    segment_distances,
    turning_angles,
)
from .metrics import (
    ClosenessReport,
    Correspondence,
    default_correspondence,
    discrete_thickness,
    fractions,
    measure_closeness,
    point_at,
    refine_correspondence,
)

CORNER_ANGLE = math.pi / 8
DEFAULT_BUDGET = CORNER_ANGLE - 1e-9
DRIFT_BOUND = 2 * math.asin(1 / 6)


class NeighborhoodError(GraphError):
    """The ball-and-tube construction failed its geometric checks."""


class DegenerateTubeError(NeighborhoodError):
    """Two balls touch, leaving a tube of zero length."""


# ---------------------------------------------------------------------------
# thick criterion

def theta_of(delta: float, tau: float) -> float:
    """Angle bound pi/2 - 2 arcsin(2 delta / tau) for closeness delta."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    if delta < 0 or delta >= tau / 4:
        raise ValueError("delta must lie in [0, tau/4)")
    return math.pi / 2 - 2 * math.asin(2 * delta / tau)


@dataclass(frozen=True)
class IsotopyCertificate:
    criterion: str
    issued: bool
    reason: str = ""
    motion_bound: float = 0.0
    constants: dict = field(default_factory=dict)
    closeness: ClosenessReport | None = None
    correspondence: Correspondence | None = None
    decomposition: "CornerDecomposition | None" = None
    neighborhood: "NeighborhoodModel | None" = None

    @property
    def valid(self) -> bool:
        return self.issued


def _as_graph(k) -> EmbeddedGraph:
    if isinstance(k, EmbeddedGraph):
        return k
    if isinstance(k, np.ndarray) and k.ndim == 2:
        return EmbeddedGraph.from_loops([k])
    return EmbeddedGraph.from_loops(list(k))


def _correspondence(g, g2, c, mode, key=None):
    if c is None:
        c = default_correspondence(g, g2)
    if mode == "refined":
        c = refine_correspondence(g, g2, c, key)
    elif mode != "default":
        raise ValueError("correspondence mode must be 'default' or 'refined'")
    return c


def certify_thick(k, k2, c: Correspondence | None = None, tau: float | None = None,
                  mode: str = "refined") -> IsotopyCertificate:
    """Certify a link ``k2`` against a thick link ``k``.

    ``tau`` defaults to the discrete thickness of ``k``.  Issued when the
    measured closeness (delta, theta) has delta < tau/4 and
    theta < theta_of(delta, tau); the motion bound is delta.
    """
    g, g2 = _as_graph(k), _as_graph(k2)
    if any(not a.closed for a in g.arcs.values()):
        raise GraphError("the thick criterion applies to links (closed loops)")
    if tau is None:
        tau = discrete_thickness([a.points for a in g.arcs.values()]).tau_hat
    if tau <= 0:
        raise ValueError("tau must be positive")
    # per arc, favor the map with the most room in theta + 2 arcsin(2 delta / tau) < pi/2
    c = _correspondence(g, g2, c, mode, lambda d, t: (t + 2 * math.asin(min(2 * d / tau, 1.0)), d))
    rep = measure_closeness(g, g2, c)
    consts = {"tau": tau, "delta": rep.delta, "theta": rep.theta}
    if rep.delta >= tau / 4:
        return IsotopyCertificate("thick", False, "delta-too-large", 0.0, consts, rep, c)
    bound = theta_of(rep.delta, tau)
    consts["theta_bound"] = bound
    if rep.theta >= bound:
        return IsotopyCertificate("thick", False, "theta-too-large", 0.0, consts, rep, c)
    return IsotopyCertificate("thick", True, "", rep.delta, consts, rep, c)


# ---------------------------------------------------------------------------
# corner decomposition

@dataclass(frozen=True)
class Subarc:
    arc_id: str
    start: int
    end: int
    points: np.ndarray
    head: str
    tail: str
    curvature: float
    u0: float
    u1: float


@dataclass(frozen=True)
class CornerDecomposition:
    points: dict  # key -> point
    subarcs: list
    budget: float

    def incident(self, key):
        return [k for k, s in enumerate(self.subarcs) if key in (s.head, s.tail)]


def _vertex_key(vid):
    return "v:" + vid


def corner_decomposition(g: EmbeddedGraph, budget: float = DEFAULT_BUDGET, extra=()) -> CornerDecomposition:
    """Greedy cut of every arc into pieces of interior curvature below ``budget``.

    Graph vertices and corners turning at least pi/8 are always cut points;
    ``extra`` lists further ``(arc_id, vertex_index)`` cut points.
    """
    forced = {}
    for aid, idx in extra:
        forced.setdefault(aid, set()).add(idx)
    points = {_vertex_key(v): p for v, p in g.vertices.items()}
    subarcs = []
    for aid, arc in g.arcs.items():
        pts = arc.points
        frac = fractions(pts)
        turns = turning_angles(pts) if len(pts) > 2 else np.zeros(0)
        cuts = [0]
        acc = 0.0
        for k in range(1, len(pts) - 1):
            t = turns[k - 1]
            if k in forced.get(aid, ()) or t >= CORNER_ANGLE - ANGLE_TOL or acc + t >= budget:
                cuts.append(k)
                acc = 0.0
            else:
                acc += t
        cuts.append(len(pts) - 1)
        keys = []
        for k in cuts:
            if k == 0:
                keys.append(_vertex_key(arc.head))
            elif k == len(pts) - 1:
                keys.append(_vertex_key(arc.tail))
            else:
                key = f"c:{aid}:{k}"
                points[key] = pts[k]
                keys.append(key)
        for a, b, ka, kb in zip(cuts[:-1], cuts[1:], keys[:-1], keys[1:]):
            piece = pts[a: b + 1]
            curv = float(turns[a: b - 1].sum()) if b - a > 1 else 0.0
            subarcs.append(Subarc(aid, a, b, piece, ka, kb, curv, float(frac[a]), float(frac[b])))
    return CornerDecomposition(points, subarcs, budget)


# ---------------------------------------------------------------------------
# radii chain

@dataclass(frozen=True)
class RadiiChain:
    r1: float
    r2: float
    r3: float
    r4: float
    delta: float
    epsilon: float
    r3_measured: float = float("nan")

    def check(self):
        """The arithmetic identities of the chain, as a dict of booleans."""
        return {
            "r2": self.r2 == min(self.r1 / 2, self.epsilon / 2),
            "r4": self.r4 == self.r3 / 6,
            "delta": self.delta == self.r4 / 3,
            "delta<r2/9": self.delta < self.r2 / 9,
            "r3<=2r2": self.r3 <= 2 * self.r2,
        }


def _soup(polys, labels):
    p0 = np.vstack([p[:-1] for p in polys])
    p1 = np.vstack([p[1:] for p in polys])
    lab = np.concatenate([np.full(len(p) - 1, l) for p, l in zip(polys, labels)])
    return p0, p1, lab


def _pairwise_piece_distance(polys):
    """Matrix of minimum distances between polylines (single points allowed)."""
    polys = [p if len(p) > 1 else np.vstack([p, p]) for p in polys]
    p0, p1, lab = _soup(polys, range(len(polys)))
    d, _, _ = segment_distances(p0[:, None], p1[:, None], p0[None, :], p1[None, :])
    n = len(polys)
    out = np.full((n, n), np.inf)
    np.minimum.at(out, (lab[:, None].repeat(len(lab), 1), lab[None, :].repeat(len(lab), 0)), d)
    return out


def _ball_exit(piece, center, radius):
    """First parameter (segment index, t) where the polyline leaves the ball."""
    for s in range(len(piece) - 1):
        a, b = piece[s], piece[s + 1]
        if np.linalg.norm(b - center) >= radius:
            d = b - a
            f = a - center
            A = d @ d
            B = 2 * f @ d
            C = f @ f - radius ** 2
            disc = max(B * B - 4 * A * C, 0.0)
            t = (-B + math.sqrt(disc)) / (2 * A)
            return s, min(max(t, 0.0), 1.0)
    return None


def clip_to_balls(piece, r_head, r_tail, head, tail):
    """Part of a piece outside the balls around its two ends."""
    e0 = _ball_exit(piece, head, r_head)
    e1 = _ball_exit(piece[::-1], tail, r_tail)
    if e0 is None or e1 is None:
        raise NeighborhoodError("a piece never leaves the ball around its end")
    n = len(piece) - 1
    s0, t0 = e0
    s1r, t1r = e1
    s1, t1 = n - 1 - s1r, 1.0 - t1r
    span = np.linalg.norm(piece[-1] - piece[0]) + 1e-300
    p_start = piece[s0] + t0 * (piece[s0 + 1] - piece[s0])
    p_end = piece[s1] + t1 * (piece[s1 + 1] - piece[s1])
    if (s0, t0) >= (s1, t1) or (s0 == s1 and np.linalg.norm(p_end - p_start) < 1e-9 * span):
        mid = 0.5 * (piece[s0] + t0 * (piece[s0 + 1] - piece[s0]) + piece[s1] + t1 * (piece[s1 + 1] - piece[s1]))
        return mid[None, :]
    start = piece[s0] + t0 * (piece[s0 + 1] - piece[s0])
    end = piece[s1] + t1 * (piece[s1 + 1] - piece[s1])
    inner = piece[s0 + 1: s1 + 1]
    out = np.vstack([start, inner, end]) if len(inner) else np.vstack([start, end])
    keep = np.concatenate([[True], np.linalg.norm(np.diff(out, axis=0), axis=1) > 0])
    return out[keep]


def ftc_radii(g: EmbeddedGraph, d: CornerDecomposition, epsilon: float) -> RadiiChain:
    """Radii r1..r4 and the closeness bound delta for the ball-and-tube
    neighborhood of ``g``."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    subs = d.subarcs
    pieces = [s.points for s in subs]
    dist = _pairwise_piece_distance(pieces)
    n = len(subs)
    r1 = math.inf
    for i in range(n):
        for j in range(i + 1, n):
            if {subs[i].head, subs[i].tail} & {subs[j].head, subs[j].tail}:
                continue
            r1 = min(r1, dist[i, j])
    keys = list(d.points)
    pts = np.array([d.points[k] for k in keys])
    if len(pts) > 1:
        pd = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
        pd[np.diag_indices(len(pts))] = np.inf
        r1 = min(r1, pd.min())
    # a cut point must also stay clear of every piece not incident to it
    for key, x in zip(keys, pts):
        for s in subs:
            if key in (s.head, s.tail):
                continue
            dd, _ = point_segment_distances(x[None, :], s.points[:-1], s.points[1:])
            r1 = min(r1, float(dd.min()))
    if not r1 > 0 or not math.isfinite(r1):
        raise GraphError("graph is not embedded (r1 = 0)" if r1 == 0 else "cannot size balls for this graph")
    r2 = min(r1 / 2, epsilon / 2)
    betas = [clip_to_balls(s.points, r2, r2, d.points[s.head], d.points[s.tail]) for s in subs]
    bd = _pairwise_piece_distance(betas)
    bd[np.diag_indices(n)] = np.inf
    r3_measured = float(bd.min()) if n > 1 else 2 * r2
    r3 = min(r3_measured, 2 * r2)
    if r3 >= 2 * r2:
        # keep r4 < r2/3 strictly
        r3 = 2 * r2 * (1 - 1e-9)
    if not r3 > 0:
        raise GraphError("tube arcs touch (r3 = 0)")
    r1, r2, r3 = float(r1), float(r2), float(r3)
    r4 = r3 / 6
    return RadiiChain(r1, r2, r3, r4, r4 / 3, epsilon, float(r3_measured))


# ---------------------------------------------------------------------------
# foliated neighborhood

@dataclass(frozen=True)
class Leaves:
    """The coaxal family of spheres foliating space outside two equal balls.

    The family is the pencil spanned by the two ball spheres: Apollonian
    spheres |q - A| / |q - B| = k about the limit points A, B on the axis.
    Leaf ``u`` in [0, 1] has signed curvature ``(1 - 2u) / r``, so u = 0 is
    the first ball's sphere, u = 1/2 the bisecting plane and u = 1 the
    other ball's sphere; every leaf has radius at least r.
    """

    origin: np.ndarray
    axis: np.ndarray
    length: float
    radius: float

    @property
    def _mid(self):
        return 0.5 * self.length

    @property
    def _a(self):
        # half the distance between the limit points
        return math.sqrt(max(self._mid ** 2 - self.radius ** 2, 1e-300))

    def _coords(self, q):
        rel = np.atleast_2d(q) - self.origin
        x = rel @ self.axis
        rho = rel - x[:, None] * self.axis
        return x, rho

    def kappa(self, u):
        return (1 - 2 * np.asarray(u, dtype=float)) / self.radius

    def _kappa_of(self, q):
        """Signed curvature of the leaf through each point."""
        x, rho = self._coords(q)
        r2 = np.sum(rho * rho, axis=1)
        da = (x - (self._mid - self._a)) ** 2 + r2
        db = (x - (self._mid + self._a)) ** 2 + r2
        with np.errstate(divide="ignore", invalid="ignore"):
            k = np.sqrt(da / db)
            kap = (1 - k * k) / (2 * self._a * k)
        return np.where(da == 0, np.inf, np.where(db == 0, -np.inf, kap))

    def center(self, u):
        """Axis coordinate of the center of leaf u (inf for the plane)."""
        k = self.kappa(u)
        with np.errstate(divide="ignore"):
            R = 1 / np.abs(k)
        return self._mid - np.sign(k) * np.sqrt(R * R + self._a ** 2)

    def x0(self, u):
        """Where leaf u crosses the axis between the balls."""
        k = self.kappa(u)
        flat = np.abs(k) < 1e-300
        with np.errstate(divide="ignore", invalid="ignore"):
            val = self.center(u) + 1 / k
        return np.where(flat, self._mid, val)

    def residual(self, q, u):
        """Positive exactly when the leaf through q lies beyond leaf u."""
        return self.kappa(u) - self._kappa_of(q)

    def index(self, q):
        """Leaf parameter through each point, clipped to [0, 1]."""
        return np.clip(0.5 * (1 - self.radius * self._kappa_of(q)), 0.0, 1.0)

    def normal(self, q, u=None):
        """Unit normal of the leaf through each point, oriented along the axis."""
        q = np.atleast_2d(q)
        A = self.origin + (self._mid - self._a) * self.axis
        B = self.origin + (self._mid + self._a) * self.axis
        va, vb = q - A, q - B
        with np.errstate(divide="ignore", invalid="ignore"):
            n = va / np.sum(va * va, axis=1)[:, None] - vb / np.sum(vb * vb, axis=1)[:, None]
            n = n / np.linalg.norm(n, axis=1)[:, None]
        # the limit points sit inside the balls; give them the axis direction
        bad = ~np.all(np.isfinite(n), axis=1)
        n[bad] = self.axis
        return n

    def project(self, q, u):
        """Closest point on leaf ``u`` (radial projection for spheres)."""
        q = np.atleast_2d(q)
        u = np.broadcast_to(np.asarray(u, dtype=float), (len(q),))
        k = self.kappa(u)
        x, _ = self._coords(q)
        out = np.empty_like(q)
        flat = np.abs(k) < 1e-12
        if np.any(flat):
            out[flat] = q[flat] - (x[flat] - self._mid)[:, None] * self.axis
        if np.any(~flat):
            c = self.origin + self.center(u[~flat])[:, None] * self.axis
            v = q[~flat] - c
            out[~flat] = c + v / np.linalg.norm(v, axis=1)[:, None] / np.abs(k[~flat])[:, None]
        return out


def solve_on_leaves(leaves, poly, fv, targets, iters=60):
    """Points of a polyline crossing the leaves ``targets``; ``fv`` holds the
    (increasing) leaf index at the polyline vertices.

    Leaf u is the sphere |q - A| = k |q - B| about the limit points, so each
    crossing is a root of a quadratic along its segment; rows without a
    clean root fall back to bisection.
    """
    poly = np.asarray(poly, dtype=float)
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    seg = np.clip(np.searchsorted(fv, targets, side="left") - 1, 0, len(poly) - 2)
    a, b = poly[seg], poly[seg + 1]
    d = b - a
    A = leaves.origin + (leaves._mid - leaves._a) * leaves.axis
    B = leaves.origin + (leaves._mid + leaves._a) * leaves.axis
    ak = leaves._a * leaves.kappa(targets)
    k2 = (np.sqrt(ak * ak + 1) - ak) ** 2
    fa, fb = a - A, a - B
    qa = (1 - k2) * np.sum(d * d, axis=1)
    qb = 2 * (np.sum(d * fa, axis=1) - k2 * np.sum(d * fb, axis=1))
    qc = np.sum(fa * fa, axis=1) - k2 * np.sum(fb * fb, axis=1)
    disc = qb * qb - 4 * qa * qc
    with np.errstate(divide="ignore", invalid="ignore"):
        q = -0.5 * (qb + np.copysign(np.sqrt(np.maximum(disc, 0.0)), qb))
        r1, r2 = q / qa, qc / q
    eps = 1e-9
    ok1 = np.isfinite(r1) & (r1 >= -eps) & (r1 <= 1 + eps)
    ok2 = np.isfinite(r2) & (r2 >= -eps) & (r2 <= 1 + eps)
    t = np.clip(np.where(ok2, r2, r1), 0.0, 1.0)
    bad = (disc < 0) | ~(ok1 | ok2)
    if np.any(bad):
        lo, hi = np.zeros(bad.sum()), np.ones(bad.sum())
        ab, db, tb = a[bad], d[bad], targets[bad]
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            past = leaves.residual(ab + mid[:, None] * db, tb) > 0
            lo = np.where(past, lo, mid)
            hi = np.where(past, mid, hi)
        t[bad] = 0.5 * (lo + hi)
    t = np.where(targets == fv[seg], 0.0, np.where(targets == fv[seg + 1], 1.0, t))
    return a + t[:, None] * d


@dataclass(frozen=True)
class Tube:
    subarc: int
    head: str
    tail: str
    leaves: Leaves
    beta: np.ndarray
    beta_u: np.ndarray  # leaf index at dense beta samples
    beta_samples: np.ndarray
    disk_radius: float

    def core_point(self, u):
        """Point of beta on leaf ``u`` (bisection on the bracketing segment)."""
        if len(self.beta_samples) < 2:
            return np.repeat(self.beta_samples[:1], len(np.atleast_1d(u)), axis=0)
        return solve_on_leaves(self.leaves, self.beta_samples, self.beta_u, u)

    def core_tangent(self, u):
        d = np.diff(self.beta_samples, axis=0)
        idx = np.clip(np.searchsorted(self.beta_u, np.atleast_1d(u), side="right") - 1, 0, len(d) - 1)
        v = d[idx]
        return v / np.linalg.norm(v, axis=1)[:, None]


@dataclass(frozen=True)
class NeighborhoodModel:
    balls: list  # (key, center, radius)
    tubes: list
    chain: RadiiChain
    max_transverse_angle: float
    max_disk_drift: float
    max_axis_angle: float

    def ball(self, key):
        for k, c, r in self.balls:
            if k == key:
                return c, r
        raise KeyError(key)


def _densify(poly, per_segment: int):
    if len(poly) == 1:
        return poly.copy()
    t = np.linspace(0, 1, per_segment + 1)[:-1]
    parts = [a + t[:, None] * (b - a) for a, b in zip(poly[:-1], poly[1:])]
    return np.vstack(parts + [poly[-1:]])


def _monotone_in_ball(piece, center, radius):
    r = np.linalg.norm(piece - center, axis=1)
    inside = np.nonzero(r < radius)[0]
    if len(inside) == 0:
        return True
    stop = inside.max() + 2
    rr = r[:stop]
    return bool(np.all(np.diff(rr) > 0))


def _tangent_basis(n):
    a = np.where(np.abs(n[:, :1]) < 0.9, np.array([[1.0, 0, 0]]), np.array([[0, 1.0, 0]]))
    e1 = np.cross(n, a)
    e1 /= np.linalg.norm(e1, axis=1)[:, None]
    return e1, np.cross(n, e1)


def build_neighborhood(g: EmbeddedGraph, d: CornerDecomposition, chain: RadiiChain,
                       samples_per_segment: int = 8, disk_samples: int = 16) -> NeighborhoodModel:
    """Balls of radius r2 at the cut points and foliated tubes of radius r4
    around the clipped pieces, with every geometric claim checked."""
    r2, r4 = chain.r2, chain.r4
    balls = [(k, np.asarray(p), r2) for k, p in d.points.items()]
    centers = np.array([b[1] for b in balls])
    if len(centers) > 1:
        cd = np.linalg.norm(centers[:, None] - centers[None], axis=2)
        cd[np.diag_indices(len(centers))] = np.inf
        if cd.min() < 2 * r2 * (1 - 1e-12):
            raise NeighborhoodError("balls overlap")
    tubes = []
    max_tr, max_drift, max_axis = 0.0, 0.0, 0.0
    for k, s in enumerate(d.subarcs):
        ph, pt = d.points[s.head], d.points[s.tail]
        if not _monotone_in_ball(s.points, ph, r2) or not _monotone_in_ball(s.points[::-1], pt, r2):
            raise NeighborhoodError(f"piece {k} does not leave its balls monotonically")
        axis = pt - ph
        length = float(np.linalg.norm(axis))
        leaves = Leaves(ph, axis / length, length, r2)
        beta = clip_to_balls(s.points, r2, r2, ph, pt)
        dense = _densify(beta, samples_per_segment)
        if len(dense) < 2:
            raise DegenerateTubeError(f"tube {k} is degenerate: its end balls touch")
        u = leaves.index(dense)
        if len(dense) > 1 and not np.all(np.diff(u) > 0):
            raise NeighborhoodError(f"piece {k} is not monotone across the leaves")
        if len(dense) > 1:
            mids = 0.5 * (dense[:-1] + dense[1:])
            tang = np.diff(dense, axis=0)
            tang /= np.linalg.norm(tang, axis=1)[:, None]
            ang = _angle_between(tang, leaves.normal(mids))
            max_tr = max(max_tr, float(ang.max()))
            if ang.max() > math.pi / 4 + ANGLE_TOL:
                raise NeighborhoodError(f"piece {k} is not within pi/4 of the leaf normals")
        # disks: points of the leaf through q at chord distance r4 from q
        nq = leaves.normal(dense, u)
        e1, e2 = _tangent_basis(nq)
        kap = leaves.kappa(u)
        phis = np.linspace(0, 2 * np.pi, disk_samples, endpoint=False)
        for phi in phis:
            w = np.cos(phi) * e1 + np.sin(phi) * e2
            # on a sphere of curvature k, the point at chord r4 along w
            half = np.arcsin(np.clip(r4 * np.abs(kap) / 2, 0, 1))
            y = dense + r4 * (np.cos(half)[:, None] * w - (np.sign(kap) * np.sin(half))[:, None] * nq)
            y = leaves.project(y, u)
            ny = leaves.normal(y, u)
            drift = _angle_between(ny, nq)
            max_drift = max(max_drift, float(drift.max()))
            max_axis = max(max_axis, float(_angle_between(ny, leaves.axis[None, :]).max()))
        if max_drift > DRIFT_BOUND + 1e-9:
            raise NeighborhoodError(f"disk normals of tube {k} drift beyond 2 arcsin(1/6)")
        if max_axis > math.pi / 4 + ANGLE_TOL:
            raise NeighborhoodError(f"leaf normals of tube {k} leave the pi/4 cone about the axis")
        # tube must stay clear of balls it does not end in
        for key, c, _ in balls:
            if key in (s.head, s.tail):
                continue
            dd = np.linalg.norm(dense - c, axis=1).min()
            if dd < r2 + r4:
                raise NeighborhoodError(f"tube {k} meets the ball at {key}")
        tubes.append(Tube(k, s.head, s.tail, leaves, beta, u, dense, r4))
    return NeighborhoodModel(balls, tubes, chain, max_tr, max_drift, max_axis)


def neighborhood_for(g: EmbeddedGraph, epsilon: float, extra=()):
    """Decomposition, chain and neighborhood, halving the curvature budget
    once if the first attempt fails its checks.

    When r1 binds (r2 = r1/2), balls at cut points exactly r1 apart touch
    and the tube between them is empty or a sliver; each budget is then
    retried with a working epsilon of 0.9 r1, which becomes the motion bound.
    """
    try:
        return _neighborhood_attempt(g, DEFAULT_BUDGET, epsilon, extra)
    except NeighborhoodError:
        return _neighborhood_attempt(g, CORNER_ANGLE / 2 - 1e-9, epsilon, extra)


def _neighborhood_attempt(g, budget, epsilon, extra):
    d = corner_decomposition(g, budget, extra)
    chain = ftc_radii(g, d, epsilon)
    try:
        return d, chain, build_neighborhood(g, d, chain)
    except NeighborhoodError:
        if chain.r2 < chain.r1 / 2:
            raise
        chain = ftc_radii(g, d, 0.9 * chain.r1)
        return d, chain, build_neighborhood(g, d, chain)


# ---------------------------------------------------------------------------
# checks on the second graph

def radial_map(points, center, radius, p_prime, t: float = 1.0, target=None):
    """The stage-I ball map at time t: linear on each segment from p' to the
    boundary, carrying p' toward ``target`` (the center by default) and
    fixing the sphere."""
    x = np.atleast_2d(np.asarray(points, dtype=float))
    center = np.asarray(center, dtype=float)
    p_prime = np.asarray(p_prime, dtype=float)
    target = center if target is None else np.asarray(target, dtype=float)
    out = x.copy()
    if np.linalg.norm(p_prime - center) >= radius or np.linalg.norm(target - center) >= radius:
        raise ValueError("p' and its target must lie inside the ball")
    rel = x - p_prime
    dist = np.linalg.norm(rel, axis=1)
    inside = (np.linalg.norm(x - center, axis=1) < radius) & (dist > 0)
    c = p_prime + t * (target - p_prime)
    if np.any(inside):
        v = rel[inside] / dist[inside, None]
        f = p_prime - center
        b = v @ f
        s = -b + np.sqrt(b * b - (f @ f - radius ** 2))
        q = p_prime + s[:, None] * v
        lam = dist[inside] / s
        out[inside] = c + lam[:, None] * (q - c)
    at_p = dist == 0
    out[at_p] = c
    return out


@dataclass(frozen=True)
class Pieces2:
    """The second graph cut at the points corresponding to the cut points."""

    pieces: list  # per subarc, polyline of g2
    points: dict  # key -> p'_j


def split_second(g2: EmbeddedGraph, d: CornerDecomposition, c: Correspondence) -> Pieces2:
    pieces = []
    pts = {}
    for s in d.subarcs:
        amap = c.maps[s.arc_id]
        arc2 = g2.arcs[amap.target].points
        frac2 = fractions(arc2)
        v0, v1 = float(amap.forward(s.u0)), float(amap.forward(s.u1))
        inner = arc2[(frac2 > v0) & (frac2 < v1)]
        a = point_at(arc2, [v0], frac2)[0]
        b = point_at(arc2, [v1], frac2)[0]
        if s.u0 == 0.0:
            a = arc2[0]
        if s.u1 == 1.0:
            b = arc2[-1]
        poly = np.vstack([a, inner, b])
        keep = np.concatenate([[True], np.linalg.norm(np.diff(poly, axis=0), axis=1) > 0])
        pieces.append(poly[keep])
        pts.setdefault(s.head, a)
        pts.setdefault(s.tail, b)
    return Pieces2(pieces, pts)


def check_second_graph(d: CornerDecomposition, model: NeighborhoodModel, p2: Pieces2, delta: float,
                       per_segment: int = 8):
    """Check the claims the isotopy relies on; returns a failure reason or ''."""
    r2 = model.chain.r2
    for key, center, _ in model.balls:
        pp = p2.points[key]
        if np.linalg.norm(pp - center) >= r2:
            return "not-in-neighborhood"
    # stage I leaves radial strands in every ball
    for k, s in enumerate(d.subarcs):
        dense = _densify(p2.pieces[k], per_segment)
        for key, strand in ((s.head, dense), (s.tail, dense[::-1])):
            center, _ = model.ball(key)
            moved = radial_map(strand, center, r2, p2.points[key])
            if not _monotone_in_ball(moved, center, r2):
                return "ball-not-radial"
        for key, center, _ in model.balls:
            if key in (s.head, s.tail):
                continue
            if np.linalg.norm(dense - center, axis=1).min() < r2:
                return "not-in-neighborhood"
    # outside the balls, re-pair along leaves: within 2 delta and pi/4
    for k, s in enumerate(d.subarcs):
        tube = model.tubes[k]
        dense = _densify(p2.pieces[k], per_segment)
        ch, _ = model.ball(s.head)
        ct, _ = model.ball(s.tail)
        out = (np.linalg.norm(dense - ch, axis=1) >= r2) & (np.linalg.norm(dense - ct, axis=1) >= r2)
        if not np.any(out):
            continue
        q = dense[out]
        u = tube.leaves.index(q)
        q0 = tube.core_point(u)
        gap = np.linalg.norm(q - q0, axis=1)
        if gap.max() >= min(2 * delta, tube.disk_radius) and gap.max() > 0:
            if gap.max() >= tube.disk_radius:
                return "not-in-neighborhood"
            return "not-in-neighborhood"
        idx = np.nonzero(out)[0]
        if len(idx) > 1:
            if np.any(np.diff(idx) == 1) and not np.all(np.diff(u)[np.diff(idx) == 1] > 0):
                return "not-transverse"
            seg = np.diff(dense, axis=0)
            seg /= np.linalg.norm(seg, axis=1)[:, None]
            both = out[:-1] & out[1:]
            if np.any(both):
                mids = 0.5 * (dense[:-1] + dense[1:])[both]
                um = tube.leaves.index(mids)
                a_core = _angle_between(seg[both], tube.core_tangent(um))
                a_norm = _angle_between(seg[both], tube.leaves.normal(mids, um))
                if a_core.max() > math.pi / 4 + ANGLE_TOL or a_norm.max() >= math.pi / 2:
                    return "not-transverse"
    return ""


def certify_ftc(g: EmbeddedGraph, g2: EmbeddedGraph, epsilon: float, c: Correspondence | None = None,
                mode: str = "refined", neighborhood=None) -> IsotopyCertificate:
    """Certify ``g2`` against an embedded polygonal graph ``g``.

    Issued when the measured closeness is within (chain.delta, pi/8) and the
    second graph passes the neighborhood checks; the motion bound is the
    chain's epsilon.  ``neighborhood`` reuses a ``neighborhood_for(g,
    epsilon)`` result when many graphs are checked against one ``g``.
    """
    try:
        d, chain, model = neighborhood if neighborhood is not None else neighborhood_for(g, epsilon)
    except NeighborhoodError as exc:
        return IsotopyCertificate("ftc", False, "no-neighborhood: %s" % exc, 0.0, {}, None, None, None, None)
    try:
        c = _correspondence(g, g2, c, mode, lambda dd, t: (max(dd / chain.delta, t / CORNER_ANGLE), dd))
    except GraphError:
        return IsotopyCertificate("ftc", False, "not-isomorphic", 0.0, _chain_consts(chain), None, None, d, model)
    rep = measure_closeness(g, g2, c)
    consts = _chain_consts(chain)
    consts.update(delta_measured=rep.delta, theta_measured=rep.theta, budget=d.budget)
    common = dict(closeness=rep, correspondence=c, decomposition=d, neighborhood=model)
    if rep.delta > chain.delta:
        return IsotopyCertificate("ftc", False, "delta-too-large", 0.0, consts, **common)
    if rep.theta > CORNER_ANGLE:
        return IsotopyCertificate("ftc", False, "theta-too-large", 0.0, consts, **common)
    reason = check_second_graph(d, model, split_second(g2, d, c), chain.delta)
    if reason:
        return IsotopyCertificate("ftc", False, reason, 0.0, consts, **common)
    return IsotopyCertificate("ftc", True, "", chain.epsilon, consts, **common)


def _chain_consts(chain: RadiiChain):
    return {"r1": chain.r1, "r2": chain.r2, "r3": chain.r3, "r4": chain.r4,
            "delta": chain.delta, "epsilon": chain.epsilon}


# ---------------------------------------------------------------------------
# local flatness

@dataclass(frozen=True)
class FlatWitness:
    center: np.ndarray
    radius: float
    strands: list
    chain: RadiiChain

    @property
    def k(self) -> int:
        return len(self.strands)


def _insert_vertex(g: EmbeddedGraph, p0):
    """Graph with ``p0`` made a polyline vertex; returns (graph, extra cut)."""
    best = None
    for aid, arc in g.arcs.items():
        dist, t = point_segment_distances(np.asarray(p0)[None, :], arc.points[:-1], arc.points[1:])
        s = int(np.argmin(dist))
        if best is None or dist[s] < best[0]:
            best = (dist[s], aid, s, t[s])
    dist, aid, s, t = best
    if dist > 1e-9 * max(g.diameter(), 1.0):
        raise GraphError("p0 does not lie on the graph")
    arc = g.arcs[aid]
    pts = arc.points
    for idx in (s, s + 1):
        if np.linalg.norm(pts[idx] - p0) <= 1e-12 * max(g.diameter(), 1.0):
            if idx in (0, len(pts) - 1):
                return g, (), _vertex_key(arc.head if idx == 0 else arc.tail)
            return g, ((aid, idx),), f"c:{aid}:{idx}"
    new = np.insert(np.array(pts), s + 1, p0, axis=0)
    arcs = dict(g.arcs)
    arcs[aid] = Arc(new, arc.head, arc.tail, arc.closed)
    return EmbeddedGraph(dict(g.vertices), arcs), ((aid, s + 1),), f"c:{aid}:{s + 1}"


def locally_flat_witness(g: EmbeddedGraph, p0, epsilon: float | None = None) -> FlatWitness:
    """Ball around ``p0`` meeting the graph in k radially monotone strands."""
    g1, extra, key = _insert_vertex(g, np.asarray(p0, dtype=float))
    if epsilon is None:
        epsilon = g1.diameter()
    d, chain, model = neighborhood_for(g1, epsilon, extra)
    center = d.points[key]
    strands = []
    for s in d.subarcs:
        for end, piece in ((s.head, s.points), (s.tail, s.points[::-1])):
            if end != key:
                continue
            e = _ball_exit(piece, center, chain.r2)
            inner = piece[: e[0] + 1]
            exit_pt = piece[e[0]] + e[1] * (piece[e[0] + 1] - piece[e[0]])
            strand = np.vstack([inner, exit_pt])
            if not _monotone_in_ball(strand, center, chain.r2 * (1 + 1e-12)):
                raise NeighborhoodError("strand is not radially monotone")
            strands.append(strand)
    return FlatWitness(center, chain.r2, strands, chain)


# ---------------------------------------------------------------------------
# mesh export

def neighborhood_mesh(model: NeighborhoodModel, n_u: int = 12, n_v: int = 16):
    """Triangle mesh of the balls (UV spheres) and tubes (lofted disk rims)."""
    verts, faces = [], []

    def add_grid(grid, wrap_v=True):
        base = sum(len(v) for v in verts)
        rows, cols = grid.shape[:2]
        verts.append(grid.reshape(-1, 3))
        for i in range(rows - 1):
            for j in range(cols if wrap_v else cols - 1):
                a = base + i * cols + j
                b = base + i * cols + (j + 1) % cols
                c = a + cols
                e = b + cols
                faces.append((a, b, e))
                faces.append((a, e, c))

    th = np.linspace(0, np.pi, n_u)
    ph = np.linspace(0, 2 * np.pi, n_v, endpoint=False)
    for _, center, r in model.balls:
        grid = np.stack([np.outer(np.sin(th), np.cos(ph)), np.outer(np.sin(th), np.sin(ph)),
                         np.outer(np.cos(th), np.ones_like(ph))], axis=-1)
        add_grid(center + r * grid)
    for tube in model.tubes:
        if len(tube.beta_samples) < 2:
            continue
        n = tube.leaves.normal(tube.beta_samples, tube.beta_u)
        e1, e2 = _tangent_basis(n)
        rim = tube.beta_samples[:, None, :] + tube.disk_radius * (
            np.cos(ph)[None, :, None] * e1[:, None, :] + np.sin(ph)[None, :, None] * e2[:, None, :])
        add_grid(rim)
    return np.vstack(verts), np.array(faces, dtype=int)
