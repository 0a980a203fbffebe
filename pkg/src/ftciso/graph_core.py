"""Embedded graphs made of 3D polyline arcs, plus the elementary measurements
(length, one-sided tangents, turning, segment distances) everything else uses.

Arcs store their full point list including both endpoints.  A closed loop is
an arc whose head and tail are the same vertex; its point list repeats the base
point at the end and the ``closed`` flag makes the turning at the base count.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

ANGLE_TOL = 1e-9


class GraphError(ValueError):
    """Raised for malformed arcs or graphs."""


@dataclass(frozen=True)
class Arc:
    points: np.ndarray
    head: str
    tail: str
    closed: bool = False

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 2:
            raise GraphError("an arc needs at least two 3D points")
        if not np.all(np.isfinite(pts)):
            raise GraphError("arc coordinates must be finite")
        if np.any(np.linalg.norm(np.diff(pts, axis=0), axis=1) == 0.0):
            raise GraphError("consecutive arc points must be distinct")
        if self.closed and (self.head != self.tail or not np.array_equal(pts[0], pts[-1])):
            raise GraphError("a closed arc must start and end at its base vertex")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n_segments(self) -> int:
        return len(self.points) - 1

    def reversed(self) -> "Arc":
        return Arc(self.points[::-1].copy(), self.tail, self.head, self.closed)

    def transformed(self, fn) -> "Arc":
        return Arc(fn(self.points), self.head, self.tail, self.closed)


@dataclass
class EmbeddedGraph:
    """A multigraph with every edge realized as a polyline arc.

    ``vertices`` maps vertex id to a point, ``arcs`` maps arc id to an
    :class:`Arc`.  Both keep insertion order, which is the serialization order.
    """

    vertices: dict = field(default_factory=dict)
    arcs: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vertices = {str(k): np.asarray(v, dtype=float) for k, v in self.vertices.items()}
        for aid, arc in self.arcs.items():
            for end, vid in ((arc.points[0], arc.head), (arc.points[-1], arc.tail)):
                if vid not in self.vertices:
                    raise GraphError(f"arc {aid} references missing vertex {vid}")
                if not np.allclose(end, self.vertices[vid], rtol=0.0, atol=1e-12):
                    raise GraphError(f"arc {aid} endpoint does not sit on vertex {vid}")

    @classmethod
    def from_loops(cls, loops) -> "EmbeddedGraph":
        """Build a link: each (n, 3) point array becomes one closed arc.

        The first point is the base vertex; the closing point may be omitted.
        """
        vertices, arcs = {}, {}
        for i, loop in enumerate(loops):
            pts = np.asarray(loop, dtype=float)
            if not np.array_equal(pts[0], pts[-1]):
                pts = np.vstack([pts, pts[:1]])
            vid = f"v{i}"
            vertices[vid] = pts[0]
            arcs[f"k{i}"] = Arc(pts, vid, vid, closed=True)
        return cls(vertices, arcs)

    @classmethod
    def from_arc(cls, points, closed: bool = False) -> "EmbeddedGraph":
        if closed:
            return cls.from_loops([points])
        pts = np.asarray(points, dtype=float)
        return cls({"v0": pts[0], "v1": pts[-1]}, {"a0": Arc(pts, "v0", "v1")})

    def transformed(self, fn) -> "EmbeddedGraph":
        """Apply a point map ``fn((n,3)) -> (n,3)`` to every vertex and arc."""
        verts = {k: fn(v[None, :])[0] for k, v in self.vertices.items()}
        arcs = {}
        for aid, arc in self.arcs.items():
            pts = fn(arc.points)
            pts[0] = verts[arc.head]
            pts[-1] = verts[arc.tail]
            arcs[aid] = Arc(pts, arc.head, arc.tail, arc.closed)
        return EmbeddedGraph(verts, arcs)

    def degree(self, vid: str) -> int:
        return sum((a.head == vid) + (a.tail == vid) for a in self.arcs.values())

    def all_points(self) -> np.ndarray:
        return np.vstack([a.points for a in self.arcs.values()])

    def diameter(self) -> float:
        pts = self.all_points()
        return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))


# ---------------------------------------------------------------------------
# elementary measurements

def _as_points(arc) -> np.ndarray:
    return arc.points if isinstance(arc, Arc) else np.asarray(arc, dtype=float)


def segment_lengths(points) -> np.ndarray:
    return np.linalg.norm(np.diff(points, axis=0), axis=1)


def cumulative_length(points) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(segment_lengths(points))])


def arc_length(arc) -> float:
    """Total length of a polyline (sum of segment lengths)."""
    return float(segment_lengths(_as_points(arc)).sum())


def segment_directions(points) -> np.ndarray:
    d = np.diff(points, axis=0)
    n = np.linalg.norm(d, axis=1)
    if np.any(n == 0.0):
        raise GraphError("zero-length segment has no direction")
    return d / n[:, None]


def one_sided_tangents(arc, index: int):
    """Unit directions of the segments entering and leaving vertex ``index``."""
    pts = _as_points(arc)
    if not 0 < index < len(pts) - 1:
        raise GraphError("one-sided tangents need an interior vertex index")
    d_in = pts[index] - pts[index - 1]
    d_out = pts[index + 1] - pts[index]
    n_in, n_out = np.linalg.norm(d_in), np.linalg.norm(d_out)
    if n_in == 0.0 or n_out == 0.0:
        raise GraphError("degenerate zero-length segment at vertex %d" % index)
    return d_in / n_in, d_out / n_out


def turning_angle(incoming, outgoing) -> float:
    """Angle in [0, pi] between two unit directions."""
    return float(_angle_between(np.asarray(incoming), np.asarray(outgoing)))


def _angle_between(u, v):
    # atan2 form stays accurate near 0 and pi, where arccos of a dot is not
    cross = np.linalg.norm(np.cross(u, v), axis=-1)
    dot = np.sum(u * v, axis=-1)
    return np.arctan2(cross, dot)


def line_angle(u, v):
    """Angle in [0, pi/2] between the lines spanned by u and v."""
    a = _angle_between(u, v)
    return np.minimum(a, np.pi - a)


def turning_angles(points, closed: bool = False) -> np.ndarray:
    """Turning angles at interior vertices, in order.

    For a closed polyline the turning at the base point is appended as the
    final entry; the closing segment is added when the last point does not
    repeat the first.
    """
    points = np.asarray(points, dtype=float)
    if closed and not np.array_equal(points[0], points[-1]):
        points = np.vstack([points, points[:1]])
    dirs = segment_directions(points)
    turns = _angle_between(dirs[:-1], dirs[1:])
    if closed:
        turns = np.append(turns, _angle_between(dirs[-1], dirs[0]))
    return turns


def total_curvature(arc, closed: bool | None = None) -> float:
    """Sum of turning angles at the interior vertices of an arc.

    Endpoint turning is excluded unless the arc is a closed loop.
    """
    if closed is None:
        closed = isinstance(arc, Arc) and arc.closed
    pts = _as_points(arc)
    if len(pts) < 3:
        return 0.0
    return float(turning_angles(pts, closed).sum())


def segment_distances(p0, p1, q0, q1):
    """Exact minimum distances between segments [p0,p1] and [q0,q1].

    Arrays broadcast against each other; the last axis holds coordinates.
    Returns ``(dist, s, t)`` with the closest parameters on each segment.
    """
    p0, p1, q0, q1 = (np.asarray(a, dtype=float) for a in (p0, p1, q0, q1))
    d1 = p1 - p0
    d2 = q1 - q0
    r = p0 - q0
    a = np.sum(d1 * d1, axis=-1)
    e = np.sum(d2 * d2, axis=-1)
    f = np.sum(d2 * r, axis=-1)
    c = np.sum(d1 * r, axis=-1)
    b = np.sum(d1 * d2, axis=-1)
    denom = a * e - b * b
    # degenerate segments are points: guard the divisions
    a_ = np.where(a > 0, a, 1.0)
    e_ = np.where(e > 0, e, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(denom > 1e-14 * a * e, np.clip((b * f - c * e) / denom, 0.0, 1.0), 0.0)
        t = np.where(e > 0, (b * s + f) / e_, 0.0)
        s = np.where(t < 0.0, np.clip(-c / a_, 0.0, 1.0), np.where(t > 1.0, np.clip((b - c) / a_, 0.0, 1.0), s))
        s = np.where(a > 0, s, 0.0)
        t = np.where(e > 0, np.clip((b * s + f) / e_, 0.0, 1.0), 0.0)
        s = np.where(a > 0, np.clip((b * t - c) / a_, 0.0, 1.0), 0.0)
    diff = (p0 + s[..., None] * d1) - (q0 + t[..., None] * d2)
    return np.linalg.norm(diff, axis=-1), s, t


def point_segment_distances(x, p0, p1):
    x, p0, p1 = (np.asarray(a, dtype=float) for a in (x, p0, p1))
    d = p1 - p0
    t = np.clip(np.sum((x - p0) * d, axis=-1) / np.sum(d * d, axis=-1), 0.0, 1.0)
    return np.linalg.norm(x - (p0 + t[..., None] * d), axis=-1), t


def polyline_pair_distances(a, b) -> np.ndarray:
    """Matrix of segment-to-segment distances between two polylines."""
    a, b = _as_points(a), _as_points(b)
    d, _, _ = segment_distances(a[:-1, None, :], a[1:, None, :], b[None, :-1, :], b[None, 1:, :])
    return d


def arc_pair_distance(a, b) -> float:
    """Minimum Euclidean distance between two polyline arcs."""
    return float(polyline_pair_distances(a, b).min())


def polyline_gap(a, b) -> float:
    """Minimum distance between two polylines.

    The nearest vertex pair bounds the gap from above, so only segment pairs
    whose midpoints lie within that bound plus both half-lengths can win.
    """
    a, b = _as_points(a), _as_points(b)
    ub = float(cKDTree(b).query(a)[0].min())
    ma, mb = 0.5 * (a[:-1] + a[1:]), 0.5 * (b[:-1] + b[1:])
    reach = ub + 0.5 * (segment_lengths(a).max() + segment_lengths(b).max())
    pairs = cKDTree(ma).sparse_distance_matrix(cKDTree(mb), reach, output_type="ndarray")
    if len(pairs) == 0:
        return ub
    i, j = pairs["i"], pairs["j"]
    d, _, _ = segment_distances(a[i], a[i + 1], b[j], b[j + 1])
    return float(min(d.min(), ub))


def point_polyline_distance(x, points) -> float:
    pts = _as_points(points)
    d, _ = point_segment_distances(np.asarray(x)[None, :], pts[:-1], pts[1:])
    return float(d.min())


def corner_set(graph: EmbeddedGraph, threshold: float, tol: float = ANGLE_TOL):
    """Interior polyline vertices whose turning angle is at least ``threshold``.

    Returns a list of ``(arc_id, vertex_index, turning_angle)``.  For closed
    arcs the base point is reported as index 0 when it qualifies.
    """
    out = []
    for aid, arc in graph.arcs.items():
        if len(arc.points) < 3 and not arc.closed:
            continue
        turns = turning_angles(arc.points, arc.closed)
        for k, ang in enumerate(turns):
            if ang >= threshold - tol:
                idx = k + 1 if k < len(arc.points) - 2 else 0
                out.append((aid, idx, float(ang)))
    return out


# ---------------------------------------------------------------------------
# embeddedness

def segment_soup(polylines):
    """Flatten polylines to segment arrays plus a key per segment.

    ``keys[i] = (polyline index, segment index)``.
    """
    starts, ends, keys = [], [], []
    for li, pts in enumerate(polylines):
        pts = np.asarray(pts, dtype=float)
        starts.append(pts[:-1])
        ends.append(pts[1:])
        keys.extend((li, s) for s in range(len(pts) - 1))
    return np.vstack(starts), np.vstack(ends), np.array(keys, dtype=int).reshape(-1, 2)


def min_nonadjacent_distance(polylines, junctions=None, search_radius=None) -> float:
    """Smallest distance between segments that are not allowed to touch.

    Segments that are consecutive on one polyline, or that share a declared
    junction point (graph vertex), are excused from the distance test but are
    still checked for collinear overlap.  ``junctions`` is a set of
    ``(polyline, point_index)`` pairs that coincide with other junctions.
    Only pairs within ``search_radius`` are examined when it is given;
    ``inf`` is then returned if nothing is that close.
    """
    p0, p1, keys = segment_soup(polylines)
    lengths = np.linalg.norm(p1 - p0, axis=1)
    mids = 0.5 * (p0 + p1)
    reach = lengths.max() + (0.0 if search_radius is None else search_radius)
    if search_radius is None:
        reach = float(np.linalg.norm(mids.max(axis=0) - mids.min(axis=0))) + lengths.max() + 1.0
    pairs = cKDTree(mids).query_pairs(reach, output_type="ndarray")
    if len(pairs) == 0:
        return float("inf")
    i, j = pairs[:, 0], pairs[:, 1]
    dist, s, t = segment_distances(p0[i], p1[i], p0[j], p1[j])

    same = keys[i, 0] == keys[j, 0]
    gap = np.abs(keys[i, 1] - keys[j, 1])
    nseg = np.bincount(keys[:, 0])
    closed = np.array([np.array_equal(np.asarray(pl)[0], np.asarray(pl)[-1]) for pl in polylines])
    wrap = same & closed[keys[i, 0]] & (gap == nseg[keys[i, 0]] - 1) & (nseg[keys[i, 0]] > 2)
    adjacent = same & ((gap == 1) | wrap)
    shared = adjacent.copy()
    if junctions:
        # segments touching the same junction point share that endpoint
        jpts = {}
        for (li, pi) in junctions:
            jpts.setdefault(li, set()).add(pi)
        touch_i = _touches(keys[i], jpts, nseg)
        touch_j = _touches(keys[j], jpts, nseg)
        ends_i = np.stack([p0[i], p1[i]], axis=1)
        ends_j = np.stack([p0[j], p1[j]], axis=1)
        common = np.zeros(len(i), dtype=bool)
        for a in range(2):
            for b in range(2):
                common |= np.all(ends_i[:, a] == ends_j[:, b], axis=1)
        shared |= touch_i & touch_j & common
    # excused pairs: only a fold-back along the shared endpoint counts
    overlap = np.zeros(len(i), dtype=bool)
    if np.any(shared):
        k = np.nonzero(shared)[0]
        ei = np.stack([p0[i[k]], p1[i[k]]], axis=1)
        ej = np.stack([p0[j[k]], p1[j[k]]], axis=1)
        for a in range(2):
            for b in range(2):
                hit = np.all(ei[:, a] == ej[:, b], axis=1)
                u = ei[:, 1 - a] - ei[:, a]
                v = ej[:, 1 - b] - ej[:, b]
                overlap[k] |= hit & (_angle_between(u, v) < 1e-9)
    bad = np.where(shared, np.where(overlap, 0.0, np.inf), dist)
    return float(bad.min())


def _touches(keys, jpts, nseg):
    out = np.zeros(len(keys), dtype=bool)
    for li, idxs in jpts.items():
        m = keys[:, 0] == li
        seg = keys[:, 1]
        hit = np.zeros(len(keys), dtype=bool)
        for pi in idxs:
            hit |= (seg == pi) | (seg == pi - 1)
            if pi == 0:
                hit |= seg == nseg[li] - 1
        out |= m & hit
    return out


def graph_polylines(graph: EmbeddedGraph):
    """Arc point arrays plus the junction declaration for embeddedness tests."""
    polylines = [a.points for a in graph.arcs.values()]
    junctions = set()
    for li, arc in enumerate(graph.arcs.values()):
        junctions.add((li, 0))
        junctions.add((li, len(arc.points) - 1))
    return polylines, junctions


def min_self_distance(graph: EmbeddedGraph, search_radius=None) -> float:
    """Smallest distance between non-adjacent pieces of the graph.

    Without ``search_radius`` the search starts local and widens until the
    answer is certain: pairs outside the search are farther apart than it.
    """
    polylines, junctions = graph_polylines(graph)
    if search_radius is not None:
        return min_nonadjacent_distance(polylines, junctions, search_radius)
    diam = graph.diameter()
    r = 2.0 * float(np.mean([segment_lengths(p).mean() for p in polylines]))
    while True:
        d = min_nonadjacent_distance(polylines, junctions, r)
        if d <= r or r > 2 * diam:
            return d
        r *= 4.0


def is_embedded(graph: EmbeddedGraph, rel_tol: float = 1e-9) -> bool:
    """True when distinct arcs meet only at shared vertices and no arc
    crosses itself, up to ``rel_tol`` times the graph diameter."""
    return min_self_distance(graph) > rel_tol * graph.diameter()


def random_rigid_motion(rng, scale: float = 1.0):
    """A random rotation plus translation, as a point map."""
    rot = Rotation.random(random_state=rng).as_matrix()
    shift = rng.normal(size=3) * scale

    def apply(pts):
        return np.asarray(pts, dtype=float) @ rot.T + shift

    return apply
