"""Topological oracles: generic projections, linking numbers, the knot
determinant from a Goeritz matrix, and theta-graph scaffolding.

These never look at certificates; they are used to check them.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .graph_core import Arc, EmbeddedGraph, GraphError, is_embedded, polyline_gap, polyline_pair_distances

MAX_RETRIES = 64


class DiagramError(RuntimeError):
    pass


@dataclass(frozen=True)
class Crossing:
    over: tuple  # (component, segment, parameter)
    under: tuple
    sign: int
    location: tuple


@dataclass(frozen=True)
class Diagram:
    direction: np.ndarray
    strands: list  # per component, (n, 2) projected vertices (closed, no repeat)
    crossings: list
    seed: int = 0


def _loops(k):
    """Normalize input to a list of closed (n, 3) arrays without repeated end."""
    if isinstance(k, EmbeddedGraph):
        k = [a.points for a in k.arcs.values()]
    elif isinstance(k, Arc):
        k = [k.points]
    elif isinstance(k, np.ndarray) and k.ndim == 2:
        k = [k]
    out = []
    for p in k:
        p = np.asarray(p.points if isinstance(p, Arc) else p, dtype=float)
        if np.array_equal(p[0], p[-1]):
            p = p[:-1]
        out.append(p)
    return out


def _basis(d):
    d = d / np.linalg.norm(d)
    a = np.eye(3)[np.argmin(np.abs(d))]
    e1 = np.cross(d, a)
    e1 /= np.linalg.norm(e1)
    return d, e1, np.cross(d, e1)


def _cross2(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _find_crossings(loops, d, tol_rel=1e-9, min_sin=1e-6):
    """Crossings of the projection along ``d``; raises DiagramError when the
    projection is not generic."""
    d, e1, e2 = _basis(np.asarray(d, dtype=float))
    P, H, comp, seg = [], [], [], []
    for c, p in enumerate(loops):
        q = np.roll(p, -1, axis=0)
        P.append(np.stack([np.c_[p @ e1, p @ e2], np.c_[q @ e1, q @ e2]], axis=1))
        H.append(np.stack([p @ d, q @ d], axis=1))
        comp.append(np.full(len(p), c))
        seg.append(np.arange(len(p)))
    P, H = np.vstack(P), np.vstack(H)
    comp, seg = np.concatenate(comp), np.concatenate(seg)
    scale = float(np.ptp(P.reshape(-1, 2), axis=0).max()) or 1.0
    tol = tol_rel * scale
    sizes = np.bincount(comp)

    # two segments can only meet if their midpoints are within the longest length
    mid = 0.5 * (P[:, 0] + P[:, 1])
    reach = float(np.linalg.norm(P[:, 1] - P[:, 0], axis=1).max()) + 2 * tol
    pairs = cKDTree(mid).query_pairs(reach, output_type="ndarray")
    i, j = (pairs[:, 0], pairs[:, 1]) if len(pairs) else (np.zeros(0, int), np.zeros(0, int))
    lo = np.minimum(P[:, 0], P[:, 1])
    hi = np.maximum(P[:, 0], P[:, 1])
    near = np.all((lo[i] <= hi[j] + tol) & (lo[j] <= hi[i] + tol), axis=1)
    i, j = i[near], j[near]
    same = comp[i] == comp[j]
    gap = np.abs(seg[i] - seg[j])
    adjacent = same & ((gap == 1) | (gap == sizes[comp[i]] - 1))

    a0, a1 = P[i, 0], P[i, 1]
    b0, b1 = P[j, 0], P[j, 1]
    r, s = a1 - a0, b1 - b0
    den = _cross2(r, s)
    w = b0 - a0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = _cross2(w, s) / den
        u = _cross2(w, r) / den
    lr = np.linalg.norm(r, axis=1)
    ls = np.linalg.norm(s, axis=1)
    eta_t, eta_u = tol / lr, tol / ls
    hit = (t >= -eta_t) & (t <= 1 + eta_t) & (u >= -eta_u) & (u <= 1 + eta_u) & (den != 0)

    # adjacent segments legitimately share an endpoint; they must not overlap
    if np.any(adjacent):
        k = adjacent
        sin_adj = np.abs(den[k]) / (lr[k] * ls[k])
        if np.any(sin_adj < min_sin):
            dots = np.sum(r[k] * s[k], axis=1)
            if np.any((sin_adj < min_sin) & (dots < 0)):
                raise DiagramError("adjacent segments fold back in projection")
    m = hit & ~adjacent
    parallel = ~adjacent & (np.abs(den) <= 1e-15 * lr * ls)
    if np.any(parallel):
        # collinear overlapping projections
        k = np.nonzero(parallel)[0]
        off = np.abs(_cross2(w[k], r[k])) / lr[k]
        proj0 = np.sum((b0[k] - a0[k]) * r[k], axis=1) / lr[k] ** 2
        proj1 = np.sum((b1[k] - a0[k]) * r[k], axis=1) / lr[k] ** 2
        overl = (off < tol) & (np.maximum(proj0, proj1) >= 0) & (np.minimum(proj0, proj1) <= 1)
        if np.any(overl):
            raise DiagramError("collinear overlap in projection")
    k = np.nonzero(m)[0]
    if np.any((t[k] < eta_t[k]) | (t[k] > 1 - eta_t[k]) | (u[k] < eta_u[k]) | (u[k] > 1 - eta_u[k])):
        raise DiagramError("projection passes through a vertex")
    sin_ang = np.abs(den[k]) / (lr[k] * ls[k])
    if np.any(sin_ang < min_sin):
        raise DiagramError("non-transversal crossing")
    ii, jj, tt, uu = i[k], j[k], t[k], u[k]
    hi_ = H[ii, 0] + tt * (H[ii, 1] - H[ii, 0])
    hj_ = H[jj, 0] + uu * (H[jj, 1] - H[jj, 0])
    if np.any(np.abs(hi_ - hj_) <= tol):
        raise GraphError("curves intersect")
    loc = a0[k] + tt[:, None] * r[k]
    if len(loc) > 1:
        if cKDTree(loc).query_pairs(tol):
            raise DiagramError("triple point in projection")
    crossings = []
    for n_, (a, b, ta, ub) in enumerate(zip(ii, jj, tt, uu)):
        ra, sb = r[k][n_], s[k][n_]
        if hi_[n_] > hj_[n_]:
            over, under, o, v = (comp[a], seg[a], ta), (comp[b], seg[b], ub), ra, sb
        else:
            over, under, o, v = (comp[b], seg[b], ub), (comp[a], seg[a], ta), sb, ra
        sign = 1 if _cross2(o, v) > 0 else -1
        crossings.append(
            Crossing(
                tuple(int(x) if q < 2 else float(x) for q, x in enumerate(over)),
                tuple(int(x) if q < 2 else float(x) for q, x in enumerate(under)),
                sign,
                (float(loc[n_, 0]), float(loc[n_, 1])),
            )
        )
    strands = [np.c_[p @ e1, p @ e2] for p in loops]
    return crossings, strands, d


def project_generic(g, seed: int = 0, direction=None) -> Diagram:
    """Generic diagram of a graph or list of loops.

    Directions are drawn from ``np.random.default_rng(seed + attempt)`` and
    retried until the genericity checks pass (at most 64 attempts).  A fixed
    ``direction`` is tried first when supplied.
    """
    loops = _loops(g)
    tries = []
    if direction is not None:
        tries.append(np.asarray(direction, dtype=float))
    for attempt in range(MAX_RETRIES):
        v = np.random.default_rng(seed + attempt).normal(size=3)
        tries.append(v / np.linalg.norm(v))
    for d in tries[:MAX_RETRIES]:
        try:
            crossings, strands, dd = _find_crossings(loops, d)
        except DiagramError:
            continue
        return Diagram(dd, strands, crossings, seed)
    raise DiagramError("no generic projection found in %d attempts" % MAX_RETRIES)


def linking_number(k1, k2, seed: int = 0) -> int:
    """Linking number of two disjoint closed polylines from signed crossings."""
    l1, l2 = _loops(k1), _loops(k2)
    if len(l1) != 1 or len(l2) != 1:
        raise GraphError("linking_number takes two single closed polylines")
    if polyline_gap(np.vstack([l1[0], l1[0][:1]]), np.vstack([l2[0], l2[0][:1]])) == 0.0:
        raise GraphError("curves intersect")
    diag = project_generic([l1[0], l2[0]], seed)
    total = sum(c.sign for c in diag.crossings if c.over[0] != c.under[0])
    if total % 2:
        raise DiagramError("odd inter-component crossing sum")
    return total // 2


def gauss_linking_integral(k1, k2) -> float:
    """Gauss double integral for two closed polylines, evaluated exactly per
    segment pair through signed solid angles."""
    a = np.vstack([_loops(k1)[0], _loops(k1)[0][:1]])
    b = np.vstack([_loops(k2)[0], _loops(k2)[0][:1]])
    p0, p1 = a[:-1, None, :], a[1:, None, :]
    q0, q1 = b[None, :-1, :], b[None, 1:, :]
    r00, r01, r11, r10 = q0 - p0, q1 - p0, q1 - p1, q0 - p1
    n = [np.cross(r00, r01), np.cross(r01, r11), np.cross(r11, r10), np.cross(r10, r00)]
    norms = [np.linalg.norm(v, axis=-1) for v in n]
    n = [v / np.where(m > 0, m, 1.0)[..., None] for v, m in zip(n, norms)]
    ang = sum(np.arcsin(np.clip(np.sum(n[k] * n[(k + 1) % 4], axis=-1), -1.0, 1.0)) for k in range(4))
    sgn = np.sign(np.sum(np.cross(q1 - q0, p1 - p0) * r00, axis=-1))
    return float(np.sum(ang * sgn) / (4 * np.pi))


# ---------------------------------------------------------------------------
# knot determinant

def _bareiss_det(m) -> int:
    a = [list(map(int, row)) for row in m]
    n = len(a)
    if n == 0:
        return 1
    sign, prev = 1, 1
    for k in range(n - 1):
        if a[k][k] == 0:
            for r in range(k + 1, n):
                if a[r][k] != 0:
                    a[k], a[r] = a[r], a[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
        prev = a[k][k]
    return sign * a[n - 1][n - 1]


def _passages(diag: Diagram):
    """Crossing passages of a one-component diagram in traversal order:
    ``(position, crossing index, is_over, 2D direction)``."""
    pts = diag.strands[0]
    nxt = np.roll(pts, -1, axis=0)
    out = []
    for ci, c in enumerate(diag.crossings):
        for role, (_, s, t) in ((True, c.over), (False, c.under)):
            v = nxt[s] - pts[s]
            out.append((s + t, ci, role, v / np.linalg.norm(v)))
    out.sort(key=lambda x: x[0])
    return out


def goeritz_matrix(diag: Diagram):
    """Goeritz matrix of a checkerboard coloring (unreduced) of a knot diagram."""
    if len(diag.strands) != 1:
        raise GraphError("Goeritz matrix needs a single component")
    pas = _passages(diag)
    n = len(pas)
    if n == 0:
        return np.zeros((1, 1), dtype=int)
    # rays at each crossing: half-edge (edge, +1) leaves passage e forward,
    # (edge, -1) leaves passage e+1 backwards along edge e
    rays = {}
    for e, (_, ci, role, v) in enumerate(pas):
        rays.setdefault(ci, []).append(((e, 1), v, role, 1))
        rays.setdefault(ci, []).append((((e - 1) % n, -1), -v, role, -1))
    order, pos = {}, {}
    for ci, lst in rays.items():
        lst.sort(key=lambda r: np.arctan2(r[1][1], r[1][0]))
        order[ci] = lst
        for k, r in enumerate(lst):
            pos[r[0]] = (ci, k)
    face = {}
    nfaces = 0
    for start in pos:
        if start in face:
            continue
        h = start
        while h not in face:
            face[h] = nfaces
            twin = (h[0], -h[1])
            ci, k = pos[twin]
            h = order[ci][(k + 1) % 4][0]
        nfaces += 1
    color = [-1] * nfaces
    adj = [set() for _ in range(nfaces)]
    for h, f in face.items():
        adj[f].add(face[(h[0], -h[1])])
    color[0] = 0
    queue = deque([0])
    while queue:
        f = queue.popleft()
        for g in adj[f]:
            if g == f:
                raise DiagramError("face adjacent to itself across an edge")
            if color[g] < 0:
                color[g] = 1 - color[f]
                queue.append(g)
            elif color[g] == color[f]:
                raise DiagramError("diagram is not checkerboard colorable")
    white = [f for f in range(nfaces) if color[f] == 0]
    index = {f: k for k, f in enumerate(white)}
    G = np.zeros((len(white), len(white)), dtype=int)
    for ci, lst in order.items():
        corners = [face[lst[(k + 1) % 4][0]] for k in range(4)]  # corner k: ray k -> ray k+1
        over_rays = [k for k, r in enumerate(lst) if r[2]]
        swept = [corners[k] for k in over_rays]
        if color[swept[0]] == 0:
            eta, wc = 1, swept
        else:
            eta, wc = -1, [corners[k] for k in range(4) if k not in over_rays]
        a, b = wc
        if a != b:
            G[index[a], index[b]] -= eta
            G[index[b], index[a]] -= eta
    for i in range(len(G)):
        G[i, i] = -(G[i].sum() - G[i, i])
    return G


def knot_determinant(k, seed: int = 0, direction=None) -> int:
    """|det| of a reduced Goeritz matrix of a generic diagram of the knot."""
    loops = _loops(k)
    if len(loops) != 1:
        raise GraphError("knot_determinant needs a single closed component")
    diag = project_generic(loops, seed, direction)
    G = goeritz_matrix(diag)
    return abs(_bareiss_det(G[1:, 1:]))


def coloring_determinant(k, seed: int = 0, direction=None) -> int:
    """Knot determinant from the Fox coloring matrix (independent route)."""
    diag = project_generic(_loops(k), seed, direction)
    pas = _passages(diag)
    unders = [p for p in pas if not p[2]]
    if not unders:
        return 1
    # over-arcs are numbered by the undercrossing that starts them
    arc_of = []
    current = len(unders) - 1
    for p in pas:
        if not p[2]:
            current = (current + 1) % len(unders)
        arc_of.append(current)
    rows = {}
    for e, p in enumerate(pas):
        ci = p[1]
        row = rows.setdefault(ci, [0] * len(unders))
        if p[2]:
            row[arc_of[e]] += 2
        else:
            row[arc_of[e - 1]] -= 1
            row[arc_of[e]] -= 1
    m = [rows[ci] for ci in sorted(rows)]
    minor = [r[1:] for r in m[1:]]
    return abs(_bareiss_det(minor))


# ---------------------------------------------------------------------------
# theta graphs

@dataclass(frozen=True)
class ThetaGraph:
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    p: np.ndarray
    q: np.ndarray
    embedded: bool = True
    max_move: float = 0.0

    def graph(self) -> EmbeddedGraph:
        return _theta_graph(self.alpha, self.beta, self.gamma)


def _theta_graph(alpha, beta, gamma) -> EmbeddedGraph:
    return EmbeddedGraph(
        {"p": alpha[0], "q": alpha[-1]},
        {"alpha": Arc(alpha, "p", "q"), "beta": Arc(beta, "p", "q"), "gamma": Arc(gamma[::-1].copy(), "p", "q")},
    )


def _insert_point(loop, x):
    """Insert ``x`` into the closed loop at its nearest segment; returns
    (new loop, index of x)."""
    from .graph_core import point_segment_distances

    q = np.roll(loop, -1, axis=0)
    d, t = point_segment_distances(np.asarray(x)[None, :], loop, q)
    s = int(np.argmin(d))
    if d[s] > 1e-9 * np.ptp(loop, axis=0).max():
        raise GraphError("point does not lie on the knot")
    if t[s] < 1e-12:
        return loop, s
    if t[s] > 1 - 1e-12:
        return loop, (s + 1) % len(loop)
    loop = np.insert(loop, s + 1, x, axis=0)
    return loop, s + 1


def make_theta(k, p, q, eps: float, seed: int = 0, pieces: int = 8) -> ThetaGraph:
    """Theta graph from a knot and a chord pq.

    alpha runs along the knot from p to q, gamma from q back to p, and beta
    is the chord subdivided into ``pieces`` segments whose interior vertices
    are moved by less than ``eps`` until the graph is embedded.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    loop = _loops(k)[0]
    loop, ip = _insert_point(loop, p)
    loop = np.roll(loop, -ip, axis=0)
    loop, iq = _insert_point(loop, q)
    if iq == 0:
        raise GraphError("p and q must be distinct")
    alpha = loop[: iq + 1]
    gamma = np.vstack([loop[iq:], loop[:1]])
    p, q = loop[0], loop[iq]
    chord = p + np.linspace(0, 1, pieces + 1)[:, None] * (q - p)
    chord[0], chord[-1] = p, q
    for attempt in range(MAX_RETRIES + 1):
        beta = chord.copy()
        move = 0.0
        if attempt:
            rng = np.random.default_rng(seed + attempt - 1)
            v = rng.normal(size=(pieces - 1, 3))
            v /= np.linalg.norm(v, axis=1)[:, None]
            v *= 0.9 * eps * rng.uniform(0.2, 1.0, size=(pieces - 1, 1))
            beta[1:-1] += v
            move = float(np.linalg.norm(v, axis=1).max())
        if is_embedded(_theta_graph(alpha, beta, gamma)):
            return ThetaGraph(alpha, beta, gamma, p, q, True, move)
    raise GraphError("could not embed the theta graph in %d perturbations" % MAX_RETRIES)


def _vertex_frames(loop, axis):
    q = np.roll(loop, -1, axis=0)
    seg = q - loop
    seg /= np.linalg.norm(seg, axis=1)[:, None]
    tang = seg + np.roll(seg, 1, axis=0)
    tang /= np.linalg.norm(tang, axis=1)[:, None]
    n = np.cross(tang, axis)
    n /= np.linalg.norm(n, axis=1)[:, None]
    return n, np.cross(tang, n)


def _pushoff(loop, offset, axis, phi):
    n, b = _vertex_frames(loop, axis)
    return loop + offset * (np.cos(phi)[:, None] * n + np.sin(phi)[:, None] * b)


def zero_framed_parallel(theta: ThetaGraph, offset: float, seed: int = 0, twist_steps: int = 24,
                         return_twists: bool = False):
    """Push-off of alpha+beta with linking number zero against alpha+gamma.

    Integer full twists are inserted along alpha, where the two loops share a
    strand, until the linking number with alpha+gamma vanishes.  Returns the
    parallel as a closed (n, 3) array (no repeated end point), plus the
    signed number of inserted twists when ``return_twists`` is set.
    """
    alpha, beta, gamma = theta.alpha, theta.beta, theta.gamma
    knot = np.vstack([alpha, gamma[1:-1]])
    graph = theta.graph()
    rng = np.random.default_rng(seed)
    # twist region: the longest alpha segment, finely subdivided
    seg_len = np.linalg.norm(np.diff(alpha, axis=0), axis=1)
    s = int(np.argmax(seg_len))
    for _ in range(8):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        phi0 = rng.uniform(0, 2 * np.pi)

        def build(w):
            steps = twist_steps * max(1, abs(w))
            fine = alpha[s] + np.linspace(0, 1, steps + 1)[1:-1, None] * (alpha[s + 1] - alpha[s])
            a_pts = np.vstack([alpha[: s + 1], fine, alpha[s + 1:]])
            loop = np.vstack([a_pts, beta[::-1][1:-1]])
            ramp = np.zeros(len(loop))
            ramp[s + 1: s + len(fine) + 1] = np.arange(1, len(fine) + 1) / (len(fine) + 1)
            ramp[s + len(fine) + 1:] = 1.0
            return _pushoff(loop, offset, axis, phi0 + 2 * np.pi * w * ramp)

        def clear(curve):
            closed = np.vstack([curve, curve[:1]])
            gap = min(polyline_pair_distances(closed, a.points).min() for a in graph.arcs.values())
            return gap > 0.5 * offset

        base = build(0)
        if not clear(base):
            continue
        lk0 = linking_number(base, knot, seed)
        if lk0 == 0:
            return (base, 0) if return_twists else base
        lk1 = linking_number(build(1), knot, seed)
        step = lk1 - lk0
        if abs(step) != 1:
            continue
        w = -lk0 * step
        out = build(w)
        if not clear(out):
            continue
        if linking_number(out, knot, seed) != 0:
            raise DiagramError("twist correction failed to zero the linking number")
        return (out, w) if return_twists else out
    raise GraphError("offset too large: the push-off collides with the theta graph")
