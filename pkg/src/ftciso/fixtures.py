"""Standard test curves: circles, polygons, torus knots and links."""
from __future__ import annotations

import numpy as np

from .graph_core import Arc, EmbeddedGraph


def circle(n: int, radius: float = 1.0, center=(0.0, 0.0, 0.0), normal_axis: int = 2, phase: float = 0.0):
    """Regular n-gon inscribed in a circle (open point list, no repeat)."""
    t = 2 * np.pi * np.arange(n) / n + phase
    pts = np.zeros((n, 3))
    axes = [a for a in range(3) if a != normal_axis]
    pts[:, axes[0]] = radius * np.cos(t)
    pts[:, axes[1]] = radius * np.sin(t)
    return pts + np.asarray(center, dtype=float)


def square(side: float = 1.0, per_side: int = 1):
    """Axis-aligned square in the xy-plane, each side cut into ``per_side`` pieces."""
    corners = np.array([[0, 0, 0], [side, 0, 0], [side, side, 0], [0, side, 0]], dtype=float)
    pts = []
    for k in range(4):
        a, b = corners[k], corners[(k + 1) % 4]
        for i in range(per_side):
            pts.append(a + (b - a) * i / per_side)
    return np.array(pts)


def stadium(length: float = 10.0, width: float = 1.0, n_cap: int = 64, n_side: int = 200):
    """Rectangle length x width with fully rounded (semicircular) ends."""
    r = width / 2
    straight = length - width
    pts = []
    xs = np.linspace(0, straight, n_side, endpoint=False)
    pts += [[x, -r, 0.0] for x in xs]
    for a in np.linspace(-np.pi / 2, np.pi / 2, n_cap, endpoint=False):
        pts.append([straight + r * np.cos(a), r * np.sin(a), 0.0])
    pts += [[straight - x, r, 0.0] for x in xs]
    for a in np.linspace(np.pi / 2, 3 * np.pi / 2, n_cap, endpoint=False):
        pts.append([r * np.cos(a), r * np.sin(a), 0.0])
    return np.array(pts)


def bone(length: float = 10.0, width: float = 1.0, lobe: float = 4.0, rho: float = 0.6):
    """A length x width slab ending in square lobes, every corner filleted
    with radius ``rho``: the slab sets the self-distance while curvature
    stays at 1/rho."""
    from .refine import fillet_round

    w, s, a = width / 2, lobe / 2, lobe / 2
    L = length
    corners = np.array([
        [a, -w], [L - a, -w], [L - a, -s], [L + s, -s], [L + s, s], [L - a, s],
        [L - a, w], [a, w], [a, s], [-s, s], [-s, -s], [a, -s],
    ])
    poly = np.c_[corners, np.zeros(len(corners))]
    out, _ = fillet_round(poly, rho)
    return out


def trefoil(n: int = 60, scale: float = 1.0, phase: float = 0.0):
    t = 2 * np.pi * np.arange(n) / n + phase
    x = np.sin(t) + 2 * np.sin(2 * t)
    y = np.cos(t) - 2 * np.cos(2 * t)
    z = -np.sin(3 * t)
    return scale * np.c_[x, y, z]


def figure_eight(n: int = 80, scale: float = 1.0):
    t = 2 * np.pi * np.arange(n) / n
    x = (2 + np.cos(2 * t)) * np.cos(3 * t)
    y = (2 + np.cos(2 * t)) * np.sin(3 * t)
    z = np.sin(4 * t)
    return scale * np.c_[x, y, z]


def hopf_link(n: int = 48):
    """Unit circles in orthogonal planes, each through the other's center."""
    a = circle(n)
    b = circle(n, center=(1.0, 0.0, 0.0), normal_axis=1, phase=0.013)
    return a, b


def torus_link_2_4(n: int = 96, major: float = 2.0, minor: float = 0.8):
    """The (2,4) torus link: two components, linking number 2 in magnitude."""
    t = 2 * np.pi * np.arange(n) / n
    comps = []
    for c in range(2):
        ang = 2 * t + c * np.pi
        rr = major + minor * np.cos(ang)
        comps.append(np.c_[rr * np.cos(t), rr * np.sin(t), minor * np.sin(ang)])
    return comps


def star3() -> EmbeddedGraph:
    """Three straight edges leaving one degree-3 vertex at 120 degrees."""
    p = np.zeros(3)
    verts, arcs = {"p": p}, {}
    for k in range(3):
        a = 2 * np.pi * k / 3
        end = np.array([np.cos(a), np.sin(a), 0.0])
        verts[f"e{k}"] = end
        arcs[f"s{k}"] = Arc(np.array([p, end]), "p", f"e{k}")
    return EmbeddedGraph(verts, arcs)


def theta_two_vertex(height: float = 1.0) -> EmbeddedGraph:
    """Theta graph: vertices p, q joined by three straight-edged paths."""
    p, q = np.array([0.0, 0.0, 0.0]), np.array([2.0, 0.0, 0.0])
    arcs = {
        "alpha": Arc(np.array([p, q]), "p", "q"),
        "beta": Arc(np.array([p, [1.0, height, 0.0], q]), "p", "q"),
        "gamma": Arc(np.array([p, [1.0, -height, 0.0], q]), "p", "q"),
    }
    return EmbeddedGraph({"p": p, "q": q}, arcs)


def perturb_graph(graph: EmbeddedGraph, rng, amplitude: float) -> EmbeddedGraph:
    """Move every vertex (graph vertices included) by a random vector of
    length below ``amplitude``."""
    def jitter(n):
        v = rng.normal(size=(n, 3))
        v /= np.linalg.norm(v, axis=1)[:, None]
        return v * amplitude * rng.uniform(0.0, 1.0, size=(n, 1))

    verts = {k: v + jitter(1)[0] for k, v in graph.vertices.items()}
    arcs = {}
    for aid, arc in graph.arcs.items():
        pts = arc.points + jitter(len(arc.points))
        pts[0] = verts[arc.head]
        pts[-1] = verts[arc.tail]
        arcs[aid] = Arc(pts, arc.head, arc.tail, arc.closed)
    return EmbeddedGraph(verts, arcs)


def splice_local_trefoil(points, index: int, size: float, n: int = 48):
    """Closed polyline with a trefoil of diameter about ``size`` tied into
    segment ``index``: a connected sum with a tiny trefoil summand.

    The small trefoil sits above a plane through the segment midpoint, is
    opened at its point nearest that plane and joined to the segment by two
    short connectors.
    """
    p = np.asarray(points, dtype=float)
    a, b = p[index], p[(index + 1) % len(p)]
    tdir = (b - a) / np.linalg.norm(b - a)
    helper = np.eye(3)[int(np.argmin(np.abs(tdir)))]
    nrm = np.cross(tdir, helper)
    nrm /= np.linalg.norm(nrm)
    small = trefoil(n)
    small *= size / np.ptp(small, axis=0).max()
    c = int(np.argmin(small[:, 0]))
    # local x -> -nrm, local y -> tdir, local z completes the frame
    rot = np.column_stack([-nrm, tdir, np.cross(-nrm, tdir)])
    mid = 0.5 * (a + b)
    placed = mid + 0.2 * size * nrm + (small - small[c]) @ rot.T
    opened = np.roll(placed, -(c + 1), axis=0)[:-1]
    w = 0.3 * size
    insert = np.vstack([mid - w * tdir, opened, mid + w * tdir])
    return np.vstack([p[: index + 1], insert, p[index + 1:]])


def far_circle_pair(offset: float = 5.0):
    base = circle(64)
    return EmbeddedGraph.from_loops([base]), EmbeddedGraph.from_loops([base + [offset, 0.0, 0.0]])


def write_fixture_files(directory) -> list:
    """Write the graph files used by the CLI examples and tests."""
    from pathlib import Path

    from .certify import corner_decomposition, ftc_radii
    from .cli_io import write_graph

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    tref = EmbeddedGraph.from_loops([trefoil(60)])
    chain = ftc_radii(tref, corner_decomposition(tref), 0.1)
    near = EmbeddedGraph.from_loops([circle(64) + [0.01, 0.01, 0.01]])
    circ, far = far_circle_pair()
    files = {
        "square.graph": EmbeddedGraph.from_loops([square(1.0, 4)]),
        "trefoil.graph": tref,
        "trefoil_perturbed.graph": perturb_graph(tref, np.random.default_rng(7), 0.5 * chain.delta),
        "circle.graph": circ,
        "circle_near.graph": near,
        "circle_far.graph": far,
        "hopf.graph": EmbeddedGraph.from_loops(list(hopf_link())),
        "theta.graph": theta_two_vertex(),
    }
    for name, g in files.items():
        write_graph(out / name, g)
    return sorted(files)


if __name__ == "__main__":
    import sys

    print("\n".join(write_fixture_files(sys.argv[1] if len(sys.argv) > 1 else "fixtures")))
