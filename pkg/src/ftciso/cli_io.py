"""Graph files, the ``ftciso`` command line, and mesh/frame export.

Graph file format (plain text, one record per line)::

    # ftc-graph 1
    # units: arbitrary
    v <id> <x> <y> <z>
    a <id> <head> <tail> [closed]
      p <x> <y> <z>
      ...

Arc point lines follow their ``a`` record, include both endpoints, and must
start and end on the named vertices.  Coordinates are written with ``repr``
so files round-trip exactly.

Command output is ``key value...`` lines.  Exit codes: 0 success or issued
certificate, 2 refusal, 1 error.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .certify import (
    certify_ftc,
    certify_thick,
    neighborhood_for,
    neighborhood_mesh,
    theta_of,
)
from .graph_core import Arc, EmbeddedGraph, GraphError, is_embedded, total_curvature
from .invariants import knot_determinant, linking_number
from .isotopy import assemble_frames
from .metrics import default_correspondence, discrete_thickness, measure_closeness, refine_correspondence
from .refine import equal_arclength_points, fillet_round, inscribe_polygon

HEADER = "# ftc-graph 1"


class GraphFormatError(GraphError):
    def __init__(self, msg, lineno=None):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {msg}" if lineno else msg)


@dataclass(frozen=True)
class RunConfig:
    epsilon: float | None = None
    tolerance: float = 1e-9
    m: int = 50
    seed: int = 0
    mode: str = "refined"

    def __post_init__(self):
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.m < 2:
            raise ValueError("need at least two frames")
        if self.mode not in ("default", "refined"):
            raise ValueError("mode must be 'default' or 'refined'")


# ---------------------------------------------------------------------------
# graph files

def _floats(tokens, lineno):
    try:
        vals = [float(t) for t in tokens]
    except ValueError:
        raise GraphFormatError("expected three numbers", lineno) from None
    if len(vals) != 3:
        raise GraphFormatError("expected three numbers", lineno)
    return vals


def parse_graph(text: str, check_embedded: bool = False) -> EmbeddedGraph:
    lines = text.splitlines()
    if not lines or lines[0].strip() != HEADER:
        raise GraphFormatError(f"missing header {HEADER!r}", 1)
    vertices, arc_recs = {}, []
    current = None
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tok = line.split()
        kind = tok[0]
        if kind == "v":
            if len(tok) != 5:
                raise GraphFormatError("vertex record is 'v id x y z'", lineno)
            if tok[1] in vertices:
                raise GraphFormatError(f"duplicate vertex {tok[1]}", lineno)
            vertices[tok[1]] = _floats(tok[2:], lineno)
            current = None
        elif kind == "a":
            if len(tok) not in (4, 5) or (len(tok) == 5 and tok[4] != "closed"):
                raise GraphFormatError("arc record is 'a id head tail [closed]'", lineno)
            if any(r[0] == tok[1] for r in arc_recs):
                raise GraphFormatError(f"duplicate arc {tok[1]}", lineno)
            current = [tok[1], tok[2], tok[3], len(tok) == 5, [], lineno]
            arc_recs.append(current)
        elif kind == "p":
            if current is None:
                raise GraphFormatError("point line outside an arc", lineno)
            current[4].append(_floats(tok[1:], lineno))
        else:
            raise GraphFormatError(f"unknown record {kind!r}", lineno)
    arcs = {}
    for aid, head, tail, closed, pts, lineno in arc_recs:
        for vid in (head, tail):
            if vid not in vertices:
                raise GraphFormatError(f"arc {aid} references missing vertex {vid}", lineno)
        try:
            arcs[aid] = Arc(np.array(pts, dtype=float).reshape(-1, 3), head, tail, closed)
        except GraphError as e:
            raise GraphFormatError(f"arc {aid}: {e}", lineno) from None
    try:
        g = EmbeddedGraph({k: np.array(v) for k, v in vertices.items()}, arcs)
    except GraphError as e:
        raise GraphFormatError(str(e)) from None
    if check_embedded and not is_embedded(g):
        raise GraphFormatError("graph is not embedded")
    return g


def serialize_graph(g: EmbeddedGraph, units: str = "arbitrary") -> str:
    out = [HEADER, f"# units: {units}"]
    for vid, p in g.vertices.items():
        if not vid or any(c.isspace() for c in vid):
            raise GraphFormatError(f"vertex id {vid!r} cannot be written")
        out.append("v " + vid + " " + " ".join(repr(float(x)) for x in p))
    for aid, arc in g.arcs.items():
        out.append(f"a {aid} {arc.head} {arc.tail}" + (" closed" if arc.closed else ""))
        for p in arc.points:
            out.append("  p " + " ".join(repr(float(x)) for x in p))
    return "\n".join(out) + "\n"


def read_graph(path, check_embedded: bool = False) -> EmbeddedGraph:
    return parse_graph(Path(path).read_text(), check_embedded)


def write_graph(path, g: EmbeddedGraph) -> None:
    Path(path).write_text(serialize_graph(g))


def write_obj(path, verts, faces) -> None:
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in np.asarray(verts, dtype=float).tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in np.asarray(faces, dtype=int).tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def write_frames(prefix, frames) -> list:
    """One graph file per frame plus ``<prefix>_index.txt`` (time, file)."""
    prefix = Path(prefix)
    names, index = [], []
    for k, (t, fg) in enumerate(zip(frames.times, frames.frames)):
        name = prefix.parent / f"{prefix.name}_{k:04d}.graph"
        write_graph(name, fg)
        names.append(name)
        index.append(f"{float(t)!r} {name.name}")
    (prefix.parent / f"{prefix.name}_index.txt").write_text("\n".join(index) + "\n")
    return names


# ---------------------------------------------------------------------------
# command line

def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.ndarray):
        return " ".join(_fmt(v) for v in x.tolist())
    if isinstance(x, (tuple, list)):
        return " ".join(_fmt(v) for v in x)
    return str(x)


def _emit(out, key, *vals):
    out.write(key + (" " + " ".join(_fmt(v) for v in vals) if vals else "") + "\n")


def _cert_block(out, cert):
    _emit(out, "certificate", "issued" if cert.issued else "refused")
    _emit(out, "criterion", cert.criterion)
    if not cert.issued:
        _emit(out, "reason", cert.reason)
    _emit(out, "motion_bound", cert.motion_bound)
    for k, v in cert.constants.items():
        _emit(out, k, v)
    if cert.correspondence is not None:
        _emit(out, "correspondence", cert.correspondence.mode)
    return 0 if cert.issued else 2


def _config(args) -> RunConfig:
    return RunConfig(getattr(args, "epsilon", None), getattr(args, "tolerance", 1e-9),
                     getattr(args, "m", 50), getattr(args, "seed", 0), getattr(args, "mode", "refined"))


def cmd_tc(args, out):
    # per-arc only: turning at graph vertices is not assigned to any arc
    g = read_graph(args.graph)
    for aid, arc in g.arcs.items():
        _emit(out, "total_curvature_per_arc", aid, total_curvature(arc.points, closed=arc.closed))
    return 0


def cmd_thickness(args, out):
    g = read_graph(args.graph)
    loops = [a.points for a in g.arcs.values() if a.closed]
    if len(loops) != len(g.arcs):
        raise GraphError("thickness is defined for links (closed loops)")
    rep = discrete_thickness(loops)
    _emit(out, "tau_hat", rep.tau_hat)
    _emit(out, "min_rad", rep.min_rad)
    _emit(out, "dcsd", rep.dcsd)
    _emit(out, "mechanism", rep.mechanism)
    return 0


def cmd_closeness(args, out):
    cfg = _config(args)
    g, g2 = read_graph(args.graph), read_graph(args.graph2)
    c = default_correspondence(g, g2)
    if cfg.mode == "refined":
        c = refine_correspondence(g, g2, c)
    rep = measure_closeness(g, g2, c)
    _emit(out, "delta", rep.delta)
    _emit(out, "theta", rep.theta)
    _emit(out, "correspondence", c.mode)
    return 0


def cmd_certify_thick(args, out):
    cfg = _config(args)
    cert = certify_thick(read_graph(args.graph), read_graph(args.graph2), tau=args.tau, mode=cfg.mode)
    return _cert_block(out, cert)


def cmd_certify_ftc(args, out):
    cfg = _config(args)
    cert = certify_ftc(read_graph(args.graph), read_graph(args.graph2), cfg.epsilon, mode=cfg.mode)
    return _cert_block(out, cert)


def cmd_neighborhood(args, out):
    cfg = _config(args)
    g = read_graph(args.graph)
    d, chain, model = neighborhood_for(g, cfg.epsilon)
    for k in ("r1", "r2", "r3", "r4", "delta", "epsilon"):
        _emit(out, k, getattr(chain, k))
    _emit(out, "balls", len(model.balls))
    _emit(out, "tubes", len(model.tubes))
    _emit(out, "budget", d.budget)
    _emit(out, "max_transverse_angle", model.max_transverse_angle)
    _emit(out, "max_disk_drift", model.max_disk_drift)
    if args.out:
        path = f"{args.out}.obj"
        write_obj(path, *neighborhood_mesh(model))
        _emit(out, "mesh", path)
    return 0


def cmd_frames(args, out):
    cfg = _config(args)
    g, g2 = read_graph(args.graph), read_graph(args.graph2)
    if args.criterion == "thick":
        cert = certify_thick(g, g2, mode=cfg.mode)
    else:
        if cfg.epsilon is None:
            raise GraphError("--epsilon is required for ftc frames")
        cert = certify_ftc(g, g2, cfg.epsilon, mode=cfg.mode)
    code = _cert_block(out, cert)
    if code:
        return code
    fr = assemble_frames(g, g2, cert, m=cfg.m)
    _emit(out, "frames", len(fr.times))
    _emit(out, "all_embedded", bool(np.all(fr.embedded)))
    _emit(out, "min_self_distance", float(fr.min_distance.min()))
    _emit(out, "max_displacement", fr.max_displacement)
    if args.out:
        names = write_frames(args.out, fr)
        _emit(out, "frame_index", f"{args.out}_index.txt")
        _emit(out, "frame_files", len(names))
    return 0 if fr.sound else 1


def cmd_inscribe(args, out):
    g = read_graph(args.graph)
    p = inscribe_polygon(g, args.h, args.theta)
    text = serialize_graph(p)
    if args.out:
        Path(args.out).write_text(text)
        _emit(out, "written", args.out)
    else:
        out.write(text)
    return 0


def cmd_round(args, out):
    g = read_graph(args.graph)
    if len(g.arcs) != 1 or not next(iter(g.arcs.values())).closed:
        raise GraphError("round expects a single closed polygon")
    pts = next(iter(g.arcs.values())).points[:-1]
    spacing = args.spacing
    if args.tau is not None:
        pts, spacing = equal_arclength_points(pts, args.tau)
        _emit(out, "spacing", spacing)
    rho = args.rho if args.rho is not None else 5 * spacing
    dense, rep = fillet_round(pts, rho, spacing=spacing)
    _emit(out, "radius", rep.radius)
    _emit(out, "d", rep.d)
    _emit(out, "phi", rep.phi)
    _emit(out, "min_radius", rep.min_radius)
    _emit(out, "corner_cut", rep.corner_cut)
    _emit(out, "construction", rep.construction.replace(" ", "-"))
    if args.out:
        write_graph(args.out, EmbeddedGraph.from_loops([dense]))
        _emit(out, "written", args.out)
    return 0


def cmd_lk(args, out):
    cfg = _config(args)
    g = read_graph(args.graph)
    ids = args.arcs or list(g.arcs)[:2]
    if len(ids) != 2:
        raise GraphError("linking number needs two closed arcs")
    a, b = (g.arcs[i] for i in ids)
    _emit(out, "linking_number", linking_number(a.points, b.points, seed=cfg.seed))
    return 0


def cmd_det(args, out):
    cfg = _config(args)
    g = read_graph(args.graph)
    _emit(out, "determinant", knot_determinant(g, seed=cfg.seed))
    return 0


def cmd_theta(args, out):
    _emit(out, "theta", theta_of(args.delta, args.tau))
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ftciso", description="Certify that nearby polygonal graphs are isotopic.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_, graphs=1):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("graph")
        if graphs == 2:
            sp.add_argument("graph2")
        sp.set_defaults(fn=fn)
        return sp

    def mode(sp):
        sp.add_argument("--mode", choices=("default", "refined"), default="refined",
                        help="correspondence: proportional arclength or refined (default)")

    add("tc", cmd_tc, "total curvature per arc")
    add("thickness", cmd_thickness, "discrete thickness of a link")
    mode(add("closeness", cmd_closeness, "measured (delta, theta) closeness", 2))
    sp = add("certify-thick", cmd_certify_thick, "thick-link certificate", 2)
    sp.add_argument("--tau", type=float, default=None)
    mode(sp)
    sp = add("certify-ftc", cmd_certify_ftc, "finite-total-curvature certificate", 2)
    sp.add_argument("--epsilon", type=float, required=True)
    mode(sp)
    sp = add("neighborhood", cmd_neighborhood, "ball-and-tube neighborhood, optional OBJ mesh")
    sp.add_argument("--epsilon", type=float, required=True)
    sp.add_argument("--out", default=None, help="mesh file prefix")
    sp = add("frames", cmd_frames, "sample the certified isotopy", 2)
    sp.add_argument("--criterion", choices=("ftc", "thick"), default="ftc")
    sp.add_argument("--epsilon", type=float, default=None)
    sp.add_argument("--m", type=int, default=50)
    sp.add_argument("--out", default=None, help="frame file prefix")
    mode(sp)
    sp = add("inscribe", cmd_inscribe, "inscribed polygon")
    sp.add_argument("--h", type=float, required=True)
    sp.add_argument("--theta", type=float, default=None)
    sp.add_argument("--out", default=None)
    sp = add("round", cmd_round, "fillet-round a closed polygon")
    sp.add_argument("--rho", type=float, default=None)
    sp.add_argument("--spacing", type=float, default=None)
    sp.add_argument("--tau", type=float, default=None, help="resample at equal arclength first")
    sp.add_argument("--out", default=None)
    sp = add("lk", cmd_lk, "linking number of two loops")
    sp.add_argument("--arcs", nargs=2, default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp = add("det", cmd_det, "knot determinant")
    sp.add_argument("--seed", type=int, default=0)
    sp = sub.add_parser("theta", help="angle bound for (delta, tau)")
    sp.add_argument("--delta", type=float, required=True)
    sp.add_argument("--tau", type=float, required=True)
    sp.set_defaults(fn=cmd_theta)
    return p


def run_command(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.fn(args, out)
    except (GraphError, ValueError, OSError, KeyError) as e:
        sys.stderr.write(f"ftciso: error: {e}\n")
        return 1


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
