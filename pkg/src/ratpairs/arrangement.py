"""Line arrangements in the plane with exact coordinates.

Builds the blown-up model, the marked cluster of blown-up points and the
configuration of proper transforms of the lines.  Also the two families of
line arrangements with one point of high multiplicity used for reproduction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Mapping, Sequence

from .clusters import Cluster, add_point
from .curvegraph import CurveConfig, Edge, build_config
from .lattice import P2, SurfaceModel, make_model


class ArrangementError(ValueError):
    pass


def _q(x) -> Fraction:
    if isinstance(x, (bool, float)):
        raise ArrangementError(f"not an exact rational: {x!r}")
    try:
        return Fraction(x)
    except (ValueError, TypeError):
        raise ArrangementError(f"not an exact rational: {x!r}") from None


def _cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def _normal(v):
    """Scale a homogeneous vector so that its last non-zero entry is 1."""
    piv = next(x for x in reversed(v) if x != 0)
    return tuple(x / piv for x in v)


def incident(line, point) -> bool:
    return sum(a * b for a, b in zip(line, point)) == 0


@dataclass(frozen=True)
class ArrangementInput:
    lines: tuple[tuple[str, tuple[Fraction, Fraction, Fraction]], ...]
    named_points: tuple[tuple[str, tuple[Fraction, Fraction, Fraction]], ...] = ()
    blowups: tuple[str, ...] = ()
    marked: tuple[dict, ...] = ()

    def __post_init__(self):
        names = [n for n, _ in self.lines]
        if len(set(names)) != len(names):
            raise ArrangementError("duplicate line names")
        seen = []
        for n, v in self.lines:
            if all(x == 0 for x in v):
                raise ArrangementError(f"line {n!r} has dual coordinates [0,0,0]")
            nv = _normal(v)
            if nv in seen:
                raise ArrangementError(f"line {n!r} repeats an earlier line")
            seen.append(nv)
        for n, v in self.named_points:
            if all(x == 0 for x in v):
                raise ArrangementError(f"point {n!r} has coordinates [0,0,0]")
        for ref in self.blowups:
            self.point(ref)

    @property
    def line_map(self) -> dict[str, tuple]:
        return dict(self.lines)

    def point(self, ref: str) -> tuple[Fraction, Fraction, Fraction]:
        named = dict(self.named_points)
        if ref in named:
            return named[ref]
        if ref.startswith("x:"):
            parts = ref[2:].split(":")
            lm = self.line_map
            if len(parts) == 2 and all(p in lm for p in parts):
                return _normal(_cross(lm[parts[0]], lm[parts[1]]))
        raise ArrangementError(f"unknown point reference {ref!r}")

    def to_json(self) -> dict:
        d: dict = {"lines": {n: [str(x) for x in v] for n, v in self.lines}}
        if self.named_points:
            d["named_points"] = {n: [str(x) for x in v] for n, v in self.named_points}
        d["blowups"] = list(self.blowups)
        if self.marked:
            d["marked_cluster"] = list(self.marked)
        return d

    @staticmethod
    def from_json(data: Mapping) -> "ArrangementInput":
        if not isinstance(data, Mapping) or "lines" not in data:
            raise ArrangementError("input needs a 'lines' object")
        lines_raw = data["lines"]
        if isinstance(lines_raw, Mapping):
            items = list(lines_raw.items())
        else:
            items = [(f"L{i + 1}", v) for i, v in enumerate(lines_raw)]
        lines = []
        for n, v in items:
            if not isinstance(v, Sequence) or isinstance(v, str) or len(v) != 3:
                raise ArrangementError(f"lines.{n}: expected three rationals")
            lines.append((str(n), tuple(_q(x) for x in v)))
        pts = []
        for n, v in (data.get("named_points") or {}).items():
            if not isinstance(v, Sequence) or isinstance(v, str) or len(v) != 3:
                raise ArrangementError(f"named_points.{n}: expected three rationals")
            pts.append((str(n), tuple(_q(x) for x in v)))
        blow = data.get("blowups") or []
        if not isinstance(blow, list) or not all(isinstance(b, str) for b in blow):
            raise ArrangementError("blowups: expected a list of point references")
        marked = data.get("marked_cluster") or []
        if not isinstance(marked, list):
            raise ArrangementError("marked_cluster: expected a list")
        return ArrangementInput(tuple(lines), tuple(pts), tuple(blow), tuple(marked))


@dataclass(frozen=True)
class BuiltArrangement:
    source: ArrangementInput
    model: SurfaceModel
    cluster: Cluster  # blown-up points with coordinates
    config: CurveConfig
    lines: dict = field(default_factory=dict)
    marked: Cluster = field(default_factory=Cluster)


def build(arr: ArrangementInput) -> BuiltArrangement:
    lm = arr.line_map
    ids = list(arr.blowups)
    if len(set(ids)) != len(ids):
        raise ArrangementError("a point is blown up twice")
    coords = {pid: arr.point(pid) for pid in ids}
    for a, b in combinations(ids, 2):
        if _cross(coords[a], coords[b]) == (0, 0, 0):
            raise ArrangementError(f"points {a!r} and {b!r} coincide")
    model = make_model(P2, len(ids), ids=ids)
    cluster = Cluster()
    for pid in ids:
        on = {n: 1 for n, v in arr.lines if incident(v, coords[pid])}
        cluster, _ = add_point(cluster, pid=pid, anchor=coords[pid], on=on)
    classes = []
    for n, v in arr.lines:
        classes.append((n, model.plane_class(1, {pid: 1 for pid in ids if incident(v, coords[pid])})))
    edges = []
    for (n1, v1), (n2, v2) in combinations(arr.lines, 2):
        p = _normal(_cross(v1, v2))
        if any(_cross(p, coords[pid]) == (0, 0, 0) for pid in ids):
            continue
        pname = next((n for n, v in arr.named_points if _cross(v, p) == (0, 0, 0)), None)
        pname = pname or "pt(" + ",".join(str(x) for x in p) + ")"
        edges.append(Edge(n1, n2, pname, 1))
    config = build_config(model, classes, edges)
    marked = Cluster.from_json(arr.marked) if arr.marked else Cluster()
    return BuiltArrangement(arr, model, cluster, config, dict(lm), marked)


# ---------------------------------------------------------------- reproduction families

def _pencil_line(i: int) -> tuple[Fraction, ...]:
    # lines through [0:0:1]
    return (Fraction(1), Fraction(-i), Fraction(0))


def _generic_lines(k: int, avoid) -> list[tuple[Fraction, ...]]:
    """Deterministic lines off [0:0:1] in general position with respect to ``avoid``."""
    out: list[tuple[Fraction, ...]] = []
    s = 1
    while len(out) < k:
        cand = (Fraction(s * s + 2), Fraction(3 * s + 1), Fraction(-(2 * s * s + 5 * s + 7)))
        s += 1
        allv = avoid + out
        if any(_cross(cand, v) == (0, 0, 0) for v in allv):
            continue
        ok = True
        # no new triple points away from the pencil vertex
        pts = [_cross(a, b) for a, b in combinations(allv, 2)]
        pts = [p for p in pts if any(p) and _cross(p, (0, 0, 1)) != (0, 0, 0)]
        for p in pts:
            if incident(cand, p):
                ok = False
                break
        if ok and incident(cand, (0, 0, 1)):
            ok = False
        if ok:
            out.append(cand)
    return out


def lines_mult_d_minus_2(d: int) -> ArrangementInput:
    """d lines, d-2 of them through P0, blown up at P0 and where L_{d-1} meets L_1..L_{d-2}."""
    if d < 4:
        raise ArrangementError("need d >= 4")
    pencil = [_pencil_line(i) for i in range(1, d - 1)]
    extra = _generic_lines(2, pencil)
    lines = [(f"L{i + 1}", v) for i, v in enumerate(pencil + extra)]
    blow = ["P0"] + [f"x:L{i}:L{d - 1}" for i in range(1, d - 1)]
    return ArrangementInput(tuple(lines), (("P0", (Fraction(0), Fraction(0), Fraction(1))),),
                            tuple(blow))


D3_POINTS = ((1, 7), (1, 8), (2, 7), (3, 6), (4, 6), (4, 8), (5, 6), (5, 8), (6, 7), (6, 8), (7, 8))


def lines_mult_d_minus_3(d: int = 8) -> ArrangementInput:
    """Eight lines, five through P0, blown up at P0 and eleven nodes."""
    if d != 8:
        raise ArrangementError("this reproduction is defined for d = 8 only")
    pencil = [_pencil_line(i) for i in range(1, 6)]
    extra = _generic_lines(3, pencil)
    lines = [(f"L{i + 1}", v) for i, v in enumerate(pencil + extra)]
    blow = ["P0"] + [f"x:L{i}:L{j}" for i, j in D3_POINTS]
    return ArrangementInput(tuple(lines), (("P0", (Fraction(0), Fraction(0), Fraction(1))),),
                            tuple(blow))


def node_count(arr: ArrangementInput) -> dict[int, int]:
    """Histogram multiplicity -> number of points where that many lines meet."""
    pts: dict[tuple, int] = {}
    for (_, a), (_, b) in combinations(arr.lines, 2):
        p = _normal(_cross(a, b))
        pts.setdefault(p, 0)
    hist: dict[int, int] = {}
    for p in pts:
        k = sum(1 for _, v in arr.lines if incident(v, p))
        hist[k] = hist.get(k, 0) + 1
    return hist
