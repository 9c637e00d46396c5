"""Birational moves at the lattice level and the contraction drivers.

A ``State`` is a surface model together with every tracked irreducible curve
(the components of D plus auxiliary curves), the points where tracked curves
meet, and the marked cluster K.  Primitive steps are point registration,
curve registration, blow-up and contraction of a (-1)-curve; the macros
(elementary transformation, quadratic map, De Jonquieres map) expand into
primitive steps, so every log replays step by step.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from fractions import Fraction
from math import ceil
from typing import Iterable, Mapping, Sequence

from .clusters import Cluster, ClusterPoint, Marking
from .curvegraph import CurveConfig, Edge, build_config
from .lattice import (FN, P2, DivisorClass, InvariantBreach, LatticeError, SurfaceModel,
                      canonical_class, change_basis, pair)


class CremonaError(ValueError):
    pass


class DriverPrecondition(CremonaError):
    pass


# ---------------------------------------------------------------- lattice re-basing

def _fresh_label(used: set[str], stem: str) -> str:
    base = stem.split("~")[0]
    k = 1
    while f"{base}~{k}" in used:
        k += 1
    return f"{base}~{k}"


def _compose(f, g):
    return lambda c: g(f(c))


def _slot_index(model: SurfaceModel, c: DivisorClass) -> int | None:
    nz = [i for i, a in enumerate(c.coeffs) if a != 0]
    if len(nz) == 1 and nz[0] >= model.offset and c.coeffs[nz[0]] == 1:
        return nz[0]
    return None


def _basis(model: SurfaceModel) -> list[DivisorClass]:
    return [model.unit(i) for i in range(model.rank)]


def _to_plane_type(model: SurfaceModel):
    """Isometry from a blown-up F_n lattice onto a blown-up plane lattice."""
    push = lambda c: c  # noqa: E731
    m = model
    used = set(model.exceptionals)
    while m.base == FN:
        b = _basis(m)
        e, f = b[0], b[1]
        if m.n == 1:
            lab = _fresh_label(used, "e")
            used.add(lab)
            new = SurfaceModel(P2, 0, (lab,) + m.exceptionals)
            vecs = [e + f, e] + b[2:]
        else:
            if not m.exceptionals:
                raise CremonaError("cannot present F_n with n != 1 as a plane lattice without a slot")
            s = b[2]
            lab = _fresh_label(used, m.exceptionals[0])
            used.add(lab)
            if m.n >= 2:
                new = SurfaceModel(FN, m.n - 1, (lab,) + m.exceptionals[1:])
                vecs = [e + f - s, f, f - s] + b[3:]
            else:
                new = SurfaceModel(FN, 1, (lab,) + m.exceptionals[1:])
                vecs = [e - s, f, f - s] + b[3:]
        push = _compose(push, change_basis(m, new, vecs))
        m = new
    return m, push


def _reflect(model: SurfaceModel, x: DivisorClass, alpha: DivisorClass) -> DivisorClass:
    return x + alpha * pair(model, x, alpha)


def _noether(model: SurfaceModel, c: DivisorClass, prefer: Sequence[DivisorClass] = ()):
    """Contract a (-1)-class on a blown-up plane lattice: returns (new model, push)."""
    k = len(model.exceptionals)
    alphas: list[DivisorClass] = []
    cur = c
    pref_idx = []
    for p in prefer:
        i = _slot_index(model, p)
        if i is not None:
            pref_idx.append(i)
    for _ in range(10_000):
        if _slot_index(model, cur) is not None:
            break
        d = cur[0]
        if d <= 0:
            raise CremonaError(f"class {cur} is not a (-1)-class reachable by reduction")
        if k == 2:
            break
        if k < 2:
            raise CremonaError(f"no (-1)-curve of degree {d} on a plane blown up once")
        order = sorted(range(1, k + 1),
                       key=lambda i: (cur[i], 0 if i in pref_idx else 1,
                                      pref_idx.index(i) if i in pref_idx else 0, i))
        top = order[:3]
        alpha = model.h() - sum((model.unit(i) for i in top), model.zero())
        t = pair(model, cur, alpha)
        if t >= 0:
            raise CremonaError(f"reduction stalls on {cur}")
        cur = _reflect(model, cur, alpha)
        alphas.append(alpha)
    else:
        raise CremonaError("reduction did not terminate")

    def back(v: DivisorClass) -> DivisorClass:
        for a in reversed(alphas):
            v = _reflect(model, v, a)
        return v

    used = set(model.exceptionals)
    x = _slot_index(model, cur)
    if x is None:
        # two slots and c = H - E1 - E2 after reduction: the quotient is F_0
        b = _basis(model)
        if cur != b[0] - b[1] - b[2]:
            raise CremonaError(f"unexpected (-1)-class {cur} on a plane blown up twice")
        new = SurfaceModel(FN, 0, ())
        vecs = [back(b[0] - b[1]), back(b[0] - b[2])]
        return new, change_basis(model, new, vecs)
    labels, vecs = [], [back(model.h())]
    for i, lab in enumerate(model.exceptionals, start=1):
        if i == x:
            continue
        v = back(model.unit(i))
        if v != model.unit(i):
            lab = _fresh_label(used, lab)
            used.add(lab)
        labels.append(lab)
        vecs.append(v)
    new = SurfaceModel(P2, 0, tuple(labels))
    return new, change_basis(model, new, vecs)


def _solve2(a, b, r):
    """Solve [[a0,a1],[b0,b1]] x = r."""
    det = a[0] * b[1] - a[1] * b[0]
    if det == 0:
        return None
    return ((r[0] * b[1] - a[1] * r[1]) / det, (a[0] * r[1] - r[0] * b[0]) / det)


def present_fn(model: SurfaceModel, hints: Sequence[DivisorClass] = ()):
    """Present a rank-2 lattice as F_n with E taken from the first usable section hint."""
    if model.rank != 2:
        raise CremonaError("only rank-2 lattices are Hirzebruch lattices")
    k = canonical_class(model)
    b = _basis(model)
    for x in hints:
        if x.is_zero() or pair(model, x, x) + pair(model, x, k) != -2:
            continue
        rows = [[pair(model, bi, x) for bi in b], [pair(model, bi, k) for bi in b]]
        sol = _solve2(rows[0], rows[1], (1, -2))
        if sol is None or any(Fraction(s).denominator != 1 for s in sol):
            continue
        f = b[0] * sol[0] + b[1] * sol[1]
        if pair(model, f, f) != 0:
            continue
        e0 = x
        s = pair(model, x, x)
        if s > 0:
            e0 = x - f * ceil(Fraction(s, 2))
        new = SurfaceModel(FN, int(-pair(model, e0, e0)), ())
        return new, change_basis(model, new, [e0, f])
    if model.base == FN:
        return model, (lambda c: c)
    new = SurfaceModel(FN, 1, ())
    return new, change_basis(model, new, [b[1], b[0] - b[1]])


def contract_lattice(model: SurfaceModel, c: DivisorClass, prefer: Sequence[DivisorClass] = ()):
    """New model and push-forward for the contraction of a (-1)-class."""
    k = canonical_class(model)
    if pair(model, c, c) != -1 or pair(model, c, k) != -1:
        raise CremonaError(f"class {c} is not a (-1)-class (C^2 = C.K = -1 fails)")
    i = _slot_index(model, c)
    if i is not None:
        labels = tuple(l for j, l in enumerate(model.exceptionals) if j + model.offset != i)
        new = SurfaceModel(model.base, model.n, labels)
        vecs = [model.unit(j) for j in range(model.rank) if j != i]
        return new, change_basis(model, new, vecs)
    if model.base == FN and model.rank == 2:
        if model.n == 1 and c == model.e():
            new = SurfaceModel(P2, 0, ())
            return new, change_basis(model, new, [model.e() + model.f()])
        raise CremonaError(f"no contractible class {c} on F_{model.n}")
    push = lambda v: v  # noqa: E731
    m = model
    if m.base == FN:
        m, push = _to_plane_type(model)
    new, p2 = _noether(m, push(c), [push(p) for p in prefer])
    return new, _compose(push, p2)


# ---------------------------------------------------------------- state

@dataclass
class State:
    model: SurfaceModel
    curves: dict[str, DivisorClass]
    divisor: list[str]
    edges: list[Edge]
    points: dict[str, dict[str, int]]
    cluster: Cluster = field(default_factory=Cluster)
    over: list[str] = field(default_factory=list)
    aux: dict[str, DivisorClass] = field(default_factory=dict)
    counter: int = 0

    def copy(self) -> "State":
        return copy.deepcopy(self)

    def fresh(self, stem: str) -> str:
        taken = set(self.curves) | set(self.points) | set(self.model.exceptionals) | set(self.cluster.ids)
        while True:
            self.counter += 1
            name = f"{stem}{self.counter}"
            if name not in taken:
                return name

    def cls(self, cid: str) -> DivisorClass:
        try:
            return self.curves[cid]
        except KeyError:
            raise CremonaError(f"unknown curve {cid!r}") from None

    def pair(self, a, b) -> Fraction:
        a = self.cls(a) if isinstance(a, str) else a
        b = self.cls(b) if isinstance(b, str) else b
        return pair(self.model, a, b)

    def divisor_class(self) -> DivisorClass:
        tot = self.model.zero()
        for c in self.divisor:
            tot = tot + self.curves[c]
        return tot

    def config(self) -> CurveConfig:
        ids = set(self.divisor)
        es = [e for e in self.edges if e.i in ids and e.j in ids]
        return build_config(self.model, [(c, self.curves[c]) for c in self.divisor], es)

    def marking(self) -> Marking:
        return Marking(self.config(), self.cluster)

    def curves_at(self, pid: str) -> dict[str, int]:
        return dict(self.points.get(pid, {}))

    def check(self) -> None:
        """Edge weights must reproduce the lattice pairing for every pair of tracked curves."""
        ids = list(self.curves)
        tot: dict[tuple[str, str], int] = {}
        for e in self.edges:
            key = tuple(sorted((e.i, e.j)))
            tot[key] = tot.get(key, 0) + e.weight
        for i, a in enumerate(ids):
            for b in ids[i + 1:]:
                want = self.pair(a, b)
                got = tot.get(tuple(sorted((a, b))), 0)
                if want != got:
                    raise InvariantBreach(f"curves {a!r}, {b!r}: edges {got}, lattice {want}")

    def to_json(self) -> dict:
        return {
            "model": {"base": self.model.base, "n": self.model.n,
                      "exceptionals": list(self.model.exceptionals)},
            "curves": {c: v.to_json() for c, v in self.curves.items()},
            "divisor": list(self.divisor),
            "edges": [[e.i, e.j, e.point, e.weight] for e in self.edges],
            "points": {p: dict(sorted(on.items())) for p, on in self.points.items()},
            "cluster": self.cluster.to_json(),
            "over": list(self.over),
            "aux": {k: v.to_json() for k, v in self.aux.items()},
            "counter": self.counter,
        }

    @staticmethod
    def from_json(d: Mapping) -> "State":
        mm = d["model"]
        model = SurfaceModel(mm["base"], mm["n"], tuple(mm["exceptionals"]))
        return State(
            model,
            {c: DivisorClass.of(Fraction(x) for x in v) for c, v in d["curves"].items()},
            list(d["divisor"]),
            [Edge(*e) for e in d["edges"]],
            {p: dict(on) for p, on in d["points"].items()},
            Cluster.from_json(d["cluster"]),
            list(d["over"]),
            {k: DivisorClass.of(Fraction(x) for x in v) for k, v in d.get("aux", {}).items()},
            int(d.get("counter", 0)),
        )


def state_from_config(config: CurveConfig, cluster: Cluster | None = None,
                      extra_curves: Sequence[tuple[str, DivisorClass, Mapping[str, int]]] = ()) -> State:
    """Tracked state for a configuration.

    ``extra_curves``: auxiliary curves (id, class, {point id: multiplicity});
    their remaining intersections with other curves go to fresh general points.
    """
    st = State(config.model, {c.id: c.cls for c in config.components}, list(config.ids),
               list(config.edges), {}, Cluster())
    for e in config.edges:
        st.points.setdefault(e.point, {})
        st.points[e.point][e.i] = 1
        st.points[e.point][e.j] = 1
    cluster = cluster or Cluster()
    for p in cluster.points:
        if p.is_proper:
            on = dict(p.on)
            for c in on:
                if c not in st.curves:
                    raise CremonaError(f"marked point {p.id!r} lies on unknown curve {c!r}")
            if p.id in st.points:
                if set(on) - set(st.points[p.id]):
                    raise CremonaError(f"marked point {p.id!r} disagrees with the edge data")
            else:
                if len(on) > 1:
                    raise CremonaError(f"marked point {p.id!r} on several curves must be an edge point")
                st.points[p.id] = on
    st.cluster = cluster
    for cid, cls, through in extra_curves:
        _register_curve(st, cid, cls, through, False)
    st.check()
    return st


# ---------------------------------------------------------------- primitive steps

def _register_point(st: State, pid: str, on: Mapping[str, int]) -> None:
    if pid in st.points:
        raise CremonaError(f"point {pid!r} already exists")
    if len(on) > 1:
        raise CremonaError("new general points lie on at most one tracked curve")
    for c in on:
        st.cls(c)
    st.points[pid] = {c: int(m) for c, m in on.items()}


def _register_curve(st: State, cid: str, cls: DivisorClass, through: Mapping[str, int],
                    in_divisor: bool) -> None:
    if cid in st.curves:
        raise CremonaError(f"curve {cid!r} already exists")
    if not cls.is_integral():
        raise CremonaError("curve classes are integral")
    known: dict[str, int] = {}
    new_edges = []
    if any(int(mu) < 0 for mu in through.values()):
        raise CremonaError("multiplicities are non-negative")
    through = {pid: mu for pid, mu in through.items() if int(mu) > 0}
    for pid, mu in through.items():
        if pid not in st.points:
            raise CremonaError(f"unknown point {pid!r}")
        for other, m2 in st.points[pid].items():
            w = int(mu) * int(m2)
            known[other] = known.get(other, 0) + w
            new_edges.append(Edge(cid, other, pid, w))
    for other in list(st.curves):
        want = pair(st.model, cls, st.curves[other])
        r = want - known.get(other, 0)
        if r < 0:
            raise CremonaError(f"curve {cid!r} meets {other!r} more often ({known.get(other, 0)}) than "
                               f"the lattice allows ({want})")
        for _ in range(int(r)):
            g = st.fresh("g")
            st.points[g] = {other: 1}
            new_edges.append(Edge(cid, other, g, 1))
            through = dict(through)
            through[g] = 1
    st.curves[cid] = cls
    for pid, mu in through.items():
        st.points[pid][cid] = int(mu)
    st.edges.extend(new_edges)
    if in_divisor:
        st.divisor.append(cid)


def _new_slot(st: State, pid: str) -> str:
    lab = pid
    taken = set(st.model.exceptionals) | set(st.curves)
    if lab in taken:
        k = 1
        while f"{pid}#{k}" in taken:
            k += 1
        lab = f"{pid}#{k}"
    return lab


def _rebuild_cluster(points: list[ClusterPoint]) -> Cluster:
    by_id = {p.id: p for p in points}

    def order(p):
        o = 0
        while p.parent is not None:
            p = by_id[p.parent]
            o += 1
        return o

    out = []
    placed: set[str] = set()
    pending = list(points)
    while pending:
        rest = []
        for p in pending:
            if p.parent is None or p.parent in placed:
                q = ClusterPoint(p.id, p.parent, order(p), p.anchor if p.parent is None else None,
                                 p.carrier, p.jet, p.on)
                out.append(q)
                placed.add(p.id)
            else:
                rest.append(p)
        if len(rest) == len(pending):
            raise CremonaError("cluster parent structure is cyclic")
        pending = rest
    return Cluster(tuple(out))


def _blow_up(st: State, pid: str) -> str:
    """Blow up a registered point; returns the id of the new exceptional curve."""
    if pid not in st.points:
        raise CremonaError(f"cannot blow up unknown point {pid!r}")
    on = st.points.pop(pid)
    lab = _new_slot(st, pid)
    model = st.model.blown_up(lab)
    st.model = model
    ex = model.exc(lab)
    st.curves = {c: model.extend(v) for c, v in st.curves.items()}
    st.aux = {k: model.extend(v) for k, v in st.aux.items()}
    for c, mu in on.items():
        st.curves[c] = st.curves[c] - ex * mu
    # tangency groups: curves still meeting after the blow-up share a direction
    group = {c: c for c in on}

    def find(c):
        while group[c] != c:
            c = group[c]
        return c

    kept, residual = [], []
    for e in st.edges:
        if e.point != pid:
            kept.append(e)
            continue
        r = e.weight - on.get(e.i, 1) * on.get(e.j, 1)
        if r > 0:
            residual.append((e.i, e.j, r))
            if on.get(e.i, 1) == 1 and on.get(e.j, 1) == 1:
                group[find(e.i)] = find(e.j)
    marked = pid in st.cluster
    kids = {}
    if marked:
        for ch in st.cluster.children(pid):
            kids[ch.carrier] = ch.id
    dir_of: dict[str, list[str]] = {}
    new_points: dict[str, dict[str, int]] = {}
    for c in sorted(on):
        mu = on[c]
        if mu == 1:
            root = find(c)
            members = sorted(x for x in on if on[x] == 1 and find(x) == root)
            name = next((kids[x] for x in members if x in kids), None) or f"{lab}/{members[0]}"
            dir_of[c] = [name]
            new_points.setdefault(name, {lab: 1})[c] = 1
        else:
            names = [f"{lab}/{c}#{k}" for k in range(mu)]
            dir_of[c] = names
            for nm in names:
                new_points.setdefault(nm, {lab: 1})[c] = 1
    for c, names in dir_of.items():
        for nm in names:
            kept.append(Edge(lab, c, nm, 1))
    for a, b, r in residual:
        shared = set(dir_of.get(a, [])) & set(dir_of.get(b, []))
        nm = sorted(shared)[0] if shared else f"{lab}/{a}+{b}"
        new_points.setdefault(nm, {lab: 1})
        new_points[nm].setdefault(a, 1)
        new_points[nm].setdefault(b, 1)
        kept.append(Edge(a, b, nm, r))
    st.edges = kept
    st.curves[lab] = ex
    if marked:
        pts = []
        for p in st.cluster.points:
            if p.id == pid:
                continue
            if p.parent == pid:
                if p.id not in new_points:
                    new_points[p.id] = {lab: 1}
                p = ClusterPoint(p.id, None, 0, None, p.carrier, p.jet,
                                 tuple(sorted(new_points[p.id].items())))
            pts.append(p)
        st.cluster = _rebuild_cluster(pts)
        st.over.append(lab)
    st.points.update(new_points)
    return lab


def _contract(st: State, cid: str, prefer: Sequence[str] = (), hints: Sequence[str] = ()) -> str:
    """Contract a tracked (-1)-curve; returns the id of the image point."""
    c = st.cls(cid)
    prefer_cls = [st.curves[p] for p in prefer if p in st.curves]
    new, push = contract_lattice(st.model, c, prefer_cls)
    img = f"img:{cid}"
    while img in st.points:
        img += "'"
    meet = {o: int(st.pair(o, cid)) for o in st.curves if o != cid}
    meet = {o: v for o, v in meet.items() if v > 0}
    on_x = [p for p, on in st.points.items() if cid in on]
    # edges: drop those on the curve, move those at points of the curve, add new contacts
    w: dict[tuple[str, str], int] = {}
    kept = []
    for e in st.edges:
        if cid in (e.i, e.j):
            continue
        if e.point in on_x:
            key = tuple(sorted((e.i, e.j)))
            w[key] = w.get(key, 0) + e.weight
        else:
            kept.append(e)
    ids = sorted(meet)
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            key = (a, b)
            w[key] = w.get(key, 0) + meet[a] * meet[b]
    for (a, b), wt in sorted(w.items()):
        kept.append(Edge(a, b, img, wt))
    st.edges = kept
    marked_on = [p for p in on_x if p in st.cluster]
    for p in on_x:
        st.points.pop(p)
    del st.curves[cid]
    st.curves = {o: push(v) for o, v in st.curves.items()}
    st.aux = {k: push(v) for k, v in st.aux.items()}
    st.model = new
    st.points[img] = dict(meet)
    in_d = cid in st.divisor
    if in_d:
        st.divisor.remove(cid)
    was_over = cid in st.over
    if was_over:
        st.over.remove(cid)
    if in_d or was_over or marked_on:
        pts = [ClusterPoint(img, None, 0, None, None, None, tuple(sorted(meet.items())))]
        for p in st.cluster.points:
            if p.id in marked_on:
                others = sorted(o for o in st.cluster.get(p.id).curves() if o != cid)
                p = ClusterPoint(p.id, img, 1, None, others[0] if others else None, p.jet, ())
            pts.append(p)
        st.cluster = _rebuild_cluster(pts)
    if st.model.rank == 2 and hints:
        hint_cls = [st.curves[h] for h in hints if h in st.curves]
        if hint_cls:
            new2, push2 = present_fn(st.model, hint_cls)
            st.curves = {o: push2(v) for o, v in st.curves.items()}
            st.aux = {k: push2(v) for k, v in st.aux.items()}
            st.model = new2
    return img


def apply_step(st: State, step: Mapping) -> dict:
    """Apply one primitive step in place; returns what it produced."""
    op = step["op"]
    if "counter" in step:
        st.counter = int(step["counter"])
    if op == "point":
        _register_point(st, step["id"], step.get("on", {}))
        return {"point": step["id"]}
    if op == "curve":
        cls = DivisorClass.of(Fraction(x) for x in step["class"])
        _register_curve(st, step["id"], cls, step.get("through", {}), step.get("divisor", False))
        return {"curve": step["id"]}
    if op == "aux":
        st.aux[step["id"]] = DivisorClass.of(Fraction(x) for x in step["class"])
        return {}
    if op == "drop_aux":
        st.aux.pop(step["id"], None)
        return {}
    if op == "blow_up":
        lab = _blow_up(st, step["point"])
        if "expect" in step and step["expect"] != lab:
            raise CremonaError(f"replay mismatch: expected slot {step['expect']!r}, got {lab!r}")
        return {"curve": lab}
    if op == "contract":
        img = _contract(st, step["curve"], step.get("prefer", ()), step.get("hints", ()))
        return {"point": img}
    if op == "present":
        hint_cls = [st.curves[h] for h in step.get("hints", ()) if h in st.curves]
        new, push = present_fn(st.model, hint_cls)
        st.curves = {o: push(v) for o, v in st.curves.items()}
        st.aux = {k: push(v) for k, v in st.aux.items()}
        st.model = new
        return {}
    raise CremonaError(f"unknown step {op!r}")


# ---------------------------------------------------------------- logs and maps

@dataclass
class MacroRecord:
    kind: str
    detail: dict
    steps: list[dict]
    divisorial: list[str] = field(default_factory=list)
    counter: int = 0

    def to_json(self) -> dict:
        return {"kind": self.kind, "detail": self.detail, "steps": self.steps,
                "divisorial": self.divisorial, "counter": self.counter}


class Session:
    """Runs primitive steps on a state and groups them into macro records."""

    def __init__(self, state: State):
        self.state = state
        self.log: list[MacroRecord] = []
        self._open: MacroRecord | None = None

    def begin(self, kind: str, **detail) -> None:
        if self._open is not None:
            raise CremonaError("macro already open")
        self._open = MacroRecord(kind, _jsonable(detail), [])
        self._over_start = set(self.state.over)

    def end(self) -> MacroRecord:
        rec = self._open
        if rec is None:
            raise CremonaError("no macro open")
        rec.divisorial = _settle_divisorial(self.state)
        rec.counter = self.state.counter
        self.log.append(rec)
        self._open = None
        return rec

    def step(self, **step) -> dict:
        if self._open is None:
            raise CremonaError("steps run inside a macro")
        step = dict(step, counter=self.state.counter)
        out = apply_step(self.state, step)
        if step["op"] == "blow_up":
            step = dict(step, expect=out["curve"])
        self._open.steps.append(_jsonable(step))
        return out


def _settle_divisorial(st: State) -> list[str]:
    """Exceptional curves over marked points that survive a macro join the divisor."""
    out = []
    for c in list(st.over):
        if c in st.curves:
            out.append(c)
            if c not in st.divisor:
                st.divisor.append(c)
    st.over = []
    return out


def _jsonable(x):
    if isinstance(x, DivisorClass):
        return x.to_json()
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, Mapping):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


@dataclass
class BirationalMap:
    source: SurfaceModel
    steps: list[dict]
    macros: list[MacroRecord] = field(default_factory=list)


@dataclass
class RunResult:
    state: State
    marking: Marking
    cluster_divisorial: list[str]


def run_map(bmap: BirationalMap, marking: Marking, extra_curves=()) -> RunResult:
    """Push a marking through a map given as primitive steps."""
    if marking.divisor.model != bmap.source:
        raise CremonaError("map source does not match the marking's model")
    st = state_from_config(marking.divisor, marking.cluster, extra_curves)
    div: list[str] = []
    for s in bmap.steps:
        apply_step(st, s)
    div = _settle_divisorial(st)
    return RunResult(st, st.marking(), div)


def replay(log: Mapping) -> State:
    """Re-execute a serialized log from its initial state."""
    st = State.from_json(log["initial"])
    for rec in log["macros"]:
        for s in rec["steps"]:
            apply_step(st, s)
        got = _settle_divisorial(st)
        if got != list(rec.get("divisorial", got)):
            raise CremonaError(f"replay mismatch in {rec['kind']}: divisorial part {got}")
        st.counter = int(rec.get("counter", st.counter))
    return st


# ---------------------------------------------------------------- macros

def blow_up(session: Session, pid: str) -> str:
    session.begin("BlowUp", point=pid)
    lab = session.step(op="blow_up", point=pid)["curve"]
    session.end()
    return lab


def contract(session: Session, cid: str, hints: Sequence[str] = ()) -> str:
    session.begin("Contract", curve=cid)
    img = session.step(op="contract", curve=cid, hints=list(hints))["point"]
    session.end()
    return img


def general_point(session: Session, on: str | None = None, stem: str = "p") -> str:
    pid = session.state.fresh(stem)
    session.step(op="point", id=pid, on={on: 1} if on else {})
    return pid


def _curve_through(st: State, pts: Sequence[str], degree_one: bool = True) -> str | None:
    for c in st.curves:
        if all(c in st.points.get(p, {}) for p in pts):
            if not degree_one or (st.model.base == P2 and st.curves[c][0] == 1):
                return c
    return None


def fiber_through(st: State, pid: str) -> str | None:
    if st.model.base != FN:
        return None
    for c in st.points.get(pid, {}):
        if st.curves[c] == st.model.f():
            return c
    return None


def elementary(session: Session, pid: str, section: str) -> str:
    """Elementary transformation at a registered point of an F_n model."""
    st = session.state
    if st.model.base != FN:
        raise CremonaError("elementary transformations need an F_n model")
    on_e = section in st.points.get(pid, {})
    session.begin("Elementary", point=pid, on_section=on_e, n=st.model.n)
    fib = fiber_through(st, pid)
    if fib is None:
        fib = st.fresh("fib")
        session.step(op="curve", id=fib, **{"class": st.model.f().to_json()}, through={pid: 1})
    lab = session.step(op="blow_up", point=pid)["curve"]
    session.step(op="contract", curve=fib, hints=[section])
    session.end()
    st = session.state
    s2 = st.pair(section, section)
    if s2 <= 0 and st.model.n != -s2:
        raise InvariantBreach(f"elementary transformation gave F_{st.model.n}, section square {s2}")
    return lab


def quadratic_map(session: Session, a: str, b: str, c: str) -> None:
    """Quadratic transformation based at three registered, non-collinear points."""
    st = session.state
    if st.model.base != P2:
        raise CremonaError("quadratic maps act on blown-up planes")
    if len({a, b, c}) != 3:
        raise CremonaError("base points must be distinct")
    if _curve_through(st, [a, b, c]) is not None:
        raise CremonaError("collinear base points")
    session.begin("Quadratic", points=[a, b, c])
    lines = {}
    for p, q in ((a, b), (a, c), (b, c)):
        ln = _curve_through(session.state, [p, q])
        if ln is None:
            ln = session.state.fresh("ln")
            session.step(op="curve", id=ln, **{"class": session.state.model.h().to_json()},
                         through={p: 1, q: 1})
        lines[(p, q)] = ln
    ex = {p: session.step(op="blow_up", point=p)["curve"] for p in (a, b, c)}
    session.step(op="contract", curve=lines[(a, b)], prefer=[ex[c]])
    session.step(op="contract", curve=lines[(a, c)], prefer=[ex[b]])
    session.step(op="contract", curve=lines[(b, c)], prefer=[ex[a]])
    session.end()


def _chain_depth(cluster: Cluster, q: str, carrier: str) -> int:
    """Number of marked points in the chain at ``q`` along ``carrier`` (0 if q is unmarked)."""
    if q not in cluster:
        return 0
    depth, cur = 1, q
    while True:
        nxt = [ch for ch in cluster.children(cur) if ch.carrier == carrier]
        if not nxt:
            return depth
        depth += 1
        cur = nxt[0].id


def dejonquieres(session: Session, e_id: str, c_id: str) -> int:
    """De Jonquieres map F_1 -> P2 sending C to a line and E to a point.

    Base points: chains along C at the points of E n C, long enough to protect
    the marked cluster, plus general points of E.  Returns the degree m.
    """
    st = session.state
    if st.model.base != FN or st.model.n != 1 or st.model.rank != 2:
        raise CremonaError("the De Jonquieres step starts on F_1")
    if st.curves[e_id] != st.model.e():
        raise CremonaError(f"{e_id!r} is not the (-1)-section")
    cc = st.curves[c_id]
    d = int(cc[1])
    if cc[0] != 1:
        raise CremonaError(f"{c_id!r} is not a section")
    meets = [e for e in st.edges if {e.i, e.j} == {e_id, c_id}]
    qs = [(e.point, e.weight) for e in meets]
    depth = [_chain_depth(st.cluster, q, c_id) for q, _ in qs]
    ks = [max(0, dp) for dp in depth]
    i = 0
    while sum(ks) + 1 <= d:
        ks[i % len(ks) if ks else 0] += 1
        i += 1
    m = sum(ks) + 1
    session.begin("DeJonquieres", degree=m, section=c_id, contracted=e_id,
                  chains={q: nj + k for (q, nj), k in zip(qs, ks)}, general_on_section=m - d)
    gens = [general_point(session, e_id, "gE") for _ in range(m - d)]
    for p in [q for q, _ in qs] + gens:
        if fiber_through(session.state, p) is not None:
            continue
        fb = session.state.fresh("fib")
        session.step(op="curve", id=fb, **{"class": session.state.model.f().to_json()},
                     through={p: 1})
    net = session.state.model.e() + session.state.model.f() * m
    session.step(op="aux", id="net", **{"class": net.to_json()})
    for (q, nj), k in zip(qs, ks):
        cur = q
        for step_i in range(nj + k):
            lab = session.step(op="blow_up", point=cur)["curve"]
            session.step(op="aux", id="net",
                         **{"class": (session.state.aux["net"] - session.state.model.exc(lab)).to_json()})
            if step_i + 1 < nj + k:
                nxt = [p for p, on in session.state.points.items() if lab in on and c_id in on]
                if len(nxt) != 1:
                    raise CremonaError("could not follow the carrier through the blow-up")
                cur = nxt[0]
    for g in gens:
        lab = session.step(op="blow_up", point=g)["curve"]
        session.step(op="aux", id="net",
                     **{"class": (session.state.aux["net"] - session.state.model.exc(lab)).to_json()})
    st = session.state
    net = st.aux["net"]
    k = canonical_class(st.model)
    if pair(st.model, net, net) != 1 or pair(st.model, net, k) != -3:
        raise InvariantBreach("base data do not give a homaloidal net")
    while st.model.rank > 1:
        cand = [c for c in st.curves
                if st.pair(c, c) == -1 and pair(st.model, st.curves[c], k) == -1
                and pair(st.model, st.curves[c], st.aux["net"]) == 0]
        if not cand:
            raise CremonaError("no contractible curve orthogonal to the net")
        session.step(op="contract", curve=cand[0])
        st = session.state
        k = canonical_class(st.model)
    if st.aux["net"] != st.model.h():
        raise InvariantBreach("the net is not the line class after the contractions")
    session.step(op="drop_aux", id="net")
    session.end()
    return m


# ---------------------------------------------------------------- small models, driver

def offends_smallness(st: State, cid: str) -> bool:
    k = canonical_class(st.model)
    c = st.curves[cid]
    return (pair(st.model, c, c) == -1 and pair(st.model, c, k) == -1
            and pair(st.model, c, st.divisor_class()) <= 1)


def small_model(session: Session, hints: Sequence[str] = ()) -> int:
    """Contract tracked (-1)-curves with E.D <= 1, lowest id first."""
    count = 0
    while True:
        cand = [c for c in session.state.curves if offends_smallness(session.state, c)]
        if not cand:
            return count
        contract(session, cand[0], hints=_section_hints(session.state, hints))
        count += 1


def _section_hints(st: State, hints: Sequence[str] = ()) -> list[str]:
    """Tracked curves to use as the section when a rank-2 model appears."""
    out = [h for h in hints if h in st.curves]
    rest = sorted((c for c in st.divisor if c not in out),
                  key=lambda c: (st.pair(c, c), list(st.curves).index(c)))
    return out + rest


@dataclass
class ContractionResult:
    kind: str  # Contracted | Obstructed | GaveUp
    reason: str
    log: dict
    final: State | None = None

    def to_json(self) -> dict:
        out = {"kind": self.kind, "reason": self.reason, "log": self.log}
        if self.final is not None:
            out["final"] = self.final.to_json()
        return out


def contract_line(session: Session) -> None:
    """Quadratic map at two general points of the line and one general point."""
    st = session.state
    (line,) = st.divisor
    session.begin("ChoosePoints", purpose="quadratic map at two points of the line")
    a = general_point(session, line, "a")
    b = general_point(session, line, "b")
    c = general_point(session, None, "c")
    session.end()
    quadratic_map(session, a, b, c)


def contract_conic(session: Session) -> None:
    (q,) = session.state.divisor
    session.begin("ChoosePoints", purpose="quadratic map at three points of the conic")
    pts = [general_point(session, q, s) for s in ("a", "b", "c")]
    session.end()
    quadratic_map(session, *pts)
    contract_line(session)


def _is_line(st: State, c: str) -> bool:
    return st.model.base == P2 and st.curves[c] == st.model.h()


def _fn_shape(st: State):
    """(E id, C id, fiber ids) when D = E + C + fibers on F_n, else None."""
    if st.model.base != FN or st.model.rank != 2:
        return None
    e = st.model.e()
    f = st.model.f()
    es = [c for c in st.divisor if st.curves[c] == e][:1]
    fibs = [c for c in st.divisor if st.curves[c] == f]
    rest = [c for c in st.divisor if c not in es and c not in fibs]
    secs = [c for c in rest if st.curves[c][0] == 1]
    if len(secs) != 1 or len(rest) != 1 or len(es) > 1:
        return None
    return (es[0] if es else None, secs[0], fibs)


def contract_fn(session: Session, e_id: str | None, c_id: str, fibers: Sequence[str]) -> None:
    """Route for D = eps E + C + fibers on F_n."""
    hints = [e_id or c_id]
    for fb in fibers:
        session.begin("ChoosePoints", purpose=f"general point of the fiber {fb}")
        p = general_point(session, fb, "f")
        session.end()
        elementary(session, p, hints[0])
    st = session.state
    shape = _fn_shape(st)
    if fibers and shape is not None and not shape[2]:
        # on F_0 a re-presentation may swap the rulings, so read the shape again
        e_id, c_id = shape[0], shape[1]
    if e_id is None:
        # C alone: make it the (-1)-section's partner on F_1 via moves off C
        while st.model.n > 1:
            session.begin("ChoosePoints", purpose="general point")
            p = general_point(session, None, "u")
            session.end()
            elementary(session, p, c_id)
            st = session.state
        known = [c for c in st.curves if c not in st.divisor and st.curves[c] == st.model.e()]
        if known:
            e_id = known[0]
        else:
            e_id = st.fresh("sec")
            session.begin("AddSection", purpose="track the negative section")
            session.step(op="curve", id=e_id, **{"class": st.model.e().to_json()}, through={})
            session.end()
    while True:
        st = session.state
        s = st.pair(e_id, e_id)
        if s == -1:
            break
        session.begin("ChoosePoints", purpose="general point for an elementary transformation")
        if s < -1:
            p = general_point(session, None, "u")
        else:
            p = general_point(session, e_id, "v")
        session.end()
        elementary(session, p, e_id)
    st = session.state
    d = int(st.curves[c_id][1])
    if d <= 1:
        contract(session, e_id)
        if not _is_line(session.state, c_id):
            raise CremonaError("section did not become a line")
    else:
        dejonquieres(session, e_id, c_id)
    contract_line(session)


def _settle_shape(session: Session) -> str:
    st = session.state
    if not st.divisor:
        return "empty"
    if st.model.base == P2 and st.model.rank == 1 and len(st.divisor) == 1:
        c = st.curves[st.divisor[0]]
        if c[0] == 1:
            return "line"
        if c[0] == 2:
            return "conic"
    if st.model.rank == 2 and st.model.base == P2:
        session.begin("Present", hints=_section_hints(st))
        session.step(op="present", hints=_section_hints(st))
        session.end()
    if _fn_shape(session.state) is not None:
        return "fn"
    return "other"


def contract_driver(config: CurveConfig, cluster: Cluster | None = None, *,
                    extra_curves=(), kod=None, m_max: int = 12,
                    coords: Cluster | None = None, lines=None,
                    check_precondition: bool = True) -> ContractionResult:
    """Try to contract D while never blowing up the marked cluster."""
    from .linsys import kod_estimate
    from .peeling import almost_minimalize, classify_obstruction

    if check_precondition:
        if kod is None:
            kod = kod_estimate(config, m_max, coords, lines)
        if kod.kind != "MinusInfinityUpTo":
            raise DriverPrecondition(f"log Kodaira dimension check gave {kod.kind} at m = {kod.m}")
    st = state_from_config(config, cluster, extra_curves)
    initial = st.to_json()
    session = Session(st)
    protected = cluster or Cluster()

    def result(kind: str, reason: str) -> ContractionResult:
        log = {"initial": initial, "macros": [r.to_json() for r in session.log]}
        return ContractionResult(kind, reason, log, session.state)

    try:
        small_model(session)
        shape = _settle_shape(session)
        if shape == "other":
            almost_minimalize(session=session)
            shape = _settle_shape(session)
        if shape == "other":
            st = session.state
            tracked = [(c, st.curves[c]) for c in st.curves if c not in st.divisor]
            verdict = classify_obstruction(st.config(), tracked, require_minimal=False)
            if verdict.kind in ("DelPezzoRank1Shrinkable", "NonAdmissibleFork"):
                return result("Obstructed", f"{verdict.kind}: {verdict.detail}")
            return result("GaveUp", f"no route for the configuration ({verdict.kind})")
        if shape == "line":
            contract_line(session)
        elif shape == "conic":
            contract_conic(session)
        elif shape == "fn":
            e_id, c_id, fibs = _fn_shape(session.state)
            contract_fn(session, e_id, c_id, fibs)
    except CremonaError as exc:
        return result("GaveUp", f"{type(exc).__name__}: {exc}")
    blown = [c for r in session.log for c in r.divisorial]
    if blown:
        return result("GaveUp", f"marked cluster blown up along {blown}")
    if session.state.divisor:
        return result("GaveUp", f"divisorial part {session.state.divisor} remains")
    return result("Contracted", f"{len(session.log)} macro steps")


def small_model_config(config: CurveConfig, cluster: Cluster | None = None, extra_curves=()):
    st = state_from_config(config, cluster, extra_curves)
    session = Session(st)
    small_model(session)
    return session.state, session.log


# ---------------------------------------------------------------- Fujita threshold

@dataclass(frozen=True)
class FujitaResult:
    m: int | None
    claim_applies: bool
    claim_holds: bool | None
    warning: str = ""


def fujita_threshold(model: SurfaceModel, config: CurveConfig, e: DivisorClass, m_max: int,
                     cluster: Cluster, lines=None) -> FujitaResult:
    """Largest m <= m_max with |E + m(K+D)| non-empty and |E + (m+1)(K+D)| empty."""
    from .curvegraph import is_one_connected
    from .linsys import LinSysSpec, h0_oracle

    k = canonical_class(model)
    dk = config.total_class() + k
    applies = False
    if pair(model, config.total_class(), e) >= 2 and config.components:
        parts = [(c.cls, 1) for c in config.components]
        applies = is_one_connected(model, parts + [(e, 1)])
    prev = h0_oracle(LinSysSpec(model, e), cluster, lines)
    if prev == 0:
        return FujitaResult(None, applies, False if applies else None,
                            "|E| is empty: inconsistent with E being a (-1)-curve")
    for m in range(0, m_max + 1):
        nxt = h0_oracle(LinSysSpec(model, e + dk * (m + 1)), cluster, lines)
        if nxt == 0:
            return FujitaResult(m, applies, (m > 0) if applies else None)
    return FujitaResult(None, applies, None, f"non-empty up to m_max = {m_max}")
