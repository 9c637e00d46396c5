"""Weighted dual graphs of reduced curve configurations.

Vertices are the irreducible components, edges are intersection points
weighted by local intersection multiplicity.  Classification follows the
peeling vocabulary: twigs, rods, forks, admissibility, branching numbers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations, product
from typing import Iterable, Mapping, Sequence

from .lattice import (DivisorClass, InvariantBreach, LatticeError, SurfaceModel,
                      arithmetic_genus, canonical_class, pair)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Component:
    id: str
    cls: DivisorClass
    self_int: int
    pa: int


@dataclass(frozen=True)
class Edge:
    i: str
    j: str
    point: str
    weight: int = 1


@dataclass(frozen=True)
class CurveConfig:
    model: SurfaceModel
    components: tuple[Component, ...]
    edges: tuple[Edge, ...]

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(c.id for c in self.components)

    def component(self, cid: str) -> Component:
        for c in self.components:
            if c.id == cid:
                return c
        raise ConfigError(f"no component {cid!r}")

    def has(self, cid: str) -> bool:
        return any(c.id == cid for c in self.components)

    def sum_class(self, ids: Iterable[str]) -> DivisorClass:
        tot = self.model.zero()
        for cid in ids:
            tot = tot + self.component(cid).cls
        return tot

    def total_class(self) -> DivisorClass:
        return self.sum_class(self.ids)

    def m(self, a: str, b: str) -> int:
        return sum(e.weight for e in self.edges if {e.i, e.j} == {a, b})

    def neighbors(self, cid: str) -> tuple[str, ...]:
        out = []
        for e in self.edges:
            if e.i == cid and e.j not in out:
                out.append(e.j)
            elif e.j == cid and e.i not in out:
                out.append(e.i)
        return tuple(sorted(out, key=self.ids.index))

    def valency(self, cid: str) -> int:
        return sum(e.weight for e in self.edges if cid in (e.i, e.j))

    def connected_components(self, ids: Iterable[str] | None = None) -> list[tuple[str, ...]]:
        pool = list(self.ids if ids is None else ids)
        allowed = set(pool)
        seen: set[str] = set()
        parts = []
        for start in pool:
            if start in seen:
                continue
            stack, part = [start], []
            seen.add(start)
            while stack:
                cur = stack.pop()
                part.append(cur)
                for nb in self.neighbors(cur):
                    if nb in allowed and nb not in seen:
                        seen.add(nb)
                        stack.append(nb)
            parts.append(tuple(sorted(part, key=self.ids.index)))
        return parts

    def to_json(self) -> dict:
        return {
            "model": {"base": self.model.base, "n": self.model.n,
                      "exceptionals": list(self.model.exceptionals)},
            "components": [{"id": c.id, "class": c.cls.to_json(), "self_int": c.self_int,
                            "pa": c.pa} for c in self.components],
            "edges": [{"i": e.i, "j": e.j, "point": e.point, "weight": e.weight}
                      for e in self.edges],
        }


def make_component(model: SurfaceModel, cid: str, cls: DivisorClass) -> Component:
    if not cls.is_integral():
        raise ConfigError(f"component {cid!r} has a non-integral class")
    pa = arithmetic_genus(model, cls)
    if pa < 0:
        raise ConfigError(f"component {cid!r} has p_a = {pa} < 0, not an irreducible curve")
    return Component(cid, cls, int(pair(model, cls, cls)), pa)


def build_config(model: SurfaceModel, classes, edges: Sequence = ()) -> CurveConfig:
    """Validate and assemble a configuration.

    ``classes``: mapping or sequence of (id, DivisorClass).
    ``edges``: Edge objects or tuples (i, j, point[, weight]).  Pairs of
    components with no listed edge must be disjoint in the lattice.
    """
    items = list(classes.items()) if isinstance(classes, Mapping) else list(classes)
    comps = tuple(make_component(model, cid, cls) for cid, cls in items)
    ids = [c.id for c in comps]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate component ids")
    for a, b in combinations(comps, 2):
        if a.cls == b.cls and a.self_int < 0:
            raise ConfigError(f"components {a.id!r} and {b.id!r} are the same rigid curve")
    es = []
    for e in edges:
        if not isinstance(e, Edge):
            e = Edge(*e)
        if e.i == e.j:
            raise ConfigError("edges join distinct components")
        if e.i not in ids or e.j not in ids:
            raise ConfigError(f"edge {e} references an unknown component")
        if e.weight <= 0:
            raise ConfigError("edge weights are positive")
        es.append(e)
    cfg = CurveConfig(model, comps, tuple(es))
    check_config(cfg)
    return cfg


def check_config(cfg: CurveConfig) -> None:
    pts: dict[tuple[str, str], set[str]] = {}
    for e in cfg.edges:
        key = tuple(sorted((e.i, e.j)))
        if e.point in pts.setdefault(key, set()):
            raise ConfigError(f"point {e.point!r} listed twice for the pair {key}")
        pts[key].add(e.point)
    for a, b in combinations(cfg.components, 2):
        want = pair(cfg.model, a.cls, b.cls)
        got = cfg.m(a.id, b.id)
        if want != got:
            raise ConfigError(
                f"edges between {a.id!r} and {b.id!r} sum to {got}, lattice says {want}")
    for c in cfg.components:
        if c.self_int != pair(cfg.model, c.cls, c.cls):
            raise ConfigError(f"self-intersection of {c.id!r} is stale")
        if c.pa != arithmetic_genus(cfg.model, c.cls):
            raise ConfigError(f"arithmetic genus of {c.id!r} is stale")


def pa_of_connected(cfg: CurveConfig, ids: Iterable[str]) -> int:
    ids = tuple(ids)
    if len(cfg.connected_components(ids)) != 1:
        raise ConfigError("component set is not connected")
    pa = arithmetic_genus(cfg.model, cfg.sum_class(ids))
    inside = set(ids)
    w = sum(e.weight for e in cfg.edges if e.i in inside and e.j in inside)
    additive = sum(cfg.component(c).pa for c in ids) + w - (len(ids) - 1)
    if additive != pa:
        raise InvariantBreach(f"genus additivity fails: {additive} vs {pa}")
    if pa == 0:
        if w != len(ids) - 1 or any(cfg.component(c).pa for c in ids):
            raise InvariantBreach("p_a = 0 but the graph is not a rational tree")
    return pa


def branching(cfg: CurveConfig, sub: Iterable[str] | str) -> int:
    sub = (sub,) if isinstance(sub, str) else tuple(sub)
    for s in sub:
        if not cfg.has(s):
            raise ConfigError(f"{s!r} is not a component of D")
    c = cfg.sum_class(sub)
    return int(pair(cfg.model, c, cfg.total_class() - c))


# ---------------------------------------------------------------- classification

def chain_discriminant(self_ints: Sequence[int]) -> int:
    """det(-M) of a chain with the given self-intersections (1 for the empty chain)."""
    prev2, prev1 = 0, 1
    for s in self_ints:
        prev2, prev1 = prev1, -s * prev1 - prev2
    return prev1


@dataclass(frozen=True)
class ComponentInfo:
    ids: tuple[str, ...]
    is_tree: bool
    is_chain: bool
    pa: int


@dataclass(frozen=True)
class Twig:
    ids: tuple[str, ...]  # from the tip inwards
    attached_to: str | None
    admissible: bool


@dataclass(frozen=True)
class Fork:
    ids: tuple[str, ...]
    center: str
    arms: tuple[tuple[str, ...], ...]  # each arm from the center outwards
    platonic: bool
    admissible: bool


@dataclass(frozen=True)
class GraphClassification:
    connected_components: tuple[ComponentInfo, ...]
    maximal_twigs: tuple[Twig, ...]
    rods: tuple[tuple[str, ...], ...]
    admissible_rods: tuple[tuple[str, ...], ...]
    forks: tuple[Fork, ...]
    branching: dict = field(default_factory=dict)

    def admissible_groups(self) -> list[tuple[str, tuple[str, ...]]]:
        """Pairwise disjoint supports of the bark: (kind, ids)."""
        out = []
        for t in self.maximal_twigs:
            if t.admissible and t.ids:
                out.append(("twig", t.ids))
        for r in self.admissible_rods:
            out.append(("rod", r))
        for f in self.forks:
            if f.admissible:
                out.append(("fork", f.ids))
        return out


def _smooth_rational(cfg: CurveConfig, cid: str) -> bool:
    return cfg.component(cid).pa == 0


def _simple_edges(cfg: CurveConfig, ids: Sequence[str]) -> bool:
    inside = set(ids)
    return all(e.weight == 1 for e in cfg.edges if e.i in inside and e.j in inside)


def _is_tree(cfg: CurveConfig, ids: Sequence[str]) -> bool:
    inside = set(ids)
    es = [e for e in cfg.edges if e.i in inside and e.j in inside]
    if any(e.weight != 1 for e in es) or len(es) != len(ids) - 1:
        return False
    return all(_smooth_rational(cfg, c) for c in ids)


def _chain_order(cfg: CurveConfig, ids: Sequence[str]) -> tuple[str, ...] | None:
    """Order the ids along a path, or None if they do not form a rational chain."""
    if not _is_tree(cfg, ids):
        return None
    inside = set(ids)
    deg = {c: sum(1 for nb in cfg.neighbors(c) if nb in inside) for c in ids}
    if any(d > 2 for d in deg.values()):
        return None
    if len(ids) == 1:
        return tuple(ids)
    ends = [c for c in ids if deg[c] == 1]
    start = min(ends, key=list(cfg.ids).index)
    path, prev = [start], None
    while len(path) < len(ids):
        nxt = [nb for nb in cfg.neighbors(path[-1]) if nb in inside and nb != prev]
        prev = path[-1]
        path.append(nxt[0])
    return tuple(path)


def is_admissible(cfg: CurveConfig, ids: Iterable[str]) -> bool:
    return all(cfg.component(c).pa == 0 and cfg.component(c).self_int <= -2 for c in ids)


def _walk_twig(cfg: CurveConfig, tip: str) -> Twig:
    """Longest chain starting at a terminal component whose inner vertices have valency 2."""
    path = [tip]
    prev = None
    cur = tip
    while True:
        nbs = [nb for nb in cfg.neighbors(cur) if nb != prev]
        if len(nbs) != 1:
            return Twig(tuple(path), None, is_admissible(cfg, path))
        nxt = nbs[0]
        if cfg.m(cur, nxt) != 1:
            return Twig(tuple(path[:-1]) if len(path) > 1 else (), None, False)
        if (cfg.valency(nxt) == 2 and _smooth_rational(cfg, nxt)):
            path.append(nxt)
            prev, cur = cur, nxt
            continue
        return Twig(tuple(path), nxt, is_admissible(cfg, path))


def _admissible_prefix(cfg: CurveConfig, twig: Twig) -> Twig:
    keep = []
    for c in twig.ids:
        if cfg.component(c).self_int <= -2 and cfg.component(c).pa == 0:
            keep.append(c)
        else:
            break
    if len(keep) == len(twig.ids):
        return Twig(twig.ids, twig.attached_to, bool(keep))
    return Twig(tuple(keep), keep and twig.ids[len(keep)] or twig.attached_to, bool(keep))


def _fork_of(cfg: CurveConfig, ids: Sequence[str]) -> Fork | None:
    if not _is_tree(cfg, ids):
        return None
    inside = set(ids)
    deg = {c: sum(1 for nb in cfg.neighbors(c) if nb in inside) for c in ids}
    branch = [c for c in ids if deg[c] >= 3]
    if len(branch) != 1 or deg[branch[0]] != 3:
        return None
    center = branch[0]
    arms = []
    for nb in cfg.neighbors(center):
        arm, prev, cur = [nb], center, nb
        while True:
            nxt = [x for x in cfg.neighbors(cur) if x != prev]
            if not nxt:
                break
            prev, cur = cur, nxt[0]
            arm.append(cur)
        arms.append(tuple(arm))
    # arm discriminants are taken from the tip end
    discs = [chain_discriminant([cfg.component(c).self_int for c in arm]) for arm in arms]
    platonic = all(d > 0 for d in discs) and sum(Fraction(1, d) for d in discs) > 1
    return Fork(tuple(ids), center, tuple(arms), platonic,
                platonic and is_admissible(cfg, ids))


def classify(cfg: CurveConfig) -> GraphClassification:
    infos, twigs, rods, adm_rods, forks = [], [], [], [], []
    for part in cfg.connected_components():
        pa = arithmetic_genus(cfg.model, cfg.sum_class(part))
        tree = _is_tree(cfg, part)
        chain = _chain_order(cfg, part)
        infos.append(ComponentInfo(part, tree, chain is not None, pa))
        if chain is not None:
            rods.append(chain)
            if is_admissible(cfg, chain):
                adm_rods.append(chain)
                continue
        fork = _fork_of(cfg, part) if chain is None else None
        if fork is not None:
            forks.append(fork)
            if fork.admissible:
                continue
        tips = [c for c in part if cfg.valency(c) == 1 and _smooth_rational(cfg, c)]
        for tip in tips:
            t = _walk_twig(cfg, tip)
            if not t.ids:
                continue
            if chain is not None:
                # both ends of a non-admissible rod carry twigs; stop before the far tip
                t = Twig(t.ids[:-1] if len(t.ids) == len(part) else t.ids,
                         t.attached_to, t.admissible)
            t = _admissible_prefix(cfg, t)
            if t.ids and t not in twigs:
                twigs.append(t)
    # twigs from the two ends of a chain must not overlap
    used: set[str] = set()
    final_twigs = []
    for t in twigs:
        if used.isdisjoint(t.ids):
            final_twigs.append(t)
            used.update(t.ids)
    br = {c: cfg.valency(c) for c in cfg.ids}
    return GraphClassification(tuple(infos), tuple(final_twigs), tuple(rods),
                               tuple(adm_rods), tuple(forks), br)


# ---------------------------------------------------------------- 1-connectedness

MAX_DECOMPOSITIONS = 1 << 20


def is_one_connected(model: SurfaceModel, parts: Sequence[tuple[DivisorClass, int]]) -> bool:
    """Brute-force 1-connectedness of an effective divisor sum m_i C_i.

    Every split A + B with A, B effective and non-zero must have A.B >= 1.
    """
    parts = [(c, int(m)) for c, m in parts if m > 0]
    if not parts:
        raise ConfigError("the zero divisor has no decompositions")
    total = 1
    for _, m in parts:
        total *= m + 1
    if total > MAX_DECOMPOSITIONS:
        raise ConfigError(f"{total} decompositions exceed the brute-force cap")
    whole = model.zero()
    for c, m in parts:
        whole = whole + c * m
    for ks in product(*[range(m + 1) for _, m in parts]):
        if all(k == 0 for k in ks) or all(k == m for k, (_, m) in zip(ks, parts)):
            continue
        a = model.zero()
        for k, (c, _) in zip(ks, parts):
            a = a + c * k
        if pair(model, a, whole - a) < 1:
            return False
    return True
