"""Clusters of proper and infinitely near points, and markings.

A point is either proper (no parent) or infinitely near its parent.  A child
either follows a carrier curve or sits at a free position on the parent's
exceptional curve; for the h0 oracle a free position is pinned down by a
``jet`` coefficient.  The ``on`` field lists curves (by id) whose transform
passes through the point, with multiplicities; the birational engine uses it
to move points along with curves.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .lattice import DivisorClass, LatticeError, SurfaceModel


class ClusterError(ValueError):
    pass


@dataclass(frozen=True)
class ClusterPoint:
    id: str
    parent: str | None = None
    order: int = 0
    anchor: tuple[Fraction, Fraction, Fraction] | None = None
    carrier: str | None = None
    jet: Fraction | None = None
    on: tuple[tuple[str, int], ...] = ()

    @property
    def is_proper(self) -> bool:
        return self.parent is None

    def mult_on(self, curve: str) -> int:
        return dict(self.on).get(curve, 0)

    def curves(self) -> tuple[str, ...]:
        return tuple(c for c, _ in self.on)


def _norm_on(on) -> tuple[tuple[str, int], ...]:
    if on is None:
        return ()
    items = on.items() if isinstance(on, Mapping) else on
    d: dict[str, int] = {}
    for c, m in items:
        if m > 0:
            d[c] = d.get(c, 0) + int(m)
    return tuple(sorted(d.items()))


@dataclass(frozen=True)
class Cluster:
    points: tuple[ClusterPoint, ...] = ()

    def __post_init__(self):
        seen: dict[str, ClusterPoint] = {}
        for p in self.points:
            if p.id in seen:
                raise ClusterError(f"duplicate point id {p.id!r}")
            if p.parent is None:
                if p.order != 0:
                    raise ClusterError(f"proper point {p.id!r} must have order 0")
            else:
                par = seen.get(p.parent)
                if par is None:
                    raise ClusterError(f"point {p.id!r}: parent {p.parent!r} missing or later")
                if p.order != par.order + 1:
                    raise ClusterError(f"point {p.id!r}: order must be parent order + 1")
                if p.anchor is not None:
                    raise ClusterError("only proper points carry coordinates")
            seen[p.id] = p

    def __contains__(self, pid: str) -> bool:
        return any(p.id == pid for p in self.points)

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def get(self, pid: str) -> ClusterPoint:
        for p in self.points:
            if p.id == pid:
                return p
        raise ClusterError(f"unknown point {pid!r}")

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.points)

    @property
    def order(self) -> int:
        return max((p.order for p in self.points), default=-1)

    def children(self, pid: str) -> tuple[ClusterPoint, ...]:
        return tuple(p for p in self.points if p.parent == pid)

    def root(self, pid: str) -> str:
        p = self.get(pid)
        while p.parent is not None:
            p = self.get(p.parent)
        return p.id

    def descendants(self, pid: str) -> tuple[str, ...]:
        out: list[str] = []
        frontier = [pid]
        while frontier:
            cur = frontier.pop()
            for c in self.children(cur):
                out.append(c.id)
                frontier.append(c.id)
        return tuple(sorted(out, key=self.ids.index))

    def depth_over(self, pid: str) -> int:
        """Largest order difference between ``pid`` and a point over it (-1 if absent)."""
        if pid not in self:
            return -1
        base = self.get(pid).order
        return max([self.get(d).order - base for d in self.descendants(pid)] + [0])

    def is_subcluster_of(self, other: "Cluster") -> bool:
        return set(self.ids) <= set(other.ids)

    def union(self, other: "Cluster") -> "Cluster":
        pts = list(self.points)
        have = set(self.ids)
        for p in other.points:
            if p.id not in have:
                pts.append(p)
                have.add(p.id)
        return Cluster(tuple(pts))

    def replace_point(self, p: ClusterPoint) -> "Cluster":
        return Cluster(tuple(p if q.id == p.id else q for q in self.points))

    def without(self, ids: Iterable[str]) -> "Cluster":
        drop = set(ids)
        return Cluster(tuple(p for p in self.points if p.id not in drop))

    def fresh_id(self, stem: str = "K") -> str:
        i = len(self.points) + 1
        while f"{stem}{i}" in self:
            i += 1
        return f"{stem}{i}"

    def to_json(self) -> list[dict]:
        out = []
        for p in self.points:
            d: dict = {"id": p.id}
            if p.parent is not None:
                d["parent"] = p.parent
            if p.anchor is not None:
                d["anchor"] = [str(x) for x in p.anchor]
            if p.carrier is not None:
                d["carrier"] = p.carrier
            if p.jet is not None:
                d["jet"] = str(p.jet)
            if p.on:
                d["on"] = {c: m for c, m in p.on}
            out.append(d)
        return out

    @staticmethod
    def from_json(items: Sequence[Mapping]) -> "Cluster":
        c = Cluster()
        for it in items:
            anchor = it.get("anchor")
            c, _ = add_point(
                c, it.get("parent"), pid=it["id"],
                anchor=None if anchor is None else tuple(_parse_q(x) for x in anchor),
                carrier=it.get("carrier"),
                jet=None if it.get("jet") is None else _parse_q(it["jet"]),
                on=it.get("on"))
        return c


def _parse_q(x) -> Fraction:
    if isinstance(x, bool) or isinstance(x, float):
        raise ClusterError(f"not an exact rational: {x!r}")
    if isinstance(x, (int, Fraction)):
        return Fraction(x)
    if isinstance(x, str):
        try:
            return Fraction(x)
        except ValueError:
            raise ClusterError(f"not an exact rational: {x!r}") from None
    raise ClusterError(f"not an exact rational: {x!r}")


def add_point(cluster: Cluster, parent: str | None = None, *, pid: str | None = None,
              anchor: Sequence | None = None, carrier: str | None = None,
              jet=None, on=None) -> tuple[Cluster, str]:
    """Append a point; returns the new cluster and the point id."""
    if parent is not None and parent not in cluster:
        raise ClusterError(f"dangling parent id {parent!r}")
    pid = pid or cluster.fresh_id()
    order = 0 if parent is None else cluster.get(parent).order + 1
    anc = None
    if anchor is not None:
        anc = tuple(_parse_q(x) for x in anchor)
        if len(anc) != 3 or all(x == 0 for x in anc):
            raise ClusterError(f"bad homogeneous coordinates for {pid!r}")
    pt = ClusterPoint(pid, parent, order, anc, carrier,
                      None if jet is None else _parse_q(jet), _norm_on(on))
    return Cluster(cluster.points + (pt,)), pid


def support(cluster: Cluster) -> frozenset[str]:
    return frozenset(cluster.root(p.id) for p in cluster.points)


@dataclass(frozen=True)
class Marking:
    """A curve configuration together with a cluster of marked points."""

    divisor: object  # curvegraph.CurveConfig
    cluster: Cluster = field(default_factory=Cluster)

    def __le__(self, other: "Marking") -> bool:
        mine = set(self.divisor.ids)
        theirs = set(other.divisor.ids)
        return mine <= theirs and self.cluster.is_subcluster_of(other.cluster)


def total_vs_proper(model: SurfaceModel, cluster: Cluster, degree: int,
                    multiplicities: Mapping[str, int]) -> DivisorClass:
    """Class ``dH - sum m_i E_i`` of a plane curve with the given multiplicities."""
    if model.base != "P2":
        raise LatticeError("plane curve data needs a P2-based model")
    for pid in multiplicities:
        if pid not in cluster:
            raise ClusterError(f"multiplicity at {pid!r}, which is not in the cluster")
        model.slot(pid)
    return model.plane_class(degree, dict(multiplicities))


def pushforward_marked(bmap, marking: Marking) -> Marking:
    """Image marking (D', K') of ``marking`` under a birational map.

    ``bmap`` is a cremona.BirationalMap; it is replayed step by step.
    """
    from .cremona import run_map
    return run_map(bmap, marking).marking


def blows_up_cluster(bmap, cluster: Cluster, divisor=None, extra_curves=()) -> bool:
    """True iff the divisorial part of the image of ``cluster`` is non-zero.

    ``extra_curves`` registers tracked curves the map's steps refer to.
    """
    from .cremona import run_map
    from .curvegraph import CurveConfig
    config = divisor if divisor is not None else CurveConfig(bmap.source, (), ())
    return bool(run_map(bmap, Marking(config, cluster), extra_curves).cluster_divisorial)


def protection_ok(cluster: Cluster, base_point: str, carrier: str, chain_depth: int) -> bool:
    """Sufficient condition for a map with base points along a carrier not to blow up.

    The chain of base points at ``base_point`` along ``carrier`` reaches vicinity
    order ``chain_depth`` above it; if this exceeds the order of every marked
    point over ``base_point`` the last exceptional curve lies over an unmarked
    point and all others get contracted.
    """
    return chain_depth > cluster.depth_over(base_point)


def replace_on(p: ClusterPoint, on) -> ClusterPoint:
    return replace(p, on=_norm_on(on))
