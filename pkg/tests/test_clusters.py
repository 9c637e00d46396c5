from __future__ import annotations

from fractions import Fraction

import pytest

from ratpairs.clusters import (Cluster, ClusterError, Marking, add_point, blows_up_cluster,
                               protection_ok, total_vs_proper)
from ratpairs.cremona import BirationalMap
from ratpairs.curvegraph import build_config
from ratpairs.lattice import P2, make_model

Q = Fraction


def _chain_cluster():
    cl = Cluster()
    cl, p = add_point(cl, pid="K1", anchor=(Q(0), Q(0), Q(1)), on={"L": 1})
    cl, _ = add_point(cl, "K1", pid="K2", carrier="L")
    cl, _ = add_point(cl, "K2", pid="K3")
    return cl


def test_orders_and_depth():
    cl = _chain_cluster()
    assert [p.order for p in cl] == [0, 1, 2]
    assert cl.root("K3") == "K1"
    assert cl.depth_over("K1") == 2
    assert cl.descendants("K1") == ("K2", "K3")
    assert cl.order == 2


def test_invalid_clusters():
    cl = _chain_cluster()
    with pytest.raises(ClusterError):
        add_point(cl, "K9")
    with pytest.raises(ClusterError):
        add_point(cl, pid="K1")
    with pytest.raises(ClusterError):
        add_point(Cluster(), pid="Z", anchor=(0, 0, 0))
    with pytest.raises(ClusterError):
        add_point(Cluster(), pid="Z", anchor=(0.5, 0, 1))


def test_json_round_trip():
    cl = _chain_cluster()
    assert Cluster.from_json(cl.to_json()) == cl


def test_marking_order():
    m = make_model(P2, 0)
    small = Marking(build_config(m, [("L", m.h())]), Cluster())
    big = Marking(build_config(m, [("L", m.h()), ("M", m.h())], [("L", "M", "x")]), _chain_cluster())
    assert small <= big
    assert not big <= small


def test_total_vs_proper():
    m = make_model(P2, 2, ids=["K1", "K2"])
    cl = _chain_cluster()
    c = total_vs_proper(m, cl, 3, {"K1": 2, "K2": 1})
    assert c.as_ints() == (3, -2, -1)
    with pytest.raises(ClusterError):
        total_vs_proper(m, cl, 1, {"X": 1})


def test_protection_rule():
    cl = _chain_cluster()
    assert protection_ok(cl, "K1", "L", 3)
    assert not protection_ok(cl, "K1", "L", 2)


def test_blows_up_cluster_detects_divisorial_image():
    m = make_model(P2, 0)
    cl = _chain_cluster()
    line = build_config(m, [("L", m.h())])
    bl = BirationalMap(m, [{"op": "blow_up", "point": "K1"}])
    assert blows_up_cluster(bl, cl, line)
    assert not blows_up_cluster(BirationalMap(m, []), cl, line)
    # blowing up an unmarked point leaves the marked cluster alone
    other = BirationalMap(m, [{"op": "point", "id": "u", "on": {}}, {"op": "blow_up", "point": "u"}])
    assert not blows_up_cluster(other, cl, line)
