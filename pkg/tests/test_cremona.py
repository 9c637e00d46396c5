from __future__ import annotations

import json
import random

import pytest

from ratpairs.arrangement import build, lines_mult_d_minus_2
from ratpairs.clusters import Cluster, add_point, blows_up_cluster
from ratpairs.cremona import (BirationalMap, CremonaError, DriverPrecondition, Session, State,
                              contract_driver, contract_lattice, elementary,
                              fujita_threshold, general_point, present_fn, quadratic_map, replay,
                              state_from_config)
from ratpairs.curvegraph import Edge, build_config
from ratpairs.lattice import FN, P2, SurfaceModel, canonical_class, make_model, pair
from ratpairs.linsys import LinSysSpec, h0_oracle

import helpers


def _round_trip(st: State, on):
    s = Session(st)
    s.begin("RoundTrip")
    p = general_point(s, on, "p")
    lab = s.step(op="blow_up", point=p)["curve"]
    s.step(op="contract", curve=lab)
    s.end()
    return s.state


def test_round_trip_on_arrangements():
    rng = random.Random(3)
    for _ in range(40):
        arr, b = helpers.random_arrangement(rng, rng.randint(3, 5), rng.randint(0, 3),
                                            rng.randint(0, 2), rng.randint(0, 2))
        st = state_from_config(b.config)
        out = _round_trip(st, rng.choice([None] + list(st.curves)))
        assert out.model == b.model
        assert {c: out.curves[c] for c in b.config.ids} == {c.id: c.cls for c in b.config.components}


def test_contract_lattice_rejects_non_exceptional():
    m = make_model(P2, 2)
    with pytest.raises(CremonaError):
        contract_lattice(m, m.h())
    with pytest.raises(CremonaError):
        contract_lattice(m, m.h() - m.exc("P1"))
    new, push = contract_lattice(m, m.h() - m.exc("P1") - m.exc("P2"))
    assert new.rank == 2
    assert push(canonical_class(m)) == canonical_class(new)
    assert push(m.h() - m.exc("P1") - m.exc("P2")).is_zero()


def test_present_fn_uses_section_hint():
    m = make_model(P2, 1)
    new, push = present_fn(m, [m.exc("P1")])
    assert new.base == FN and new.n == 1
    assert push(m.exc("P1")) == new.e()
    assert push(m.h() - m.exc("P1")) == new.f()


@pytest.mark.parametrize("n", range(5))
@pytest.mark.parametrize("on", [True, False])
def test_elementary_index_rule(n, on):
    m = SurfaceModel(FN, n, ())
    s = Session(state_from_config(build_config(m, [("S", m.e())])))
    s.begin("ChoosePoints")
    p = general_point(s, "S" if on else None, "u")
    s.end()
    elementary(s, p, "S")
    want = n + 1 if on else abs(n - 1)
    assert s.state.model.n == want
    assert pair(s.state.model, s.state.curves["S"], s.state.curves["S"]) == (-n - 1 if on else -n + 1)


@pytest.mark.parametrize("d,ma,mb,mc", [(2, 1, 1, 1), (3, 1, 1, 1), (4, 2, 1, 1), (5, 2, 2, 2),
                                        (3, 0, 0, 0), (4, 3, 1, 0), (6, 3, 2, 2)])
def test_quadratic_class_action(d, ma, mb, mc):
    m = make_model(P2, 0)
    s = Session(state_from_config(build_config(m, [("L0", m.h())])))
    s.begin("ChoosePoints")
    a, b, c = (general_point(s, None, x) for x in "abc")
    s.step(op="curve", id="X", **{"class": m.plane_class(d).to_json()}, through={a: ma, b: mb, c: mc})
    s.end()
    quadratic_map(s, a, b, c)
    st = s.state
    assert st.model.rank == 1
    assert st.curves["X"][0] == 2 * d - ma - mb - mc
    mult = {p: on["X"] for p, on in st.points.items() if p.startswith("img:") and "X" in on}
    want = [d - mb - mc, d - ma - mc, d - ma - mb]
    assert sorted(mult.values()) == sorted(x for x in want if x > 0)


def test_zero_multiplicity_is_not_an_incidence():
    m = make_model(P2, 0)
    s = Session(state_from_config(build_config(m, [("L0", m.h())])))
    s.begin("ChoosePoints")
    a, b, c = (general_point(s, None, x) for x in "abc")
    s.step(op="curve", id="X", **{"class": m.h().to_json()}, through={a: 1, b: 1, c: 0})
    s.end()
    assert "X" not in s.state.points[c]
    # X is then the line through a and b, which the map contracts
    quadratic_map(s, a, b, c)
    assert "X" not in s.state.curves


def test_quadratic_rejects_collinear():
    m = make_model(P2, 0)
    s = Session(state_from_config(build_config(m, [("L", m.h())])))
    s.begin("ChoosePoints")
    pts = [general_point(s, "L", x) for x in "abc"]
    s.end()
    with pytest.raises(CremonaError):
        quadratic_map(s, *pts)


def _marked_chain(depth: int) -> Cluster:
    cl = Cluster()
    cl, _ = add_point(cl, pid="q", on={"E": 1, "C": 1})
    prev = "q"
    for k in range(2, depth + 1):
        cl, prev = add_point(cl, prev, pid=f"q{k}", carrier="C")
    return cl


@pytest.mark.parametrize("n,d", [(2, 3), (0, 1), (3, 4)])
def test_dejonquieres_protects_marked_chain(n, d):
    m = SurfaceModel(FN, n, ())
    cfg = build_config(m, [("E", m.e()), ("C", m.e() + m.f() * d)], [Edge("E", "C", "q", 1)])
    cl = _marked_chain(3)
    r = contract_driver(cfg, cl)
    assert r.kind == "Contracted"
    assert "DeJonquieres" in [x["kind"] for x in r.log["macros"]]
    steps = [x for mac in r.log["macros"] for x in mac["steps"]]
    assert not blows_up_cluster(BirationalMap(m, steps), cl, cfg)
    # a bare blow-up of the marked point is caught
    assert blows_up_cluster(BirationalMap(m, [{"op": "blow_up", "point": "q"}]), cl, cfg)


def test_driver_line_and_replay_through_json():
    m = make_model(P2, 0)
    cl = Cluster()
    cl, _ = add_point(cl, pid="K1", anchor=(0, 0, 1), on={"L": 1})
    cl, _ = add_point(cl, "K1", pid="K2", carrier="L")
    r = contract_driver(build_config(m, [("L", m.h())]), cl, check_precondition=False)
    assert r.kind == "Contracted"
    log = json.loads(json.dumps(r.log))
    assert replay(log).to_json() == r.final.to_json()
    assert all(not mac["divisorial"] for mac in log["macros"])


def test_driver_refuses_non_negative_kod():
    m = make_model(P2, 0)
    tri = build_config(m, [("A", m.h()), ("B", m.h()), ("C", m.h())],
                       [("A", "B", "ab"), ("A", "C", "ac"), ("B", "C", "bc")])
    with pytest.raises(DriverPrecondition):
        contract_driver(tri, coords=Cluster())
    # without coordinates the estimate is Undetermined, which is refused as well
    with pytest.raises(DriverPrecondition):
        contract_driver(tri)
    f2 = SurfaceModel(FN, 0, ())
    cyc = build_config(f2, [("E", f2.e()), ("C", f2.e() + f2.f() * 2)],
                       [Edge("E", "C", "q1", 1), Edge("E", "C", "q2", 1)])
    with pytest.raises(DriverPrecondition):
        contract_driver(cyc)


def test_fujita_threshold_against_direct_oracle():
    b = build(lines_mult_d_minus_2(5))
    dk = b.config.total_class() + canonical_class(b.model)
    for p in b.model.exceptionals[:3]:
        e = b.model.exc(p)
        fr = fujita_threshold(b.model, b.config, e, 6, b.cluster, b.lines)
        assert fr.m is not None and fr.claim_applies
        assert h0_oracle(LinSysSpec(b.model, e + dk * fr.m), b.cluster, b.lines) > 0
        assert h0_oracle(LinSysSpec(b.model, e + dk * (fr.m + 1)), b.cluster, b.lines) == 0


def test_two_fibers_and_a_section_after_ruling_swap():
    # lines L1, L2 through a blown-up point and a third line: F_1 with two
    # fibers; killing a fiber passes through F_0, where the rulings may swap
    from fractions import Fraction as Q
    from ratpairs.arrangement import ArrangementInput
    arr = ArrangementInput((("L1", (Q(1), Q(0), Q(0))), ("L2", (Q(0), Q(1), Q(0))),
                            ("L3", (Q(1), Q(1), Q(-1)))),
                           (("P0", (Q(0), Q(0), Q(1))),), ("P0",))
    b = build(arr)
    cl = Cluster()
    cl, _ = add_point(cl, pid="K1", anchor=(0, 3, 1), on={"L1": 1})
    cl, _ = add_point(cl, "K1", pid="K2", carrier="L1")
    extra = [("E:P0", b.model.exc("P0"), {})]
    r = contract_driver(b.config, cl, extra_curves=extra, coords=b.cluster, lines=b.lines)
    assert r.kind == "Contracted"
    assert replay(r.log).to_json() == r.final.to_json()
    steps = [x for mac in r.log["macros"] for x in mac["steps"]]
    assert not blows_up_cluster(BirationalMap(b.model, steps), cl, b.config, extra)


def test_driver_is_honest_on_random_arrangements():
    rng = random.Random(11)
    kinds = set()
    for _ in range(40):
        arr, b = helpers.random_arrangement(rng, rng.randint(1, 5), rng.randint(0, 4),
                                            rng.randint(0, 3), rng.randint(0, 2))
        extra = [(f"E:{p}", b.model.exc(p), {}) for p in b.model.exceptionals]
        try:
            r = contract_driver(b.config, None, extra_curves=extra, coords=b.cluster, lines=b.lines)
        except DriverPrecondition:
            kinds.add("refused")
            continue
        kinds.add(r.kind)
        if r.kind == "Contracted":
            st = replay(r.log)
            assert st.to_json() == r.final.to_json() and not st.divisor
    assert "Contracted" in kinds
