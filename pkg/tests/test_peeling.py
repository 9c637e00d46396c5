from __future__ import annotations

import random
from fractions import Fraction

import pytest

from ratpairs.cremona import replay, state_from_config
from ratpairs.curvegraph import build_config
from ratpairs.lattice import FN, P2, make_model, pair
from ratpairs.peeling import (INDEF, NEG_DEF, NEG_SEMIDEF, NotAlmostMinimal, PeelingError, almost_minimalize, bark,
                              candidate_classes,
                              bark_of_group, classify_obstruction, definiteness, is_almost_minimal,
                              rounded_log_class)

from helpers import chain, fork, realize_forest

Q = Fraction


def test_definiteness_examples_both_routes():
    cases = [
        ([[-2, 1], [1, -2]], NEG_DEF),
        ([[-1, 1], [1, -1]], NEG_SEMIDEF),
        ([[0]], NEG_SEMIDEF),
        ([[1, 0], [0, -1]], INDEF),
        ([[-2, 1, 0], [1, -2, 1], [0, 1, -2]], NEG_DEF),
        ([[-2, 1, 1], [1, -2, 1], [1, 1, -2]], NEG_SEMIDEF),  # affine A2
        ([[0, 1], [1, 0]], INDEF),
        ([[Q(-1, 2)]], NEG_DEF),
    ]
    for mat, want in cases:
        assert definiteness(mat) == want
        assert definiteness(mat, route="minors") == want


def test_definiteness_routes_agree_randomly():
    rng = random.Random(7)
    for _ in range(300):
        n = rng.randint(1, 4)
        a = [[rng.randint(-2, 2) for _ in range(n)] for _ in range(rng.randint(1, 4))]
        m = [[-sum(a[k][i] * a[k][j] for k in range(len(a))) for j in range(n)] for i in range(n)]
        if rng.random() < 0.3:
            m[0][0] += rng.randint(-1, 2)
        assert definiteness(m) == definiteness(m, route="minors")


def test_definiteness_rejects_asymmetric():
    with pytest.raises(PeelingError):
        definiteness([[1, 2], [0, 1]])


def test_bark_of_single_minus_two_twig():
    cfg = realize_forest([chain([0, -2])], line_root=True)
    bk = bark(cfg)
    assert bk.coefficients == {"C0_1": Q(1, 2)}


def test_bark_of_rods():
    assert bark(realize_forest([chain([-2])])).coefficients == {"C0_0": 1}
    cfg = realize_forest([chain([-2, -3])])
    assert bark_of_group(cfg, cfg.ids) == (Q(4, 5), Q(3, 5))
    cfg = realize_forest([chain([-2, -2, -2])])
    assert set(bark(cfg).coefficients.values()) == {1}


def test_bark_of_minus_two_fork_is_one():
    cfg = realize_forest([fork(-2, [[-2], [-2], [-2]])], line_root=True)
    assert set(bark(cfg).coefficients.values()) == {1}


def test_bark_rejects_non_admissible():
    cfg = realize_forest([chain([0, -2])], line_root=True)
    with pytest.raises(PeelingError):
        bark_of_group(cfg, cfg.ids)


def test_rounded_log_class():
    cfg = realize_forest([chain([0, -2])], line_root=True)
    bk = bark(cfg)
    m = cfg.model
    k = m.zero() - m.h() * 3
    for lab in m.exceptionals:
        k = k + m.exc(lab)
    # n = 2: the twig gets 2 - ceil(2 * 1/2) = 1, the line 2
    want = k * 2 + cfg.component("C0_0").cls * 2 + cfg.component("C0_1").cls
    assert rounded_log_class(cfg, 2, bk) == want


def test_almost_minimal_detects_offender():
    # a (-2)-twig hanging off a line, plus a (-1)-curve meeting only the twig
    m = make_model(P2, 3, ids=["a", "b", "c"])
    line = m.h() - m.exc("a")
    twig = m.exc("a") - m.exc("b")
    cfg = build_config(m, [("L", line), ("T", twig)], [("L", "T", "q")])
    chk = is_almost_minimal(cfg, [("E:b", m.exc("b"))])
    assert not chk.almost_minimal and chk.witness == "E:b"
    assert chk.candidate_set_exhaustive is False
    extra = [("E:b", m.exc("b"), {}), ("E:c", m.exc("c"), {})]
    am = almost_minimalize(cfg, None, extra)
    # T becomes a (-1)-curve once E:b is gone and offends in turn
    assert am.contracted == ["E:b", "E:c", "T"]
    assert am.state.divisor == ["L"] and am.state.model.rank == 1
    assert is_almost_minimal(am.config).almost_minimal
    init = state_from_config(cfg, None, extra).to_json()
    again = replay({"initial": init, "macros": [r.to_json() for r in am.log]})
    assert again.to_json() == am.state.to_json()


def test_reducible_basis_class_is_not_a_candidate():
    m = make_model(P2, 2, ids=["a", "b"])
    cfg = build_config(m, [("T", m.exc("a") - m.exc("b"))])
    names = [n for n, _ in candidate_classes(cfg)]
    assert "E:a" not in names and "E:b" in names


def test_obstruction_rod():
    # the negative section of F_2 on its own: almost minimal, no (-1)-curves
    m = make_model(FN, 0, n=2)
    v = classify_obstruction(build_config(m, [("E", m.e())]), [("f", m.f())])
    assert v.kind == "DelPezzoRank1Shrinkable"
    assert v.candidate_set_exhaustive is False
    # on a blown-up plane the same rod needs the minimality check switched off
    cfg = realize_forest([chain([-2])])
    with pytest.raises(NotAlmostMinimal):
        classify_obstruction(cfg)
    assert classify_obstruction(cfg, require_minimal=False).kind == "DelPezzoRank1Shrinkable"


def test_obstruction_pencil_on_f1():
    m = make_model(FN, 0, n=1)
    cfg = build_config(m, [("C", m.e() + m.f())])
    v = classify_obstruction(cfg, [("f", m.f())], require_minimal=False)
    assert v.kind == "PencilReduction"
    assert pair(m, m.f(), cfg.total_class()) == 1


def test_obstruction_tree_is_driver_contractible():
    m = make_model(P2, 0)
    cfg = build_config(m, [("L", m.h())])
    assert classify_obstruction(cfg, require_minimal=False).kind in ("DriverContractible", "PencilReduction")
