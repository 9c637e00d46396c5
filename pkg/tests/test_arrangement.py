from __future__ import annotations

import pytest

from ratpairs.arrangement import (ArrangementError, ArrangementInput, build, lines_mult_d_minus_2,
                                  lines_mult_d_minus_3, node_count)


@pytest.mark.parametrize("d", [4, 5, 7])
def test_d_minus_2_family(d):
    arr = lines_mult_d_minus_2(d)
    if d > 4:  # for d = 4 the pencil point is an ordinary node
        assert node_count(arr).get(d - 2) == 1
    b = build(arr)
    got = {c.id: c.self_int for c in b.config.components}
    assert got[f"L{d - 1}"] == 3 - d and got[f"L{d}"] == 1
    assert all(got[f"L{i}"] == -1 for i in range(1, d - 1))


def test_d_minus_3_family_is_eight_only():
    assert node_count(lines_mult_d_minus_3(8)).get(5) == 1
    with pytest.raises(ArrangementError):
        lines_mult_d_minus_3(9)


def test_arrangement_errors():
    with pytest.raises(ArrangementError):
        ArrangementInput.from_json({"lines": {"A": [1, 0, 0], "B": [2, 0, 0]}})
    with pytest.raises(ArrangementError):
        ArrangementInput.from_json({"lines": {"A": [1, 0, 0]}, "blowups": ["x:A:B"]})
    with pytest.raises(ArrangementError):
        ArrangementInput.from_json({"points": []})


def test_json_round_trip():
    arr = lines_mult_d_minus_2(5)
    assert ArrangementInput.from_json(arr.to_json()) == arr
