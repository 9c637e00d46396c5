from __future__ import annotations

import json

from ratpairs.cli import EXIT_INPUT, EXIT_INTERNAL, EXIT_OK, main


def _write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


TRIANGLE = {"lines": {"L1": ["1", "0", "0"], "L2": ["0", "1", "0"], "L3": ["0", "0", "1"]},
            "blowups": []}


def test_analyze_triangle(tmp_path, capsys):
    f = _write(tmp_path, "tri.json", TRIANGLE)
    out = tmp_path / "out"
    assert main(["analyze", f, "--out", str(out)]) == EXIT_OK
    rep = json.loads((out / "report.json").read_text())
    assert rep["kod"]["kind"] == "NonNegative" and rep["kod"]["m"] == 1
    assert any("p_a = 1" in n for n in rep["classification"]["notes"])
    assert rep["classification"]["adjunction_D_dot_D_plus_K"] == "0"
    for name in rep["kod"]["certificates"]:
        assert (out / name).exists()
    assert "NonNegative" in capsys.readouterr().out


def test_analyze_is_deterministic(tmp_path):
    f = _write(tmp_path, "tri.json", TRIANGLE)
    main(["analyze", f, "--out", str(tmp_path / "a")])
    main(["analyze", f, "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "report.json").read_text() == (tmp_path / "b" / "report.json").read_text()


def test_analyze_config_format_rod(tmp_path):
    cfg = {"model": {"base": "P2", "exceptionals": ["P1", "P2", "P3"]},
           "components": {"C": ["0", "1", "-1", "0"]}}
    out = tmp_path / "out"
    assert main(["analyze", _write(tmp_path, "rod.json", cfg), "--out", str(out)]) == EXIT_OK
    rep = json.loads((out / "report.json").read_text())
    assert rep["bark"]["coefficients"] == {"C": "1"}


def test_input_errors(tmp_path, capsys):
    bad = _write(tmp_path, "bad.json", {"lines": {"L1": ["0", "0", "0"]}})
    assert main(["analyze", bad]) == EXIT_INPUT
    neg = _write(tmp_path, "neg.json", {"model": {"base": "P2", "exceptionals": ["P1"]},
                                        "components": {"C": ["1", "1"]}})
    assert main(["analyze", neg]) == EXIT_INPUT
    floats = _write(tmp_path, "fl.json", {"lines": {"L1": [0.5, 0, 1]}})
    assert main(["analyze", floats]) == EXIT_INPUT
    assert main(["analyze", str(tmp_path / "missing.json")]) == EXIT_INPUT
    (tmp_path / "junk.json").write_text("{not json")
    assert main(["analyze", str(tmp_path / "junk.json")]) == EXIT_INPUT
    assert "input error" in capsys.readouterr().err


def test_contract_and_replay(tmp_path):
    f = _write(tmp_path, "line.json", {"lines": {"L": ["1", "2", "3"]}})
    out = tmp_path / "c"
    assert main(["contract", f, "--out", str(out)]) == EXIT_OK
    res = json.loads((out / "result.json").read_text())
    assert res["kind"] == "Contracted"
    assert main(["replay", str(out / "steplog.json"), "--out", str(tmp_path / "r")]) == EXIT_OK
    rep = json.loads((tmp_path / "r" / "replay.json").read_text())
    assert rep["matches_recorded_final"] is True
    # a tampered recorded final state is reported as a mismatch
    log = json.loads((out / "steplog.json").read_text())
    log["final"]["counter"] += 1
    assert main(["replay", _write(tmp_path, "t.json", log)]) == EXIT_INTERNAL
    assert main(["replay", _write(tmp_path, "e.json", {"macros": []})]) == EXIT_INPUT


def test_contract_refuses_non_negative_kod(tmp_path):
    assert main(["contract", _write(tmp_path, "tri.json", TRIANGLE)]) == EXIT_INPUT


def test_repro_small(tmp_path):
    out = tmp_path / "r"
    assert main(["repro", "lines-mult-d-2", "--d", "5", "--mmax", "3", "--out", str(out)]) == EXIT_OK
    rep = json.loads((out / "repro.json").read_text())
    assert rep["matches_expected"] is True


def test_repro_ranges():
    assert main(["repro", "lines-mult-d-2", "--d", "3"]) == EXIT_INPUT
    assert main(["repro", "lines-mult-d-3", "--d", "9"]) == EXIT_INPUT
