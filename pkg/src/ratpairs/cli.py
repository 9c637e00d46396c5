"""Command-line front end: analyze, repro, contract, replay.

Exit codes: 0 = a verdict was produced (whatever it is), 2 = input error,
3 = internal invariant breach.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from fractions import Fraction
from pathlib import Path
from typing import Mapping

from . import __version__
from .arrangement import (ArrangementError, ArrangementInput, build, lines_mult_d_minus_2,
                          lines_mult_d_minus_3)
from .clusters import Cluster, ClusterError
from .cremona import CremonaError, DriverPrecondition, contract_driver, replay
from .curvegraph import ConfigError, CurveConfig, Edge, build_config, classify
from .lattice import (FN, P2, DivisorClass, InvariantBreach, LatticeError, SurfaceModel,
                      canonical_class, pair)
from .linsys import LinSysError, adjoint_spec, config_candidates, h0_oracle, kod_estimate, \
    splitting_certificate
from .peeling import PeelingError, bark

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 2, 3

EXPECTED_D3 = {"L1": -2, "L2": -1, "L3": -1, "L4": -2, "L5": -2, "L6": -4, "L7": -3, "L8": -4}
EXPECTED_D3_PREFIX = [("L1", 6), ("L4", 6), ("L5", 6), ("L6", 2), ("L1", 1), ("L2", 2),
                      ("L(P0,x:L7:L8)", 2)]


class InputError(ValueError):
    pass


# ---------------------------------------------------------------- inputs

class Problem:
    """A parsed input: configuration, marked cluster, optional coordinates."""

    def __init__(self, config: CurveConfig, marked: Cluster, coords: Cluster | None = None,
                 lines: Mapping | None = None, extra_curves=(), source: dict | None = None):
        self.config = config
        self.marked = marked
        self.coords = coords
        self.lines = lines
        self.extra_curves = list(extra_curves)
        self.source = source or {}


def _q(x, where: str) -> Fraction:
    if isinstance(x, (bool, float)):
        raise InputError(f"{where}: not an exact rational: {x!r}")
    try:
        return Fraction(x)
    except (ValueError, TypeError):
        raise InputError(f"{where}: not an exact rational: {x!r}") from None


def _cls(model: SurfaceModel, v, where: str) -> DivisorClass:
    if not isinstance(v, list) or len(v) != model.rank:
        raise InputError(f"{where}: expected {model.rank} coefficients")
    c = DivisorClass.of(_q(x, where) for x in v)
    if not c.is_integral():
        raise InputError(f"{where}: curve classes are integral")
    return c


def parse_config_input(data: Mapping) -> Problem:
    m = data.get("model")
    if not isinstance(m, Mapping):
        raise InputError("model: expected an object")
    base = m.get("base")
    if base not in (P2, FN):
        raise InputError(f"model.base: expected {P2!r} or {FN!r}")
    try:
        model = SurfaceModel(base, int(m.get("n", 0)), tuple(m.get("exceptionals", ())))
    except LatticeError as exc:
        raise InputError(f"model: {exc}") from None
    comps = data.get("components")
    if not isinstance(comps, Mapping) or not comps:
        raise InputError("components: expected a non-empty object id -> class")
    classes = [(str(k), _cls(model, v, f"components.{k}")) for k, v in comps.items()]
    edges = []
    for i, e in enumerate(data.get("edges", [])):
        if not isinstance(e, list) or len(e) not in (3, 4):
            raise InputError(f"edges[{i}]: expected [i, j, point, weight?]")
        edges.append(Edge(str(e[0]), str(e[1]), str(e[2]), int(e[3]) if len(e) == 4 else 1))
    try:
        cfg = build_config(model, classes, edges)
        marked = Cluster.from_json(data.get("marked_cluster", []))
    except (ConfigError, ClusterError, LatticeError) as exc:
        raise InputError(str(exc)) from None
    extra = []
    for k, v in (data.get("tracked") or {}).items():
        if not isinstance(v, Mapping):
            raise InputError(f"tracked.{k}: expected an object")
        extra.append((str(k), _cls(model, v.get("class"), f"tracked.{k}.class"),
                      {str(p): int(mu) for p, mu in (v.get("through") or {}).items()}))
    return Problem(cfg, marked, None, None, extra, dict(data))


def parse_input(data: Mapping) -> Problem:
    if not isinstance(data, Mapping):
        raise InputError("top level: expected an object")
    if "lines" in data:
        try:
            arr = ArrangementInput.from_json(data)
            b = build(arr)
        except (ArrangementError, ClusterError, ConfigError, LatticeError) as exc:
            raise InputError(str(exc)) from None
        extra = [(f"E:{p}", b.model.exc(p), {}) for p in b.model.exceptionals]
        return Problem(b.config, b.marked, b.cluster, b.lines, extra, arr.to_json())
    if "components" in data:
        return parse_config_input(data)
    raise InputError("input needs 'lines' (arrangement) or 'components' (configuration)")


def load_json(path: str) -> tuple[dict, str]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return data, hashlib.sha256(raw).hexdigest()


# ---------------------------------------------------------------- outputs

def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _header(input_hash: str, command: str) -> dict:
    return {"tool": "ratpairs", "version": __version__, "command": command,
            "input_sha256": input_hash}


def _emit(out: str | None, files: dict[str, object], text: str) -> None:
    print(text, end="" if text.endswith("\n") else "\n")
    if out:
        for name, obj in files.items():
            write_atomic(Path(out) / name, dumps(obj))


def _canonical_hash(obj) -> str:
    return hashlib.sha256(dumps(obj).encode()).hexdigest()


# ---------------------------------------------------------------- reports

def classification_summary(cfg: CurveConfig) -> dict:
    gc = classify(cfg)
    notes = []
    for info in gc.connected_components:
        if info.pa > 0:
            notes.append(f"component {list(info.ids)} has p_a = {info.pa} (contains a cycle)"
                         if not info.is_tree else f"component {list(info.ids)} has p_a = {info.pa}")
    return {
        "components": [{"id": c.id, "class": c.cls.to_json(), "self_int": c.self_int, "pa": c.pa}
                       for c in cfg.components],
        "connected_components": [{"ids": list(i.ids), "tree": i.is_tree, "chain": i.is_chain,
                                  "pa": i.pa} for i in gc.connected_components],
        "maximal_twigs": [{"ids": list(t.ids), "attached_to": t.attached_to,
                           "admissible": t.admissible} for t in gc.maximal_twigs],
        "rods": [list(r) for r in gc.rods],
        "admissible_rods": [list(r) for r in gc.admissible_rods],
        "forks": [{"center": f.center, "arms": [list(a) for a in f.arms],
                   "platonic": f.platonic, "admissible": f.admissible} for f in gc.forks],
        "adjunction_D_dot_D_plus_K": str(pair(cfg.model, cfg.total_class(),
                                              cfg.total_class() + canonical_class(cfg.model))),
        "notes": notes,
    }


def analyze(problem: Problem, m_max: int, input_hash: str) -> tuple[dict, dict, str]:
    cfg = problem.config
    summary = classification_summary(cfg)
    bk = bark(cfg)
    kod = kod_estimate(cfg, m_max, problem.coords, problem.lines)
    certs = {f"certificates/kod_m{i + 1}.json": c.to_json() for i, c in enumerate(kod.certificates)}
    kod_json = kod.to_json()
    kod_json["certificates"] = sorted(certs)
    kod_json["certificate_sha256"] = {k: _canonical_hash(v) for k, v in sorted(certs.items())}
    report = dict(_header(input_hash, "analyze"))
    report.update({
        "input": problem.source,
        "model": cfg.model.describe(),
        "classification": summary,
        "bark": bk.to_json(),
        "kod": kod_json,
    })
    lines = [f"model {cfg.model.describe()}, {len(cfg.components)} components"]
    for c in summary["components"]:
        lines.append(f"  {c['id']}: C^2 = {c['self_int']}, p_a = {c['pa']}")
    for n in summary["notes"]:
        lines.append(f"note: {n}")
    lines.append(f"forks: {len(summary['forks'])}, admissible rods: {len(summary['admissible_rods'])}, "
                 f"twigs: {len(summary['maximal_twigs'])}")
    for cid, g in bk.coefficients.items():
        lines.append(f"  bark {cid}: {g}")
    if kod.kind == "NonNegative":
        lines.append(f"kod: NonNegative (h0(m(D+K)) = {kod.witness} at m = {kod.m})")
    else:
        lines.append(f"kod: {kod.kind} (m <= {kod.m})")
    return report, certs, "\n".join(lines) + "\n"


def _repro_d2(d: int, m_max: int, oracle: str) -> tuple[dict, list[str], bool]:
    b = build(lines_mult_d_minus_2(d))
    expected = {f"L{i}": -1 for i in range(1, d - 1)}
    expected[f"L{d - 1}"] = 3 - d
    expected[f"L{d}"] = 1
    got = {c.id: c.self_int for c in b.config.components}
    ok = got == expected
    text = [f"lines-mult-d-2, d = {d}: self-intersections {'match' if ok else 'DIFFER'}"]
    rows = []
    cands = config_candidates(b.config, b.cluster)
    for m in range(1, m_max + 1):
        spec = adjoint_spec(b.model, b.config.total_class(), m)
        cert = splitting_certificate(spec, cands)
        h0 = h0_oracle(spec, b.cluster, b.lines) if oracle == "all" or (
            oracle == "last" and m == m_max) else None
        good = cert.verdict.kind == "Empty" and (h0 in (None, 0))
        ok = ok and good
        rows.append({"m": m, "certificate": cert.to_json(), "oracle_h0": h0, "ok": good})
        text.append(f"  m = {m}: certificate {cert.verdict.kind}, oracle "
                    f"{'-' if h0 is None else h0}{'' if good else '  FAIL'}")
    return ({"family": "lines-mult-d-2", "d": d, "self_ints": got, "expected_self_ints": expected,
             "rows": rows}, text, ok)


def _repro_d3(m_max: int, oracle: str) -> tuple[dict, list[str], bool]:
    b = build(lines_mult_d_minus_3(8))
    got = {c.id: c.self_int for c in b.config.components}
    ok = got == EXPECTED_D3
    text = [f"lines-mult-d-3, d = 8: self-intersections {'match' if ok else 'DIFFER'}"]
    cands = config_candidates(b.config, b.cluster)
    rows = []
    for m in range(1, m_max + 1):
        spec = adjoint_spec(b.model, b.config.total_class(), m)
        cert = splitting_certificate(spec, cands)
        h0 = h0_oracle(spec, b.cluster, b.lines) if oracle == "all" or (
            oracle == "last" and m == m_max) else None
        good = cert.verdict.kind == "Empty" and h0 in (None, 0)
        row = {"m": m, "certificate": cert.to_json(), "oracle_h0": h0, "ok": good}
        if m == 12:
            prefix = [(s.name, s.k) for s in cert.steps[:len(EXPECTED_D3_PREFIX)]]
            row["trace_prefix_matches"] = prefix == EXPECTED_D3_PREFIX
            good = good and row["trace_prefix_matches"]
            row["ok"] = good
            text.append(f"  m = 12 trace prefix {'matches' if row['trace_prefix_matches'] else 'DIFFERS'}: "
                        + ", ".join(f"{n} x{k}" for n, k in prefix))
        ok = ok and good
        rows.append(row)
        text.append(f"  m = {m}: certificate {cert.verdict.kind}, oracle "
                    f"{'-' if h0 is None else h0}{'' if good else '  FAIL'}")
    return ({"family": "lines-mult-d-3", "d": 8, "self_ints": got, "expected_self_ints": EXPECTED_D3,
             "rows": rows}, text, ok)


# ---------------------------------------------------------------- commands

def cmd_analyze(args) -> int:
    data, h = load_json(args.file)
    problem = parse_input(data)
    report, certs, text = analyze(problem, args.mmax, h)
    files = {"report.json": report}
    files.update(certs)
    _emit(args.out, files, text)
    return EXIT_OK


def cmd_repro(args) -> int:
    if args.prop == "lines-mult-d-2":
        d = 4 if args.d is None else args.d
        if not 4 <= d <= 10:
            raise InputError("lines-mult-d-2 is reproduced for 4 <= d <= 10")
        m_max = 6 if args.mmax is None else args.mmax
        body, text, ok = _repro_d2(d, m_max, args.oracle)
    else:
        d = 8 if args.d is None else args.d
        if d != 8:
            msg = "lines-mult-d-3 is reproduced for d = 8 only"
            if d >= 9:
                msg += ("; for d >= 9, a union of d lines with a point of multiplicity d-3 "
                        "is known not to be contractible in general")
            raise InputError(msg)
        m_max = 12 if args.mmax is None else args.mmax
        body, text, ok = _repro_d3(m_max, args.oracle)
    key = {"prop": args.prop, "d": d, "mmax": m_max}
    report = dict(_header(_canonical_hash(key), "repro"))
    report.update(body)
    report["matches_expected"] = ok
    text.append(f"overall: {'matches expected' if ok else 'DIFFERS from expected'}")
    _emit(args.out, {"repro.json": report}, "\n".join(text) + "\n")
    return EXIT_OK


def cmd_contract(args) -> int:
    data, h = load_json(args.file)
    problem = parse_input(data)
    try:
        res = contract_driver(problem.config, problem.marked, extra_curves=problem.extra_curves,
                              m_max=args.mmax, coords=problem.coords, lines=problem.lines)
    except DriverPrecondition as exc:
        raise InputError(f"driver precondition: {exc}") from None
    log = dict(_header(h, "contract"))
    log.update(res.log)
    log["final"] = res.final.to_json() if res.final is not None else None
    result = dict(_header(h, "contract"))
    result.update({"kind": res.kind, "reason": res.reason,
                   "macros": [m["kind"] for m in res.log["macros"]],
                   "steplog": "steplog.json", "steplog_sha256": _canonical_hash(log)})
    text = f"{res.kind}: {res.reason}\n"
    if res.kind == "Contracted":
        text += "macros: " + ", ".join(result["macros"]) + "\n"
    _emit(args.out, {"result.json": result, "steplog.json": log}, text)
    return EXIT_OK


def cmd_replay(args) -> int:
    data, _ = load_json(args.steplog)
    if not isinstance(data, Mapping) or "initial" not in data or "macros" not in data:
        raise InputError("step log needs 'initial' and 'macros'")
    try:
        st = replay(data)
    except (CremonaError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"step log does not replay: {exc}") from None
    final = st.to_json()
    match = None
    if data.get("final") is not None:
        match = final == data["final"]
    out = {"final": final, "matches_recorded_final": match}
    text = (f"replayed {len(data['macros'])} macro steps; final model "
            f"{st.model.describe()}, divisor {st.divisor}\n")
    if match is not None:
        text += f"final state {'matches' if match else 'DIFFERS from'} the recorded one\n"
    _emit(args.out, {"replay.json": out}, text)
    if match is False:
        print("replay produced a different final state", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ratpairs", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"ratpairs {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="classify, compute barks and bound kod")
    a.add_argument("file")
    a.add_argument("--mmax", type=int, default=12)
    a.add_argument("--out")
    a.set_defaults(func=cmd_analyze)

    r = sub.add_parser("repro", help="reproduce the line arrangement computations")
    r.add_argument("prop", choices=["lines-mult-d-2", "lines-mult-d-3"])
    r.add_argument("--d", type=int)
    r.add_argument("--mmax", type=int)
    r.add_argument("--oracle", choices=["all", "last", "none"], default="all")
    r.add_argument("--out")
    r.set_defaults(func=cmd_repro)

    c = sub.add_parser("contract", help="run the contraction driver")
    c.add_argument("file")
    c.add_argument("--mmax", type=int, default=12)
    c.add_argument("--out")
    c.set_defaults(func=cmd_contract)

    rp = sub.add_parser("replay", help="replay a step log")
    rp.add_argument("steplog")
    rp.add_argument("--out")
    rp.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ArrangementError, ClusterError, ConfigError, LinSysError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InvariantBreach, PeelingError, LatticeError, CremonaError) as exc:
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
