"""Plane linear systems with assigned base points.

Virtual dimension, an exact h0 oracle (rank of the condition matrix modulo
two large primes, or over Q), the splitting process with machine-checkable
certificates, log plurigenera and bounded log Kodaira dimension verdicts.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from math import ceil
from typing import Mapping, Sequence

import numpy as np

from .clusters import Cluster, ClusterError
from .lattice import (FN, P2, DivisorClass, LatticeError, SurfaceModel,
                      canonical_class, pair)

PRIMES = (1073741789, 1073741783, 1073741741)
MAX_STEPS = 10_000


class LinSysError(ValueError):
    pass


@dataclass(frozen=True)
class LinSysSpec:
    model: SurfaceModel
    cls: DivisorClass

    @property
    def degree(self) -> Fraction:
        if self.model.base != P2:
            raise LinSysError("degree is only defined over P2")
        return self.cls[0]

    @property
    def multiplicities(self) -> dict[str, Fraction]:
        off = self.model.offset
        return {pid: -self.cls[off + i] for i, pid in enumerate(self.model.exceptionals)}

    def minus(self, c: DivisorClass, k: int = 1) -> "LinSysSpec":
        return LinSysSpec(self.model, self.cls - c * k)

    def to_json(self) -> dict:
        d = {"model": self.model.describe(), "labels": list(self.model.labels()),
             "class": self.cls.to_json()}
        if self.model.base == P2:
            d["degree"] = str(self.degree)
            d["multiplicities"] = {k: str(v) for k, v in self.multiplicities.items() if v}
        return d


def plane_spec(model: SurfaceModel, degree: int, mults: Mapping[str, int] | None = None) -> LinSysSpec:
    return LinSysSpec(model, model.plane_class(degree, dict(mults or {})))


def adjoint_spec(model: SurfaceModel, divisor: DivisorClass, m: int) -> LinSysSpec:
    """The system |m(D+K)|."""
    return LinSysSpec(model, (divisor + canonical_class(model)) * m)


def virtual_dim(spec: LinSysSpec) -> int:
    """Expected projective dimension d(d+3)/2 - sum m(m+1)/2 (may be negative)."""
    if not spec.cls.is_integral():
        raise LinSysError("virtual dimension needs an integral class")
    k = canonical_class(spec.model)
    c = spec.cls
    # chi(L) - 1 = L.(L-K)/2
    return int((pair(spec.model, c, c) - pair(spec.model, c, k)) / 2)


# ---------------------------------------------------------------- modular helpers

def _mod(x: Fraction, p: int) -> int:
    x = Fraction(x)
    den = x.denominator % p
    if den == 0:
        raise ArithmeticError(f"denominator of {x} vanishes modulo {p}")
    return (x.numerator % p) * pow(den, p - 2, p) % p


def rank_mod_p(mat: np.ndarray, p: int) -> int:
    """Rank of an integer matrix modulo a prime below 2^31 (entries already reduced)."""
    a = np.array(mat, dtype=np.int64) % p
    rows, cols = a.shape
    r = 0
    for c in range(cols):
        if r == rows:
            break
        nz = np.nonzero(a[r:, c])[0]
        if nz.size == 0:
            continue
        piv = r + int(nz[0])
        if piv != r:
            a[[r, piv]] = a[[piv, r]]
        inv = pow(int(a[r, c]), p - 2, p)
        a[r, c:] = a[r, c:] * inv % p
        below = a[r + 1:, c].copy()
        hit = np.nonzero(below)[0]
        if hit.size:
            idx = r + 1 + hit
            a[idx, c:] = (a[idx, c:] - np.outer(below[hit], a[r, c:]) % p) % p
        r += 1
    return r


def rank_exact(rows: Sequence[Sequence[Fraction]]) -> int:
    a = [list(map(Fraction, row)) for row in rows]
    if not a:
        return 0
    cols = len(a[0])
    r = 0
    for c in range(cols):
        piv = next((i for i in range(r, len(a)) if a[i][c] != 0), None)
        if piv is None:
            continue
        a[r], a[piv] = a[piv], a[r]
        pv = a[r][c]
        for i in range(r + 1, len(a)):
            if a[i][c] != 0:
                f = a[i][c] / pv
                a[i] = [x - f * y for x, y in zip(a[i], a[r])]
        r += 1
        if r == len(a):
            break
    return r


# ---------------------------------------------------------------- local frames

def _cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def _det3(a, b, c) -> Fraction:
    x = _cross(b, c)
    return a[0] * x[0] + a[1] * x[1] + a[2] * x[2]


def _complete(p, u=None):
    """Vectors (u, w) with det[p, u, w] != 0."""
    units = [(Fraction(1), Fraction(0), Fraction(0)), (Fraction(0), Fraction(1), Fraction(0)),
             (Fraction(0), Fraction(0), Fraction(1))]
    if u is None:
        for a, b in combinations(units, 2):
            if _det3(p, a, b) != 0:
                return a, b
    for w in units:
        if _det3(p, u, w) != 0:
            return u, w
    raise LinSysError("degenerate frame")


def _line_direction(line, p):
    line = tuple(Fraction(x) for x in line)
    if sum(a * b for a, b in zip(line, p)) != 0:
        raise LinSysError(f"point {p} is not on the carrier line {line}")
    for e in range(3):
        unit = [Fraction(0)] * 3
        unit[e] = Fraction(1)
        u = _cross(line, unit)
        if any(u) and _cross(u, p) != (0, 0, 0):
            return u
    raise LinSysError("degenerate carrier line")


def _solve3(cols, v):
    """Solve [c0 c1 c2] x = v over Q."""
    d = _det3(*cols)
    if d == 0:
        raise LinSysError("singular frame")
    out = []
    for i in range(3):
        cs = list(cols)
        cs[i] = v
        out.append(_det3(*cs) / d)
    return tuple(out)


@dataclass(frozen=True)
class _Path:
    frame: tuple  # (P, u, w) exact homogeneous vectors
    jets: tuple[Fraction, ...]  # phi coefficients c_1, c_2, ...
    cumulative: tuple[int, ...]  # M_0, M_1, ...


def _paths(cluster: Cluster, mults: Mapping[str, int], lines: Mapping[str, Sequence]) -> list[_Path]:
    active = {pid for pid, m in mults.items() if m != 0}
    for pid in active:
        if pid not in cluster:
            raise LinSysError(f"point {pid!r} carries a multiplicity but has no cluster data")

    def relevant(pid: str) -> bool:
        return pid in active or any(relevant(c.id) for c in cluster.children(pid))

    out = []
    for root in cluster.points:
        if not root.is_proper or not relevant(root.id):
            continue
        if root.anchor is None:
            raise LinSysError(f"missing coordinates for proper point {root.id!r}")
        stack = [[root]]
        while stack:
            chain = stack.pop()
            kids = [c for c in cluster.children(chain[-1].id) if relevant(c.id)]
            if kids:
                for k in reversed(kids):
                    stack.append(chain + [k])
                continue
            p = root.anchor
            u = None
            if len(chain) > 1 and chain[1].carrier is not None and chain[1].carrier in lines:
                u = _line_direction(lines[chain[1].carrier], p)
            jets = []
            for q in chain[1:]:
                if q.jet is not None:
                    jets.append(q.jet)
                elif u is not None and q.carrier == chain[1].carrier:
                    jets.append(Fraction(0))
                else:
                    raise LinSysError(f"no local germ for infinitely near point {q.id!r}")
            u, w = _complete(p, u)
            cum, acc = [], 0
            for q in chain:
                acc += int(mults.get(q.id, 0))
                cum.append(acc)
            out.append(_Path((p, u, w), tuple(jets), tuple(cum)))
    return out


# ---------------------------------------------------------------- condition rows

class _Arith:
    """Scalar arithmetic used by the monomial expansion: modular or exact."""

    def __init__(self, p: int | None):
        self.p = p

    def conv(self, x):
        return _mod(x, self.p) if self.p else Fraction(x)

    def zeros(self, shape):
        if self.p:
            return np.zeros(shape, dtype=np.int64)
        z = np.empty(shape, dtype=object)
        z.fill(Fraction(0))
        return z

    def reduce(self, a):
        return a % self.p if self.p else a


def _local_forms(frame, jets, ar: _Arith):
    """For each coordinate c: sparse terms {(a, b): coeff} of P_c + x u_c + (y + phi(x)) w_c."""
    p, u, w = frame
    forms = []
    for c in range(3):
        t = {}
        for key, val in (((0, 0), p[c]), ((1, 0), u[c]), ((0, 1), w[c])):
            if val != 0:
                t[key] = t.get(key, 0) + val
        for k, cj in enumerate(jets, start=1):
            if cj != 0 and w[c] != 0:
                t[(k, 0)] = t.get((k, 0), 0) + cj * w[c]
        forms.append({k: ar.conv(v) for k, v in t.items() if v != 0})
    return forms


def _mul_form(series, form, ar: _Arith, tx: int, ty: int):
    """Multiply truncated bivariate series (last two axes) by a sparse form."""
    out = ar.zeros(series.shape)
    for (a, b), coef in form.items():
        if a >= tx or b >= ty:
            continue
        out[..., a:, b:] = ar.reduce(out[..., a:, b:] + ar.reduce(series[..., :tx - a, :ty - b] * coef))
    return out


def _expand(degree: int, forms, ar: _Arith, tx: int, ty: int):
    """Series of every monomial X^i Y^j Z^(d-i-j) as an array (i, j, tx, ty)."""
    cur = ar.zeros((1, 1, tx, ty))
    cur[0, 0, 0, 0] = ar.conv(1)
    for s in range(degree):
        nxt = ar.zeros((s + 2, s + 2, tx, ty))
        nxt[1:, :s + 1] = _mul_form(cur, forms[0], ar, tx, ty)
        nxt[0, 1:] = _mul_form(cur[0], forms[1], ar, tx, ty)
        nxt[0, 0] = _mul_form(cur[0, 0], forms[2], ar, tx, ty)
        cur = nxt
    return cur


def _path_rows(degree: int, path: _Path, transform, columns, ar: _Arith):
    cond = set()
    for k, mk in enumerate(path.cumulative):
        for b in range(mk):
            for a in range(mk - (k + 1) * b):
                cond.add((a, b))
    if not cond:
        return []
    tx = max(a for a, _ in cond) + 1
    ty = max(b for _, b in cond) + 1
    frame = tuple(transform(v) for v in path.frame)
    series = _expand(degree, _local_forms(frame, path.jets, ar), ar, tx, ty)
    rows = []
    for a, b in sorted(cond):
        rows.append([series[i, j, a, b] for i, j in columns])
    return rows


@dataclass(frozen=True)
class OracleResult:
    h0: int
    columns: int
    rank: int
    primes: tuple[int, ...]
    exact: bool


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("RATPAIRS_WORKERS", "1")))
    except ValueError:
        return 1


def h0_oracle(spec: LinSysSpec, cluster: Cluster, lines: Mapping[str, Sequence] | None = None,
              *, exact: bool = False, detail: bool = False):
    """Vector-space dimension h0 of a plane system with assigned (infinitely near) points.

    Proper points need exact coordinates in ``cluster``; infinitely near points
    follow a carrier line (looked up in ``lines``) or carry jet coefficients.
    """
    if spec.model.base != P2:
        raise LinSysError("the h0 oracle works over P2 only")
    if not spec.cls.is_integral():
        raise LinSysError("the h0 oracle needs an integral class")
    lines = dict(lines or {})
    d = int(spec.degree)
    if d < 0:
        res = OracleResult(0, 0, 0, (), exact)
        return res if detail else 0
    mults = {k: int(v) for k, v in spec.multiplicities.items()}
    for k, v in list(mults.items()):
        if v < 0:
            # E_k is then a fixed component; without points over k it can be dropped
            if any(p.parent == k and mults.get(p.id, 0) for p in cluster.points):
                raise LinSysError(f"negative multiplicity at {k!r}, which has points over it")
            mults[k] = 0
    paths = _paths(cluster, mults, lines)
    # vertex reduction: move the heaviest childless point to [0:0:1]
    lone = [pt for pt in paths if len(pt.cumulative) == 1 and pt.cumulative[0] > 0]
    shift = 0
    transform = lambda v: v  # noqa: E731
    if lone:
        best = max(lone, key=lambda pt: pt.cumulative[0])
        shift = min(best.cumulative[0], d + 1)
        a_cols = (best.frame[1], best.frame[2], best.frame[0])
        transform = lambda v, c=a_cols: _solve3(c, v)  # noqa: E731
        paths = [pt for pt in paths if pt is not best]
    columns = [(i, j) for i in range(d + 1) for j in range(d + 1 - i) if i + j >= shift]
    ncols = len(columns)
    if ncols == 0:
        res = OracleResult(0, 0, 0, (), exact)
        return res if detail else 0

    if exact:
        ar = _Arith(None)
        rows = [r for pt in paths for r in _path_rows(d, pt, transform, columns, ar)]
        rank = rank_exact(rows)
        res = OracleResult(ncols - rank, ncols, rank, (), True)
        return res if detail else res.h0

    def rank_at(p: int) -> int:
        ar = _Arith(p)
        rows = [r for pt in paths for r in _path_rows(d, pt, transform, columns, ar)]
        if not rows:
            return 0
        return rank_mod_p(np.array(rows, dtype=np.int64), p)

    with ThreadPoolExecutor(max_workers=_workers()) as pool:
        ranks = list(pool.map(rank_at, PRIMES[:2]))
    used = PRIMES[:2]
    if ranks[0] != ranks[1]:
        ranks.append(rank_at(PRIMES[2]))
        used = PRIMES
    # reduction mod p can only lose rank
    rank = max(ranks)
    res = OracleResult(ncols - rank, ncols, rank, used, False)
    return res if detail else res.h0


# ---------------------------------------------------------------- splitting process

@dataclass(frozen=True)
class Candidate:
    name: str
    cls: DivisorClass


@dataclass(frozen=True)
class SplitStep:
    name: str
    cls: DivisorClass
    k: int
    justification: str
    residual: LinSysSpec

    def to_json(self) -> dict:
        return {"class": self.name, "class_vector": self.cls.to_json(), "k": self.k,
                "justification": self.justification}


@dataclass(frozen=True)
class Verdict:
    kind: str  # Empty | Residual | Inconclusive
    reason: str = ""

    def to_json(self) -> dict:
        return {"kind": self.kind, "reason": self.reason}


@dataclass(frozen=True)
class SplitCertificate:
    spec: LinSysSpec
    steps: tuple[SplitStep, ...]
    verdict: Verdict
    residual: LinSysSpec

    def to_json(self) -> dict:
        return {"spec": self.spec.to_json(), "steps": [s.to_json() for s in self.steps],
                "verdict": self.verdict.to_json(), "residual": self.residual.to_json()}

    def trace(self) -> list[tuple[str, int]]:
        return [(s.name, s.k) for s in self.steps]


def exceptional_candidates(model: SurfaceModel, cluster: Cluster | None = None) -> list[Candidate]:
    """Proper transforms E_i - sum of E_j over points j lying on the first neighbourhood of i."""
    out = []
    for pid in model.exceptionals:
        c = model.exc(pid)
        if cluster is not None and pid in cluster:
            for ch in cluster.children(pid):
                if ch.id in model.exceptionals:
                    c = c - model.exc(ch.id)
        out.append(Candidate(f"E[{pid}]", c))
    return out


def joining_lines(model: SurfaceModel, cluster: Cluster, existing: Sequence[DivisorClass] = ()) -> list[Candidate]:
    """Lines through pairs of blown-up proper points, with every collinear blown-up point removed.

    Lines through a point carrying infinitely near points are skipped, since
    their proper transform depends on tangency data.
    """
    if model.base != P2:
        return []
    pts = [cluster.get(pid) for pid in model.exceptionals
           if pid in cluster and cluster.get(pid).is_proper and cluster.get(pid).anchor is not None]
    seen = {tuple(c.coeffs) for c in existing}
    out = []
    for a, b in combinations(pts, 2):
        line = _cross(a.anchor, b.anchor)
        if not any(line):
            continue
        on = [q for q in pts if sum(x * y for x, y in zip(line, q.anchor)) == 0]
        if on[0].id != a.id or on[1].id != b.id:
            continue  # each line generated once, from its first two points
        if any(any(ch.id in model.exceptionals for ch in cluster.children(q.id)) for q in on):
            continue
        cls = model.plane_class(1, {q.id: 1 for q in on})
        if tuple(cls.coeffs) in seen:
            continue
        seen.add(tuple(cls.coeffs))
        out.append(Candidate("L(" + ",".join(q.id for q in on) + ")", cls))
    return out


def _nef_check(spec: LinSysSpec) -> str | None:
    model = spec.model
    if model.base == P2 and spec.degree < 0:
        return f"negative degree {spec.degree}"
    for name, n in zip(("H",) if model.base == P2 else ("F", "E+nF"), model.nef_classes()):
        v = pair(model, spec.cls, n)
        if v < 0:
            return f"negative intersection {v} with the nef class {name}"
    return None


def split_once(spec: LinSysSpec, candidates: Sequence[Candidate]):
    """First candidate C with L.C < 0: returns (step, None) or (None, empty-reason) or None."""
    model = spec.model
    for cand in candidates:
        lc = pair(model, spec.cls, cand.cls)
        if lc >= 0:
            continue
        c2 = pair(model, cand.cls, cand.cls)
        if c2 >= 0:
            return None, (f"negative intersection {lc} with the irreducible class {cand.name} "
                          f"of square {c2} (nef)")
        k = ceil(Fraction(-lc) / Fraction(-c2))
        just = f"L.C = {lc} < 0 with C^2 = {c2}: C is a fixed component, k = ceil({-lc}/{-c2})"
        return SplitStep(cand.name, cand.cls, int(k), just, spec.minus(cand.cls, int(k))), None
    return None


def splitting_certificate(spec: LinSysSpec, candidates: Sequence[Candidate],
                          max_steps: int = MAX_STEPS) -> SplitCertificate:
    """Iterate forced splits in rounds.

    Each round snapshots the candidates meeting the residual negatively and
    splits them in candidate order, recomputing L.C before each one and
    skipping those no longer negative.  Within a round this is the lowest-id
    rule of ``split_once``.
    """
    steps: list[SplitStep] = []
    cur = spec
    model = spec.model

    def done(kind: str, reason: str) -> SplitCertificate:
        return SplitCertificate(spec, tuple(steps), Verdict(kind, reason), cur)

    while len(steps) < max_steps:
        reason = _nef_check(cur)
        if reason:
            return done("Empty", reason)
        batch = [c for c in candidates if pair(model, cur.cls, c.cls) < 0]
        if not batch:
            return done("Residual", "no forced split")
        for cand in batch:
            if len(steps) >= max_steps:
                break
            got = split_once(cur, [cand])
            if got is None:
                continue
            step, empty = got
            if empty:
                return done("Empty", empty)
            steps.append(step)
            cur = step.residual
            reason = _nef_check(cur)
            if reason:
                return done("Empty", reason)
    return done("Inconclusive", f"{max_steps} steps")


def config_candidates(config, cluster: Cluster | None = None, extra: Sequence[Candidate] = (),
                      auto_lines: bool = True) -> list[Candidate]:
    """Candidate order: components, caller classes, joining lines, exceptional curves."""
    out = [Candidate(c.id, c.cls) for c in config.components]
    out += list(extra)
    if auto_lines and cluster is not None:
        out += joining_lines(config.model, cluster, [c.cls for c in out])
    have = {tuple(c.cls.coeffs) for c in out}
    out += [c for c in exceptional_candidates(config.model, cluster) if tuple(c.cls.coeffs) not in have]
    return out


# ---------------------------------------------------------------- plurigenera and kod

def plurigenus(config, m: int, cluster: Cluster, lines: Mapping[str, Sequence] | None = None) -> int:
    return h0_oracle(adjoint_spec(config.model, config.total_class(), m), cluster, lines)


@dataclass(frozen=True)
class KodVerdict:
    kind: str  # MinusInfinityUpTo | NonNegative | Undetermined
    m: int
    witness: int = 0
    certificates: tuple[SplitCertificate, ...] = ()
    oracle_checked: tuple[int, ...] = ()
    note: str = ""

    def to_json(self) -> dict:
        d: dict = {"kind": self.kind, "m": self.m}
        if self.kind == "NonNegative":
            d["witness_h0"] = self.witness
        d["certificates"] = [c.to_json() for c in self.certificates]
        d["oracle_checked"] = list(self.oracle_checked)
        if self.note:
            d["note"] = self.note
        return d


def kod_estimate(config, m_max: int = 12, cluster: Cluster | None = None,
                 lines: Mapping[str, Sequence] | None = None,
                 extra: Sequence[Candidate] = (), oracle_always: bool = False) -> KodVerdict:
    """Bounded log Kodaira dimension check: splitting first, oracle as fallback.

    The verdict never claims kod = -infinity beyond ``m_max``.  Without
    coordinates a Residual splitting outcome yields Undetermined.
    """
    if m_max < 1:
        raise LinSysError("m_max must be at least 1")
    cands = config_candidates(config, cluster, extra)
    certs, checked = [], []
    coords = cluster is not None and config.model.base == P2
    for m in range(1, m_max + 1):
        spec = adjoint_spec(config.model, config.total_class(), m)
        cert = splitting_certificate(spec, cands)
        certs.append(cert)
        if cert.verdict.kind == "Empty" and not oracle_always:
            continue
        if not coords:
            return KodVerdict("Undetermined", m, 0, tuple(certs), tuple(checked),
                              "splitting left a residual system and no coordinates are available")
        h0 = h0_oracle(spec, cluster, lines)
        checked.append(m)
        if h0 > 0:
            return KodVerdict("NonNegative", m, h0, tuple(certs), tuple(checked))
    return KodVerdict("MinusInfinityUpTo", m_max, 0, tuple(certs), tuple(checked))
