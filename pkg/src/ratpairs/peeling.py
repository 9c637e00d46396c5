"""Barks, almost minimal models, exact definiteness tests and obstruction classification."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from math import ceil
from typing import Iterable, Sequence

from .clusters import Cluster
from .curvegraph import CurveConfig, classify, is_admissible
from .lattice import (DivisorClass, InvariantBreach, LatticeError, canonical_class, gram_of,
                      inertia, pair, solve_exact)

NEG_DEF = "NegativeDefinite"
NEG_SEMIDEF = "NegativeSemidefiniteNotDefinite"
INDEF = "Indefinite"


class PeelingError(ValueError):
    pass


# ---------------------------------------------------------------- definiteness

def _det(matrix: Sequence[Sequence[Fraction]]) -> Fraction:
    a = [[Fraction(x) for x in row] for row in matrix]
    n = len(a)
    det = Fraction(1)
    for c in range(n):
        p = next((r for r in range(c, n) if a[r][c] != 0), None)
        if p is None:
            return Fraction(0)
        if p != c:
            a[c], a[p] = a[p], a[c]
            det = -det
        det *= a[c][c]
        for r in range(c + 1, n):
            f = a[r][c] / a[c][c]
            if f:
                for k in range(c, n):
                    a[r][k] -= f * a[c][k]
    return det


def _symmetric(matrix) -> list[list[Fraction]]:
    m = [[Fraction(x) for x in row] for row in matrix]
    n = len(m)
    if any(len(row) != n for row in m):
        raise PeelingError("matrix is not square")
    for i in range(n):
        for j in range(i):
            if m[i][j] != m[j][i]:
                raise PeelingError("matrix is not symmetric")
    return m


def definiteness_minors(matrix) -> str:
    """Classification by principal minors.

    Negative definite iff the leading minors alternate in sign starting
    negative; negative semidefinite iff every principal minor of -M is >= 0.
    """
    m = _symmetric(matrix)
    n = len(m)
    if all((-1) ** k * _det([row[:k] for row in m[:k]]) > 0 for k in range(1, n + 1)):
        return NEG_DEF
    neg = [[-x for x in row] for row in m]
    for k in range(1, n + 1):
        for idx in combinations(range(n), k):
            if _det([[neg[i][j] for j in idx] for i in idx]) < 0:
                return INDEF
    return NEG_SEMIDEF


def definiteness(matrix, route: str = "inertia") -> str:
    """NegativeDefinite / NegativeSemidefiniteNotDefinite / Indefinite, exactly.

    ``route="inertia"`` counts signs of an LDL^T diagonalisation (fast);
    ``route="minors"`` is the principal-minor test (exponential, small inputs).
    """
    if route == "minors":
        return definiteness_minors(matrix)
    m = _symmetric(matrix)
    try:
        pos, zero, neg = inertia(m)
    except LatticeError as exc:
        raise PeelingError(str(exc)) from None
    if pos == 0 and zero == 0:
        return NEG_DEF
    if pos == 0:
        return NEG_SEMIDEF
    return INDEF


# ---------------------------------------------------------------- barks

@dataclass(frozen=True)
class BarkGroup:
    kind: str  # twig | rod | fork
    ids: tuple[str, ...]
    gamma: tuple[Fraction, ...]


@dataclass(frozen=True)
class Bark:
    groups: tuple[BarkGroup, ...]
    coefficients: dict = field(default_factory=dict)
    d_sharp: DivisorClass | None = None

    @property
    def support(self) -> tuple[str, ...]:
        return tuple(self.coefficients)

    def to_json(self) -> dict:
        return {
            "groups": [{"kind": g.kind, "ids": list(g.ids), "gamma": [str(x) for x in g.gamma]}
                       for g in self.groups],
            "coefficients": {k: str(v) for k, v in self.coefficients.items()},
            "d_sharp": None if self.d_sharp is None else self.d_sharp.to_json(),
        }


def _group_matrix(config: CurveConfig, ids: Sequence[str]) -> list[list[Fraction]]:
    return gram_of(config.model, [config.component(c).cls for c in ids])


def bark_of_group(config: CurveConfig, ids: Sequence[str]) -> tuple[Fraction, ...]:
    """Solve M(group) gamma = ((D+K).C_i) exactly; checks residuals and 0 < gamma <= 1."""
    ids = tuple(ids)
    if not ids or not is_admissible(config, ids):
        raise PeelingError(f"group {list(ids)} is not admissible")
    m = _group_matrix(config, ids)
    if definiteness(m) != NEG_DEF:
        raise PeelingError(f"group {list(ids)} is not negative definite")
    model = config.model
    dk = config.total_class() + canonical_class(model)
    rhs = [pair(model, dk, config.component(c).cls) for c in ids]
    gamma = solve_exact(m, rhs)
    bk = model.zero()
    for c, g in zip(ids, gamma):
        bk = bk + config.component(c).cls * g
    for c in ids:
        if pair(model, dk - bk, config.component(c).cls) != 0:
            raise InvariantBreach(f"bark residual non-zero on {c!r}")
    for c, g in zip(ids, gamma):
        if not 0 < g <= 1:
            raise InvariantBreach(f"bark coefficient {g} of {c!r} outside (0, 1]")
    return tuple(gamma)


def bark(config: CurveConfig) -> Bark:
    gc = classify(config)
    groups, coeffs = [], {}
    for kind, ids in gc.admissible_groups():
        gamma = bark_of_group(config, ids)
        for c, g in zip(ids, gamma):
            if c in coeffs:
                raise InvariantBreach(f"bark groups overlap at {c!r}")
            coeffs[c] = g
        groups.append(BarkGroup(kind, tuple(ids), gamma))
    model = config.model
    d_sharp = config.total_class()
    for c, g in coeffs.items():
        d_sharp = d_sharp - config.component(c).cls * g
    if coeffs:
        if definiteness(_group_matrix(config, list(coeffs))) != NEG_DEF:
            raise InvariantBreach("bark support is not negative definite")
        k = canonical_class(model)
        for c in coeffs:
            if pair(model, d_sharp + k, config.component(c).cls) != 0:
                raise InvariantBreach(f"(K + D#).{c} != 0")
    return Bark(tuple(groups), coeffs, d_sharp)


def rounded_log_class(config: CurveConfig, n: int, bk: Bark | None = None) -> DivisorClass:
    """floor(n(D# + K)), rounding coefficientwise on the components of D."""
    bk = bk or bark(config)
    out = canonical_class(config.model) * n
    for c in config.components:
        coef = n - ceil(n * bk.coefficients.get(c.id, Fraction(0)))
        out = out + c.cls * coef
    return out


# ---------------------------------------------------------------- almost minimality

@dataclass(frozen=True)
class MinimalityCheck:
    almost_minimal: bool
    witness: str | None = None
    witness_class: DivisorClass | None = None
    candidate_set_exhaustive: bool = False


def candidate_classes(config: CurveConfig, extra: Iterable[tuple[str, DivisorClass]] = ()):
    """Tracked candidates: components, exceptional basis classes, registered extras.

    A basis class meeting a component negatively contains that component, so
    it is reducible and skipped.
    """
    out = [(c.id, c.cls) for c in config.components]
    model = config.model
    for lab in model.exceptionals:
        e = model.exc(lab)
        if any(c.cls != e and pair(model, c.cls, e) < 0 for c in config.components):
            continue
        out.append((f"E:{lab}", e))
    seen = {v for _, v in out}
    for name, v in extra:
        if v not in seen:
            out.append((name, v))
            seen.add(v)
    return out


def is_almost_minimal(config: CurveConfig, extra: Iterable[tuple[str, DivisorClass]] = (),
                      bk: Bark | None = None) -> MinimalityCheck:
    bk = bk or bark(config)
    model = config.model
    k = canonical_class(model)
    supp = [config.component(c).cls for c in bk.coefficients]
    for name, c in candidate_classes(config, extra):
        if pair(model, c, c) != -1 or pair(model, c, k) != -1:
            continue
        if pair(model, bk.d_sharp + k, c) >= 0:
            continue
        if c in supp:
            continue
        if definiteness(gram_of(model, [c] + supp)) == NEG_DEF:
            return MinimalityCheck(False, name, c)
    return MinimalityCheck(True)


@dataclass
class AlmostMinimalResult:
    state: object  # cremona.State
    log: list
    contracted: list[str]

    @property
    def config(self) -> CurveConfig:
        return self.state.config()


def almost_minimalize(config: CurveConfig | None = None, cluster: Cluster | None = None,
                      extra_curves=(), state=None, session=None) -> AlmostMinimalResult:
    """Contract tracked offenders, lowest id first, until none is left.

    Only tracked curves (components and registered auxiliary curves) are
    contracted, since contraction needs the incidence data of the curve.
    """
    from .cremona import Session, contract, state_from_config

    if session is None:
        st = state if state is not None else state_from_config(config, cluster, extra_curves)
        session = Session(st)
    done: list[str] = []
    start = session.state.model.rank
    while True:
        st = session.state
        cfg = st.config()
        bk = bark(cfg)
        k = canonical_class(st.model)
        supp = [cfg.component(c).cls for c in bk.coefficients]
        offender = None
        for cid in sorted(st.curves, key=_id_key):
            c = st.curves[cid]
            if cid in bk.coefficients:
                continue
            if pair(st.model, c, c) != -1 or pair(st.model, c, k) != -1:
                continue
            if pair(st.model, bk.d_sharp + k, c) >= 0:
                continue
            if definiteness(gram_of(st.model, [c] + supp)) == NEG_DEF:
                offender = cid
                break
        if offender is None:
            break
        contract(session, offender)
        done.append(offender)
        if len(done) > start:
            raise InvariantBreach("almost minimalization exceeded the initial rank")
    return AlmostMinimalResult(session.state, session.log, done)


def _id_key(cid: str):
    return (cid,)


# ---------------------------------------------------------------- obstruction classifier

@dataclass(frozen=True)
class ObstructionVerdict:
    kind: str  # PencilReduction | DelPezzoRank1Shrinkable | NonAdmissibleFork | DriverContractible | Unknown
    detail: str
    data: dict = field(default_factory=dict)
    candidate_set_exhaustive: bool = False

    def to_json(self) -> dict:
        return {"kind": self.kind, "detail": self.detail, "data": self.data,
                "candidate_set_exhaustive": self.candidate_set_exhaustive}


class NotAlmostMinimal(PeelingError):
    pass


def classify_obstruction(config: CurveConfig, extra: Iterable[tuple[str, DivisorClass]] = (),
                         require_minimal: bool = True) -> ObstructionVerdict:
    extra = list(extra)
    bk = bark(config)
    if require_minimal:
        chk = is_almost_minimal(config, extra, bk)
        if not chk.almost_minimal:
            raise NotAlmostMinimal(f"offender {chk.witness}")
    model = config.model
    if config.components and set(bk.coefficients) == set(config.ids):
        return ObstructionVerdict("DelPezzoRank1Shrinkable", "D is the support of its bark")
    gc = classify(config)
    bad = [f for f in gc.forks if not f.admissible]
    if len(bad) == 1:
        return ObstructionVerdict("NonAdmissibleFork", f"fork centered at {bad[0].center}",
                                  {"center": bad[0].center, "ids": list(bad[0].ids)})
    supp = [config.component(c).cls for c in bk.coefficients]
    dcls = config.total_class()
    for name, f in candidate_classes(config, extra):
        if pair(model, f, f) != 0 or f.is_zero():
            continue
        if pair(model, f, dcls) > 1:
            continue
        if definiteness(gram_of(model, [f] + supp)) == NEG_SEMIDEF:
            return ObstructionVerdict("PencilReduction", f"pencil of {name}",
                                      {"class": f.to_json(), "name": name,
                                       "f_dot_D": str(pair(model, f, dcls))})
    if all(info.is_tree for info in gc.connected_components):
        return ObstructionVerdict("DriverContractible", "every component is a rational tree")
    return ObstructionVerdict("Unknown", "no rule applies")


def nef_big_check(config: CurveConfig, extra: Iterable[tuple[str, DivisorClass]] = ()) -> bool:
    """Approximate test that -(D# + K) is nef and big on the tracked classes."""
    bk = bark(config)
    model = config.model
    x = bk.d_sharp + canonical_class(model)
    if pair(model, x, x) <= 0:
        return False
    return all(pair(model, x, c) <= 0 for _, c in candidate_classes(config, extra))
