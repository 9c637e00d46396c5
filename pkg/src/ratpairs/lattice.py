"""Picard lattices of blown-up planes and Hirzebruch surfaces.

Classes are stored in the total-transform basis: ``(H, E_1, ..., E_k)`` over
the plane, ``(E, F, E_1, ..., E_k)`` over ``F_n``.  Everything is exact.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import floor
from typing import Iterable, Sequence

P2 = "P2"
FN = "Fn"


class LatticeError(ValueError):
    """Bad input to a lattice operation."""


class InvariantBreach(RuntimeError):
    """An identity that must hold exactly did not."""


def _frac(x) -> Fraction:
    if isinstance(x, float):
        raise LatticeError("floating point value in exact lattice data")
    return Fraction(x)


@dataclass(frozen=True)
class DivisorClass:
    coeffs: tuple[Fraction, ...]

    @staticmethod
    def of(values: Iterable) -> "DivisorClass":
        return DivisorClass(tuple(_frac(v) for v in values))

    def __len__(self) -> int:
        return len(self.coeffs)

    def __getitem__(self, i):
        return self.coeffs[i]

    def _check(self, other: "DivisorClass") -> None:
        if len(other.coeffs) != len(self.coeffs):
            raise LatticeError(
                f"dimension mismatch: {len(self.coeffs)} vs {len(other.coeffs)}")

    def __add__(self, other: "DivisorClass") -> "DivisorClass":
        self._check(other)
        return DivisorClass(tuple(a + b for a, b in zip(self.coeffs, other.coeffs)))

    def __sub__(self, other: "DivisorClass") -> "DivisorClass":
        self._check(other)
        return DivisorClass(tuple(a - b for a, b in zip(self.coeffs, other.coeffs)))

    def __neg__(self) -> "DivisorClass":
        return DivisorClass(tuple(-a for a in self.coeffs))

    def __mul__(self, k) -> "DivisorClass":
        k = _frac(k)
        return DivisorClass(tuple(k * a for a in self.coeffs))

    __rmul__ = __mul__

    def is_integral(self) -> bool:
        return all(a.denominator == 1 for a in self.coeffs)

    def is_zero(self) -> bool:
        return all(a == 0 for a in self.coeffs)

    def floor(self) -> "DivisorClass":
        return DivisorClass(tuple(Fraction(floor(a)) for a in self.coeffs))

    def as_ints(self) -> tuple[int, ...]:
        if not self.is_integral():
            raise LatticeError(f"class {self} is not integral")
        return tuple(int(a) for a in self.coeffs)

    def to_json(self) -> list[str]:
        return [str(a) for a in self.coeffs]

    def __str__(self) -> str:
        return "(" + ", ".join(str(a) for a in self.coeffs) + ")"


@dataclass(frozen=True)
class SurfaceModel:
    """P2 or F_n with an ordered list of blown-up point slots."""

    base: str
    n: int = 0
    exceptionals: tuple[str, ...] = ()

    def __post_init__(self):
        if self.base not in (P2, FN):
            raise LatticeError(f"unknown base {self.base!r}")
        if self.base == FN and self.n < 0:
            raise LatticeError("F_n needs n >= 0")
        if self.base == P2 and self.n != 0:
            raise LatticeError("P2 base takes no index")
        if len(set(self.exceptionals)) != len(self.exceptionals):
            raise LatticeError("duplicate exceptional slot ids")

    @property
    def offset(self) -> int:
        return 1 if self.base == P2 else 2

    @property
    def rank(self) -> int:
        return self.offset + len(self.exceptionals)

    def labels(self) -> tuple[str, ...]:
        head = ("H",) if self.base == P2 else ("E", "F")
        return head + self.exceptionals

    def describe(self) -> str:
        b = "P2" if self.base == P2 else f"F{self.n}"
        return f"{b}+{len(self.exceptionals)}"

    def slot(self, point_id: str) -> int:
        try:
            return self.offset + self.exceptionals.index(point_id)
        except ValueError:
            raise LatticeError(f"no exceptional slot for point {point_id!r}") from None

    def gram(self) -> tuple[tuple[int, ...], ...]:
        r = self.rank
        g = [[0] * r for _ in range(r)]
        if self.base == P2:
            g[0][0] = 1
        else:
            g[0][0] = -self.n
            g[0][1] = g[1][0] = 1
        for i in range(self.offset, r):
            g[i][i] = -1
        return tuple(tuple(row) for row in g)

    # constructors for common classes
    def zero(self) -> DivisorClass:
        return DivisorClass((Fraction(0),) * self.rank)

    def unit(self, i: int) -> DivisorClass:
        v = [Fraction(0)] * self.rank
        v[i] = Fraction(1)
        return DivisorClass(tuple(v))

    def cls(self, *coeffs) -> DivisorClass:
        if len(coeffs) != self.rank:
            raise LatticeError(f"expected {self.rank} coefficients, got {len(coeffs)}")
        return DivisorClass.of(coeffs)

    def exc(self, point_id: str) -> DivisorClass:
        return self.unit(self.slot(point_id))

    def h(self) -> DivisorClass:
        if self.base != P2:
            raise LatticeError("H only exists over P2")
        return self.unit(0)

    def e(self) -> DivisorClass:
        if self.base != FN:
            raise LatticeError("E only exists over F_n")
        return self.unit(0)

    def f(self) -> DivisorClass:
        if self.base != FN:
            raise LatticeError("F only exists over F_n")
        return self.unit(1)

    def plane_class(self, degree: int, mults: dict[str, int] | None = None) -> DivisorClass:
        v = self.h() * degree
        for pid, m in (mults or {}).items():
            v = v - self.exc(pid) * m
        return v

    def blown_up(self, point_id: str) -> "SurfaceModel":
        return SurfaceModel(self.base, self.n, self.exceptionals + (point_id,))

    def extend(self, c: DivisorClass) -> DivisorClass:
        """Pull back a class along one additional blow-up (new slot last)."""
        return DivisorClass(c.coeffs + (Fraction(0),))

    def nef_classes(self) -> tuple[DivisorClass, ...]:
        """Pullbacks of nef generators of the base surface."""
        if self.base == P2:
            return (self.h(),)
        return (self.f(), self.e() + self.f() * self.n)


def make_model(base: str, n_exceptionals: int = 0, n: int = 0,
               ids: Sequence[str] | None = None) -> SurfaceModel:
    if n_exceptionals < 0:
        raise LatticeError("negative number of exceptionals")
    if ids is None:
        ids = tuple(f"P{i + 1}" for i in range(n_exceptionals))
    elif len(ids) != n_exceptionals:
        raise LatticeError("ids length does not match n_exceptionals")
    return SurfaceModel(base, n if base == FN else 0, tuple(ids))


def pair(model: SurfaceModel, a: DivisorClass, b: DivisorClass) -> Fraction:
    r = model.rank
    if len(a) != r or len(b) != r:
        raise LatticeError(f"dimension mismatch: model rank {r}, classes {len(a)}, {len(b)}")
    x, y = a.coeffs, b.coeffs
    if model.base == P2:
        s = x[0] * y[0]
    else:
        s = -model.n * x[0] * y[0] + x[0] * y[1] + x[1] * y[0]
    for i in range(model.offset, r):
        s -= x[i] * y[i]
    return s


def self_int(model: SurfaceModel, a: DivisorClass) -> Fraction:
    return pair(model, a, a)


def canonical_class(model: SurfaceModel) -> DivisorClass:
    head = [-3] if model.base == P2 else [-2, -(model.n + 2)]
    return DivisorClass.of(head + [1] * len(model.exceptionals))


def arithmetic_genus(model: SurfaceModel, c: DivisorClass) -> int:
    if not c.is_integral():
        raise LatticeError(f"arithmetic genus needs an integral class, got {c}")
    k = canonical_class(model)
    twice = pair(model, c, c) + pair(model, c, k)
    if twice.denominator != 1 or twice.numerator % 2:
        raise InvariantBreach(f"C^2 + C.K is odd for {c}")
    return 1 + int(twice) // 2


def gram_of(model: SurfaceModel, classes: Sequence[DivisorClass]) -> list[list[Fraction]]:
    return [[pair(model, a, b) for b in classes] for a in classes]


def inertia(matrix: Sequence[Sequence]) -> tuple[int, int, int]:
    """(positive, zero, negative) counts of a symmetric rational matrix.

    Congruence diagonalisation with rational pivots (LDL^T with symmetric
    pivoting; a zero diagonal with a non-zero off-diagonal entry is repaired
    by adding one row/column to another).
    """
    a = [[Fraction(x) for x in row] for row in matrix]
    n = len(a)
    for row in a:
        if len(row) != n:
            raise LatticeError("matrix is not square")
    for i in range(n):
        for j in range(i):
            if a[i][j] != a[j][i]:
                raise LatticeError("matrix is not symmetric")
    pos = neg = 0
    idx = list(range(n))
    while idx:
        p = next((i for i in idx if a[i][i] != 0), None)
        if p is None:
            pair_ij = next(((i, j) for i in idx for j in idx if i < j and a[i][j] != 0), None)
            if pair_ij is None:
                break
            i, j = pair_ij
            # row/col i += row/col j gives diagonal 2 a_ij != 0
            for k in range(n):
                a[i][k] += a[j][k]
            for k in range(n):
                a[k][i] += a[k][j]
            p = i
        d = a[p][p]
        if d > 0:
            pos += 1
        else:
            neg += 1
        rest = [i for i in idx if i != p]
        for i in rest:
            f = a[i][p] / d
            if f:
                for j in rest:
                    a[i][j] -= f * a[p][j]
        idx = rest
    return pos, n - pos - neg, neg


def signature_ok(model: SurfaceModel) -> bool:
    pos, zero, neg = inertia(model.gram())
    return pos == 1 and zero == 0 and neg == model.rank - 1


@dataclass(frozen=True)
class RRBound:
    two_k_plus_d: DivisorClass
    minus_k_minus_d: DivisorClass
    rhs: int
    h: int


def rr_bound(model: SurfaceModel, config) -> RRBound:
    """Adjunction identity and Riemann-Roch lower bound for rational forests.

    ``config`` is a curvegraph.CurveConfig on ``model``.
    """
    comps = config.connected_components()
    for part in comps:
        pa = arithmetic_genus(model, config.sum_class(part))
        if pa != 0:
            raise LatticeError(f"connected part {sorted(part)} has p_a = {pa}, need 0")
    h = len(comps)
    d = config.total_class()
    k = canonical_class(model)
    lhs = pair(model, d, d + k)
    if lhs != -2 * h:
        raise InvariantBreach(f"D.(D+K) = {lhs}, expected {-2 * h}")
    rhs = pair(model, k, k + d) - h + 1
    if rhs != pair(model, d + k, d + k) + h + 1:
        raise InvariantBreach("the two forms of the Riemann-Roch bound disagree")
    return RRBound(k * 2 + d, -k - d, int(rhs), h)


def solve_exact(matrix: Sequence[Sequence], rhs: Sequence) -> list[Fraction]:
    """Solve a square non-singular system over Q by Gauss-Jordan."""
    n = len(matrix)
    a = [[Fraction(x) for x in row] + [Fraction(b)] for row, b in zip(matrix, rhs)]
    for col in range(n):
        piv = next((r for r in range(col, n) if a[r][col] != 0), None)
        if piv is None:
            raise LatticeError("singular system")
        a[col], a[piv] = a[piv], a[col]
        pv = a[col][col]
        a[col] = [x / pv for x in a[col]]
        for r in range(n):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [x - f * y for x, y in zip(a[r], a[col])]
    return [a[i][n] for i in range(n)]


def change_basis(old: SurfaceModel, new: SurfaceModel,
                 vectors: Sequence[DivisorClass]):
    """Return a map sending old-basis classes to coordinates in ``new``.

    ``vectors[i]`` is the i-th basis vector of ``new`` written in the old
    basis.  The span of ``vectors`` must carry exactly the Gram matrix of
    ``new``; classes outside the span are orthogonally projected onto it.
    """
    if len(vectors) != new.rank:
        raise LatticeError("wrong number of basis vectors")
    g_new = gram_of(old, vectors)
    if [list(map(Fraction, row)) for row in new.gram()] != g_new:
        raise InvariantBreach("basis vectors do not carry the target intersection form")
    inv_cols = [solve_exact(g_new, old_unit) for old_unit in
                (new.unit(i).coeffs for i in range(new.rank))]
    # g_new is unimodular and symmetric; inverse rows = inv_cols
    ginv = [[inv_cols[j][i] for j in range(new.rank)] for i in range(new.rank)]

    def push(c: DivisorClass) -> DivisorClass:
        prods = [pair(old, v, c) for v in vectors]
        return DivisorClass(tuple(sum(ginv[i][j] * prods[j] for j in range(new.rank))
                                  for i in range(new.rank)))

    if push(canonical_class(old)) != canonical_class(new):
        raise InvariantBreach("canonical class not carried to canonical class")
    return push
