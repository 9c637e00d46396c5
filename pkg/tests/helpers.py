"""Random generators shared by the test modules."""
from __future__ import annotations

import random
from fractions import Fraction
from itertools import combinations

from ratpairs.arrangement import ArrangementInput, build
from ratpairs.clusters import Cluster, add_point
from ratpairs.curvegraph import Edge, build_config
from ratpairs.lattice import P2, SurfaceModel
from ratpairs.curvegraph import chain_discriminant


def realize_forest(trees, line_root: bool = False):
    """Realize rooted trees of rational curves in a blown-up plane lattice.

    ``trees``: list of (self_ints, parents) with parents[0] = None.  Each
    non-root curve is E_b - sum of the slots of its children and of private
    slots; a root is the same shape, or H - ... when ``line_root`` (first tree).
    Children's base slots lie on their parent, so parent.child = 1 and all
    other pairs are disjoint.
    """
    labels: list[str] = []
    rows = []  # (cid, is_line, base slot, minus slots)
    edges = []
    for t, (ints, parents) in enumerate(trees):
        base = {}
        for v in range(len(ints)):
            base[v] = None
            if not (line_root and t == 0 and v == 0):
                lab = f"b{t}_{v}"
                labels.append(lab)
                base[v] = lab
        kids = {v: [w for w in range(len(ints)) if parents[w] == v] for v in range(len(ints))}
        for v, s in enumerate(ints):
            is_line = base[v] is None
            minus = [base[w] for w in kids[v]]
            need = (1 - s) if is_line else (-1 - s)
            extra = need - len(minus)
            if extra < 0:
                raise ValueError("self-intersection too large for the number of children")
            for k in range(extra):
                lab = f"x{t}_{v}_{k}"
                labels.append(lab)
                minus.append(lab)
            rows.append((f"C{t}_{v}", is_line, base[v], minus))
            if parents[v] is not None:
                edges.append(Edge(f"C{t}_{parents[v]}", f"C{t}_{v}", f"q{t}_{v}", 1))
    model = SurfaceModel(P2, 0, tuple(labels))
    classes = []
    for cid, is_line, b, minus in rows:
        c = model.h() if is_line else model.exc(b)
        for lab in minus:
            c = c - model.exc(lab)
        classes.append((cid, c))
    return build_config(model, classes, edges)


def random_tree(rng: random.Random, size: int, lo: int = -5, hi: int = -2):
    parents = [None] + [rng.randrange(v) for v in range(1, size)]
    ints = []
    for v in range(size):
        kids = sum(1 for p in parents if p == v)
        ints.append(rng.randint(min(lo, -1 - kids), min(hi, -1 - kids)))
    return ints, parents


def chain(ints):
    return list(ints), [None] + list(range(len(ints) - 1))


def fork(center: int, arms):
    """Star rooted at its center; ``arms`` lists self-ints from the center outwards."""
    ints, parents = [center], [None]
    for arm in arms:
        prev = 0
        for s in arm:
            parents.append(prev)
            ints.append(s)
            prev = len(ints) - 1
    return ints, parents


def platonic(arms) -> bool:
    discs = [chain_discriminant(list(reversed(a))) for a in arms]
    return all(d > 0 for d in discs) and sum(Fraction(1, d) for d in discs) > 1


def random_admissible_group(rng: random.Random):
    """(kind, config, ids of the group) for a random admissible twig, rod or fork."""
    kind = rng.choice(["twig", "rod", "fork"])
    pick = lambda: rng.choice([-2, -2, -2, -3, -4, -5])  # noqa: E731
    if kind == "rod":
        n = rng.randint(1, 8)
        cfg = realize_forest([chain([pick() for _ in range(n)])])
        return kind, cfg, tuple(c.id for c in cfg.components)
    if kind == "twig":
        n = rng.randint(1, 7)
        head = rng.choice([0, -1])  # the attaching line is irrelevant
        cfg = realize_forest([chain([head] + [pick() for _ in range(n)])], line_root=True)
        return kind, cfg, tuple(c.id for c in cfg.components[1:])
    while True:
        lens = sorted(rng.randint(1, 4) for _ in range(3))
        if sum(lens) + 1 > 8:
            continue
        arms = [[pick() for _ in range(k)] for k in lens]
        if rng.random() < 0.3:
            arms = [[-2] * k for k in lens]
        center = rng.choice([-2, -2, -3, -4])
        if not platonic(arms):
            continue
        # the center is a line root: H minus its slots
        cfg = realize_forest([fork(center, arms)], line_root=True)
        return kind, cfg, tuple(c.id for c in cfg.components)


def random_arrangement(rng: random.Random, k_lines: int, n_nodes: int, n_on_line: int, n_free: int,
                       twig_lines: int = 0):
    """Lines in general position with some nodes, points on one line and free points blown up.

    The first ``twig_lines`` lines keep a single node and get extra points, so
    they become tips of admissible twigs.
    """
    lines = []
    while len(lines) < k_lines:
        v = tuple(Fraction(rng.randint(-7, 7)) for _ in range(3))
        if all(x == 0 for x in v):
            continue
        trial = lines + [v]
        ok = True
        for a, b in combinations(trial, 2):
            if _cross(a, b) == (0, 0, 0):
                ok = False
        for a, b, c in combinations(trial, 3):
            if _det3(a, b, c) == 0:
                ok = False
        if ok:
            lines.append(v)
    names = [f"L{i + 1}" for i in range(k_lines)]
    nodes = [f"x:{a}:{b}" for a, b in combinations(names, 2)]
    rng.shuffle(nodes)
    forced = []
    for t in range(twig_lines):
        mine = [n for n in nodes if f"L{t + 1}" in n.split(":")[1:]]
        forced += [n for n in mine[1:] if n not in forced]
    blow = forced + [n for n in nodes if n not in forced][:max(0, n_nodes - len(forced))]
    named = []
    for i in range(n_on_line):
        li = lines[rng.randrange(twig_lines)] if i < 2 * twig_lines else lines[rng.randrange(k_lines)]
        # a point on li: cross with a random line
        while True:
            w = tuple(Fraction(rng.randint(-9, 9)) for _ in range(3))
            p = _cross(li, w)
            if any(p) and sum(1 for l2 in lines if sum(a * b for a, b in zip(l2, p)) == 0) == 1 \
                    and all(_cross(p, q) != (0, 0, 0) for _, q in named):
                break
        named.append((f"Q{i + 1}", p))
    for i in range(n_free):
        while True:
            p = tuple(Fraction(rng.randint(-9, 9)) for _ in range(3))
            if any(p) and all(sum(a * b for a, b in zip(l2, p)) != 0 for l2 in lines) \
                    and all(_cross(p, q) != (0, 0, 0) for _, q in named):
                break
        named.append((f"R{i + 1}", p))
    arr = ArrangementInput(tuple(zip(names, lines)), tuple(named),
                           tuple(blow) + tuple(n for n, _ in named))
    return arr, build(arr)


def _cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def _det3(a, b, c):
    return sum(x * y for x, y in zip(a, _cross(b, c)))


def random_cluster_on_line(rng: random.Random, line: str = "L", max_order: int = 3) -> Cluster:
    """Random cluster of order <= max_order with proper points on or off the line."""
    cl = Cluster()
    n_roots = rng.randint(1, 3)
    for r in range(n_roots):
        on = rng.random() < 0.6
        anchor = (Fraction(r + 1), Fraction(rng.randint(-5, 5)), Fraction(1))
        cl, pid = add_point(cl, pid=f"K{r}", anchor=anchor, on={line: 1} if on else None)
        depth = rng.randint(0, max_order)
        carrier = line if on and rng.random() < 0.5 else None
        for k in range(depth):
            cl, pid = add_point(cl, pid, pid=f"K{r}_{k + 1}", carrier=carrier)
            if carrier and rng.random() < 0.5:
                carrier = None
    return cl
