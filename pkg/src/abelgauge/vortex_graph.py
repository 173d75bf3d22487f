"""The plaquette graph G(omega, omega'), paths, distances and vortex searches.

Two distinct oriented plaquettes are adjacent when they lie in the boundary
of a common 3-cell (orientation ignored). Since every plaquette of Z^4 has
3-cells, p and -p are always adjacent. For plaquettes inside a box, a shared
3-cell is automatically inside the box too, so adjacency does not depend on
which box is used.

Sparse 2-forms produced by the searches are :class:`PlaquetteConfig` objects
(positive plaquette -> group element) so they can live on Z^4 without
materialising a huge box.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _kernels
from .abelian_group import GroupSpec, phi_table
from .cell_complex import (Box, Cell, DifferentialForm, boundary, exterior_derivative)
from .errors import DomainError, ResourceError

CENSUS_MAX_CAP = 11


# ------------------------------------------------------------------ local geometry

@lru_cache(maxsize=None)
def _cubes(p: Cell) -> tuple[tuple[Cell, int], ...]:
    """Positive 3-cells of Z^n containing the positive plaquette p, with p's sign in their boundary."""
    out = []
    for i in range(p.n):
        if i in p.dirs:
            continue
        dirs = tuple(sorted(p.dirs + (i,)))
        for base in (p.base, tuple(v - (1 if j == i else 0) for j, v in enumerate(p.base))):
            cube = Cell(base, dirs)
            for f in boundary(cube):
                if f.base == p.base and f.dirs == p.dirs:
                    out.append((cube, f.sign))
    return tuple(sorted(out))


@lru_cache(maxsize=None)
def _faces(cube: Cell) -> tuple[tuple[Cell, int], ...]:
    return tuple(sorted((f.positive, f.sign) for f in boundary(cube)))


def cubes_in(p: Cell, box: Box | None) -> list[tuple[Cell, int]]:
    return [(c, s) for c, s in _cubes(p.positive) if box is None or box.contains(c)]


def on_boundary(p: Cell, box: Box | None) -> bool:
    """True when some 3-cell of Z^n containing p sticks out of the box."""
    if box is None:
        return False
    return any(not box.contains(c) for c, _ in _cubes(p.positive))


@lru_cache(maxsize=None)
def _neighbors(p: Cell) -> tuple[Cell, ...]:
    out = set()
    for c, _ in _cubes(p):
        for q, _ in _faces(c):
            if q != p:
                out.add(q)
    return tuple(sorted(out))


def plaquette_neighbors(p: Cell, box: Box | None = None) -> list[Cell]:
    """Positive plaquettes other than +-p sharing a 3-cell with p (restricted to the box)."""
    return [q for q in _neighbors(p.positive) if box is None or box.contains(q)]


def adjacent(p: Cell, q: Cell) -> bool:
    if p == q:
        return False
    if p.positive == q.positive:
        return True
    return q.positive in _neighbors(p.positive)


def share_cube(p: Cell, q: Cell) -> bool:
    """The 3-cells of p meet those of q or of -q (true for q = +-p)."""
    return p.positive == q.positive or q.positive in _neighbors(p.positive)


def oriented_neighbors(p: Cell, box: Box | None = None) -> list[Cell]:
    out = [-p]
    for q in plaquette_neighbors(p, box):
        out.append(q)
        out.append(-q)
    return sorted(out)


# ------------------------------------------------------------------ sparse forms

@dataclass(frozen=True)
class PlaquetteConfig:
    """A 2-form given on finitely many positive plaquettes of Z^n."""
    group: GroupSpec
    values: tuple[tuple[Cell, tuple[int, ...]], ...]

    @classmethod
    def from_dict(cls, group: GroupSpec, d: dict) -> "PlaquetteConfig":
        items = []
        for c, g in d.items():
            g = group.element(g)
            if c.sign < 0:
                c, g = -c, group.neg(g)
            if g != group.zero:
                items.append((c, g))
        return cls(group, tuple(sorted(items)))

    def as_dict(self) -> dict[Cell, tuple[int, ...]]:
        return dict(self.values)

    @property
    def positive_support(self) -> int:
        return len(self.values)

    def support(self) -> set[Cell]:
        return {c for c, _ in self.values} | {-c for c, _ in self.values}

    def __contains__(self, p: Cell) -> bool:
        return p.positive in self.as_dict()

    def activity(self, beta: float) -> float:
        phi = phi_table(self.group, beta)
        G = self.group
        out = 1.0
        for _, g in self.values:
            out *= phi[G.encode(g)] * phi[G.encode(G.neg(g))]
        return float(out)

    def is_closed(self) -> bool:
        G = self.group
        d = self.as_dict()
        cubes = {c for p in d for c, _ in _cubes(p)}
        for c in cubes:
            tot = G.zero
            for q, s in _faces(c):
                if q in d:
                    tot = G.add(tot, d[q] if s > 0 else G.neg(d[q]))
            if tot != G.zero:
                return False
        return True

    def to_form(self, box: Box) -> DifferentialForm:
        f = DifferentialForm(box, 2, self.group)
        for c, g in self.values:
            f[c] = g
        return f

    def to_record(self) -> dict:
        return {"degree": 2, "cells": [{"base": list(c.base), "dirs": list(c.dirs), "value": list(g)}
                                       for c, g in self.values]}


# ------------------------------------------------------------------ the graph

class _UnionFind:
    def __init__(self):
        self.parent = {}

    def add(self, x):
        self.parent.setdefault(x, x)

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


@dataclass
class VortexGraph:
    """G(omega, omega'): vertices are the oriented plaquettes in either support.

    Components are stored per positive plaquette; p and -p always share one.
    """
    vertices: list[Cell]
    labels: dict[Cell, int] = field(default_factory=dict)

    def __contains__(self, p: Cell) -> bool:
        return p.positive in self.labels

    def component(self, p: Cell) -> int | None:
        return self.labels.get(p.positive)

    @property
    def n_components(self) -> int:
        return len(set(self.labels.values()))

    def components(self) -> list[list[Cell]]:
        """Components as sorted lists of positive plaquettes."""
        out: dict[int, list[Cell]] = {}
        for p in self.vertices:
            out.setdefault(self.labels[p], []).append(p)
        return [out[k] for k in sorted(out)]

    def neighbors(self, p: Cell) -> list[Cell]:
        return [q for q in oriented_neighbors(p) if q in self]


def _support_cells(form) -> list[Cell]:
    if form is None:
        return []
    if isinstance(form, PlaquetteConfig):
        return [c for c, _ in form.values]
    if form.degree != 2:
        raise DomainError("the vortex graph is built from 2-forms")
    return form.support_positive()


def build_graph(omega, omega_prime=None) -> VortexGraph:
    verts = sorted(set(_support_cells(omega)) | set(_support_cells(omega_prime)))
    uf = _UnionFind()
    vset = set(verts)
    for p in verts:
        uf.add(p)
    for p in verts:
        for q in _neighbors(p):
            if q in vset:
                uf.union(p, q)
    roots = {}
    labels = {}
    for p in verts:
        r = uf.find(p)
        labels[p] = roots.setdefault(r, len(roots))
    return VortexGraph(verts, labels)


def _as_set(P) -> set[Cell]:
    if isinstance(P, Cell):
        return {P}
    return set(P)


def connected(g: VortexGraph, P1, P2) -> bool:
    """Some p1 in P1 and p2 in P2 are vertices of one component."""
    P1, P2 = _as_set(P1), _as_set(P2)
    if P1 & P2:
        raise DomainError("connected() needs disjoint plaquette sets")
    l1 = {g.component(p) for p in P1 if p in g}
    l2 = {g.component(p) for p in P2 if p in g}
    return bool(l1 & l2)


def geodesic(g: VortexGraph, p1: Cell, p2: Cell) -> list[Cell] | None:
    """A shortest path from p1 to p2 in the graph (lexicographic tie-break), or None."""
    if p1 not in g or p2 not in g:
        return None
    return _bfs_path([p1], {p2}, lambda p: g.neighbors(p))


def _bfs_path(sources, targets, nbrs):
    prev = {}
    q = deque()
    for s in sorted(sources):
        prev[s] = None
        q.append(s)
    while q:
        u = q.popleft()
        if u in targets:
            path = [u]
            while prev[path[-1]] is not None:
                path.append(prev[path[-1]])
            return path[::-1]
        for v in nbrs(u):
            if v not in prev:
                prev[v] = u
                q.append(v)
    return None


# ------------------------------------------------------------------ paths

def is_path(path: list[Cell]) -> bool:
    if len(set(path)) != len(path) or not path:
        return False
    return all(adjacent(a, b) for a, b in zip(path, path[1:]))


def optimality_violation(path: list[Cell]) -> tuple | None:
    """First reason the path is not optimal, or None if it is."""
    m = len(path)
    if any(p.sign != path[0].sign for p in path[:m - 1]):
        k = next(i for i, p in enumerate(path[:m - 1]) if p.sign != path[0].sign)
        return ("orientation", 0, k)
    for i in range(m):
        for j in range(i + 2, m):
            if share_cube(path[i], path[j]):
                return ("overlap", i, j)
    return None


def is_optimal(path: list[Cell]) -> bool:
    return is_path(path) and optimality_violation(path) is None


def shortest_path(box: Box, P1, P2) -> list[Cell]:
    """A shortest path in P_B from P1 to P2, sources and neighbours visited in lex order."""
    P1, P2 = _as_set(P1), _as_set(P2)
    if not P1 or not P2:
        raise DomainError("both plaquette sets must be nonempty")
    if P1 & P2:
        raise DomainError("plaquette sets must be disjoint")
    for p in P1 | P2:
        if p.k != 2 or not box.contains(p):
            raise DomainError(f"{p} is not a plaquette of {box}")
    path = _bfs_path(P1, P2, lambda p: oriented_neighbors(p, box))
    if path is None:
        raise DomainError("the two sets are not joined by any path in the box")
    return path


def dist_star(box: Box, P1, P2) -> int:
    """Fewest plaquettes on a path from P1 to P2 in P_B (endpoints included)."""
    return len(shortest_path(box, P1, P2))


def count_optimal_paths(box: Box, p1: Cell, m: int) -> int:
    """Number of optimal paths (p1, ..., pm) in P_B with pm != +-p1."""
    if m < 2:
        raise DomainError("m must be at least 2")
    if p1.k != 2 or not box.contains(p1):
        raise DomainError(f"{p1} is not a plaquette of {box}")
    # every plaquette of such a path is within m-1 hops of p1
    ids = {p1.positive: 0}
    order = [p1.positive]
    frontier = [p1.positive]
    for _ in range(m - 1):
        nxt = []
        for u in frontier:
            for v in plaquette_neighbors(u, box):
                if v not in ids:
                    ids[v] = len(order)
                    order.append(v)
                    nxt.append(v)
        frontier = nxt
    cube_ids: dict[Cell, int] = {}
    nbr_ptr, nbr_idx, cube_ptr, cube_idx = [0], [], [0], []
    for u in order:
        nbr_idx.extend(ids[v] for v in plaquette_neighbors(u, box) if v in ids)
        nbr_ptr.append(len(nbr_idx))
        cube_idx.extend(cube_ids.setdefault(c, len(cube_ids)) for c, _ in _cubes(u))
        cube_ptr.append(len(cube_idx))
    arr = lambda x: np.asarray(x, dtype=np.int64)
    start = 0 if p1.sign > 0 else 1
    return int(_kernels.count_optimal(start, m, arr(nbr_ptr), arr(nbr_idx), arr(cube_ptr),
                                      arr(cube_idx), len(cube_ids)))


def count_optimal_paths_bruteforce(box: Box, p1: Cell, m: int) -> int:
    """Generate every path of length m from p1, then test optimality directly."""
    total = 0
    stack = [[p1]]
    while stack:
        path = stack.pop()
        if len(path) == m:
            if path[-1].positive != p1.positive and optimality_violation(path) is None:
                total += 1
            continue
        for q in reversed(oriented_neighbors(path[-1], box)):
            if q not in path:
                stack.append(path + [q])
    return total


def optimalize_geodesic(path: list[Cell], graph: VortexGraph | None = None) -> list[Cell]:
    """Flip the signs of p2..p_{m-1} to match p1; the result must be optimal."""
    if not is_path(path):
        raise DomainError("input is not a path")
    if graph is not None:
        if any(p not in graph for p in path):
            raise DomainError("path leaves the graph")
        g = geodesic(graph, path[0], path[-1])
        if g is None or len(g) != len(path):
            raise DomainError("input is not a geodesic of the graph")
    s = path[0].sign
    out = [path[0]] + [p if p.sign == s else -p for p in path[1:-1]] + ([path[-1]] if len(path) > 1 else [])
    bad = optimality_violation(out) if is_path(out) else ("repeat", 0, 0)
    if bad is not None:
        raise DomainError(f"sign flips cannot make this path optimal: {bad[0]} between positions {bad[1]} and {bad[2]}")
    return out


def path_witness(box: Box, path: list[Cell], g=None, group: GroupSpec | None = None):
    """Two closed forms d sigma0, d sigma1 making ``path`` a path of their graph.

    Edges are chosen greedily along the path (lex-smallest candidate), and
    the j-th chosen edge goes to sigma1 for odd j, to sigma0 for even j.
    """
    if group is None:
        raise DomainError("path_witness needs the structure group")
    if not is_path(path):
        raise DomainError("input is not a path")
    for p in path:
        if not box.contains(p):
            raise DomainError(f"{p} is not in {box}")
    if len(path) > 1 and dist_star(box, {path[0]}, {path[-1]}) != len(path):
        raise DomainError("path_witness needs a shortest path")
    g = group.nonzero()[0] if g is None else group.element(g)
    if g == group.zero:
        raise DomainError("g must be nonzero")

    def edges(p):
        return {f.positive for f in boundary(p.positive)}

    m = len(path)
    chosen: list[Cell] = []
    while True:
        covered = set(chosen)
        todo = [k for k in range(m) if not (edges(path[k]) & covered)]
        if not todo:
            break
        k = todo[0]
        here = edges(path[k])
        if k + 1 < m and here & edges(path[k + 1]):
            chosen.append(min(here & edges(path[k + 1])))
        else:
            chosen.append(min(here))
    sig0 = DifferentialForm(box, 1, group)
    sig1 = DifferentialForm(box, 1, group)
    for j, e in enumerate(chosen, start=1):
        tgt = sig0 if j % 2 == 0 else sig1
        tgt[e] = group.add(tgt[e], g)
    w0, w1 = exterior_derivative(sig0), exterior_derivative(sig1)
    gr = build_graph(w0, w1)
    if any(p not in gr for p in path):
        raise DomainError("construction failed to cover the path")
    return w0, w1


# ------------------------------------------------------------------ closed-form search

class _Budget(Exception):
    pass


class _Side:
    """One growing 2-form: values on positive plaquettes plus Bianchi defects."""

    def __init__(self, group: GroupSpec, box: Box | None):
        self.G = group
        self.box = box
        self.vals: dict[Cell, int] = {}
        self.defect: dict[Cell, int] = {}

    def allowed(self, p: Cell) -> bool:
        return self.box is None or self.box.contains(p)

    def put(self, p: Cell, code: int):
        G = self.G
        self.vals[p] = code
        for c, s in _cubes(p):
            if self.box is not None and not self.box.contains(c):
                continue
            v = code if s > 0 else int(G.neg_table[code])
            new = int(G.add_table[self.defect.get(c, 0), v])
            if new:
                self.defect[c] = new
            else:
                self.defect.pop(c, None)

    def take(self, p: Cell):
        code = self.vals.pop(p)
        self.put(p, int(self.G.neg_table[code]))
        del self.vals[p]

    def first_defect(self) -> Cell:
        return min(self.defect)


def _per_plaquette_fix(n: int) -> int:
    return 2 * (n - 2)


def minimal_vortex_census(box: Box | None, p: Cell, max_positive_support: int, group: GroupSpec,
                          node_budget: int | None = None) -> list[PlaquetteConfig]:
    """All closed 2-forms with p in their support and at most ``cap`` positive plaquettes.

    Depth-first growth from p: the lexicographically first 3-cell whose
    Bianchi sum is nonzero is repaired by adding one of its other faces with
    any nonzero value. Growth stops at closed states; for caps up to 11 this
    loses nothing, because a closed proper piece and its closed complement
    would each need at least six plaquettes. With ``box=None`` the search
    runs on Z^n; otherwise plaquettes of the box boundary are never added,
    which drops exactly the forms whose support meets that boundary.
    """
    cap = int(max_positive_support)
    if cap > CENSUS_MAX_CAP:
        raise DomainError(f"census is only complete up to positive support {CENSUS_MAX_CAP}")
    if p.k != 2:
        raise DomainError("census starts from a plaquette")
    p = p.positive
    if box is not None and (not box.contains(p) or on_boundary(p, box)):
        raise DomainError(f"{p} is not an interior plaquette of {box}")
    if cap < 1:
        return []
    G = group
    side = _Side(G, None)
    fix = _per_plaquette_fix(p.n)
    seen = set()
    found = {}
    nodes = 0

    def rec():
        nonlocal nodes
        nodes += 1
        if node_budget is not None and nodes > node_budget:
            raise ResourceError("census node budget exhausted", required=nodes, budget=node_budget)
        key = frozenset(side.vals.items())
        if key in seen:
            return
        seen.add(key)
        if not side.defect:
            found[key] = dict(side.vals)
            return
        used = len(side.vals)
        if used + -(-len(side.defect) // fix) > cap:
            return
        c = side.first_defect()
        for q, _ in _faces(c):
            if q in side.vals:
                continue
            if on_boundary(q, box):
                continue
            for code in range(1, G.order):
                side.put(q, code)
                rec()
                side.take(q)

    for code in range(1, G.order):
        side.put(p, code)
        rec()
        side.take(p)
    out = [PlaquetteConfig.from_dict(G, {q: G.decode(v) for q, v in vals.items()})
           for vals in found.values()]
    return sorted(out, key=lambda f: (f.positive_support, f.values))


@dataclass
class DistanceResult:
    """Certified value of dist_{B,B'}: exact when ``exact``, else only lower <= d <= upper."""
    lower: int
    upper: int
    exact: bool
    nodes: int
    witness: tuple[PlaquetteConfig, PlaquetteConfig] | None = None

    @property
    def value(self) -> int | None:
        return self.lower if self.exact else None


def dist_config_bruteforce(B: Box, Bp: Box, p1: Cell, p2: Cell, group: GroupSpec,
                           budget: int = 1_000_000) -> DistanceResult:
    """Exact dist_{B,B'}(p1, p2) by iterative deepening over the total positive support.

    A state is a pair of partial forms (on B and on B'), grown from p1 so
    that their joint support stays connected: Bianchi defects are repaired
    first (lexicographically smallest 3-cell, form on B before form on B');
    once both forms are closed and p2 is not yet reached, a new plaquette
    adjacent to the current support is started. The search at depth s
    explores every pair with positive support s or less, so the first depth
    that succeeds is the distance. If ``budget`` nodes are spent, the
    certified interval [dist*, 6 dist*] (tightened by the depths refuted so
    far) is returned instead.
    """
    if not B.contains_box(Bp):
        raise DomainError("B' must be contained in B")
    for q in (p1, p2):
        if q.k != 2 or not B.contains(q):
            raise DomainError(f"{q} is not a plaquette of {B}")
    if p1 == p2:
        return DistanceResult(0, 0, True, 0)
    G = group
    lo = dist_star(B, {p1}, {p2})
    hi = 6 * lo
    fix = _per_plaquette_fix(B.n)
    a, b = p1.positive, p2.positive
    # hop distance to p2 over positive plaquettes of B bounds the plaquettes still needed
    hop = {b: 0}
    q = deque([b])
    while q:
        u = q.popleft()
        for v in plaquette_neighbors(u, B):
            if v not in hop:
                hop[v] = hop[u] + 1
                q.append(v)
    sides = (_Side(G, B), _Side(G, Bp))
    nodes = 0

    def included():
        return set(sides[0].vals) | set(sides[1].vals)

    def search(s: int):
        seen = set()

        def rec():
            nonlocal nodes
            nodes += 1
            if nodes > budget:
                raise _Budget
            key = (frozenset(sides[0].vals.items()), frozenset(sides[1].vals.items()))
            if key in seen:
                return None
            seen.add(key)
            inc = included()
            used = len(sides[0].vals) + len(sides[1].vals)
            need_fix = sum(-(-len(sd.defect) // fix) for sd in sides)
            need_conn = 0 if b in inc else min(hop[x] for x in inc)
            if used + max(need_fix, need_conn) > s:
                return None
            for t, sd in enumerate(sides):
                if sd.defect:
                    c = sd.first_defect()
                    for f, _ in _faces(c):
                        if f in sd.vals or not sd.allowed(f):
                            continue
                        for code in range(1, G.order):
                            sd.put(f, code)
                            r = rec()
                            sd.take(f)
                            if r is not None:
                                return r
                    return None
            if b in inc:
                return tuple(PlaquetteConfig.from_dict(G, {x: G.decode(v) for x, v in sd.vals.items()})
                             for sd in sides)
            cand = sorted({y for x in inc for y in plaquette_neighbors(x, B)} | inc)
            for f in cand:
                for sd in sides:
                    if f in sd.vals or not sd.allowed(f):
                        continue
                    for code in range(1, G.order):
                        sd.put(f, code)
                        r = rec()
                        sd.take(f)
                        if r is not None:
                            return r
            return None

        for sd in sides:
            if not sd.allowed(a):
                continue
            for code in range(1, G.order):
                sd.put(a, code)
                r = rec()
                sd.take(a)
                if r is not None:
                    return r
        return None

    refuted = lo - 1
    try:
        for s in range(lo, hi + 1):
            w = search(s)
            if w is not None:
                return DistanceResult(s, s, True, nodes, w)
            refuted = s
    except _Budget:
        for sd in sides:
            sd.vals.clear()
            sd.defect.clear()
        return DistanceResult(max(lo, refuted + 1), hi, False, nodes)
    raise AssertionError("no configuration found below 6 dist*")
