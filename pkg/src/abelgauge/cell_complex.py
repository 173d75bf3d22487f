"""Cubical cell complex of a box in Z^n and group-valued forms on it.

Direction indices are 0-based (``dirs=(0, 1)`` is dx_1 ^ dx_2). Only
positively oriented cells are stored; the value of a form on ``-c`` is the
negation of its value on ``c``.
"""
from __future__ import annotations

import itertools
import json
import math
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np

from .abelian_group import GroupSpec
from .errors import DomainError, NotClosedError, ResourceError

IRREDUCIBLE_CAP = 16


def perm_sign(seq: Iterable[int]) -> int:
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


@dataclass(frozen=True, order=True)
class Cell:
    """Oriented k-cell ``sign * (dx_{dirs[0]} ^ ... )`` anchored at ``base``.

    ``dual=True`` marks a cell of the dual lattice: its anchor is the centre
    ``base + (1/2, ..., 1/2)`` and its edges point in negative directions.
    """
    base: tuple[int, ...]
    dirs: tuple[int, ...]
    sign: int = 1
    dual: bool = False

    def __post_init__(self):
        object.__setattr__(self, "base", tuple(int(v) for v in self.base))
        dirs = tuple(int(v) for v in self.dirs)
        if list(dirs) != sorted(set(dirs)):
            raise DomainError(f"cell directions must be strictly increasing, got {dirs}")
        if dirs and not (0 <= dirs[0] and dirs[-1] < len(self.base)):
            raise DomainError(f"direction out of range for dimension {len(self.base)}")
        if self.sign not in (1, -1):
            raise DomainError("cell sign must be +1 or -1")
        object.__setattr__(self, "dirs", dirs)

    @property
    def k(self) -> int:
        return len(self.dirs)

    @property
    def n(self) -> int:
        return len(self.base)

    def __neg__(self) -> "Cell":
        return Cell(self.base, self.dirs, -self.sign, self.dual)

    @property
    def positive(self) -> "Cell":
        return self if self.sign == 1 else -self

    def corners(self) -> list[tuple[int, ...]]:
        out = []
        for bits in itertools.product((0, 1), repeat=self.k):
            v = list(self.base)
            for b, j in zip(bits, self.dirs):
                v[j] += b
            out.append(tuple(v))
        return out

    def __repr__(self):
        s = "-" if self.sign < 0 else ""
        star = "*" if self.dual else ""
        return f"{s}{star}d{list(self.dirs)}@{list(self.base)}"


def _shift(x, j, step):
    v = list(x)
    v[j] += step
    return tuple(v)


def boundary(c: Cell) -> list[Cell]:
    """Signed (k-1)-cells of ``c``, read off from d(1_x dx_J)."""
    if c.dual:
        raise DomainError("boundary is defined for primal cells only")
    if c.k < 1:
        raise DomainError("a 0-cell has no boundary")
    out = []
    for m, j in enumerate(c.dirs):
        rest = c.dirs[:m] + c.dirs[m + 1:]
        s = c.sign * (-1) ** m
        out.append(Cell(_shift(c.base, j, 1), rest, s))
        out.append(Cell(c.base, rest, -s))
    return out


def coboundary(c: Cell, box: "Box | None" = None) -> list[Cell]:
    """All oriented (k+1)-cells having ``c`` in their boundary, optionally clipped to a box."""
    if c.dual:
        raise DomainError("coboundary is defined for primal cells only")
    if c.k >= c.n:
        raise DomainError("an n-cell has no coboundary")
    out = []
    for i in range(c.n):
        if i in c.dirs:
            continue
        dirs = tuple(sorted(c.dirs + (i,)))
        for base in (c.base, _shift(c.base, i, -1)):
            top = Cell(base, dirs)
            if box is not None and not box.contains(top):
                continue
            for f in boundary(top):
                if f.base == c.base and f.dirs == c.dirs:
                    out.append(top if f.sign == c.sign else -top)
    return sorted(out)


def hodge_star(c: Cell) -> Cell:
    """Primal k-cell to dual (n-k)-cell and back."""
    comp = tuple(j for j in range(c.n) if j not in c.dirs)
    s = perm_sign(c.dirs + comp)
    return Cell(c.base, comp, c.sign * s, not c.dual)


@dataclass(frozen=True)
class Box:
    intervals: tuple[tuple[int, int], ...]

    def __post_init__(self):
        iv = tuple((int(a), int(b)) for a, b in self.intervals)
        for a, b in iv:
            if not a < b:
                raise DomainError(f"box interval [{a},{b}] needs a < b")
        object.__setattr__(self, "intervals", iv)

    def __str__(self):
        return ",".join(f"{a}..{b}" for a, b in self.intervals)

    @property
    def n(self) -> int:
        return len(self.intervals)

    @property
    def lengths(self) -> tuple[int, ...]:
        return tuple(b - a for a, b in self.intervals)

    def contains_point(self, x) -> bool:
        return all(a <= v <= b for v, (a, b) in zip(x, self.intervals))

    def contains(self, c: Cell) -> bool:
        for j, (v, (a, b)) in enumerate(zip(c.base, self.intervals)):
            hi = v + (1 if j in c.dirs else 0)
            if v < a or hi > b:
                return False
        return True

    def contains_box(self, other: "Box") -> bool:
        return all(a <= c and d <= b for (a, b), (c, d) in zip(self.intervals, other.intervals))

    def cell_count(self, k: int) -> int:
        """Number of positive k-cells, by the product formula."""
        L = self.lengths
        tot = 0
        for S in itertools.combinations(range(self.n), k):
            tot += math.prod(L[i] if i in S else L[i] + 1 for i in range(self.n))
        return tot

    def cells(self, k: int) -> list[Cell]:
        """Positive k-cells in lexicographic (base, dirs) order."""
        return self._cells[k]

    @cached_property
    def _cells(self) -> list[list[Cell]]:
        out = [[] for _ in range(self.n + 1)]
        ranges = [range(a, b + 1) for a, b in self.intervals]
        for x in itertools.product(*ranges):
            for k in range(self.n + 1):
                for dirs in itertools.combinations(range(self.n), k):
                    c = Cell(x, dirs)
                    if self.contains(c):
                        out[k].append(c)
        return out

    @cached_property
    def _index(self) -> list[dict[Cell, int]]:
        return [{c: i for i, c in enumerate(cs)} for cs in self._cells]

    def index(self, c: Cell) -> int:
        """Position of ``c.positive`` among the positive cells of its degree."""
        try:
            return self._index[c.k][c.positive]
        except KeyError:
            raise DomainError(f"cell {c} is not in box {self}") from None

    @cached_property
    def _arrays(self) -> dict:
        return {}

    def _check_degree(self, k: int):
        if not 1 <= k <= self.n:
            raise DomainError(f"no boundary map into degree {k - 1} in dimension {self.n}")

    def faces(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Boundary of every positive k-cell as (index, sign) arrays of shape (n_k, 2k).

        Indices point into the positive (k-1)-cells and are ascending along each row.
        """
        self._check_degree(k)
        key = ("faces", k)
        if key not in self._arrays:
            cs, idx = self._cells[k], self._index[k - 1]
            I = np.empty((len(cs), 2 * k), dtype=np.int64)
            S = np.empty((len(cs), 2 * k), dtype=np.int64)
            for r, c in enumerate(cs):
                row = sorted((idx[f.positive], f.sign) for f in boundary(c))
                I[r] = [i for i, _ in row]
                S[r] = [s for _, s in row]
            self._arrays[key] = (I, S)
        return self._arrays[key]

    def incidence(self, k: int) -> np.ndarray:
        """Dense matrix with rows = positive k-cells, columns = positive (k-1)-cells, entries +-1.

        Its size is the product of the two cell counts, so large boxes should use faces().
        """
        self._check_degree(k)
        key = ("incidence", k)
        if key not in self._arrays:
            I, S = self.faces(k)
            M = np.zeros((len(I), len(self._cells[k - 1])), dtype=np.int64)
            np.add.at(M, (np.arange(len(I))[:, None], I), S)
            self._arrays[key] = M
        return self._arrays[key]

    @property
    def vertices(self) -> list[tuple[int, ...]]:
        return [c.base for c in self._cells[0]]

    @property
    def corner(self) -> tuple[int, ...]:
        return tuple(a for a, _ in self.intervals)

    @cached_property
    def spanning_tree(self) -> tuple[np.ndarray, list[tuple[int, int, int]]]:
        """BFS tree from the lexicographically smallest vertex.

        Returns a boolean mask over positive edges and the tree edges as
        ``(parent_vertex, child_vertex, edge_index)`` in BFS order.
        """
        vidx = self._index[0]
        eidx = self._index[1]
        root = self.corner
        seen = {root}
        order = []
        q = deque([root])
        while q:
            u = q.popleft()
            nbrs = []
            for j in range(self.n):
                for step in (-1, 1):
                    v = _shift(u, j, step)
                    if self.contains_point(v):
                        nbrs.append((v, j, step))
            for v, j, step in sorted(nbrs):
                if v in seen:
                    continue
                seen.add(v)
                e = Cell(u if step == 1 else v, (j,))
                order.append((vidx[Cell(u, ())], vidx[Cell(v, ())], eidx[e]))
                q.append(v)
        mask = np.zeros(len(self._cells[1]), dtype=bool)
        for _, _, e in order:
            mask[e] = True
        return mask, order

    def free_edges(self) -> np.ndarray:
        """Indices of positive edges off the gauge-fixing tree."""
        mask, _ = self.spanning_tree
        return np.flatnonzero(~mask)


def parse_box(text: str) -> Box:
    """Parse ``0..1,0..1,0..1,0..1``."""
    iv = []
    for part in str(text).split(","):
        bits = part.strip().split("..")
        if len(bits) != 2:
            raise DomainError(f"cannot parse box interval {part!r}")
        try:
            iv.append((int(bits[0]), int(bits[1])))
        except ValueError:
            raise DomainError(f"cannot parse box interval {part!r}") from None
    return Box(tuple(iv))


def unit_box(n: int = 4, length: int = 1) -> Box:
    return Box(tuple((0, length) for _ in range(n)))


class DifferentialForm:
    """G-valued k-form on the positive k-cells of a box (residues, shape (N, #factors))."""

    __slots__ = ("box", "degree", "group", "values")

    def __init__(self, box: Box, degree: int, group: GroupSpec, values=None):
        self.box = box
        self.degree = int(degree)
        self.group = group
        N = len(box.cells(degree))
        if values is None:
            values = np.zeros((N, group.dim), dtype=np.int64)
        values = np.asarray(values, dtype=np.int64).reshape(N, group.dim)
        self.values = values % group.orders

    @classmethod
    def zeros(cls, box, degree, group):
        return cls(box, degree, group)

    @classmethod
    def from_cells(cls, box, degree, group, assignment: dict) -> "DifferentialForm":
        f = cls(box, degree, group)
        for c, g in assignment.items():
            f[c] = g
        return f

    @classmethod
    def indicator(cls, box, cell: Cell, group, g) -> "DifferentialForm":
        return cls.from_cells(box, cell.k, group, {cell: g})

    @classmethod
    def random(cls, box, degree, group, rng: np.random.Generator) -> "DifferentialForm":
        N = len(box.cells(degree))
        vals = rng.integers(0, group.orders, size=(N, group.dim))
        return cls(box, degree, group, vals)

    def copy(self) -> "DifferentialForm":
        return DifferentialForm(self.box, self.degree, self.group, self.values.copy())

    def __getitem__(self, c: Cell) -> tuple[int, ...]:
        v = self.values[self.box.index(c)]
        if c.sign < 0:
            v = (-v) % self.group.orders
        return tuple(int(t) for t in v)

    def __setitem__(self, c: Cell, g):
        g = np.array(self.group.element(g), dtype=np.int64)
        if c.sign < 0:
            g = (-g) % self.group.orders
        self.values[self.box.index(c)] = g

    def _check(self, other):
        if self.box != other.box or self.degree != other.degree or self.group != other.group:
            raise DomainError("forms live on different boxes, degrees or groups")

    def __add__(self, other):
        self._check(other)
        return DifferentialForm(self.box, self.degree, self.group, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return DifferentialForm(self.box, self.degree, self.group, self.values - other.values)

    def __neg__(self):
        return DifferentialForm(self.box, self.degree, self.group, -self.values)

    def __eq__(self, other):
        if not isinstance(other, DifferentialForm):
            return NotImplemented
        return (self.box == other.box and self.degree == other.degree
                and self.group == other.group and np.array_equal(self.values, other.values))

    __hash__ = None

    def nonzero_mask(self) -> np.ndarray:
        return self.values.any(axis=1)

    def support_positive(self) -> list[Cell]:
        cells = self.box.cells(self.degree)
        return [cells[i] for i in np.flatnonzero(self.nonzero_mask())]

    def support(self) -> set[Cell]:
        """Symmetric support (both orientations)."""
        out = set()
        for c in self.support_positive():
            out.add(c)
            out.add(-c)
        return out

    def is_zero(self) -> bool:
        return not self.values.any()

    def codes(self) -> np.ndarray:
        return self.group.codes(self.values)

    def key(self) -> bytes:
        """Canonical byte encoding (one code per positive cell)."""
        dt = np.uint8 if self.group.order <= 256 else np.uint32
        return self.codes().astype(dt).tobytes()

    def to_json(self) -> str:
        cells = []
        for c in self.support_positive():
            cells.append({"base": list(c.base), "dirs": list(c.dirs), "value": list(self[c])})
        return json.dumps({"degree": self.degree, "cells": cells}, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str, box: Box, group: GroupSpec) -> "DifferentialForm":
        d = json.loads(text)
        f = cls(box, d["degree"], group)
        for item in d["cells"]:
            f[Cell(tuple(item["base"]), tuple(item["dirs"]))] = tuple(item["value"])
        return f

    def __repr__(self):
        return f"DifferentialForm(degree={self.degree}, group={self.group}, support+={len(self.support_positive())})"


def exterior_derivative(f: DifferentialForm) -> DifferentialForm:
    if f.degree >= f.box.n:
        raise DomainError("d of an n-form is not defined here")
    I, S = f.box.faces(f.degree + 1)
    return DifferentialForm(f.box, f.degree + 1, f.group, (f.values[I] * S[:, :, None]).sum(axis=1))


d = exterior_derivative


def is_closed(f: DifferentialForm) -> bool:
    if f.degree >= f.box.n:
        return True
    return exterior_derivative(f).is_zero()


def bianchi_witness(f: DifferentialForm) -> Cell | None:
    """First (lexicographic) positive (k+1)-cell on which df is nonzero."""
    if f.degree >= f.box.n:
        return None
    df = exterior_derivative(f)
    bad = np.flatnonzero(df.nonzero_mask())
    if bad.size == 0:
        return None
    return f.box.cells(f.degree + 1)[bad[0]]


def gauge_transform(sigma: DifferentialForm, h: DifferentialForm) -> DifferentialForm:
    return sigma + exterior_derivative(h)


def anti_derivative(omega: DifferentialForm) -> DifferentialForm:
    """A 1-form sigma with d sigma = omega, vanishing on the BFS spanning tree."""
    if omega.degree != 2:
        raise DomainError("anti_derivative expects a 2-form")
    w = bianchi_witness(omega)
    if w is not None:
        raise NotClosedError(f"form is not closed: Bianchi fails at 3-cell {w}", witness=w)
    box, G = omega.box, omega.group
    edges = box.cells(1)
    sig = np.zeros((len(edges), G.dim), dtype=np.int64)
    lo = box.corner
    # comb ("axial") gauge first: an edge dx_j at x is fixed to 0 when x_i = a_i for
    # all i < j; otherwise the plaquette (i, j) at x - e_i, i the first raised
    # coordinate, determines it from an edge that comes earlier in lex order
    for r, e in enumerate(edges):
        j = e.dirs[0]
        raised = [i for i in range(j) if e.base[i] > lo[i]]
        if not raised:
            continue
        i = raised[0]
        z = _shift(e.base, i, -1)
        p = Cell(z, (i, j))
        sig[r] = omega.values[box.index(p)] + sig[box.index(Cell(z, (j,)))]
    sigma0 = DifferentialForm(box, 1, G, sig)
    # then move to the BFS-tree gauge with a 0-form h propagated from the root
    _, order = box.spanning_tree
    verts = box.cells(0)
    h = np.zeros((len(verts), G.dim), dtype=np.int64)
    for u, v, eix in order:
        e = edges[eix]
        if e.base == verts[u].base:
            h[v] = h[u] - sigma0.values[eix]
        else:
            h[v] = h[u] + sigma0.values[eix]
    sigma = gauge_transform(sigma0, DifferentialForm(box, 0, G, h))
    return sigma


def _check_symmetric(S: set[Cell]):
    for c in S:
        if -c not in S:
            raise DomainError(f"set is not symmetric: contains {c} but not {-c}")


def boundary_cells(P: set[Cell], box: Box | None = None) -> set[Cell]:
    """delta P: the cells c of P with some face of a coboundary cell outside P."""
    P = set(P)
    _check_symmetric(P)
    out = set()
    for c in P:
        for top in coboundary(c):
            if any(f not in P for f in boundary(top)):
                out.add(c)
                break
    return out


def all_plaquettes(box: Box) -> set[Cell]:
    out = set()
    for p in box.cells(2):
        out.add(p)
        out.add(-p)
    return out


def restrict(f: DifferentialForm, S: set[Cell]) -> DifferentialForm:
    S = set(S)
    _check_symmetric(S)
    keep = np.zeros(len(f.box.cells(f.degree)), dtype=bool)
    for c in S:
        if c.k == f.degree and f.box.contains(c):
            keep[f.box.index(c)] = True
    return DifferentialForm(f.box, f.degree, f.group, f.values * keep[:, None])


def closed_subrestriction_masks(nu: DifferentialForm, cols: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """For each boolean row of ``masks`` over positive cells ``cols``, is nu restricted there closed?"""
    I, S = nu.box.faces(nu.degree + 1)
    # incidence restricted to the columns cols, and to the top cells that meet them
    where = np.full(len(nu.values), -1, dtype=np.int64)
    where[cols] = np.arange(len(cols))
    J = where[I]
    tops = np.flatnonzero((J >= 0).any(axis=1))
    M = np.zeros((len(tops), len(cols)), dtype=np.int64)
    hit = J[tops] >= 0
    np.add.at(M, (np.broadcast_to(np.arange(len(tops))[:, None], hit.shape)[hit], J[tops][hit]), S[tops][hit])
    vals = nu.values[cols]
    orders = nu.group.orders
    out = np.empty(len(masks), dtype=bool)
    chunk = 4096
    for s in range(0, len(masks), chunk):
        m = masks[s:s + chunk].astype(np.int64)
        # (batch, cols, factors) -> boundary sums (batch, top cells, factors)
        tot = np.einsum("tc,bc,cf->btf", M, m, vals) % orders
        out[s:s + chunk] = ~tot.any(axis=(1, 2))
    return out


def is_irreducible(nu: DifferentialForm, P: set[Cell], cap: int = IRREDUCIBLE_CAP) -> bool:
    """Exhaustive test of P-irreducibility over symmetric sets between P and supp nu."""
    P = set(P)
    _check_symmetric(P)
    if not is_closed(nu):
        raise NotClosedError("irreducibility is defined for closed forms", witness=bianchi_witness(nu))
    supp = nu.support_positive()
    if len(supp) > cap:
        raise ResourceError(f"support has {len(supp)} positive cells, above the cap {cap}",
                            required=len(supp), budget=cap)
    Ppos = {c.positive for c in P}
    if not Ppos <= set(supp):
        raise DomainError("P must be contained in the support of nu")
    box = nu.box
    fixed = [box.index(c) for c in supp if c in Ppos]
    free = [box.index(c) for c in supp if c not in Ppos]
    r = len(free)
    if r == 0:
        return True
    cols = np.array(fixed + free, dtype=np.int64)
    # every proper subset of the free cells (the full set gives supp nu itself)
    sub = np.arange(2 ** r - 1, dtype=np.int64)
    bits = ((sub[:, None] >> np.arange(r)) & 1).astype(bool)
    masks = np.concatenate([np.ones((len(sub), len(fixed)), dtype=bool), bits], axis=1)
    return not closed_subrestriction_masks(nu, cols, masks).any()
