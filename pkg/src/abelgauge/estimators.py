"""Observables and bound checks built on the exact distribution and the samplers.

Covariances of complex functions are bilinear (no conjugation). Wherever a
bound is stated in terms of dist_B or dist_{B,B'}, the reports use the path
distance dist* instead. Since dist* is never larger and C2*alpha < 1, the
resulting right-hand side can only grow, so a pass is a valid (weaker) check.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from .abelian_group import C2, GroupSpec, alpha, c1_from_alpha, phi_beta
from .cell_complex import (Box, Cell, DifferentialForm, all_plaquettes, boundary_cells, is_closed)
from .errors import DomainError, PreconditionError, ResourceError
from .gibbs_measure import (ExactDistribution, activity, agreement_probability, exact_distribution, run_chain,
                            sample_exact)
from .vortex_graph import dist_star, plaquette_neighbors

TOL = 1e-12


# ------------------------------------------------------------------ local functions

@dataclass(frozen=True, eq=False)
class LocalFunction:
    """f(omega) = f(omega restricted to P), tabulated over the values on ``cells``.

    ``table[k]`` is the value when omega has code ``(k // m**i) % m`` on the
    i-th positive plaquette of ``cells``.
    """
    cells: tuple[Cell, ...]
    group: GroupSpec
    table: np.ndarray
    name: str = ""

    @classmethod
    def from_rule(cls, cells, group: GroupSpec, rule: Callable, name: str = "") -> "LocalFunction":
        cells = tuple(c.positive for c in cells)
        if len(set(cells)) != len(cells):
            raise DomainError("repeated plaquette in a local function support")
        m = group.order
        L = len(cells)
        table = np.empty(m ** L, dtype=np.complex128)
        for k in range(m ** L):
            vals = [group.decode((k // m ** i) % m) for i in range(L)]
            table[k] = complex(rule(vals))
        return cls(cells, group, table, name)

    @classmethod
    def single(cls, p: Cell, group: GroupSpec, f: Callable, name: str = "") -> "LocalFunction":
        """f applied to omega_p (for negatively oriented p this is -omega_{-p})."""
        if p.sign > 0:
            return cls.from_rule([p], group, lambda v: f(v[0]), name)
        return cls.from_rule([p], group, lambda v: f(group.neg(v[0])), name)

    @classmethod
    def trace(cls, p: Cell, group: GroupSpec) -> "LocalFunction":
        return cls.single(p, group, lambda g: trace_rho(group, g), f"tr rho @ {p!r}")

    @property
    def support(self) -> set[Cell]:
        return set(self.cells) | {-c for c in self.cells}

    @property
    def sup_norm(self) -> float:
        return float(np.abs(self.table).max())

    def keys(self, codes: np.ndarray) -> np.ndarray:
        """Table keys from codes of shape (N, len(cells))."""
        m = self.group.order
        return (np.asarray(codes, dtype=np.int64) * (m ** np.arange(len(self.cells)))).sum(axis=1)

    def evaluate(self, codes: np.ndarray) -> np.ndarray:
        return self.table[self.keys(codes)]


def trace_rho(group: GroupSpec, g) -> complex:
    g = group.element(g)
    return complex(sum(np.exp(2j * np.pi * r / n) for r, n in zip(g, group.factors)))


def _check_disjoint(f1: LocalFunction, f2: LocalFunction):
    if f1.support & f2.support:
        raise DomainError("local functions must have disjoint supports")


def _expectations(dist: ExactDistribution, f1: LocalFunction, f2: LocalFunction):
    L1 = len(f1.cells)
    m = dist.group.order
    joint = dist.marginal(list(f1.cells) + list(f2.cells))
    k = np.arange(len(joint))
    t1 = f1.table[k % m ** L1]
    t2 = f2.table[k // m ** L1]
    return complex((joint * t1 * t2).sum()), complex((joint * t1).sum()), complex((joint * t2).sum())


def covariance_exact(dist: ExactDistribution, f1: LocalFunction, f2: LocalFunction) -> complex:
    _check_disjoint(f1, f2)
    e12, e1, e2 = _expectations(dist, f1, f2)
    return e12 - e1 * e2


def expectation_exact(dist: ExactDistribution, f: LocalFunction) -> complex:
    return complex((dist.marginal(list(f.cells)) * f.table).sum())


def covariance_mcmc(box: Box, group: GroupSpec, beta: float, f1: LocalFunction, f2: LocalFunction,
                    seed: int, n_samples: int, burnin: int = 1000, thin: int = 10,
                    sampler: str = "heatbath", n_batches: int = 20) -> tuple[complex, float]:
    """Chain estimate of Cov(f1, f2) with a batched-means standard error."""
    _check_disjoint(f1, f2)
    if n_samples <= 0:
        raise DomainError("need at least one sample")
    if n_samples < 2 * n_batches:
        raise DomainError(f"need at least {2 * n_batches} samples for {n_batches} batches")
    if not 30 * alpha(group, beta) < 1:
        warnings.warn("30*alpha >= 1: outside the regime where the covariance bounds apply")
    res = run_chain(box, group, beta, seed, n_samples, burnin, thin, sampler,
                    observe=list(f1.cells) + list(f2.cells))
    L1 = len(f1.cells)
    a = f1.evaluate(res.observed[:, :L1])
    b = f2.evaluate(res.observed[:, L1:])
    est = complex((a * b).mean() - a.mean() * b.mean())
    size = n_samples // n_batches
    covs = []
    for i in range(n_batches):
        sa, sb = a[i * size:(i + 1) * size], b[i * size:(i + 1) * size]
        covs.append((sa * sb).mean() - sa.mean() * sb.mean())
    se = float(np.std(np.array(covs), ddof=1) / math.sqrt(n_batches))
    return est, se


# ------------------------------------------------------------------ leading order

def _as_function(group: GroupSpec, f) -> Callable:
    if callable(f):
        return lambda g: complex(f(group.element(g)))
    table = {group.element(k): complex(v) for k, v in dict(f).items()}
    return lambda g: table.get(group.element(g), 0j)


def spin_leading_order(group: GroupSpec, p: Cell, f, beta: float) -> complex:
    """f(0) + sum over the 4 edges of p and all g of (f(g) - f(0)) phi(g)^12.

    The summand does not depend on the edge, so the edge sum is a factor 4.
    """
    fn = _as_function(group, f)
    f0 = fn(group.zero)
    n_edges = 2 * p.k
    return f0 + n_edges * sum((fn(g) - f0) * phi_beta(group, g, beta) ** 12 for g in group.elements())


# ------------------------------------------------------------------ reports

@dataclass
class BoundReport:
    theorem: str
    lhs: float
    rhs: float
    preconditions_met: bool
    inputs: dict = field(default_factory=dict)

    @property
    def satisfied(self) -> bool:
        return bool(self.lhs <= self.rhs + TOL)

    def to_record(self) -> dict:
        return {"theorem": self.theorem, "lhs": self.lhs, "rhs": self.rhs, "satisfied": self.satisfied,
                "preconditions_met": self.preconditions_met, **self.inputs}


def _alpha_checked(group, beta, factor):
    a = alpha(group, beta)
    if not factor * a < 1:
        raise PreconditionError(f"need {factor}*alpha < 1, got {factor * a:.6g}")
    return a


def _delta_distance(box: Box, P: set[Cell]) -> int:
    """dist* from P to the boundary plaquettes of the box (0 when they meet)."""
    delta = boundary_cells(all_plaquettes(box))
    if not delta or P & delta:
        return 0 if delta else math.inf
    return dist_star(box, P, delta)


def theorem11_report(dist: ExactDistribution, f1: LocalFunction, f2: LocalFunction) -> BoundReport:
    a = _alpha_checked(dist.group, dist.beta, 30)
    c1 = c1_from_alpha(a)
    expo = dist_star(dist.box, f1.support, f2.support)
    lhs = abs(covariance_exact(dist, f1, f2))
    rhs = c1 * f1.sup_norm * f2.sup_norm * (C2 * a) ** expo
    return BoundReport("1.1", lhs, rhs, True,
                       {"beta": dist.beta, "alpha": a, "c1": c1, "exponent": "dist_star", "distance": expo})


def theorem12_rhs(group: GroupSpec, beta: float, delta: float) -> float:
    """(5 alpha)^11 / (1 - 5 alpha) times ``delta`` = max |f(g) - f(0)|."""
    a = _alpha_checked(group, beta, 5)
    return (5 * a) ** 11 / (1 - 5 * a) * delta


def theorem12_report(dist: ExactDistribution, p: Cell, f) -> BoundReport:
    G = dist.group
    fn = _as_function(G, f)
    delta = max(abs(fn(g) - fn(G.zero)) for g in G.elements())
    rhs = theorem12_rhs(G, dist.beta, delta)
    loc = LocalFunction.single(p, G, fn)
    lhs = abs(expectation_exact(dist, loc) - spin_leading_order(G, p, fn, dist.beta))
    dd = _delta_distance(dist.box, {p, -p})
    return BoundReport("1.2", lhs, rhs, bool(dd > 11),
                       {"beta": dist.beta, "alpha": alpha(G, dist.beta), "boundary_distance_star": _num(dd)})


def _num(x):
    return None if x == math.inf else x


def theorem13_rhs(group: GroupSpec, beta: float, distance: int, norm1: float, norm2: float) -> float:
    a = _alpha_checked(group, beta, 30)
    c1 = c1_from_alpha(a)
    return c1 * norm1 * norm2 * (C2 * a) ** distance + 8 * norm1 * norm2 * (5 * a) ** 11 / (1 - 5 * a)


def theorem13_rhs_from_parts(r11: BoundReport, group: GroupSpec, beta: float,
                             norm1: float, norm2: float) -> float:
    """Triangle inequality on top of the covariance-decay and leading-order bounds.

    |E f1 f2 - L1 L2| <= |Cov| + |E f1 - L1| |E f2| + |L1| |E f2 - L2|, with
    |E f2| <= |f2|, |L1| <= 3 |f1| and max |f(g) - f(0)| <= 2 |f|.
    """
    e1 = theorem12_rhs(group, beta, 2 * norm1)
    e2 = theorem12_rhs(group, beta, 2 * norm2)
    return r11.rhs + norm2 * e1 + 3 * norm1 * e2


def theorem13_report(dist: ExactDistribution, p1: Cell, p2: Cell, f1, f2) -> BoundReport:
    G = dist.group
    fn1, fn2 = _as_function(G, f1), _as_function(G, f2)
    l1 = LocalFunction.single(p1, G, fn1)
    l2 = LocalFunction.single(p2, G, fn2)
    _check_disjoint(l1, l2)
    e12, _, _ = _expectations(dist, l1, l2)
    lead = spin_leading_order(G, p1, fn1, dist.beta) * spin_leading_order(G, p2, fn2, dist.beta)
    expo = dist_star(dist.box, {p1}, {p2})
    rhs = theorem13_rhs(G, dist.beta, expo, l1.sup_norm, l2.sup_norm)
    dd = _delta_distance(dist.box, {p1, -p1, p2, -p2})
    return BoundReport("1.3", abs(e12 - lead), rhs, bool(dd > 11),
                       {"beta": dist.beta, "exponent": "dist_star", "distance": expo,
                        "boundary_distance_star": _num(dd)})


# ------------------------------------------------------------------ nested boxes

def outer_plaquettes(B: Box, Bp: Box) -> set[Cell]:
    """P_B minus P_B' (symmetric)."""
    return {c for c in all_plaquettes(B) if not Bp.contains(c)}


def farthest_plaquette(B: Box, Bp: Box) -> Cell:
    """Positive plaquette of B' farthest (in dist*) from P_B minus P_B', first in lex order on ties."""
    outer = outer_plaquettes(B, Bp)
    best, best_d = None, -1
    for p in Bp.cells(2):
        d = dist_star(B, {p, -p}, outer)
        if d > best_d:
            best, best_d = p, d
    return best


def _check_nested(B: Box, Bp: Box):
    if not B.contains_box(Bp) or B == Bp:
        raise DomainError("need B' strictly inside B")


def tv_restriction_exact(B: Box, Bp: Box, P, group: GroupSpec, beta: float,
                         budget: int = 2 ** 30, dists=None) -> float:
    """Total variation between the laws of omega|_P under mu_B and mu_B'."""
    _check_nested(B, Bp)
    cells = sorted({c.positive for c in P})
    for c in cells:
        if not Bp.contains(c):
            raise DomainError(f"{c} is not a plaquette of the inner box")
    dB, dBp = dists if dists is not None else (exact_distribution(B, group, beta, budget),
                                               exact_distribution(Bp, group, beta, budget))
    return 0.5 * float(np.abs(dB.marginal(cells) - dBp.marginal(cells)).sum())


def theorem14_report(B: Box, Bp: Box, P, group: GroupSpec, beta: float, budget: int = 2 ** 30,
                     dists=None) -> BoundReport:
    a = _alpha_checked(group, beta, 30)
    c1 = c1_from_alpha(a)
    P = set(P) | {-c for c in P}
    expo = dist_star(B, P, outer_plaquettes(B, Bp))
    lhs = tv_restriction_exact(B, Bp, P, group, beta, budget, dists)
    rhs = c1 * len(P) * (C2 * a) ** expo
    return BoundReport("1.4", lhs, rhs, True, {"beta": beta, "alpha": a, "c1": c1, "size_P": len(P),
                                                "exponent": "dist_star", "distance": expo})


@dataclass
class CoupledDraws:
    """Codes of omega on B, omega' on B', the glued omega-hat' on B', and the set P-hat."""
    B: Box
    Bp: Box
    group: GroupSpec
    omega: np.ndarray
    omega_prime: np.ndarray
    glued: np.ndarray
    phat: np.ndarray

    def forms(self, i: int) -> tuple[DifferentialForm, DifferentialForm]:
        G = self.group
        return (DifferentialForm(self.B, 2, G, G.residues(self.omega[i].astype(np.int64))),
                DifferentialForm(self.Bp, 2, G, G.residues(self.glued[i].astype(np.int64))))


def _adjacency_arrays(box: Box):
    cells = box.cells(2)
    ptr, idx = [0], []
    for p in cells:
        idx.extend(box.index(q) for q in plaquette_neighbors(p, box))
        ptr.append(len(idx))
    return np.asarray(ptr, dtype=np.int64), np.asarray(idx, dtype=np.int64)


def _embedding(B: Box, Bp: Box) -> np.ndarray:
    return np.array([B.index(c) for c in Bp.cells(2)], dtype=np.int64)


def derive_seeds(seed: int, n: int) -> list[int]:
    return [int(s.generate_state(1, np.uint64)[0]) for s in np.random.SeedSequence(int(seed)).spawn(n)]


def reach(B: Box, om: np.ndarray, omp: np.ndarray, emb: np.ndarray, src: np.ndarray,
          chunk: int = 1 << 16) -> np.ndarray:
    """Positive plaquettes of B joined to ``src`` in G(omega, omega'), one row per pair."""
    ptr, idx = _adjacency_arrays(B)
    out = np.zeros(om.shape, dtype=np.uint8)
    for s in range(0, len(om), chunk):
        _kernels.pair_reach(om[s:s + chunk], omp[s:s + chunk], emb, ptr, idx, src, out[s:s + chunk])
    return out


def coupled_sample(B: Box, Bp: Box, group: GroupSpec, beta: float, seed: int, size: int = 1,
                   dists=None, budget: int = 2 ** 30) -> CoupledDraws:
    """Independent omega ~ mu_B, omega' ~ mu_B', glued into omega-hat' = omega'|P-hat + omega|rest.

    P-hat is the set of plaquettes of B' connected to P_B minus P_B' in
    G(omega, omega').

    With free boundary conditions the glued law is close to mu_B' but not
    equal to it. A plaquette q of B' that shares a 3-cell with the outer
    layer can be nonzero under mu_B only if that 3-cell has a frustrated
    outer face, which puts q in P-hat; under mu_B' nothing forces this. So
    such q are under-weighted in the glued law. For Z2 with B = [0,2]x[0,1]^3
    and B' = [0,1]^4 the TV distance is about 3e-4 at beta = 0.9 and about
    0.05 at beta = 0.5.
    """
    _check_nested(B, Bp)
    dB, dBp = dists if dists is not None else (exact_distribution(B, group, beta, budget),
                                               exact_distribution(Bp, group, beta, budget))
    s1, s2 = derive_seeds(seed, 2)
    om = sample_exact(dB, s1, size)
    omp = sample_exact(dBp, s2, size).astype(om.dtype)
    emb = _embedding(B, Bp)
    src = np.ones(len(B.cells(2)), dtype=np.bool_)
    src[emb] = False
    reached = reach(B, om, omp, emb, src)
    phat = reached[:, emb].astype(bool)
    glued = np.where(phat, omp, om[:, emb])
    return CoupledDraws(B, Bp, group, om, omp, glued, phat)


def closed_rows(box: Box, group: GroupSpec, codes: np.ndarray, chunk: int = 1 << 15) -> np.ndarray:
    """Bianchi check for many 2-forms at once (codes on positive plaquettes)."""
    I, S = box.faces(3)
    out = np.empty(len(codes), dtype=bool)
    for s in range(0, len(codes), chunk):
        res = group.residues(codes[s:s + chunk].astype(np.int64))
        tot = (res[:, I, :] * S[None, :, :, None]).sum(axis=2) % group.orders
        out[s:s + chunk] = ~tot.any(axis=(1, 2))
    return out


def _pairs(dist: ExactDistribution, seed: int, n_pairs: int):
    s1, s2 = derive_seeds(seed, 2)
    return sample_exact(dist, s1, n_pairs), sample_exact(dist, s2, n_pairs)


def _connected_rows(box, om0, om1, P1, P2):
    idx = lambda S: sorted({box.index(c) for c in S})
    src = np.zeros(len(box.cells(2)), dtype=np.bool_)
    src[idx(P1)] = True
    r = reach(box, om0, om1, np.arange(len(box.cells(2)), dtype=np.int64), src)
    return r[:, idx(P2)].any(axis=1)


def connection_probability_mc(dist: ExactDistribution, P1, P2, seed: int,
                              n_pairs: int) -> tuple[float, float]:
    """mu x mu of {P1 <-> P2 in G(omega, omega')}, estimated from iid exact pairs."""
    P1, P2 = set(P1), set(P2)
    if P1 & P2:
        raise DomainError("P1 and P2 must be disjoint")
    om0, om1 = _pairs(dist, seed, n_pairs)
    hit = _connected_rows(dist.box, om0, om1, P1, P2)
    p = float(hit.mean())
    return p, math.sqrt(max(p * (1 - p), 0.0) / n_pairs)


def disconnected_expectations_mc(dist: ExactDistribution, f: LocalFunction, g: LocalFunction,
                                 seed: int, n_pairs: int) -> dict:
    """Both sides of E[f(w0) g(w0) 1{disc}] = E[f(w0) g(w1) 1{disc}] with standard errors."""
    _check_disjoint(f, g)
    om0, om1 = _pairs(dist, seed, n_pairs)
    box = dist.box
    disc = ~_connected_rows(box, om0, om1, f.support, g.support)
    fi = [box.index(c) for c in f.cells]
    gi = [box.index(c) for c in g.cells]
    a = f.evaluate(om0[:, fi]) * g.evaluate(om0[:, gi]) * disc
    b = f.evaluate(om0[:, fi]) * g.evaluate(om1[:, gi]) * disc
    se = lambda x: float(np.std(x) / math.sqrt(len(x)))
    return {"same": complex(a.mean()), "swapped": complex(b.mean()), "se_same": se(a), "se_swapped": se(b),
            "combined_se": math.hypot(se(a), se(b)), "p_disconnected": float(disc.mean())}


# ------------------------------------------------------------------ propositions

RESTRICTION_BUDGET = 200_000


def _face_arrays(box: Box):
    I, S = box.faces(3)
    ptr = np.arange(len(I) + 1, dtype=np.int64) * I.shape[1]
    return ptr, I.ravel().copy(), S.ravel().copy()


def restriction_profile(box: Box, group: GroupSpec, codes: np.ndarray, P0pos: list[int],
                        budget: int = RESTRICTION_BUDGET) -> np.ndarray:
    """Minimal closed restrictions of closed 2-forms, summarized relative to P0.

    Starting from omega restricted to A, the first 3-cell with a nonzero
    Bianchi sum is repaired by adding one more plaquette of the support, until
    the restriction is closed. Every minimal closed restriction containing A
    is reached this way, and the minimal ones are exactly the reached sets
    that contain no other reached set. Such a restriction is A-irreducible.

    Returns ``out[r, a, t]``: for the row ``codes[r]`` and the subset ``a`` of
    P0 (local bitmask), the largest positive support among minimal closed
    restrictions containing ``a`` whose trace on P0 is ``t``; -1 if none.
    """
    if len(box.cells(2)) > 63:
        raise DomainError("restriction search supports at most 63 positive plaquettes")
    k = len(P0pos)
    amasks = np.array([sum(1 << q for i, q in enumerate(P0pos) if a >> i & 1) for a in range(2 ** k)],
                      dtype=np.int64)
    out = np.empty((len(codes), 2 ** k, 2 ** k), dtype=np.int8)
    ptr, idx, sgn = _face_arrays(box)
    bad = _kernels.restriction_profile(np.ascontiguousarray(codes), ptr, idx, sgn, group.add_table,
                                       group.neg_table, amasks, np.asarray(P0pos, dtype=np.int64), budget, out)
    if bad >= 0:
        raise ResourceError(f"restriction search on state {bad} exceeded its budget", required=budget + 1,
                            budget=budget)
    return out


_PROFILE_CACHE: dict = {}


def _profile(dist: ExactDistribution, P0pos: list[int]) -> np.ndarray:
    # depends on the configuration space only, not on beta
    key = (dist.box, dist.group, tuple(P0pos))
    if key not in _PROFILE_CACHE:
        _PROFILE_CACHE[key] = restriction_profile(dist.box, dist.group, dist.omega_codes(), P0pos)
    return _PROFILE_CACHE[key]


def _positive_indices(box: Box, P) -> list[int]:
    P = set(P)
    for c in P:
        if -c not in P:
            raise DomainError("P must be symmetric")
    return sorted({box.index(c) for c in P})


def vortex_mass(dist: ExactDistribution, P, M: int) -> float:
    """mu(Pi^>=_{P,M}): some P-irreducible closed restriction of omega has >= M positive plaquettes."""
    pos = _positive_indices(dist.box, P)
    prof = _profile(dist, pos)
    hit = (prof[:, -1, :] >= M).any(axis=1)
    return float(dist.probabilities()[hit].sum())


def proposition31_report(dist: ExactDistribution, P, M: int) -> BoundReport:
    a = _alpha_checked(dist.group, dist.beta, 5)
    npos = len(_positive_indices(dist.box, P))
    if not P:
        raise DomainError("P must be nonempty")
    if M < npos:
        raise DomainError("need M >= |P+|")
    lhs = vortex_mass(dist, P, M)
    rhs = 5 ** (M - npos) * a ** M / (1 - 5 * a)
    return BoundReport("3.1", lhs, rhs, True, {"beta": dist.beta, "alpha": a, "M": M, "size_P_pos": npos})


def pair_vortex_mass(dist: ExactDistribution, dist_prime: ExactDistribution, P0, M: int) -> float:
    """mu_B x mu_B' of the pair event of the two-box vortex proposition.

    A pair qualifies when omega has a minimal closed restriction nu
    containing A and omega' one nu' containing A', where A is the part of P0
    missed by nu' and A' the part missed by nu, with |supp+ nu| +
    |supp+ nu'| >= M. Taking A empty gives nu = 0.
    """
    pos = _positive_indices(dist.box, P0)
    pos_p = _positive_indices(dist_prime.box, P0)
    if [dist.box.cells(2)[i] for i in pos] != [dist_prime.box.cells(2)[i] for i in pos_p]:
        raise DomainError("P0 must be ordered alike in both boxes")
    groups = []
    for d, ps in ((dist, pos), (dist_prime, pos_p)):
        prof = _profile(d, ps).reshape(len(d.probabilities()), -1)
        uniq, inv = np.unique(prof, axis=0, return_inverse=True)
        groups.append((uniq.reshape(len(uniq), 2 ** len(ps), 2 ** len(ps)),
                       np.bincount(inv.ravel(), weights=d.probabilities(), minlength=len(uniq))))
    (u, w), (up, wp) = groups
    full = 2 ** len(pos) - 1
    total = 0.0
    for i in range(len(u)):
        entries = [(a, t, s) for a, t in zip(*np.nonzero(u[i] >= 0)) for s in [int(u[i, a, t])]]
        for j in range(len(up)):
            if any(a == full & ~tp and ap == full & ~t and s + int(up[j, ap, tp]) >= M
                   for a, t, s in entries for ap, tp in zip(*np.nonzero(up[j] >= 0))):
                total += w[i] * wp[j]
    return float(total)


def proposition32_report(dist: ExactDistribution, dist_prime: ExactDistribution, P0, M: int) -> BoundReport:
    if not dist.box.contains_box(dist_prime.box):
        raise DomainError("need B' inside B")
    a = _alpha_checked(dist.group, dist.beta, 5)
    npos = len(_positive_indices(dist.box, P0))
    if M < npos:
        raise DomainError("need M >= |P0+|")
    lhs = pair_vortex_mass(dist, dist_prime, P0, M)
    rhs = 2 ** npos * (M - npos) * 5 ** (M - npos) * a ** M / (1 - 5 * a) ** 2
    return BoundReport("3.2", lhs, rhs, True, {"beta": dist.beta, "alpha": a, "M": M, "size_P0_pos": npos})


def proposition33_reports(dist: ExactDistribution, nu: DifferentialForm) -> list[BoundReport]:
    """Both sides of lower * phi(nu) <= mu(omega|supp nu = nu) <= phi(nu)."""
    a = _alpha_checked(dist.group, dist.beta, 5)
    if not is_closed(nu):
        raise DomainError("nu must be closed")
    value = agreement_probability(dist, nu)
    act = activity(nu, dist.beta)
    supp = nu.support()
    lower = (1 - 5 ** 5 * a ** 6 * len(supp) / (2 * (1 - 5 * a))) * act
    dd = _delta_distance(dist.box, supp) if supp else math.inf
    pre = bool(dd >= 7)
    info = {"beta": dist.beta, "alpha": a, "support": len(supp), "boundary_distance_star": _num(dd)}
    return [BoundReport("3.3-upper", value, act, pre, info),
            BoundReport("3.3-lower", lower, value, pre, info)]


def proposition_reports(dist: ExactDistribution, P, M: int, nu: DifferentialForm | None = None,
                        dist_prime: ExactDistribution | None = None) -> list[BoundReport]:
    out = [proposition31_report(dist, P, M)]
    if dist_prime is not None:
        out.append(proposition32_report(dist, dist_prime, P, M))
    if nu is not None:
        out.extend(proposition33_reports(dist, nu))
    return out
