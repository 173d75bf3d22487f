"""Wilson action, activities and the Gibbs measure on plaquette configurations.

Two ways to get at the measure on a small box:

* :func:`exact_distribution` enumerates every gauge-fixed spin configuration
  (edges of the BFS tree pinned to 0) in Gray-code order. Since d is a
  bijection from gauge-fixed configurations onto closed 2-forms, a state is
  the same thing as a plaquette configuration.
* :func:`run_chain` runs a sequential single-edge heat bath (or Metropolis)
  chain on the full spin configuration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from . import _kernels
from .abelian_group import GroupSpec, phi_table
from .cell_complex import (Box, Cell, DifferentialForm, bianchi_witness, exterior_derivative,
                           is_closed)
from .errors import DomainError, NotClosedError, ResourceError

DEFAULT_BUDGET = 2 ** 30
MATERIALIZE_LIMIT = 2 ** 22


def wilson_action(sigma: DifferentialForm, beta: float | None = None) -> float:
    """S(sigma) = - sum over all oriented plaquettes of Re tr rho((d sigma)_p).

    The action does not depend on beta; the argument is accepted so call
    sites can pass the coupling along with the configuration.
    """
    if sigma.degree != 1:
        raise DomainError("wilson_action expects a 1-form")
    om = exterior_derivative(sigma)
    retr = sigma.group.re_tr_table[om.codes()]
    # p and -p carry the same real trace
    return float(-2.0 * retr.sum())


def activity(omega: DifferentialForm, beta: float) -> float:
    """Product of phi_beta(omega_p) over the (symmetric) support of omega."""
    if omega.degree != 2:
        raise DomainError("activity expects a 2-form")
    phi = phi_table(omega.group, beta)
    codes = omega.codes()
    codes = codes[codes != 0]
    negc = omega.group.neg_table[codes]
    return float(np.prod(phi[codes]) * np.prod(phi[negc]))


def _log_weights(group: GroupSpec, beta: float) -> np.ndarray:
    # one positive plaquette stands for p and -p, so its factor is phi(g) * phi(-g)
    return 2.0 * beta * (group.re_tr_table - group.dim)


def _sub_table(group: GroupSpec) -> np.ndarray:
    return group.add_table[:, group.neg_table]


def _edge_incidence(box: Box, edges: np.ndarray):
    """Positive plaquettes (and signs) having each listed edge in their boundary."""
    I, S = box.faces(2)
    n = len(edges)
    slot = np.full(len(box.cells(1)), -1, dtype=np.int64)
    slot[edges] = np.arange(n)
    inc_p = np.zeros((n, 2 * box.n), dtype=np.int64)
    inc_s = np.zeros((n, 2 * box.n), dtype=np.int64)
    inc_n = np.zeros(n, dtype=np.int64)
    # plaquettes in ascending order, so each edge lists its cofaces ascending
    for p in range(len(I)):
        for e, s in zip(I[p], S[p]):
            r = slot[e]
            if r >= 0:
                inc_p[r, inc_n[r]] = p
                inc_s[r, inc_n[r]] = s
                inc_n[r] += 1
    return inc_p, inc_s, inc_n


@dataclass(eq=False)
class ExactDistribution:
    """The law of d sigma for sigma ~ mu_{B,beta}, by exhaustive enumeration.

    Small state spaces are materialised (``weights`` indexed by the
    lexicographic index of the free-edge digits); larger ones are streamed
    through the compiled kernels whenever a marginal is requested.
    """
    box: Box
    group: GroupSpec
    beta: float
    free: np.ndarray
    n_states: int
    weights: np.ndarray | None = None
    _Z: float | None = None
    _all_codes: np.ndarray | None = None
    _marginal_cache: dict = field(default_factory=dict)

    @property
    def materialized(self) -> bool:
        return self.weights is not None

    @cached_property
    def _inc(self):
        return _edge_incidence(self.box, self.free)

    def _kernel_args(self):
        G = self.group
        inc_p, inc_s, inc_n = self._inc
        return (G.order, inc_p, inc_s, inc_n, len(self.box.cells(2)), G.add_table, G.neg_table,
                _sub_table(G), _log_weights(G, self.beta))

    @property
    def Z(self) -> float:
        """Partition sum with the zero configuration weighted 1."""
        if self._Z is None:
            if self.materialized:
                self._Z = float(self.weights.sum())
            else:
                self.marginals([])
        return self._Z

    def probabilities(self) -> np.ndarray:
        if not self.materialized:
            raise ResourceError("state table was not materialised", required=self.n_states,
                                budget=MATERIALIZE_LIMIT)
        return self.weights / self.Z

    def digits(self, idx: np.ndarray) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        m = self.group.order
        F = len(self.free)
        return (idx[:, None] // (m ** np.arange(F, dtype=np.int64))) % m

    def sigma_codes(self, idx) -> np.ndarray:
        """Codes of the gauge-fixed spin configurations, shape (len(idx), |E+|)."""
        dg = self.digits(np.atleast_1d(idx))
        out = np.zeros((len(dg), len(self.box.cells(1))), dtype=np.int64)
        out[:, self.free] = dg
        return out

    def omega_codes(self, idx=None) -> np.ndarray:
        """Codes of d sigma on the positive plaquettes, shape (len(idx), |P+|)."""
        if idx is None:
            if self._all_codes is None:
                self._all_codes = self.omega_codes(np.arange(self.n_states, dtype=np.int64))
            return self._all_codes
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        G = self.group
        I, S = self.box.faces(2)
        out = np.empty((len(idx), len(I)), dtype=np.int64)
        chunk = 1 << 16
        for s in range(0, len(idx), chunk):
            res = G.residues(self.sigma_codes(idx[s:s + chunk]))
            om = (res[:, I, :] * S[None, :, :, None]).sum(axis=2) % G.orders
            out[s:s + chunk] = G.codes(om)
        return out

    def form(self, idx: int) -> DifferentialForm:
        codes = self.omega_codes([idx])[0]
        return DifferentialForm(self.box, 2, self.group, self.group.residues(codes))

    def sigma(self, idx: int) -> DifferentialForm:
        codes = self.sigma_codes([idx])[0]
        return DifferentialForm(self.box, 1, self.group, self.group.residues(codes))

    def omega_keys(self) -> np.ndarray:
        """Mixed-radix integer key of every state's omega (positive plaquette p has weight m**p)."""
        return codes_to_keys(self.omega_codes(), self.group.order)

    def table(self) -> dict[bytes, float]:
        """Map from the canonical byte encoding of omega to its probability."""
        codes = self.omega_codes().astype(np.uint8 if self.group.order <= 256 else np.uint32)
        probs = self.probabilities()
        return {codes[i].tobytes(): float(probs[i]) for i in range(self.n_states)}

    def marginals(self, groups: list[list[Cell]]) -> list[np.ndarray]:
        """Exact law of omega on each list of plaquettes.

        The result for a list (p_0, ..., p_{L-1}) is an array of length m**L
        whose entry sum_i code(omega_{p_i}) m**i is the probability.
        Oriented plaquettes are honoured: the value on -p is -omega_p.
        """
        G = self.group
        m = G.order
        pos = [[self.box.index(c) for c in grp] for grp in groups]
        if self.materialized:
            probs = self.probabilities()
            needed = sorted({i for grp in pos for i in grp})
            codes = self.omega_codes() if needed else np.zeros((self.n_states, 0), dtype=np.int64)
            out = []
            for grp, cells in zip(pos, groups):
                key = np.zeros(self.n_states, dtype=np.int64)
                for i, (pi, c) in enumerate(zip(grp, cells)):
                    col = codes[:, pi]
                    if c.sign < 0:
                        col = G.neg_table[col]
                    key += col * m ** i
                out.append(np.bincount(key, weights=probs, minlength=m ** len(grp)))
            return out
        ck = tuple(tuple(g) for g in groups)
        if ck in self._marginal_cache:
            return self._marginal_cache[ck]
        L = max([len(g) for g in pos] + [0])
        n_plaq = len(self.box.cells(2))
        memb = [[] for _ in range(n_plaq)]
        for k, grp in enumerate(pos):
            for i, pi in enumerate(grp):
                memb[pi].append((k, m ** i))
        width = max([len(x) for x in memb] + [1])
        memb_k = np.zeros((n_plaq, width), dtype=np.int64)
        memb_mult = np.zeros((n_plaq, width), dtype=np.int64)
        memb_n = np.zeros(n_plaq, dtype=np.int64)
        for p, lst in enumerate(memb):
            memb_n[p] = len(lst)
            for u, (k, mult) in enumerate(lst):
                memb_k[p, u] = k
                memb_mult[p, u] = mult
        hist, Z = _kernels.enumerate_marginals(*self._kernel_args(), memb_k, memb_mult, memb_n,
                                               len(groups), m ** L)
        self._Z = float(Z)
        out = []
        for k, (grp, cells) in enumerate(zip(pos, groups)):
            h = hist[k, :m ** len(grp)] / Z
            # the kernel keys positive plaquettes; re-key negatively oriented entries
            if any(c.sign < 0 for c in cells):
                keys = np.arange(m ** len(grp))
                digs = (keys[:, None] // (m ** np.arange(len(grp)))) % m
                for i, c in enumerate(cells):
                    if c.sign < 0:
                        digs[:, i] = G.neg_table[digs[:, i]]
                newk = (digs * (m ** np.arange(len(grp)))).sum(axis=1)
                h2 = np.zeros_like(h)
                h2[newk] = h
                h = h2
            out.append(h)
        self._marginal_cache[ck] = out
        return out

    def marginal(self, cells: list[Cell]) -> np.ndarray:
        return self.marginals([list(cells)])[0]

    def event_probability(self, cells: list[Cell], values: list) -> float:
        """mu(omega_c = value for every listed c)."""
        G = self.group
        key = sum(G.encode(v) * G.order ** i for i, v in enumerate(values))
        return float(self.marginal(cells)[key])


def codes_to_keys(codes: np.ndarray, m: int) -> np.ndarray:
    P = codes.shape[1]
    if P * math.log2(m) >= 62:
        raise ResourceError("configuration keys would overflow 62 bits")
    return codes @ (m ** np.arange(P, dtype=np.int64))


def exact_distribution(box: Box, group: GroupSpec, beta: float, budget: int = DEFAULT_BUDGET,
                       materialize_limit: int = MATERIALIZE_LIMIT) -> ExactDistribution:
    if box.n < 2:
        raise DomainError("need at least two dimensions for plaquettes")
    beta = float(beta)
    if beta < 0:
        raise DomainError("beta must be nonnegative")
    free = box.free_edges()
    n_states = group.order ** len(free)
    if n_states > budget:
        raise ResourceError(f"enumeration needs {n_states} states, budget is {budget}",
                            required=n_states, budget=budget)
    dist = ExactDistribution(box, group, beta, free, n_states)
    if n_states <= materialize_limit:
        dist.weights = _kernels.enumerate_weights(*dist._kernel_args())
    return dist


def omega_values(dist: ExactDistribution, nu: DifferentialForm):
    cells = nu.support_positive()
    return cells, [nu[c] for c in cells]


def agreement_probability(dist: ExactDistribution, nu: DifferentialForm) -> float:
    """mu(omega restricted to supp nu equals nu)."""
    cells, vals = omega_values(dist, nu)
    if not cells:
        return 1.0
    return dist.event_probability(cells, vals)


def prob_ratio(dist: ExactDistribution, nu: DifferentialForm) -> float:
    """mu(omega|supp nu = nu) / mu(omega|supp nu = 0)."""
    if nu.degree != 2:
        raise DomainError("prob_ratio expects a 2-form")
    if not is_closed(nu):
        raise NotClosedError("nu is not closed", witness=bianchi_witness(nu))
    cells, vals = omega_values(dist, nu)
    if not cells:
        return 1.0
    marg = dist.marginal(cells)
    G = dist.group
    key = sum(G.encode(v) * G.order ** i for i, v in enumerate(vals))
    if marg[0] <= 0:
        raise DomainError("the event omega = 0 on supp nu has probability 0")
    return float(marg[key] / marg[0])


def prob_ratios(dist: ExactDistribution, nus: list[DifferentialForm]) -> list[float]:
    """prob_ratio for many forms, sharing one enumeration pass over the states."""
    for nu in nus:
        if nu.degree != 2:
            raise DomainError("prob_ratio expects a 2-form")
        if not is_closed(nu):
            raise NotClosedError("nu is not closed", witness=bianchi_witness(nu))
    supports = [omega_values(dist, nu) for nu in nus]
    groups = [cells for cells, _ in supports if cells]
    margs = iter(dist.marginals(groups) if groups else [])
    G = dist.group
    out = []
    for cells, vals in supports:
        if not cells:
            out.append(1.0)
            continue
        marg = next(margs)
        if marg[0] <= 0:
            raise DomainError("the event omega = 0 on supp nu has probability 0")
        key = sum(G.encode(v) * G.order ** i for i, v in enumerate(vals))
        out.append(float(marg[key] / marg[0]))
    return out


def _philox(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & (2 ** 64 - 1)))


def sample_exact(dist: ExactDistribution, seed: int, size: int = 1) -> np.ndarray:
    """iid draws of omega (codes on positive plaquettes, shape (size, |P+|)).

    Each draw is the first state whose cumulative mass exceeds u * Z for a
    uniform u; streamed distributions answer all draws in one pass over the
    states and then restore the original draw order.
    """
    rng = _philox(seed)
    u = rng.random(size)
    if dist.materialized:
        cdf = np.cumsum(dist.probabilities())
        idx = np.searchsorted(cdf, u * cdf[-1], side="right")
        idx = np.minimum(idx, dist.n_states - 1)
        return dist.omega_codes(idx)
    order = np.argsort(u, kind="stable")
    thresholds = u[order] * dist.Z
    dt = np.uint8 if dist.group.order <= 256 else np.int64
    out_sorted = np.zeros((size, len(dist.box.cells(2))), dtype=dt)
    _kernels.enumerate_sample(*dist._kernel_args(), thresholds, out_sorted)
    out = np.empty_like(out_sorted)
    out[order] = out_sorted
    return out


def codes_to_form(box: Box, group: GroupSpec, codes: np.ndarray, degree: int = 2) -> DifferentialForm:
    return DifferentialForm(box, degree, group, group.residues(np.asarray(codes)))


# --------------------------------------------------------------------------- chains

@dataclass
class ChainState:
    box: Box
    group: GroupSpec
    beta: float
    sigma: DifferentialForm
    rng: np.random.Generator
    sweeps: int = 0
    sampler: str = "heatbath"

    @classmethod
    def start(cls, box, group, beta, seed, sampler="heatbath"):
        if sampler not in ("heatbath", "metropolis"):
            raise DomainError(f"unknown sampler {sampler!r}")
        return cls(box, group, float(beta), DifferentialForm(box, 1, group), _philox(seed), 0, sampler)


@dataclass
class ChainResult:
    """Per-sample records: omega key (-1 when keys would overflow), number of
    frustrated positive plaquettes, Wilson action, and observed plaquette codes."""
    keys: np.ndarray
    frustrated: np.ndarray
    action: np.ndarray
    state: ChainState
    observed: np.ndarray


class _ChainArrays:
    def __init__(self, box, group, beta):
        edges = np.arange(len(box.cells(1)))
        self.inc = _edge_incidence(box, edges)
        self.add = group.add_table
        self.neg = group.neg_table
        self.sub = _sub_table(group)
        self.logw = _log_weights(group, beta)
        self.retr = group.re_tr_table
        self.m = group.order
        self.keyable = len(box.cells(2)) * math.log2(group.order) < 62


def _advance(state: ChainState, arrays: _ChainArrays, n_sweeps: int, thin: int, rec_start: int,
             keys, frus, act, obs_idx, obs, chunk: int = 4096) -> int:
    """Mutates ``state`` in place. Returns the number of recorded samples."""
    G = state.group
    sigma = G.codes(state.sigma.values).astype(np.int64)
    omega = exterior_derivative(state.sigma).codes().astype(np.int64)
    E = len(sigma)
    per = 2 * E if state.sampler == "metropolis" else E
    inc_p, inc_s, inc_n = arrays.inc
    done = 0
    nrec = 0
    while done < n_sweeps:
        k = min(chunk, n_sweeps - done)
        u = state.rng.random(k * per)
        r, used = _kernels.run_sweeps(sigma, omega, arrays.m, inc_p, inc_s, inc_n, arrays.add,
                                      arrays.neg, arrays.sub, arrays.logw, u,
                                      state.sampler == "metropolis", k, thin, rec_start + done,
                                      arrays.keyable, keys[nrec:], frus[nrec:], act[nrec:],
                                      arrays.retr, obs_idx, obs[nrec:])
        assert used == k * per
        nrec += r
        done += k
    state.sigma = DifferentialForm(state.box, 1, G, G.residues(sigma))
    state.sweeps += n_sweeps
    return nrec


def heat_bath_sweep(state: ChainState) -> ChainState:
    """One sequential sweep over all positive edges; returns a new state."""
    new = replace(state, sigma=state.sigma.copy())
    arrays = _ChainArrays(new.box, new.group, new.beta)
    e = np.zeros(0, dtype=np.int64)
    _advance(new, arrays, 1, 1, -10, e, e, np.zeros(0), e, np.zeros((0, 0), dtype=np.int64))
    return new


def run_chain(box: Box, group: GroupSpec, beta: float, seed: int, n_samples: int,
              burnin: int = 1000, thin: int = 10, sampler: str = "heatbath",
              observe: list[Cell] | None = None) -> ChainResult:
    """Burn in, then record ``n_samples`` states spaced ``thin`` sweeps apart.

    ``observe`` lists plaquettes whose (positive-orientation) codes are kept
    for every recorded sample.
    """
    if thin < 1 or burnin < 0 or n_samples < 0:
        raise DomainError("need thin >= 1, burnin >= 0, n_samples >= 0")
    state = ChainState.start(box, group, beta, seed, sampler)
    arrays = _ChainArrays(box, group, beta)
    keys = np.zeros(n_samples, dtype=np.int64)
    frus = np.zeros(n_samples, dtype=np.int64)
    act = np.zeros(n_samples, dtype=np.float64)
    obs_idx = np.array([box.index(c) for c in (observe or [])], dtype=np.int64)
    obs = np.zeros((n_samples, len(obs_idx)), dtype=np.int64)
    _advance(state, arrays, burnin, 1, -burnin - 1, keys[:0], frus[:0], act[:0], obs_idx, obs[:0])
    nrec = _advance(state, arrays, n_samples * thin, thin, 0, keys, frus, act, obs_idx, obs)
    assert nrec == n_samples
    return ChainResult(keys, frus, act, state, obs)


def empirical_tv(keys_a: np.ndarray, probs_b: dict | tuple) -> float:
    """TV between the empirical law of integer keys and an exact (keys, probs) table."""
    ek, ec = np.unique(keys_a, return_counts=True)
    bk, bp = probs_b
    order = np.argsort(bk)
    bk, bp = bk[order], bp[order]
    pos = np.searchsorted(bk, ek)
    pos_ok = (pos < len(bk))
    match = np.zeros(len(ek), dtype=bool)
    match[pos_ok] = bk[pos[pos_ok]] == ek[pos_ok]
    emp = ec / ec.sum()
    diff = np.abs(bp).sum()
    # |emp - p| on matched keys replaces p there; unmatched empirical keys add |emp|
    matched_p = bp[pos[match]]
    diff += np.abs(emp[match] - matched_p).sum() - np.abs(matched_p).sum()
    diff += emp[~match].sum()
    return 0.5 * float(diff)

