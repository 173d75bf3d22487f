import itertools
import math
import warnings

import numpy as np
import pytest

from abelgauge.abelian_group import alpha, c1_from_alpha, parse_group, phi_beta
from abelgauge.cell_complex import Box, DifferentialForm, exterior_derivative, is_closed, is_irreducible, \
    restrict, unit_box
from abelgauge.errors import DomainError, PreconditionError
from abelgauge.estimators import (LocalFunction, closed_rows, connection_probability_mc, coupled_sample,
                                  covariance_exact, covariance_mcmc, derive_seeds, disconnected_expectations_mc,
                                  expectation_exact, farthest_plaquette, outer_plaquettes, pair_vortex_mass,
                                  proposition31_report, proposition32_report, proposition33_reports,
                                  restriction_profile, spin_leading_order, theorem11_report, theorem12_report,
                                  theorem12_rhs, theorem13_report, theorem13_rhs, theorem13_rhs_from_parts,
                                  trace_rho, tv_restriction_exact, vortex_mass)
from abelgauge.gibbs_measure import activity, exact_distribution

import oracles as O
from conftest import dist

Z2, Z3 = parse_group("Z2"), parse_group("Z3")
UNIT = unit_box()
CUBE3 = Box(((0, 1),) * 3)
SLAB3 = Box(((0, 2), (0, 1), (0, 1)))
PL = UNIT.cells(2)


def tr(p, G=Z2):
    return LocalFunction.trace(p, G)


# ------------------------------------------------------------------ covariance

def test_covariance_constant_is_zero():
    d = dist("Z3", 0.5)
    const = LocalFunction.single(PL[5], Z3, lambda g: 2.5 - 1j)
    assert abs(covariance_exact(d, tr(PL[0], Z3), const)) < 1e-12


def test_covariance_two_summation_orders():
    d = dist("Z2", 0.5)
    codes, probs = d.omega_codes(), d.probabilities()
    for i, j in [(0, 1), (0, 23), (7, 12)]:
        f, g = tr(PL[i]), LocalFunction.single(-PL[j], Z2, lambda v: 3.0 if v == (1,) else 0.5)
        a, b = f.evaluate(codes[:, [i]]), g.evaluate(codes[:, [j]])
        direct = (probs * a * b).sum() - (probs * a).sum() * (probs * b).sum()
        assert abs(covariance_exact(d, f, g) - direct) < 1e-12


def test_expectation_from_marginal():
    d = dist("Z3", 0.7)
    m = d.marginal([PL[4]])
    ref = sum(m[c] * trace_rho(Z3, c) for c in range(3))
    assert expectation_exact(d, tr(PL[4], Z3)) == pytest.approx(ref, abs=1e-14)
    # tr rho(-g) is the conjugate of tr rho(g)
    assert expectation_exact(d, tr(-PL[4], Z3)) == pytest.approx(ref.conjugate(), abs=1e-14)


def test_covariance_overlap_rejected():
    with pytest.raises(DomainError):
        covariance_exact(dist("Z2", 0.5), tr(PL[0]), tr(-PL[0]))


def test_covariance_bilinear_not_conjugated():
    d = dist("Z3", 0.5)
    f, g = tr(PL[0], Z3), tr(PL[3], Z3)
    c = covariance_exact(d, f, g)
    fi = LocalFunction(f.cells, Z3, 1j * f.table)
    assert covariance_exact(d, fi, g) == pytest.approx(1j * c, abs=1e-14)


def test_covariance_mcmc_matches_exact():
    # small beta, so that frustrated plaquettes are frequent enough to estimate anything
    d = dist("Z2", 0.4)
    f, g = tr(PL[0]), tr(PL[1])
    exact = covariance_exact(d, f, g).real
    with pytest.warns(UserWarning):
        est, se = covariance_mcmc(UNIT, Z2, 0.4, f, g, seed=4, n_samples=40000, burnin=200, thin=2)
        again = covariance_mcmc(UNIT, Z2, 0.4, f, g, seed=4, n_samples=40000, burnin=200, thin=2)
    assert se > 0 and abs(est.real - exact) <= 4 * se
    assert again == (est, se)


def test_covariance_mcmc_constant_and_errors():
    f = tr(PL[0])
    const = LocalFunction.single(PL[4], Z2, lambda g: 1.0)
    est, se = covariance_mcmc(UNIT, Z2, 0.9, f, const, seed=1, n_samples=1000, burnin=10, thin=1)
    assert abs(est) <= 4 * se + 1e-12
    with pytest.raises(DomainError):
        covariance_mcmc(UNIT, Z2, 0.9, f, const, seed=1, n_samples=0)
    with pytest.warns(UserWarning, match="30"):
        covariance_mcmc(UNIT, Z2, 0.3, f, const, seed=1, n_samples=100, burnin=1, thin=1)


def test_covariance_mcmc_se_scaling():
    f, g = tr(PL[0], Z2), tr(PL[1], Z2)
    ratios = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for s in derive_seeds(8, 8):
            _, se1 = covariance_mcmc(UNIT, Z2, 0.5, f, g, seed=s, n_samples=4000, burnin=50, thin=1)
            _, se2 = covariance_mcmc(UNIT, Z2, 0.5, f, g, seed=s + 1, n_samples=8000, burnin=50, thin=1)
            ratios.append(se1 / se2)
    assert abs(np.mean(ratios) / math.sqrt(2) - 1) < 0.2


# ------------------------------------------------------------------ leading order and theorem bounds

def test_leading_order_examples():
    for beta in (0.1, 0.7):
        ind = spin_leading_order(Z2, PL[0], {(1,): 1.0}, beta)
        assert ind == pytest.approx(4 * math.exp(-24 * beta), rel=1e-12)
        assert spin_leading_order(Z3, PL[0], lambda g: 2.0, beta) == 2.0
    assert spin_leading_order(Z2, PL[0], lambda g: 1.0 if g == (0,) else 5.0, 50.0) == pytest.approx(1.0, abs=1e-15)


def test_theorem11_all_pairs_unit_box():
    d = dist("Z2", 1.2)
    for i, j in itertools.combinations(range(len(PL)), 2):
        r = theorem11_report(d, tr(PL[i]), tr(PL[j]))
        assert r.satisfied and r.preconditions_met
    with pytest.raises(PreconditionError):
        theorem11_report(dist("Z2", 0.5), tr(PL[0]), tr(PL[1]))


def test_theorem12_rhs_example():
    delta = 2.0
    a = math.exp(-4)
    assert theorem12_rhs(Z2, 1.0, delta) == pytest.approx((5 * a) ** 11 / (1 - 5 * a) * delta, rel=1e-14)
    with pytest.raises(PreconditionError):
        theorem12_rhs(Z2, 0.2, 1.0)


def test_theorem12_constant_and_flag():
    d = dist("Z2", 1.2)
    r = theorem12_report(d, PL[0], lambda g: 3.0)
    assert r.lhs == pytest.approx(0.0, abs=1e-12) and r.satisfied
    r = theorem12_report(d, PL[0], lambda g: complex(1.0 if g == (0,) else -1.0))
    assert not r.preconditions_met


def test_theorem13_identity():
    for beta in (0.9, 1.2, 2.0):
        for dd in (2, 3, 5):
            for n1, n2 in ((1.0, 1.0), (2.0, 0.5)):
                a = alpha(Z2, beta)
                r11 = type("R", (), {"rhs": c1_from_alpha(a) * n1 * n2 * (30 * a) ** dd})()
                lhs = theorem13_rhs(Z2, beta, dd, n1, n2)
                assert theorem13_rhs_from_parts(r11, Z2, beta, n1, n2) == pytest.approx(lhs, rel=1e-12)


def test_theorem13_report_runs():
    d = dist("Z2", 2.0)
    r = theorem13_report(d, PL[0], PL[23], lambda g: trace_like(g), lambda g: trace_like(g))
    assert r.rhs > 0 and not r.preconditions_met


def trace_like(g):
    return 1.0 if g == (0,) else -1.0


# ------------------------------------------------------------------ nested boxes and coupling

def law_on(box, G, beta, cells):
    law = O.brute_force_law(box.intervals, G.factors, beta)
    keyed = O.marginal(law, [(c.base, c.dirs) for c in cells], G.factors)
    return keyed


def test_tv_restriction_matches_brute_force():
    p = CUBE3.cells(2)[2]
    for beta in (0.0, 0.4):
        a = law_on(SLAB3, Z2, beta, [p])
        b = law_on(CUBE3, Z2, beta, [p])
        ref = 0.5 * sum(abs(a.get(k, 0) - b.get(k, 0)) for k in set(a) | set(b))
        assert tv_restriction_exact(SLAB3, CUBE3, {p, -p}, Z2, beta) == pytest.approx(ref, abs=1e-12)
    d = exact_distribution(CUBE3, Z2, 0.4)
    assert tv_restriction_exact(SLAB3, CUBE3, {p}, Z2, 0.4, dists=(d, d)) == 0.0
    with pytest.raises(DomainError):
        tv_restriction_exact(CUBE3, CUBE3, {p}, Z2, 0.4)


def test_outer_and_farthest():
    outer = outer_plaquettes(SLAB3, CUBE3)
    assert all(not CUBE3.contains(c) for c in outer) and len(outer) == 2 * (11 - 6)
    f = farthest_plaquette(SLAB3, CUBE3)
    # every inner plaquette touches the outer layer here, so the lex-first one wins the tie
    assert f == CUBE3.cells(2)[0]


def reach_oracle(B, Bp, om_row, omp_row):
    cellsB, cellsBp = B.cells(2), Bp.cells(2)
    verts = {(c.base, c.dirs) for c, v in zip(cellsB, om_row) if v}
    verts |= {(c.base, c.dirs) for c, v in zip(cellsBp, omp_row) if v}
    inner = {(c.base, c.dirs) for c in cellsBp}
    seen = {v for v in verts if v not in inner}
    todo = list(seen)
    while todo:
        u = todo.pop()
        for w in O.plaquette_nbrs(u):
            if w in verts and w not in seen:
                seen.add(w)
                todo.append(w)
    return np.array([(c.base, c.dirs) in seen for c in cellsBp])


def test_coupling_small_boxes():
    beta = 0.3
    draws = coupled_sample(SLAB3, CUBE3, Z2, beta, seed=12, size=100000)
    assert closed_rows(CUBE3, Z2, draws.glued).all()
    for i in range(300):
        assert (draws.phat[i] == reach_oracle(SLAB3, CUBE3, draws.omega[i], draws.omega_prime[i])).all()
    empty = np.flatnonzero(~draws.omega_prime.any(axis=1))
    assert len(empty) > 0
    emb = [SLAB3.index(c) for c in CUBE3.cells(2)]
    for i in empty[:50]:
        # with omega' = 0, P-hat comes from omega alone and the glued form is omega off P-hat, 0 on it
        assert (draws.glued[i] == np.where(draws.phat[i], 0, draws.omega[i, emb])).all()
    again = coupled_sample(SLAB3, CUBE3, Z2, beta, seed=12, size=100000)
    assert (again.glued == draws.glued).all()


def test_coupling_boundary_face_deficit():
    """The glued law under-weights plaquettes of B' that share a 3-cell with the outer layer."""
    beta = 0.3
    draws = coupled_sample(SLAB3, CUBE3, Z2, beta, seed=13, size=200000)
    q = next(i for i, c in enumerate(CUBE3.cells(2)) if c.base == (1, 0, 0))
    emb = [SLAB3.index(c) for c in CUBE3.cells(2)]
    # under mu_B the face q is never frustrated off P-hat
    assert not (draws.omega[:, emb[q]].astype(bool) & ~draws.phat[:, q]).any()
    glued = draws.glued[:, q] != 0
    assert (glued == ((draws.omega_prime[:, q] != 0) & draws.phat[:, q])).all()
    exact = 1 - exact_distribution(CUBE3, Z2, beta).marginal([CUBE3.cells(2)[q]])[0]
    se = math.sqrt(exact * (1 - exact) / len(glued))
    assert glued.mean() < exact - 10 * se
    # the untouched sample omega' itself is fine
    assert abs((draws.omega_prime[:, q] != 0).mean() - exact) < 4 * se


def test_coupling_agrees_off_phat():
    draws = coupled_sample(SLAB3, CUBE3, Z3, 0.5, seed=3, size=2000)
    emb = [SLAB3.index(c) for c in CUBE3.cells(2)]
    off = ~draws.phat
    assert (draws.glued[off] == draws.omega[:, emb][off]).all()
    w, wp = draws.forms(0)
    assert is_closed(w) and is_closed(wp)


def test_closed_rows_matches_is_closed():
    r = np.random.Generator(np.random.Philox(0))
    forms = [exterior_derivative(DifferentialForm.random(UNIT, 1, Z3, r)) for _ in range(20)]
    forms += [DifferentialForm.random(UNIT, 2, Z3, r) for _ in range(20)]
    codes = np.array([f.codes() for f in forms])
    assert list(closed_rows(UNIT, Z3, codes)) == [is_closed(f) for f in forms]


# ------------------------------------------------------------------ connection probabilities

def test_connection_probability_p_minus_p():
    d = dist("Z2", 0.5)
    q = 1 - d.marginal([PL[3]])[0]
    p, se = connection_probability_mc(d, {PL[3]}, {-PL[3]}, seed=2, n_pairs=200000)
    assert abs(p - (1 - (1 - q) ** 2)) <= 4 * se


@pytest.mark.parametrize("beta", [0.3, 0.5])
def test_covariance_chains_inequality(beta):
    # at larger beta connections are too rare for 10^6 pairs to see any
    d = dist("Z2", beta)
    for j in (1, 23):
        P1, P2 = {PL[0], -PL[0]}, {PL[j], -PL[j]}
        cov = abs(covariance_exact(d, tr(PL[0]), tr(PL[j])))
        p, se = connection_probability_mc(d, P1, P2, seed=5, n_pairs=10 ** 6)
        assert se > 0 and cov <= 2 * (p + 4 * se)


def test_disconnected_expectations():
    d = dist("Z2", 0.5)
    f, g = tr(PL[0]), LocalFunction.single(PL[9], Z2, lambda v: 2.0 if v == (1,) else -1.0)
    r = disconnected_expectations_mc(d, f, g, seed=6, n_pairs=200000)
    assert abs(r["same"] - r["swapped"]) <= 4 * r["combined_se"]
    assert 0 < r["p_disconnected"] < 1


# ------------------------------------------------------------------ literal restriction oracle
# closed sub-restrictions of omega enumerated as bitmasks over positive plaquettes

def closed_masks(box, G, row):
    D = box.incidence(3)
    n = len(row)
    supp = [i for i in range(n) if row[i]]
    res = G.residues(np.asarray(row, dtype=np.int64))
    out = []
    for bits in itertools.product((0, 1), repeat=len(supp)):
        mask = np.zeros(n, dtype=np.int64)
        mask[[i for i, b in zip(supp, bits) if b]] = 1
        if not ((D @ (res * mask[:, None])) % np.array(G.factors)).any():
            out.append(sum(1 << i for i in np.flatnonzero(mask)))
    return out


def irreducible_wrt(S, P, closed):
    """omega|S is P-irreducible: no proper closed sub-restriction of it contains P."""
    return all(not (T & P == P and T & S == T and T != S) for T in closed)


def literal_vortex_member(box, G, row, Pmask, M):
    closed = closed_masks(box, G, row)
    return any(S & Pmask == Pmask and bin(S).count("1") >= M and irreducible_wrt(S, Pmask, closed)
               for S in closed)


def test_restriction_profile_literal_3d():
    d = exact_distribution(SLAB3, Z2, 0.5)
    codes = d.omega_codes()
    P0 = [SLAB3.index(c) for c in (CUBE3.cells(2)[0], CUBE3.cells(2)[4])]
    prof = restriction_profile(SLAB3, Z2, codes, P0)
    for r in range(0, len(codes), 7):
        closed = closed_masks(SLAB3, Z2, codes[r])
        for a in range(4):
            A = sum(1 << P0[i] for i in range(2) if a >> i & 1)
            for t in range(4):
                Tm = sum(1 << P0[i] for i in range(2) if t >> i & 1)
                sizes = [bin(S).count("1") for S in closed
                         if S & A == A and S & (1 << P0[0] | 1 << P0[1]) == Tm and irreducible_wrt(S, A, closed)]
                assert prof[r, a, t] == (max(sizes) if sizes else -1)


def test_vortex_mass_literal_unit_box():
    d = dist("Z2", 0.9)
    codes = d.omega_codes()
    p = PL[6]
    pi = UNIT.index(p)
    small = np.flatnonzero((codes != 0).sum(axis=1) <= 11)
    for M in (1, 3, 4, 6, 8):
        prof_hit = []
        for r in small[::150]:
            prof_hit.append(literal_vortex_member(UNIT, Z2, codes[r], 1 << pi, M))
        # same rows through the package
        pkg = restriction_profile(UNIT, Z2, codes[small[::150]], [pi])[:, -1, :].max(axis=1) >= M
        assert list(pkg) == prof_hit
    # M <= 1 reduces to the single-plaquette marginal
    assert vortex_mass(d, {p, -p}, 1) == pytest.approx(1 - d.marginal([p])[0], rel=1e-12)
    masses = [vortex_mass(d, {p, -p}, M) for M in range(1, 10)]
    assert all(a >= b for a, b in zip(masses, masses[1:]))


def test_irreducibility_two_routes():
    d = dist("Z2", 0.9)
    codes = d.omega_codes()
    p = PL[6]
    pi = UNIT.index(p)
    rows = np.flatnonzero(((codes != 0).sum(axis=1) <= 9) & (codes[:, pi] != 0))[:30]
    for r in rows:
        closed = closed_masks(UNIT, Z2, codes[r])
        w = d.form(int(r))
        for S in closed:
            if not S >> pi & 1:
                continue
            cells = {c for i, c in enumerate(PL) if S >> i & 1}
            nu = restrict(w, cells | {-c for c in cells})
            assert is_irreducible(nu, {p, -p}) == irreducible_wrt(S, 1 << pi, closed)


def literal_pair_mass(dB, dBp, P0cells, M):
    """Iterate nu, nu' and every symmetric decomposition of P0, exactly as stated."""
    B, Bp = dB.box, dBp.box
    P0 = [c.positive for c in P0cells]
    idxB = [B.index(c) for c in P0]
    idxBp = [Bp.index(c) for c in P0]

    def options(d, idx):
        out = []
        for row in d.omega_codes():
            closed = closed_masks(d.box, d.group, row)
            opts = []
            for S in closed:
                irr = {}
                for sub in range(2 ** len(P0)):
                    Pm = sum(1 << idx[i] for i in range(len(P0)) if sub >> i & 1)
                    irr[sub] = irreducible_wrt(S, Pm, closed)
                inside = sum(1 << i for i in range(len(P0)) if S >> idx[i] & 1)
                opts.append((inside, bin(S).count("1"), irr))
            out.append(opts)
        return out

    oB, oBp = options(dB, idxB), options(dBp, idxBp)
    full = 2 ** len(P0) - 1
    total = 0.0
    for pa, A in zip(dB.probabilities(), oB):
        for pb, Bo in zip(dBp.probabilities(), oBp):
            hit = False
            for inside, s, irr in A:
                for inside_p, s_p, irr_p in Bo:
                    if (inside | inside_p) != full or s + s_p < M:
                        continue
                    if all(irr[P] and irr_p[full & ~P] for P in range(full + 1)
                           if P & ~inside == 0 and (full & ~P) & ~inside_p == 0):
                        hit = True
                        break
                if hit:
                    break
            if hit:
                total += pa * pb
    return total


@pytest.mark.parametrize("k", [1, 2])
def test_pair_vortex_mass_literal(k):
    beta = 0.5
    dB = exact_distribution(SLAB3, Z2, beta)
    dBp = exact_distribution(CUBE3, Z2, beta)
    cells = [CUBE3.cells(2)[0], CUBE3.cells(2)[3]][:k]
    P0 = set(cells) | {-c for c in cells}
    for M in range(k, 9):
        assert pair_vortex_mass(dB, dBp, P0, M) == pytest.approx(literal_pair_mass(dB, dBp, cells, M), abs=1e-12)


# ------------------------------------------------------------------ proposition reports

def test_proposition31_examples():
    d = dist("Z2", 1.0)
    p = PL[6]
    r1 = proposition31_report(d, {p, -p}, 1)
    a = math.exp(-4)
    assert r1.rhs == pytest.approx(a / (1 - 5 * a)) and r1.satisfied
    assert r1.lhs == pytest.approx(1 - d.marginal([p])[0], rel=1e-12)
    r6 = proposition31_report(d, {p, -p}, 6)
    assert r6.rhs == pytest.approx(5 ** 5 * a ** 6 / (1 - 5 * a)) and r6.satisfied
    with pytest.raises(DomainError):
        proposition31_report(d, {p}, 1)


def test_proposition32_reports():
    dB = exact_distribution(SLAB3, Z2, 0.9)
    dBp = exact_distribution(CUBE3, Z2, 0.9)
    p = CUBE3.cells(2)[0]
    reports = [proposition32_report(dB, dBp, {p, -p}, M) for M in range(1, 6)]
    assert reports[0].rhs == 0.0
    assert all(r.satisfied for r in reports[1:])
    with pytest.raises(DomainError):
        proposition32_report(dBp, dB, {p, -p}, 2)


def test_proposition33_two_sided():
    d = dist("Z2", 0.9)
    r = np.random.Generator(np.random.Philox(1))
    for _ in range(10):
        nu = exterior_derivative(DifferentialForm.random(UNIT, 1, Z2, r))
        up, lo = proposition33_reports(d, nu)
        assert up.satisfied
        assert up.lhs == pytest.approx(lo.rhs)
        assert up.rhs == pytest.approx(activity(nu, 0.9))
        assert not up.preconditions_met
    with pytest.raises(DomainError):
        proposition33_reports(d, DifferentialForm.indicator(UNIT, PL[0], Z2, 1))


def test_phi_weights_consistent():
    # the reports use phi through alpha; check the two agree on Z3
    a = sum(phi_beta(Z3, g, 1.1) ** 2 for g in Z3.nonzero())
    assert a == pytest.approx(alpha(Z3, 1.1), rel=1e-14)
