"""Compiled inner loops: Gray-code enumeration and single-edge updates.

Group elements are integer codes; arithmetic goes through the lookup tables
of :class:`GroupSpec`. Plaquette values are kept for positive plaquettes
only, and the weight of a configuration is exp(sum_p logw[omega_p]) with
``logw = log(phi^2)`` (both orientations of p contribute one factor phi).
"""
import numpy as np
from numba import njit

FLUSH = 4096


@njit(cache=True)
def _power_table(logw, n_plaq):
    """powtab[g, c] = exp(c * logw[g]), so a state weight needs no exp call."""
    m = logw.shape[0]
    t = np.ones((m, n_plaq + 1), dtype=np.float64)
    for g in range(1, m):
        for c in range(n_plaq + 1):
            t[g, c] = np.exp(c * logw[g])
    return t


@njit(cache=True)
def _state_weight(cnt, powtab):
    w = 1.0
    for g in range(1, cnt.shape[0]):
        w *= powtab[g, cnt[g]]
    return w


@njit(cache=True)
def _apply_delta(j, delta, omega, cnt, inc_p, inc_s, inc_n, add, neg):
    ndelta = neg[delta]
    for t in range(inc_n[j]):
        p = inc_p[j, t]
        old = omega[p]
        new = add[old, delta] if inc_s[j, t] > 0 else add[old, ndelta]
        omega[p] = new
        cnt[old] -= 1
        cnt[new] += 1


@njit(cache=True)
def enumerate_weights(m, inc_p, inc_s, inc_n, n_plaq, add, neg, sub, logw):
    """Weight of every gauge-fixed state, indexed lexicographically (digit j has weight m**j)."""
    powtab = _power_table(logw, n_plaq)
    F = inc_n.shape[0]
    total = 1
    for _ in range(F):
        total *= m
    w = np.empty(total, dtype=np.float64)
    omega = np.zeros(n_plaq, dtype=np.int64)
    cnt = np.zeros(m, dtype=np.int64)
    cnt[0] = n_plaq
    a = np.zeros(F, dtype=np.int64)
    o = np.ones(F, dtype=np.int64)
    f = np.arange(F + 1)
    pw = np.ones(F, dtype=np.int64)
    for j in range(1, F):
        pw[j] = pw[j - 1] * m
    idx = 0
    w[0] = _state_weight(cnt, powtab)
    while True:
        j = f[0]
        f[0] = 0
        if j == F:
            break
        old = a[j]
        a[j] += o[j]
        idx += o[j] * pw[j]
        _apply_delta(j, sub[a[j], old], omega, cnt, inc_p, inc_s, inc_n, add, neg)
        if a[j] == 0 or a[j] == m - 1:
            o[j] = -o[j]
            f[j] = f[j + 1]
            f[j + 1] = j + 1
        w[idx] = _state_weight(cnt, powtab)
    return w


@njit(cache=True)
def enumerate_marginals(m, inc_p, inc_s, inc_n, n_plaq, add, neg, sub, logw,
                        memb_k, memb_mult, memb_n, n_groups, n_keys):
    """Unnormalised marginal tables for several plaquette groups in one pass.

    ``memb_*[p]`` lists the groups containing plaquette p and the place value
    of p inside that group's key. Returns (hist[n_groups, n_keys], Z).
    """
    powtab = _power_table(logw, n_plaq)
    F = inc_n.shape[0]
    omega = np.zeros(n_plaq, dtype=np.int64)
    cnt = np.zeros(m, dtype=np.int64)
    cnt[0] = n_plaq
    keys = np.zeros(n_groups, dtype=np.int64)
    hist = np.zeros((n_groups, n_keys), dtype=np.float64)
    inner = np.zeros((n_groups, n_keys), dtype=np.float64)
    z_outer = 0.0
    z_inner = 0.0
    a = np.zeros(F, dtype=np.int64)
    o = np.ones(F, dtype=np.int64)
    f = np.arange(F + 1)
    step = 0
    w = _state_weight(cnt, powtab)
    z_inner += w
    for k in range(n_groups):
        inner[k, keys[k]] += w
    while True:
        j = f[0]
        f[0] = 0
        if j == F:
            break
        old = a[j]
        a[j] += o[j]
        delta = sub[a[j], old]
        ndelta = neg[delta]
        for t in range(inc_n[j]):
            p = inc_p[j, t]
            po = omega[p]
            pn = add[po, delta] if inc_s[j, t] > 0 else add[po, ndelta]
            omega[p] = pn
            cnt[po] -= 1
            cnt[pn] += 1
            for u in range(memb_n[p]):
                keys[memb_k[p, u]] += (pn - po) * memb_mult[p, u]
        if a[j] == 0 or a[j] == m - 1:
            o[j] = -o[j]
            f[j] = f[j + 1]
            f[j + 1] = j + 1
        w = _state_weight(cnt, powtab)
        z_inner += w
        for k in range(n_groups):
            inner[k, keys[k]] += w
        step += 1
        if step == FLUSH:
            # two-level summation keeps the rounding error of 2**30 terms small
            z_outer += z_inner
            z_inner = 0.0
            hist += inner
            inner[:, :] = 0.0
            step = 0
    z_outer += z_inner
    hist += inner
    return hist, z_outer


@njit(cache=True)
def enumerate_sample(m, inc_p, inc_s, inc_n, n_plaq, add, neg, sub, logw, thresholds, out):
    """Stream the states once and record omega whenever the running mass passes
    the next (sorted) threshold; ``out`` has shape (len(thresholds), n_plaq)."""
    powtab = _power_table(logw, n_plaq)
    F = inc_n.shape[0]
    omega = np.zeros(n_plaq, dtype=np.int64)
    cnt = np.zeros(m, dtype=np.int64)
    cnt[0] = n_plaq
    a = np.zeros(F, dtype=np.int64)
    o = np.ones(F, dtype=np.int64)
    f = np.arange(F + 1)
    nt = thresholds.shape[0]
    r = 0
    acc = _state_weight(cnt, powtab)
    while r < nt and thresholds[r] < acc:
        out[r, :] = omega
        r += 1
    while r < nt:
        j = f[0]
        f[0] = 0
        if j == F:
            break
        old = a[j]
        a[j] += o[j]
        _apply_delta(j, sub[a[j], old], omega, cnt, inc_p, inc_s, inc_n, add, neg)
        if a[j] == 0 or a[j] == m - 1:
            o[j] = -o[j]
            f[j] = f[j + 1]
            f[j + 1] = j + 1
        acc += _state_weight(cnt, powtab)
        while r < nt and thresholds[r] < acc:
            out[r, :] = omega
            r += 1
    # thresholds at the very top of the range land on the last state
    while r < nt:
        out[r, :] = omega
        r += 1


@njit(cache=True)
def _edge_weight(e, delta, omega, inc_p, inc_s, inc_n, add, neg, logw):
    s = 0.0
    nd = neg[delta]
    for t in range(inc_n[e]):
        po = omega[inc_p[e, t]]
        pn = add[po, delta] if inc_s[e, t] > 0 else add[po, nd]
        s += logw[pn]
    return s


@njit(cache=True)
def _set_edge(e, delta, omega, inc_p, inc_s, inc_n, add, neg):
    nd = neg[delta]
    for t in range(inc_n[e]):
        p = inc_p[e, t]
        omega[p] = add[omega[p], delta] if inc_s[e, t] > 0 else add[omega[p], nd]


@njit(cache=True)
def run_sweeps(sigma, omega, m, inc_p, inc_s, inc_n, add, neg, sub, logw,
               uniforms, metropolis, n_sweeps, thin, rec_start, keyable, keys, frus, act, retr,
               obs_idx, obs):
    """Run ``n_sweeps`` sequential sweeps, consuming ``uniforms`` in order.

    After sweep s (0-based within this call) a sample is recorded when
    ``(rec_start + s + 1) % thin == 0`` and rec_start + s + 1 > 0; recording
    stores the omega key (mixed radix; -1 unless ``keyable``), the number of
    frustrated positive plaquettes, the Wilson action and the codes of the
    plaquettes listed in ``obs_idx``. Returns the number
    of records written and the number of uniforms used.
    """
    E = sigma.shape[0]
    P = omega.shape[0]
    lw = np.empty(m, dtype=np.float64)
    u_pos = 0
    nrec = 0
    for s in range(n_sweeps):
        for e in range(E):
            c = sigma[e]
            if metropolis:
                u1 = uniforms[u_pos]
                u2 = uniforms[u_pos + 1]
                u_pos += 2
                h = int(u1 * (m - 1))
                if h >= m - 1:
                    h = m - 2
                if h >= c:
                    h += 1
                d = sub[h, c]
                dl = _edge_weight(e, d, omega, inc_p, inc_s, inc_n, add, neg, logw) - \
                    _edge_weight(e, 0, omega, inc_p, inc_s, inc_n, add, neg, logw)
                if dl >= 0.0 or u2 < np.exp(dl):
                    _set_edge(e, d, omega, inc_p, inc_s, inc_n, add, neg)
                    sigma[e] = h
            else:
                u = uniforms[u_pos]
                u_pos += 1
                mx = -1e300
                for h in range(m):
                    lw[h] = _edge_weight(e, sub[h, c], omega, inc_p, inc_s, inc_n, add, neg, logw)
                    if lw[h] > mx:
                        mx = lw[h]
                tot = 0.0
                for h in range(m):
                    lw[h] = np.exp(lw[h] - mx)
                    tot += lw[h]
                target = u * tot
                h = 0
                acc = lw[0]
                while acc <= target and h < m - 1:
                    h += 1
                    acc += lw[h]
                if h != c:
                    _set_edge(e, sub[h, c], omega, inc_p, inc_s, inc_n, add, neg)
                    sigma[e] = h
        t = rec_start + s + 1
        if t > 0 and t % thin == 0 and nrec < keys.shape[0]:
            key = 0
            mult = 1
            nf = 0
            a = 0.0
            for p in range(P):
                g = omega[p]
                if g != 0:
                    nf += 1
                a -= 2.0 * retr[g]
                if keyable:
                    key += g * mult
                    mult *= m
            keys[nrec] = key if keyable else -1
            frus[nrec] = nf
            act[nrec] = a
            for t in range(obs_idx.shape[0]):
                obs[nrec, t] = omega[obs_idx[t]]
            nrec += 1
    return nrec, u_pos


@njit(cache=True)
def _path_candidate(u, c, nbr_ptr, nbr_idx):
    # candidate 0 is -u, then (+q, -q) for each positive neighbour q
    if c == 0:
        return u ^ 1
    j = nbr_idx[nbr_ptr[u >> 1] + (c - 1) // 2]
    return 2 * j + ((c - 1) & 1)


@njit(cache=True)
def _path_free(q, cube_ptr, cube_idx, blocked):
    i = q >> 1
    for t in range(cube_ptr[i], cube_ptr[i + 1]):
        if blocked[cube_idx[t]]:
            return False
    return True


@njit(cache=True)
def _path_block(u, cube_ptr, cube_idx, blocked, step):
    i = u >> 1
    for t in range(cube_ptr[i], cube_ptr[i + 1]):
        blocked[cube_idx[t]] += step


@njit(cache=True)
def count_optimal(start, m, nbr_ptr, nbr_idx, cube_ptr, cube_idx, n_cubes):
    """Optimal paths of length m from oriented node ``start`` (node = 2*plaquette + sign bit).

    Plaquette k+1 may not share a 3-cell with plaquettes 0..k-1, which is
    tracked by per-cube counters.
    """
    blocked = np.zeros(n_cubes, dtype=np.int64)
    path = np.zeros(m, dtype=np.int64)
    pos = np.zeros(m, dtype=np.int64)
    s0 = start & 1
    p0 = start >> 1
    total = 0
    path[0] = start
    k = 0
    while k >= 0:
        u = path[k]
        ncand = 1 + 2 * (nbr_ptr[(u >> 1) + 1] - nbr_ptr[u >> 1])
        if k == m - 2:
            for c in range(ncand):
                q = _path_candidate(u, c, nbr_ptr, nbr_idx)
                if (q >> 1) != p0 and _path_free(q, cube_ptr, cube_idx, blocked):
                    total += 1
            k -= 1
            if k >= 0:
                _path_block(path[k], cube_ptr, cube_idx, blocked, -1)
            continue
        if pos[k] >= ncand:
            k -= 1
            if k >= 0:
                _path_block(path[k], cube_ptr, cube_idx, blocked, -1)
            continue
        q = _path_candidate(u, pos[k], nbr_ptr, nbr_idx)
        pos[k] += 1
        if (q & 1) != s0 or not _path_free(q, cube_ptr, cube_idx, blocked):
            continue
        _path_block(u, cube_ptr, cube_idx, blocked, 1)
        k += 1
        path[k] = q
        pos[k] = 0
    return total


@njit(cache=True)
def pair_reach(om, omp, emb, nbr_ptr, nbr_idx, src, reached):
    """Flood fill in G(omega, omega') for a batch of configuration pairs.

    ``om[r]`` holds codes on the positive plaquettes of the outer box,
    ``omp[r]`` codes on the inner box, whose plaquette j sits at outer index
    ``emb[j]``. Vertices reachable from ``src`` are flagged in ``reached[r]``.
    """
    P = om.shape[1]
    vert = np.zeros(P, dtype=np.bool_)
    stack = np.empty(P, dtype=np.int64)
    for r in range(om.shape[0]):
        for q in range(P):
            vert[q] = om[r, q] != 0
            reached[r, q] = 0
        for j in range(omp.shape[1]):
            if omp[r, j] != 0:
                vert[emb[j]] = True
        top = 0
        for q in range(P):
            if src[q] and vert[q]:
                reached[r, q] = 1
                stack[top] = q
                top += 1
        while top > 0:
            top -= 1
            u = stack[top]
            for t in range(nbr_ptr[u], nbr_ptr[u + 1]):
                v = nbr_idx[t]
                if vert[v] and not reached[r, v]:
                    reached[r, v] = 1
                    stack[top] = v
                    top += 1


@njit(cache=True)
def _popcount(x):
    c = 0
    while x:
        x &= x - 1
        c += 1
    return c


@njit(cache=True)
def _first_defect(S, codes, r, face_ptr, face_idx, face_sgn, add, neg):
    for c in range(face_ptr.shape[0] - 1):
        tot = 0
        for f in range(face_ptr[c], face_ptr[c + 1]):
            q = face_idx[f]
            if (S >> q) & 1:
                v = codes[r, q]
                if face_sgn[f] < 0:
                    v = neg[v]
                tot = add[tot, v]
        if tot != 0:
            return c
    return -1


@njit(cache=True)
def restriction_profile(codes, face_ptr, face_idx, face_sgn, add, neg, amasks, p0_pos, budget, out):
    """Minimal closed restrictions of each row of ``codes`` containing each mask in ``amasks``.

    Plaquette sets are int64 bitmasks. ``out[r, a, t]`` receives the largest
    positive support among minimal restrictions containing ``amasks[a]``
    whose trace on the plaquettes ``p0_pos`` is the local mask ``t`` (-1 if
    there is none). Returns -1, or the row whose search exceeded ``budget``.
    """
    n_states, P = codes.shape
    stack = np.empty(8 * budget + 8, dtype=np.int64)
    leaves = np.empty(budget + 1, dtype=np.int64)
    one = np.int64(1)
    for r in range(n_states):
        supp = np.int64(0)
        for q in range(P):
            if codes[r, q] != 0:
                supp |= one << q
        for ai in range(amasks.shape[0]):
            for t in range(out.shape[2]):
                out[r, ai, t] = -1
            A = amasks[ai]
            if A & ~supp:
                continue
            if A == 0:
                out[r, ai, 0] = 0
                continue
            seen = {A}
            seen.discard(A)
            n_leaves = 0
            top = 1
            stack[0] = A
            while top > 0:
                top -= 1
                S = stack[top]
                if S in seen:
                    continue
                seen.add(S)
                if len(seen) > budget:
                    return r
                c = _first_defect(S, codes, r, face_ptr, face_idx, face_sgn, add, neg)
                if c < 0:
                    leaves[n_leaves] = S
                    n_leaves += 1
                    continue
                for f in range(face_ptr[c], face_ptr[c + 1]):
                    q = face_idx[f]
                    if (supp >> q) & 1 and not (S >> q) & 1:
                        stack[top] = S | (one << q)
                        top += 1
            for i in range(n_leaves):
                L = leaves[i]
                minimal = True
                for j in range(n_leaves):
                    K = leaves[j]
                    if K != L and (K & L) == K:
                        minimal = False
                        break
                if not minimal:
                    continue
                t = 0
                for b in range(p0_pos.shape[0]):
                    t |= ((L >> p0_pos[b]) & 1) << b
                s = _popcount(L)
                if s > out[r, ai, t]:
                    out[r, ai, t] = s
    return -1
