"""Numba kernels for the event-driven simulation paths.

All randomness comes from an inlined xoshiro256++ generator whose four-word
state is owned by the caller, so trajectories are reproducible from a seed
and independent of threading.  Jump rates are integer-valued (occupancies,
alpha and N^2 are integers), so the Fenwick tree over per-site exit rates
stays exact in float64 arithmetic: no drift correction is needed.
"""

from __future__ import annotations

import numpy as np
from numba import njit

U64 = np.uint64
_INV53 = 1.1102230246251565e-16  # 2**-53

STATUS_OK = 0
STATUS_OVERFLOW = 1
STATUS_BUFFER_FULL = 2


@njit(inline="always", cache=True)
def _splitmix64(s):
    s = s + U64(0x9E3779B97F4A7C15)
    z = s
    z = (z ^ (z >> U64(30))) * U64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> U64(27))) * U64(0x94D049BB133111EB)
    z = z ^ (z >> U64(31))
    return s, z


@njit(cache=True)
def seed_state(seed):
    """Expand a 64-bit seed into a xoshiro256++ state (4 words)."""
    st = np.empty(4, dtype=np.uint64)
    s = U64(seed)
    for i in range(4):
        s, z = _splitmix64(s)
        st[i] = z
    return st


@njit(inline="always", cache=True)
def _rotl(x, k):
    return (x << U64(k)) | (x >> U64(64 - k))


@njit(inline="always", cache=True)
def next_u64(st):
    result = _rotl(st[0] + st[3], 23) + st[0]
    t = st[1] << U64(17)
    st[2] ^= st[0]
    st[3] ^= st[1]
    st[1] ^= st[2]
    st[0] ^= st[3]
    st[2] ^= t
    st[3] = _rotl(st[3], 45)
    return result


@njit(inline="always", cache=True)
def next_double(st):
    """Uniform double in [0, 1)."""
    return (next_u64(st) >> U64(11)) * _INV53


# ---------------------------------------------------------------------------
# Fenwick tree over per-site exit rates (1-indexed internal layout)


@njit(cache=True)
def fenwick_build(vals):
    n = vals.shape[0]
    tree = np.zeros(n + 1)
    for i in range(1, n + 1):
        tree[i] += vals[i - 1]
        j = i + (i & (-i))
        if j <= n:
            tree[j] += tree[i]
    return tree


@njit(inline="always", cache=True)
def fenwick_add(tree, i, delta):
    n = tree.shape[0] - 1
    j = i + 1
    while j <= n:
        tree[j] += delta
        j += j & (-j)


@njit(inline="always", cache=True)
def fenwick_find(tree, n, top_bit, target):
    """Largest 0-based index whose prefix sum is <= target (may return n)."""
    idx = 0
    rem = target
    bit = top_bit
    while bit > 0:
        nxt = idx + bit
        if nxt <= n and tree[nxt] <= rem:
            idx = nxt
            rem -= tree[nxt]
        bit >>= 1
    return idx


@njit(inline="always", cache=True)
def _site_exit_rate(occ, nbr, z, sigma, alpha, n2):
    o = occ[z]
    if o == 0:
        return 0.0
    acc = 0.0
    for c in range(nbr.shape[1]):
        acc += alpha + sigma * occ[nbr[z, c]]
    return n2 * o * acc


@njit(cache=True)
def site_exit_rates(occ, nbr, sigma, alpha, n2):
    n = occ.shape[0]
    rates = np.empty(n)
    for z in range(n):
        rates[z] = _site_exit_rate(occ, nbr, z, sigma, alpha, n2)
    return rates


@njit(inline="always", cache=True)
def _apply_move_and_update(occ, nbr, rates, tree, z, w, sigma, alpha, n2, total):
    occ[z] -= 1
    occ[w] += 1
    ndirs = nbr.shape[1]
    cand = np.empty(2 + 2 * ndirs, np.int64)
    m = 0
    cand[m] = z
    m += 1
    if w != z:
        cand[m] = w
        m += 1
    if sigma != 0:
        for c in range(ndirs):
            for s in (nbr[z, c], nbr[w, c]):
                dup = False
                for ii in range(m):
                    if cand[ii] == s:
                        dup = True
                        break
                if not dup:
                    cand[m] = s
                    m += 1
    for ii in range(m):
        s = cand[ii]
        rn = _site_exit_rate(occ, nbr, s, sigma, alpha, n2)
        delta = rn - rates[s]
        if delta != 0.0:
            rates[s] = rn
            fenwick_add(tree, s, delta)
            total += delta
    return total


@njit(inline="always", cache=True)
def _pick_event(occ, nbr, rates, tree, rng, total, n, top_bit, sigma, alpha):
    """Sample (source, target) proportionally to the directed-edge rates."""
    target_mass = next_double(rng) * total
    z = fenwick_find(tree, n, top_bit, target_mass)
    while z >= n or rates[z] <= 0.0:
        z -= 1
    ndirs = nbr.shape[1]
    wsum = 0.0
    for c in range(ndirs):
        wsum += alpha + sigma * occ[nbr[z, c]]
    v = next_double(rng) * wsum
    acc = 0.0
    w = nbr[z, 0]
    for c in range(ndirs):
        wt = alpha + sigma * occ[nbr[z, c]]
        acc += wt
        if v < acc:
            w = nbr[z, c]
            break
    return z, w


@njit(nogil=True, cache=True)
def kmc_run(occ, nbr, rates, tree, total, t, t_end, rng, sigma, alpha, n2, occ_cap):
    """Advance the configuration process to t_end (exact event chain).

    Mutates occ, rates, tree and rng in place.  Returns (t, total, status).
    """
    n = occ.shape[0]
    top_bit = 1
    while (top_bit << 1) <= n:
        top_bit <<= 1
    while True:
        if total <= 0.0:
            return t_end, total, STATUS_OK
        dt = -np.log(1.0 - next_double(rng)) / total
        if t + dt > t_end:
            return t_end, total, STATUS_OK
        t = t + dt
        z, w = _pick_event(occ, nbr, rates, tree, rng, total, n, top_bit, sigma, alpha)
        total = _apply_move_and_update(occ, nbr, rates, tree, z, w, sigma, alpha, n2, total)
        if occ[w] > occ_cap:
            return t, total, STATUS_OVERFLOW


@njit(nogil=True, cache=True)
def kmc_run_record(
    occ, nbr, rates, tree, total, t, t_end, rng, sigma, alpha, n2, occ_cap, ev_t, ev_src, ev_dst
):
    """As kmc_run, but records (time, source, target) per event.

    Returns (t, total, status, n_events); status BUFFER_FULL when the event
    arrays fill up before t_end.
    """
    n = occ.shape[0]
    cap = ev_t.shape[0]
    top_bit = 1
    while (top_bit << 1) <= n:
        top_bit <<= 1
    n_ev = 0
    while True:
        if total <= 0.0:
            return t_end, total, STATUS_OK, n_ev
        dt = -np.log(1.0 - next_double(rng)) / total
        if t + dt > t_end:
            return t_end, total, STATUS_OK, n_ev
        if n_ev >= cap:
            return t, total, STATUS_BUFFER_FULL, n_ev
        t = t + dt
        z, w = _pick_event(occ, nbr, rates, tree, rng, total, n, top_bit, sigma, alpha)
        total = _apply_move_and_update(occ, nbr, rates, tree, z, w, sigma, alpha, n2, total)
        ev_t[n_ev] = t
        ev_src[n_ev] = z
        ev_dst[n_ev] = w
        n_ev += 1
        if occ[w] > occ_cap:
            return t, total, STATUS_OVERFLOW, n_ev


# ---------------------------------------------------------------------------
# labeled k-particle walk (companion process)


@njit(nogil=True, cache=True)
def labeled_run(sites, nbr, t, t_end, rng, sigma, alpha, n2):
    """Advance the labeled k-particle process to t_end.

    Particle i jumps to a neighboring site y at rate
    n2 * (alpha + sigma * #{j != i : sites[j] == y}).  Rates are recomputed
    per event (k is small).  Mutates sites and rng; returns t.
    """
    k = sites.shape[0]
    ndirs = nbr.shape[1]
    wts = np.empty((k, ndirs))
    while True:
        total = 0.0
        for i in range(k):
            xi = sites[i]
            for c in range(ndirs):
                y = nbr[xi, c]
                cnt = 0
                for j in range(k):
                    if j != i and sites[j] == y:
                        cnt += 1
                wt = n2 * (alpha + sigma * cnt)
                wts[i, c] = wt
                total += wt
        if total <= 0.0:
            return t_end
        dt = -np.log(1.0 - next_double(rng)) / total
        if t + dt > t_end:
            return t_end
        t = t + dt
        v = next_double(rng) * total
        acc = 0.0
        moved = False
        for i in range(k):
            if moved:
                break
            for c in range(ndirs):
                acc += wts[i, c]
                if v < acc:
                    sites[i] = nbr[sites[i], c]
                    moved = True
                    break
        if not moved:
            # float edge (v rounded up to total): take the last admissible move
            for i in range(k - 1, -1, -1):
                if moved:
                    break
                for c in range(ndirs - 1, -1, -1):
                    if wts[i, c] > 0.0:
                        sites[i] = nbr[sites[i], c]
                        moved = True
                        break
