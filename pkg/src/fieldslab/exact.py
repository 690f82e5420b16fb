"""Small-system exact engine: explicit generator matrices, the moment-kernel
intertwining as a matrix identity, detailed balance, and exact semigroup
evaluation by uniformization (dense matrix exponentials kept as a second
oracle).

Configuration state spaces are enumerated per particle-number sector (the
dynamics conserves total particle number); labeled tuple spaces use mixed-
radix indexing over sites.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.stats import poisson

from fieldslab.dynamics import ModelParams
from fieldslab.fields import falling_factorial_joint
from fieldslab.lattice import Torus
from fieldslab.measures import MarginalSpec, marginal_pmf_weights
from fieldslab.dual import tuple_weight

__all__ = [
    "SectorIndex",
    "TupleIndex",
    "enumerate_sector",
    "build_config_generator",
    "build_dual_generator",
    "evolve_exact",
    "evolve_dense",
    "check_duality_identity",
    "check_detailed_balance",
    "check_stationarity",
]

SECTOR_CAP = 200_000


@dataclass
class SectorIndex:
    """Bijection between fixed-particle-number configurations and indices."""

    torus: Torus
    states: list[tuple[int, ...]]
    lookup: dict[tuple[int, ...], int]

    def index_of(self, occupancy) -> int:
        return self.lookup[tuple(int(v) for v in occupancy)]

    def occupancy_of(self, index: int) -> np.ndarray:
        return np.array(self.states[index], dtype=np.int64)

    def __len__(self):
        return len(self.states)


@dataclass
class TupleIndex:
    """Mixed-radix bijection between labeled k-tuples and indices."""

    torus: Torus
    k: int

    def index_of(self, sites) -> int:
        idx = 0
        n = self.torus.n_sites
        for s in np.atleast_1d(np.asarray(sites, dtype=np.int64)):
            idx = idx * n + int(s)
        return idx

    def sites_of(self, index: int) -> np.ndarray:
        n = self.torus.n_sites
        out = np.empty(self.k, dtype=np.int64)
        for i in range(self.k - 1, -1, -1):
            out[i] = index % n
            index //= n
        return out

    def __len__(self):
        return self.torus.n_sites**self.k


def _compositions(total: int, parts: int, cap: int | None):
    """All ways to place `total` particles on `parts` sites (cap per site)."""
    if parts == 1:
        if cap is None or total <= cap:
            yield (total,)
        return
    top = total if cap is None else min(total, cap)
    for first in range(top + 1):
        for rest in _compositions(total - first, parts - 1, cap):
            yield (first,) + rest


def _sector_size(total: int, parts: int, cap: int | None) -> int:
    if cap is None:
        return math.comb(total + parts - 1, total)
    # bounded compositions by inclusion-exclusion
    out = 0
    for j in range(total // (cap + 1) + 1):
        rem = total - j * (cap + 1)
        out += (-1) ** j * math.comb(parts, j) * math.comb(rem + parts - 1, rem)
    return out


def enumerate_sector(torus: Torus, n_particles: int, params: ModelParams) -> SectorIndex:
    cap = params.alpha if params.sigma == -1 else None
    size = _sector_size(n_particles, torus.n_sites, cap)
    if size > SECTOR_CAP:
        raise ValueError(f"sector size {size} exceeds cap {SECTOR_CAP}")
    states = list(_compositions(n_particles, torus.n_sites, cap))
    lookup = {s: i for i, s in enumerate(states)}
    return SectorIndex(torus=torus, states=states, lookup=lookup)


def build_config_generator(torus: Torus, n_particles: int, params: ModelParams):
    """Sparse generator of the configuration process on one sector.

    Entry (eta, eta with one particle moved x->y) accumulates
    N^2*eta(x)*(alpha+sigma*eta(y)) over the directed lattice edges (x, y)
    (the N=2 torus contributes each pair twice); the diagonal makes rows
    sum to zero.
    """
    idx = enumerate_sector(torus, n_particles, params)
    nbr = torus.neighbor_table()
    rows, cols, vals = [], [], []
    n2 = params.n2
    for i, state in enumerate(idx.states):
        occ = list(state)
        for x in range(torus.n_sites):
            if occ[x] == 0:
                continue
            for y in nbr[x]:
                y = int(y)
                rate = n2 * occ[x] * (params.alpha + params.sigma * occ[y])
                if rate <= 0.0:
                    continue
                occ[x] -= 1
                occ[y] += 1
                j = idx.lookup[tuple(occ)]
                occ[y] -= 1
                occ[x] += 1
                rows.append(i)
                cols.append(j)
                vals.append(rate)
    Q = sp.coo_matrix((vals, (rows, cols)), shape=(len(idx), len(idx))).tocsr()
    Q = Q - sp.diags(np.asarray(Q.sum(axis=1)).ravel())
    return Q.tocsr(), idx


def build_dual_generator(torus: Torus, k: int, params: ModelParams):
    """Sparse generator of the labeled k-particle process on site tuples.

    Rows on zero-weight tuples (exclusion overloads) are zeroed: those
    states are unreachable and carry no dynamics.
    """
    idx = TupleIndex(torus=torus, k=k)
    n_states = len(idx)
    if n_states > SECTOR_CAP:
        raise ValueError(f"tuple space size {n_states} exceeds cap {SECTOR_CAP}")
    nbr = torus.neighbor_table()
    rows, cols, vals = [], [], []
    n2 = params.n2
    for i in range(n_states):
        sites = idx.sites_of(i)
        if params.sigma == -1 and tuple_weight(sites, params.sigma, params.alpha) <= 0.0:
            continue
        for a in range(k):
            xa = sites[a]
            for y in nbr[xa]:
                y = int(y)
                cnt = int(np.sum(sites == y)) - (1 if xa == y else 0)
                rate = n2 * (params.alpha + params.sigma * cnt)
                if rate <= 0.0:
                    continue
                old = sites[a]
                sites[a] = y
                j = idx.index_of(sites)
                sites[a] = old
                rows.append(i)
                cols.append(j)
                vals.append(rate)
    Q = sp.coo_matrix((vals, (rows, cols)), shape=(n_states, n_states)).tocsr()
    Q = Q - sp.diags(np.asarray(Q.sum(axis=1)).ravel())
    return Q.tocsr(), idx


# ---------------------------------------------------------------------------
# exact semigroup evaluation


def evolve_exact(Q: sp.spmatrix, initial: np.ndarray, f: np.ndarray, t: float, tol: float = 1e-12):
    """E[f(X_t)] for the chain with generator Q started from `initial`.

    Uniformization: with P = I + Q/L (L >= max exit rate), expand
    exp(tQ) = sum_n Pois(Lt, n) P^n and truncate once the Poisson tail is
    below tol; the truncation error is bounded by tol * max|f|.
    """
    initial = np.asarray(initial, dtype=float)
    f = np.asarray(f, dtype=float)
    if t < 0:
        raise ValueError("t must be >= 0")
    lam = float(-Q.diagonal().min()) if Q.shape[0] else 0.0
    mu = lam * t
    if mu == 0.0:
        return float(initial @ f)
    n_hi = int(poisson.isf(tol, mu)) + 1
    weights = poisson.pmf(np.arange(n_hi + 1), mu)
    P = sp.identity(Q.shape[0], format="csr") + Q.tocsr() / lam
    vec = f.copy()
    acc = weights[0] * vec
    for n in range(1, n_hi + 1):
        vec = P @ vec
        if weights[n] > 0.0:
            acc += weights[n] * vec
    return float(initial @ acc)


def evolve_dense(Q, initial: np.ndarray, f: np.ndarray, t: float):
    """Dense matrix-exponential oracle (scaling and squaring); <= 200 states."""
    import scipy.linalg

    Qd = Q.toarray() if sp.issparse(Q) else np.asarray(Q, dtype=float)
    if Qd.shape[0] > 200:
        raise ValueError("dense oracle restricted to <= 200 states")
    Pt = scipy.linalg.expm(Qd * t)
    return float(np.asarray(initial, dtype=float) @ Pt @ np.asarray(f, dtype=float))


# ---------------------------------------------------------------------------
# identity checks


def _sector_union(torus: Torus, params: ModelParams, max_particles: int):
    sectors = []
    for n in range(max_particles + 1):
        try:
            sectors.append((n, enumerate_sector(torus, n, params)))
        except ValueError:
            raise
    return [(n, s) for n, s in sectors if len(s) > 0]


def check_duality_identity(
    torus: Torus, k: int, params: ModelParams, max_particles: int = 3, perturb: float = 0.0
):
    """Max absolute residual of the generator-level moment intertwining.

    With D(x, eta) = ff(eta, x)/weight(x) over (tuples x configurations),
    the identity weight(x) * (A_dual D(., eta))(x) = weight(x) *
    (L D(x, .))(eta) holds entrywise; rows of zero weight vanish on both
    sides.  Configurations span all particle numbers up to max_particles.
    ``perturb`` injects a fault into one labeled jump rate (test fixture).
    """
    A, tidx = build_dual_generator(torus, k, params)
    if perturb:
        A = A.tolil()
        rows, cols = A.nonzero()
        for r, c in zip(rows, cols):
            if r != c:
                A[r, c] += perturb
                A[r, r] -= perturb
                break
        A = A.tocsr()
    residual = 0.0
    n_states = len(tidx)
    w = np.array([tuple_weight(tidx.sites_of(i), params.sigma, params.alpha) for i in range(n_states)])
    for _, sidx in _sector_union(torus, params, max_particles):
        m = len(sidx)
        D = np.zeros((n_states, m))
        for i in range(n_states):
            if w[i] <= 0.0:
                continue
            sites = tidx.sites_of(i)
            for j, state in enumerate(sidx.states):
                D[i, j] = falling_factorial_joint(np.asarray(state), sites) / w[i]
        L, _ = build_config_generator(torus, int(sum(sidx.states[0])), params)
        lhs = (A @ D) * w[:, None]
        rhs = (D @ L.T.toarray()) * w[:, None]
        residual = max(residual, float(np.abs(lhs - rhs).max()))
    return residual


def check_detailed_balance(torus: Torus, params: ModelParams, theta: float, max_particles: int = 3):
    """Max residual of w(eta) Q(eta, eta') - w(eta') Q(eta', eta) over all
    state pairs, with w the (unnormalized, per-sector rescaled) product
    weights of the stationary marginals."""
    spec = MarginalSpec(params.sigma, params.alpha, theta)
    site_w = marginal_pmf_weights(spec, max_particles)
    residual = 0.0
    for _, sidx in _sector_union(torus, params, max_particles):
        Q, _ = build_config_generator(torus, int(sum(sidx.states[0])), params)
        w = np.array([math.prod(site_w[v] for v in state) for state in sidx.states])
        if w.max() > 0:
            w = w / w.max()
        Qd = Q.toarray()
        flux = w[:, None] * Qd
        residual = max(residual, float(np.abs(flux - flux.T).max()))
    return residual


def check_stationarity(torus: Torus, params: ModelParams, theta: float, max_particles: int = 3):
    """Max entry of mu^T Q with mu the normalized product weights per sector."""
    spec = MarginalSpec(params.sigma, params.alpha, theta)
    site_w = marginal_pmf_weights(spec, max_particles)
    residual = 0.0
    for _, sidx in _sector_union(torus, params, max_particles):
        Q, _ = build_config_generator(torus, int(sum(sidx.states[0])), params)
        w = np.array([math.prod(site_w[v] for v in state) for state in sidx.states])
        if w.sum() > 0:
            w = w / w.sum()
        residual = max(residual, float(np.abs(w @ Q.toarray()).max()))
    return residual
