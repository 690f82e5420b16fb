"""The labeled k-particle companion process and moment transport.

Labeled particle i at site x_i jumps to a neighboring site y at rate
N^2 * (alpha + sigma * #{j != i : x_j = y}); the unlabeled site counts then
evolve exactly like the configuration process.  The reversibility weight of
a labeled tuple,

    tuple_weight(x) = prod over sites z of alpha (alpha+sigma) ...
                      (alpha+(m_z-1) sigma),   m_z = #labels at z,

normalizes the moment kernel duality_function(x, eta) = ff(eta, x) /
tuple_weight(x), through which factorial moments of the configuration
process are transported by the k-particle semigroup.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fieldslab import _kernels as K
from fieldslab.dynamics import ModelParams
from fieldslab.fields import falling_factorial_joint
from fieldslab.lattice import tuple_is_admissible
from fieldslab.rng import derive_seed

__all__ = [
    "tuple_weight",
    "duality_function",
    "dual_jump_rates",
    "LabeledWalk",
    "dual_semigroup_expect",
    "expected_factorial_moment",
]


def tuple_weight(sites, sigma: int, alpha: int) -> float:
    """Permutation-invariant weight; zero iff sigma=-1 and a site carries
    more than alpha labels."""
    seen: dict[int, int] = {}
    out = 1.0
    for s in np.atleast_1d(np.asarray(sites, dtype=np.int64)):
        s = int(s)
        c = seen.get(s, 0)
        out *= alpha + sigma * c
        seen[s] = c + 1
    return float(out)


def duality_function(sites, occupancy: np.ndarray, sigma: int, alpha: int) -> float:
    """ff(eta, x) / tuple_weight(x); requires tuple_weight(x) > 0."""
    w = tuple_weight(sites, sigma, alpha)
    if w <= 0.0:
        raise ValueError("duality function undefined on zero-weight tuples")
    return falling_factorial_joint(occupancy, sites) / w


def dual_jump_rates(sites, params: ModelParams):
    """All moves of the labeled process with their rates.

    Returns a list of ((label, target_site), rate); rates are >= 0 on
    admissible tuples (at exclusion capacity the rate vanishes).
    """
    sites = [int(s) for s in np.atleast_1d(np.asarray(sites, dtype=np.int64))]
    if not tuple_is_admissible(sites, params.sigma, params.alpha):
        raise ValueError("inadmissible labeled tuple")
    nbr = params.torus.neighbor_table()
    out = []
    for i, xi in enumerate(sites):
        for y in nbr[xi]:
            cnt = sum(1 for j, xj in enumerate(sites) if j != i and xj == y)
            out.append(((i, int(y)), params.n2 * (params.alpha + params.sigma * cnt)))
    return out


class LabeledWalk:
    """Resumable exact simulation of the labeled k-particle process."""

    def __init__(self, sites, params: ModelParams, seed: int = 0):
        self.sites = np.atleast_1d(np.asarray(sites, dtype=np.int64)).copy()
        if not tuple_is_admissible(self.sites, params.sigma, params.alpha):
            raise ValueError("inadmissible labeled tuple")
        self.params = params
        self.time = 0.0
        self._nbr = params.torus.neighbor_table()
        self._rng = K.seed_state(np.uint64(seed))

    def advance_to(self, t: float) -> "LabeledWalk":
        if t < self.time:
            raise ValueError("cannot run backwards in time")
        p = self.params
        self.time = K.labeled_run(
            self.sites, self._nbr, self.time, float(t), self._rng, p.sigma, p.alpha, p.n2
        )
        return self


def _dual_uniformization(x0, f, t: float, params: ModelParams, tol: float, state_cap: int):
    from fieldslab.exact import build_dual_generator, evolve_exact

    k = len(np.atleast_1d(x0))
    n_states = params.torus.n_sites**k
    if n_states > state_cap:
        raise ValueError(f"labeled state space {n_states} exceeds cap {state_cap}")
    Q, idx = build_dual_generator(params.torus, k, params)
    fvec = np.array([f(idx.sites_of(i)) for i in range(n_states)], dtype=float)
    p0 = np.zeros(n_states)
    p0[idx.index_of(x0)] = 1.0
    return evolve_exact(Q, p0, fvec, t, tol=tol)


def dual_semigroup_expect(
    x0,
    f,
    t: float,
    params: ModelParams,
    method: str = "uniformization",
    n_samples: int = 10_000,
    seed: int = 0,
    tol: float = 1e-12,
    state_cap: int = 200_000,
):
    """Expectation of f at time t for the labeled process started at x0.

    method="uniformization": exact up to a controlled truncation error tol
    (state space must fit under state_cap).  method="montecarlo": returns
    (estimate, standard_error) over n_samples independent walks.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.int64))
    if not tuple_is_admissible(x0, params.sigma, params.alpha):
        raise ValueError("inadmissible labeled tuple")
    if method == "uniformization":
        return _dual_uniformization(x0, f, t, params, tol, state_cap)
    if method == "montecarlo":
        vals = np.empty(n_samples)
        for m in range(n_samples):
            walk = LabeledWalk(x0, params, seed=derive_seed(seed, m))
            walk.advance_to(t)
            vals[m] = f(walk.sites)
        est = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else float("nan")
        return est, se
    raise ValueError(f"unknown method {method!r}")


def expected_factorial_moment(
    occupancy0: np.ndarray,
    sites,
    t: float,
    params: ModelParams,
    method: str = "uniformization",
    **kw,
):
    """E[ff(eta_t, x)] for the configuration process started at occupancy0,
    computed backwards: tuple_weight(x) times the labeled-process
    expectation of duality_function(X_t, occupancy0).

    At t=0 this is ff(occupancy0, x) exactly.
    """
    x = np.atleast_1d(np.asarray(sites, dtype=np.int64))
    w = tuple_weight(x, params.sigma, params.alpha)
    if w <= 0.0:
        raise ValueError("zero-weight tuple")
    occ0 = np.asarray(occupancy0, dtype=np.int64)

    def f(sites_t):
        wt = tuple_weight(sites_t, params.sigma, params.alpha)
        if wt <= 0.0:
            # zero-weight tuples are unreachable; the kernel vanishes there
            return 0.0
        return falling_factorial_joint(occ0, sites_t) / wt

    out = dual_semigroup_expect(x, f, t, params, method=method, **kw)
    if method == "montecarlo":
        est, se = out
        return w * est, w * se
    return w * out
