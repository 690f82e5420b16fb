"""Closed-form scaling-limit targets and stationary identities.

With the jump rates used throughout (a particle crosses each directed
lattice edge (x, y) at rate N^2*eta(x)*(alpha+sigma*eta(y))), a single
tagged particle converges to a Brownian motion with generator
alpha * Laplacian, so:

- the density profile follows d/dt rho = alpha * Lap(rho), and kth-order
  field means converge to k-fold products of integrals against rho;
- the stationary fluctuation covariance of the kth-order field pairs the
  static compressibility alpha*theta*(1+sigma*theta) across factor pairs;
- the noise quadratic variation carries the matching time scale,
  2 * alpha^2 * theta * (1+sigma*theta) per gradient pairing.

All torus integrals are spectrally accurate (analytic for trigonometric
factors, uniform-grid trapezoid otherwise, which is spectral for smooth
periodic integrands).
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from fieldslab.dynamics import ModelParams
from fieldslab.fields import centering_mean, weighted_tuple_sum
from fieldslab.lattice import Torus
from fieldslab.measures import Profile, as_profile
from fieldslab.testfunctions import Constant, ProductTestFunction, Trig, as_sum

__all__ = [
    "integrate_product",
    "integrate_grad_dot",
    "HeatFlow",
    "heat_solution",
    "hydrodynamic_prediction",
    "single_walker_mean_field",
    "equilibrium_covariance",
    "noise_quadratic_variation",
    "expected_coincidence",
    "expected_coincidence_bruteforce",
    "stationary_cov_finiteN",
    "check_expectation_expansion",
]


# ---------------------------------------------------------------------------
# quadrature

_GRID_N = {1: 4096, 2: 192, 3: 48}


def _grid_points(d: int):
    n = _GRID_N.get(d)
    if n is None:
        raise ValueError("integrals provided for d <= 3 only")
    axes = [np.arange(n) / n] * d
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1), n


def integrate_product(factors) -> float:
    """Integral over [0,1)^d of a pointwise product of periodic factors."""
    factors = list(factors)
    if all(isinstance(f, Constant) for f in factors):
        return math.prod(f.c for f in factors)
    if len(factors) == 1:
        return float(factors[0].integral())
    d = factors[0].d
    pts, n = _grid_points(d)
    vals = np.ones(pts.shape[0])
    for f in factors:
        vals = vals * f.values(pts)
    return float(vals.sum() / n**d)


def integrate_grad_dot(g, h) -> float:
    """Integral of grad(g) . grad(h) over [0,1)^d (zero for constants)."""
    if isinstance(g, Constant) or isinstance(h, Constant):
        return 0.0
    d = g.d
    pts, n = _grid_points(d)
    acc = 0.0
    for u in pts:
        acc += float(np.dot(g.grad(u), h.grad(u)))
    return acc / n**d


# ---------------------------------------------------------------------------
# heat flow of the density profile


class HeatFlow:
    """Spectral solution of d/dt rho = alpha*Lap(rho), rho(0) = alpha*theta.

    The initial profile is sampled on a uniform grid and evolved mode-wise
    with decay exp(-alpha*(2 pi |m|)^2 t); exact for band-limited profiles,
    spectrally accurate for smooth ones.
    """

    def __init__(self, profile, alpha: float, d: int = 1):
        self.profile = as_profile(profile)
        self.alpha = float(alpha)
        self.d = d
        pts, n = _grid_points(d)
        self._n = n
        shape = (n,) * d
        theta = self.profile.theta(pts).reshape(shape)
        self._rho0_hat = np.fft.fftn(self.alpha * theta)
        freqs = np.fft.fftfreq(n, d=1.0 / n)
        mesh = np.meshgrid(*([freqs] * d), indexing="ij")
        self._m2 = sum(m**2 for m in mesh)

    def _decay(self, t: float) -> np.ndarray:
        return np.exp(-self.alpha * (2 * math.pi) ** 2 * self._m2 * t)

    def density_grid(self, t: float) -> np.ndarray:
        return np.real(np.fft.ifftn(self._rho0_hat * self._decay(t)))

    def density_at(self, t: float, u) -> float:
        """rho(t, u) at an arbitrary point, by summing significant modes."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        coef = self._rho0_hat * self._decay(t) / self._n**self.d
        sig = np.abs(coef) > 1e-16 * max(1.0, np.abs(coef).max())
        idx = np.argwhere(sig)
        freqs = np.fft.fftfreq(self._n, d=1.0 / self._n)
        out = 0.0 + 0.0j
        for ind in idx:
            m = freqs[ind]
            out += coef[tuple(ind)] * np.exp(2j * math.pi * float(m @ u))
        return float(np.real(out))

    def integral_against(self, factor, t: float) -> float:
        """Integral of factor(u) * rho(t, u) over the torus."""
        pts, n = _grid_points(self.d)
        fvals = factor.values(pts).reshape((n,) * self.d)
        return float(np.sum(fvals * self.density_grid(t)) / n**self.d)

    def total_mass(self, t: float = 0.0) -> float:
        return float(np.real(self._rho0_hat.flat[0]) / self._n**self.d)


def heat_solution(profile, t: float, u, alpha: float, d: int = 1) -> float:
    """Density rho(t, u) started from alpha * theta(.)."""
    return HeatFlow(profile, alpha, d=d).density_at(t, u)


def hydrodynamic_prediction(G, t: float, profile, alpha: float) -> float:
    """Limit of the kth-order field mean: prod_i integral(g_i * rho(t))."""
    G = as_sum(G)
    flow = HeatFlow(profile, alpha, d=G.d)
    total = 0.0
    for c, p in G.terms:
        total += c * math.prod(flow.integral_against(f, t) for f in p.factors)
    return total


def single_walker_mean_field(g, profile, t: float, params: ModelParams) -> float:
    """Exact finite-N mean of the first-order field at time t.

    The site means evolve by the single-particle semigroup (rate N^2*alpha
    per directed edge), diagonal in the discrete Fourier basis:
    eigenvalue N^2*alpha*sum_axes (2 cos(2 pi m_a / N) - 2).
    """
    torus = params.torus
    prof = as_profile(profile)
    shape = (params.N,) * params.d
    theta = prof.site_values(torus).reshape(shape)
    freqs = np.arange(params.N)
    mesh = np.meshgrid(*([freqs] * params.d), indexing="ij")
    eig = sum(2.0 * np.cos(2 * math.pi * m / params.N) - 2.0 for m in mesh)
    evolved = np.real(np.fft.ifftn(np.fft.fftn(theta) * np.exp(t * params.n2 * params.alpha * eig)))
    gvals = g.values(torus.positions()).reshape(shape)
    return float(params.alpha * np.sum(gvals * evolved) / torus.n_sites)


# ---------------------------------------------------------------------------
# limiting covariance and noise quadratic variation


def _pairing_sum(G, H, pair_weight, mean_weight: float) -> float:
    """sum_{i,j} pair(g_i, h_j) * prod_{l != i} mean(g_l) * prod_{l' != j}
    mean(h_l'), bilinear over sums of products."""
    G = as_sum(G)
    H = as_sum(H)
    if G.k != H.k:
        raise ValueError("both functions must have the same order")
    total = 0.0
    for cg, pg in G.terms:
        g_means = [mean_weight * integrate_product([f]) for f in pg.factors]
        for ch, ph in H.terms:
            h_means = [mean_weight * integrate_product([f]) for f in ph.factors]
            for i in range(pg.k):
                rest_g = math.prod(g_means[l] for l in range(pg.k) if l != i)
                for j in range(ph.k):
                    rest_h = math.prod(h_means[l] for l in range(ph.k) if l != j)
                    total += cg * ch * pair_weight(pg.factors[i], ph.factors[j]) * rest_g * rest_h
    return total


def equilibrium_covariance(G, H, sigma: int, alpha: int, theta: float) -> float:
    """Limiting stationary covariance of the fluctuation fields of G and H:
    the compressibility alpha*theta*(1+sigma*theta) pairs one factor of each
    function, the stationary mean alpha*theta weighs the rest."""
    chi = alpha * theta * (1.0 + sigma * theta)
    return _pairing_sum(
        G, H, lambda f, g: chi * integrate_product([f, g]), alpha * theta
    )


def noise_quadratic_variation(G, sigma: int, alpha: int, theta: float) -> float:
    """Deterministic quadratic variation of the limiting fluctuation noise:

        2 * sum_{i,j} { integral grad g_i . grad g_j } * alpha^2 * theta *
        (1+sigma*theta) * prod-of-means,

    the stationary balance partner of the drift alpha*Laplacian (twice the
    Dirichlet pairing of the generator against the static covariance).
    """
    mob = 2.0 * alpha**2 * theta * (1.0 + sigma * theta)
    return _pairing_sum(
        G, H=G, pair_weight=lambda f, g: mob * integrate_grad_dot(f, g), mean_weight=alpha * theta
    )


# ---------------------------------------------------------------------------
# exact finite-N stationary covariance via the coincidence expansion


def _glued_tables(pg: ProductTestFunction, ph: ProductTestFunction, torus: Torus):
    """Yield the site-table lists of every glued coordinate pattern at each
    coincidence level h: subsets J of H-coordinates glued one-to-one onto
    distinct G-coordinates."""
    k, l = pg.k, ph.k
    gt = [pg.factor_site_table(i, torus) for i in range(k)]
    ht = [ph.factor_site_table(j, torus) for j in range(l)]
    for h in range(l + 1):
        patterns = []
        for J in itertools.combinations(range(l), h):
            rest = [j for j in range(l) if j not in J]
            for assign in itertools.permutations(range(k), h):
                tables = [gt[i].copy() for i in range(k)]
                for j, i in zip(J, assign):
                    tables[i] = tables[i] * ht[j]
                tables.extend(ht[j] for j in rest)
                patterns.append(tables)
        yield h, patterns


def expected_coincidence(G, H, h: int, torus: Torus, params: ModelParams, theta: float) -> float:
    """Stationary mean of the order-(k+l-h) coincidence term of G and H,
    in closed form through the partition collapse of the tuple weight."""
    G = as_sum(G)
    H = as_sum(H)
    total = 0.0
    for cg, pg in G.terms:
        for ch, ph in H.terms:
            for level, patterns in _glued_tables(pg, ph, torus):
                if level != h:
                    continue
                acc = 0.0
                for tables in patterns:
                    acc += weighted_tuple_sum(tables, params.sigma, params.alpha)
                order = pg.k + ph.k - h
                total += cg * ch * theta**order * acc / float(torus.n_sites) ** order
    return total


def expected_coincidence_bruteforce(
    G, H, h: int, torus: Torus, params: ModelParams, theta: float, cap: int = 2_000_000
) -> float:
    """Same stationary mean by direct tuple summation with the per-tuple
    closed form mean theta^order * tuple_weight (oracle route)."""
    from fieldslab.dual import tuple_weight

    G = as_sum(G)
    H = as_sum(H)
    n = torus.n_sites
    total = 0.0
    for cg, pg in G.terms:
        for ch, ph in H.terms:
            k, l = pg.k, ph.k
            if n ** (k + l - h) * math.comb(l, h) > cap:
                raise ValueError("bruteforce coincidence sum too large")
            gt = [pg.factor_site_table(i, torus) for i in range(k)]
            ht = [ph.factor_site_table(j, torus) for j in range(l)]
            order = k + l - h
            acc = 0.0
            for J in itertools.combinations(range(l), h):
                rest = [j for j in range(l) if j not in J]
                for assign in itertools.permutations(range(k), h):
                    for x in itertools.product(range(n), repeat=k):
                        gval = math.prod(gt[i][x[i]] for i in range(k))
                        glue = math.prod(ht[j][x[i]] for j, i in zip(J, assign))
                        if gval * glue == 0.0:
                            continue
                        for y in itertools.product(range(n), repeat=len(rest)):
                            hval = math.prod(ht[j][yj] for j, yj in zip(rest, y))
                            w = tuple_weight(tuple(x) + y, params.sigma, params.alpha)
                            acc += gval * glue * hval * w
            total += cg * ch * theta**order * acc / float(n) ** order
    return total


def stationary_cov_finiteN(G, H, params: ModelParams, theta: float) -> float:
    """Exact finite-N stationary covariance of the fluctuation pairings of
    G and H (both of order k):

        N^d * sum_{l=1..k} (1 - theta^l (-sigma)^l) N^{-ld} *
              E[coincidence term of order 2k-l],

    which converges to ``equilibrium_covariance`` at rate O(N^-d).
    """
    G = as_sum(G)
    H = as_sum(H)
    if G.k != H.k:
        raise ValueError("both functions must have the same order")
    torus = params.torus
    n = torus.n_sites
    total = 0.0
    for level in range(1, G.k + 1):
        coef = 1.0 - theta**level * float((-params.sigma) ** level)
        if coef == 0.0:
            continue
        total += coef * expected_coincidence(G, H, level, torus, params, theta) / float(n) ** level
    return float(n) * total


def check_expectation_expansion(G, H, params: ModelParams, theta: float) -> float:
    """Residual of the stationary product-of-means expansion

        E[field(G)] E[field(H)] =
            sum_h theta^h (-sigma)^h N^{-hd} E[coincidence term h],

    exact at every finite N.  Both sides are evaluated by brute-force tuple
    sums (independent of the partition-collapse route).
    """
    G = as_sum(G)
    H = as_sum(H)
    if H.k > G.k:
        G, H = H, G
    torus = params.torus
    n = torus.n_sites
    lhs = _stationary_mean_bruteforce(G, torus, params, theta) * _stationary_mean_bruteforce(
        H, torus, params, theta
    )
    rhs = 0.0
    for h in range(H.k + 1):
        rhs += (
            theta**h
            * float((-params.sigma) ** h)
            * expected_coincidence_bruteforce(G, H, h, torus, params, theta)
            / float(n) ** h
        )
    return lhs - rhs


def _stationary_mean_bruteforce(G, torus: Torus, params: ModelParams, theta: float) -> float:
    from fieldslab.dual import tuple_weight

    G = as_sum(G)
    n = torus.n_sites
    total = 0.0
    for c, p in G.terms:
        tabs = [p.factor_site_table(i, torus) for i in range(p.k)]
        acc = 0.0
        for x in itertools.product(range(n), repeat=p.k):
            val = math.prod(tabs[i][x[i]] for i in range(p.k))
            if val:
                acc += val * tuple_weight(x, params.sigma, params.alpha)
        total += c * theta**p.k * acc / float(n) ** p.k
    return total
