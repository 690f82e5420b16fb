"""Reversible product measures and profile measures: sampling and
closed-form moments.

Site marginals, parameterized so that the mean is alpha*theta and the
variance alpha*theta*(1+sigma*theta):

    sigma = -1   Binomial(alpha, theta)          theta in [0, 1]
    sigma =  0   Poisson(alpha*theta)            theta >= 0
    sigma = +1   NegativeBinomial, shape alpha,  theta >= 0
                 failure odds theta (success probability 1/(1+theta))
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from fieldslab.dynamics import ModelParams
from fieldslab.lattice import Torus
from fieldslab.partitions import partitions_of_size, weight_cell_weight
from fieldslab.testfunctions import as_sum, parse_factor

__all__ = [
    "MarginalSpec",
    "Profile",
    "marginal_falling_moment",
    "marginal_pmf_weights",
    "sample_configuration",
    "expected_field_under_profile",
]


@dataclass(frozen=True)
class MarginalSpec:
    sigma: int
    alpha: int
    theta: float

    def __post_init__(self):
        if self.sigma not in (-1, 0, 1):
            raise ValueError("sigma must be -1, 0 or +1")
        if self.alpha < 1:
            raise ValueError("alpha must be a positive integer")
        if self.theta < 0:
            raise ValueError("theta must be non-negative")
        if self.sigma == -1 and self.theta > 1:
            raise ValueError("exclusion requires theta in [0, 1]")

    @property
    def mean(self) -> float:
        return self.alpha * self.theta

    @property
    def variance(self) -> float:
        return self.alpha * self.theta * (1.0 + self.sigma * self.theta)


def marginal_falling_moment(r: int, spec: MarginalSpec) -> float:
    """E[eta (eta-1) ... (eta-r+1)] = theta^r * alpha (alpha+sigma) ...
    (alpha+(r-1)sigma); zero when sigma=-1 and r > alpha."""
    if r < 1:
        raise ValueError("order must be >= 1")
    out = spec.theta**r
    for j in range(r):
        out *= spec.alpha + j * spec.sigma
    return float(out)


def marginal_pmf_weights(spec: MarginalSpec, n_max: int) -> np.ndarray:
    """Unnormalized pmf weights w(0..n_max) of the site marginal.

    Sufficient for detailed-balance ratio tests; exact rationals in float.
    """
    sigma, alpha, theta = spec.sigma, spec.alpha, spec.theta
    w = np.zeros(n_max + 1)
    for n in range(n_max + 1):
        if sigma == -1:
            if n > alpha:
                w[n] = 0.0
            else:
                w[n] = math.comb(alpha, n) * theta**n * (1 - theta) ** (alpha - n)
        elif sigma == 0:
            w[n] = (alpha * theta) ** n / math.factorial(n)
        else:
            rising = 1.0
            for j in range(n):
                rising *= alpha + j
            w[n] = rising / math.factorial(n) * (theta / (1 + theta)) ** n
    return w


class Profile:
    """Macroscopic density-parameter profile theta: [0,1)^d -> Theta.

    Constant profiles are the special case of the stationary product
    measure; varying profiles give local-equilibrium product measures.
    """

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], constant: float | None = None):
        self._fn = fn
        self.constant = constant

    @classmethod
    def from_constant(cls, theta: float) -> "Profile":
        theta = float(theta)
        return cls(lambda U: np.full(np.atleast_2d(U).shape[0], theta), constant=theta)

    @classmethod
    def from_factor_spec(cls, spec: dict, d: int = 1) -> "Profile":
        if spec.get("family") == "constant":
            return cls.from_constant(spec.get("value", 0.5))
        factor = parse_factor(spec, d=d)
        return cls(lambda U: factor.values(U))

    @property
    def is_constant(self) -> bool:
        return self.constant is not None

    def theta(self, U: np.ndarray) -> np.ndarray:
        return np.asarray(self._fn(np.atleast_2d(np.asarray(U, dtype=float))), dtype=float)

    def site_values(self, torus: Torus) -> np.ndarray:
        return self.theta(torus.positions())

    def validate_range(self, sigma: int, torus: Torus) -> None:
        vals = self.site_values(torus)
        if np.any(vals < 0):
            raise ValueError("profile takes negative values")
        if sigma == -1 and np.any(vals > 1):
            raise ValueError("exclusion requires a profile with values in [0, 1]")


def as_profile(theta_or_profile) -> Profile:
    if isinstance(theta_or_profile, Profile):
        return theta_or_profile
    return Profile.from_constant(float(theta_or_profile))


def sample_configuration(
    spec, torus: Torus, rng: np.random.Generator, profile: Profile | None = None
) -> np.ndarray:
    """Independent site-wise draw from the (profile) product measure.

    ``spec`` may be a MarginalSpec (constant theta taken from it unless a
    profile is supplied) or a ModelParams together with ``profile``.
    """
    if isinstance(spec, MarginalSpec):
        sigma, alpha = spec.sigma, spec.alpha
        prof = profile if profile is not None else Profile.from_constant(spec.theta)
    else:
        sigma, alpha = spec.sigma, spec.alpha
        if profile is None:
            raise ValueError("a profile is required when passing model parameters")
        prof = profile
    prof.validate_range(sigma, torus)
    theta = prof.site_values(torus)
    if sigma == -1:
        return rng.binomial(alpha, theta).astype(np.int64)
    if sigma == 0:
        return rng.poisson(alpha * theta).astype(np.int64)
    out = np.zeros(torus.n_sites, dtype=np.int64)
    pos = theta > 0
    if np.any(pos):
        out[pos] = rng.negative_binomial(alpha, 1.0 / (1.0 + theta[pos]))
    return out


def expected_field_under_profile(G, profile, torus: Torus, params: ModelParams) -> float:
    """Exact mean of field(G) under the profile product measure.

    The per-tuple mean factorizes as (prod_i theta(x_i/N)) * pi(x); the
    partition collapse turns the k-fold sum into single-site sums: a cell A
    contributes alpha*sigma^{|A|-1}(|A|-1)! * sum_z theta(z)^{|A|}
    prod_{i in A} g_i(z/N).
    """
    prof = as_profile(profile)
    theta = prof.site_values(torus)
    total = 0.0
    sigma, alpha = params.sigma, params.alpha
    for c, p in as_sum(G).terms:
        tabs = [p.factor_site_table(i, torus) for i in range(p.k)]
        acc = 0.0
        for P in partitions_of_size(p.k):
            term = 1.0
            for cell in P:
                tab = theta ** len(cell)
                for i in cell:
                    tab = tab * tabs[i]
                term *= weight_cell_weight(len(cell), sigma, alpha) * float(tab.sum())
            acc += term
        total += c * acc
    return total * float(torus.n_sites) ** (-as_sum(G).k)
