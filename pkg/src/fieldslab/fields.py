"""kth-order empirical fields and their derived functionals.

The kth-order field pairs a product test function G = g_1 x ... x g_k with
the joint falling factorials of the occupancy configuration:

    field(G) = N^{-kd} * sum over k-tuples x of G(x/N) * ff(eta, x),

where ff counts ordered selections of distinct particles matching x.

Fast evaluation.  Splitting the tuple sum by the coincidence pattern of the
tuple and Mobius-inverting the distinct-site constraints collapses the
whole sum to a polynomial in linear site statistics: for every partition R
of {1..k},

    field(G) = N^{-kd} * sum_R prod_{cells A} (-1)^{|A|-1} (|A|-1)!
                              * sum_z (prod_{i in A} g_i(z/N)) * eta(z).

Only the 2^k - 1 subset accumulators T_A = sum_z Phi_A(z) eta(z) are needed;
they update in O(2^k) per particle move.  The same collapse applied to the
tuple weight pi (cell weight alpha * sigma^{|A|-1} (|A|-1)!) yields all the
closed-form stationary expectations.  The k-fold brute-force sum is kept as
the oracle.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from fieldslab.dynamics import ModelParams
from fieldslab.lattice import Torus
from fieldslab.partitions import (
    field_cell_weight,
    nonempty_subsets,
    partitions_of_size,
    weight_cell_weight,
)
from fieldslab.testfunctions import ProductTestFunction, SumOfProducts, as_sum

__all__ = [
    "falling_factorial_joint",
    "FieldPlan",
    "FieldState",
    "eval_field",
    "eval_field_bruteforce",
    "eval_coincidence_term",
    "check_product_expansion",
    "centering_mean",
    "weighted_tuple_sum",
    "fluctuation_field",
    "orthogonal_fluctuation_field",
    "carre_du_champ",
]

BRUTEFORCE_CAP = 4_000_000


def falling_factorial_joint(occupancy: np.ndarray, sites) -> int:
    """ff(eta, x) = eta(x1) (eta(x2) - [x2=x1]) (eta(x3) - [x3=x1] - [x3=x2]) ...

    Zero as soon as some site is asked for more copies than it holds;
    invariant under permutations of the tuple.
    """
    seen: dict[int, int] = {}
    out = 1
    for s in np.atleast_1d(np.asarray(sites, dtype=np.int64)):
        s = int(s)
        c = seen.get(s, 0)
        out *= int(occupancy[s]) - c
        if out == 0:
            return 0
        seen[s] = c + 1
    return out


# ---------------------------------------------------------------------------
# evaluation plans


@dataclass
class FieldPlan:
    """Partition expansion of one product test function on one torus."""

    k: int
    subset_tables: dict[tuple[int, ...], np.ndarray]  # A -> Phi_A at all sites
    partitions: tuple  # each entry: (weight, cells)
    scale: float  # N^{-kd}

    @classmethod
    def build(cls, G: ProductTestFunction, torus: Torus) -> "FieldPlan":
        k = G.k
        if k > 6:
            raise ValueError("field evaluation supports order k <= 6")
        base = [G.factor_site_table(i, torus) for i in range(k)]
        tables: dict[tuple[int, ...], np.ndarray] = {}
        for A in nonempty_subsets(k):
            tab = base[A[0]].copy()
            for i in A[1:]:
                tab *= base[i]
            tables[A] = tab
        parts = []
        for P in partitions_of_size(k):
            w = 1.0
            cells = []
            for cell in P:
                w *= field_cell_weight(len(cell))
                cells.append(tuple(sorted(cell)))
            parts.append((w, tuple(cells)))
        return cls(k=k, subset_tables=tables, partitions=tuple(parts), scale=float(torus.n_sites) ** (-k))

    def accumulators(self, occupancy: np.ndarray, extended: bool = False) -> dict:
        occ = occupancy.astype(np.longdouble if extended else np.float64)
        return {A: float(np.dot(tab, occ)) for A, tab in self.subset_tables.items()}

    def value(self, acc: dict) -> float:
        total = 0.0
        for w, cells in self.partitions:
            term = w
            for A in cells:
                term *= acc[A]
            total += term
        return total * self.scale

    def delta(self, acc: dict, z: int, w_site: int) -> float:
        """field(after move z->w) - field(before), exact multilinear expansion.

        Telescopes prod(T+d) - prod(T) so no large cancellation occurs.
        """
        deltas = {A: float(tab[w_site] - tab[z]) for A, tab in self.subset_tables.items()}
        total = 0.0
        for w, cells in self.partitions:
            m = len(cells)
            for j in range(m):
                dj = deltas[cells[j]]
                if dj == 0.0:
                    continue
                term = w * dj
                for l in range(j):
                    term *= acc[cells[l]] + deltas[cells[l]]
                for l in range(j + 1, m):
                    term *= acc[cells[l]]
                total += term
        return total * self.scale


def _plan_cache(G: ProductTestFunction, torus: Torus) -> FieldPlan:
    cache = getattr(G, "_field_plans", None)
    if cache is None:
        cache = {}
        G._field_plans = cache
    key = (torus.d, torus.N)
    plan = cache.get(key)
    if plan is None:
        plan = FieldPlan.build(G, torus)
        cache[key] = plan
    return plan


class _Kahan:
    """Compensated accumulator for the incremental subset sums."""

    __slots__ = ("value", "_c")

    def __init__(self, value: float):
        self.value = float(value)
        self._c = 0.0

    def add(self, x: float):
        y = x - self._c
        t = self.value + y
        self._c = (t - self.value) - y
        self.value = t


class FieldState:
    """A configuration plus cached subset accumulators for registered
    test functions, supporting O(2^k) incremental updates per move."""

    def __init__(self, occupancy: np.ndarray, torus: Torus):
        self.torus = torus
        self.occupancy = np.asarray(occupancy, dtype=np.int64).copy()
        self._plans: list[tuple[ProductTestFunction, FieldPlan, dict]] = []

    def register(self, G: ProductTestFunction) -> None:
        plan = _plan_cache(G, self.torus)
        acc = {A: _Kahan(v) for A, v in plan.accumulators(self.occupancy).items()}
        self._plans.append((G, plan, acc))

    def _entry(self, G: ProductTestFunction):
        for g, plan, acc in self._plans:
            if g is G:
                return plan, acc
        self.register(G)
        return self._plans[-1][1], self._plans[-1][2]

    def field(self, G: ProductTestFunction) -> float:
        plan, acc = self._entry(G)
        return plan.value({A: a.value for A, a in acc.items()})

    def delta_on_move(self, G: ProductTestFunction, source: int, target: int) -> float:
        if self.occupancy[source] < 1:
            raise ValueError("no particle available at the source site")
        plan, acc = self._entry(G)
        return plan.delta({A: a.value for A, a in acc.items()}, int(source), int(target))

    def apply_move(self, source: int, target: int) -> None:
        source = int(source)
        target = int(target)
        if self.occupancy[source] < 1:
            raise ValueError("no particle available at the source site")
        self.occupancy[source] -= 1
        self.occupancy[target] += 1
        for _, plan, acc in self._plans:
            for A, tab in plan.subset_tables.items():
                acc[A].add(float(tab[target] - tab[source]))

    def refresh(self) -> None:
        """Recompute all accumulators from scratch (drops rounding drift)."""
        for _, plan, acc in self._plans:
            fresh = plan.accumulators(self.occupancy)
            for A, v in fresh.items():
                acc[A].value = v
                acc[A]._c = 0.0


def eval_field(G, occupancy: np.ndarray, torus: Torus, extended: bool = False) -> float:
    """field(G) via the partition plan; G may be a product or a sum of
    products.  With extended=True the site sums run in extended precision."""
    total = 0.0
    for c, p in as_sum(G).terms:
        plan = _plan_cache(p, torus)
        total += c * plan.value(plan.accumulators(occupancy, extended=extended))
    return total


def eval_field_bruteforce(G, occupancy: np.ndarray, torus: Torus, cap: int = BRUTEFORCE_CAP) -> float:
    """Direct k-fold tuple sum (oracle; cost (N^d)^k)."""
    G = as_sum(G)
    k = G.k
    n = torus.n_sites
    if n**k > cap:
        raise ValueError(f"brute-force size {n**k} exceeds cap {cap}")
    tabs = [
        [p.factor_site_table(i, torus) for i in range(k)] for _, p in G.terms
    ]
    coeffs = [c for c, _ in G.terms]
    total = 0.0
    for x in itertools.product(range(n), repeat=k):
        ff = falling_factorial_joint(occupancy, x)
        if ff == 0:
            continue
        gval = 0.0
        for c, tab in zip(coeffs, tabs):
            term = c
            for i in range(k):
                term *= tab[i][x[i]]
            gval += term
        total += gval * ff
    return total / float(n) ** k


# ---------------------------------------------------------------------------
# products of fields (coincidence expansion)


def eval_coincidence_term(
    G: ProductTestFunction,
    H: ProductTestFunction,
    h: int,
    occupancy: np.ndarray,
    torus: Torus,
    cap: int = BRUTEFORCE_CAP,
) -> float:
    """Order-(k+l-h) term of the product expansion of field(G)*field(H).

    Direct sum over tuple pairs: subsets J of the H-coordinates of size h
    are glued onto distinct G-coordinates via one-to-one maps, the joint
    falling factorial runs over the concatenation of x with the unglued
    part of y.  h=0 is the plain tensor field of G x H.
    """
    k, l = G.k, H.k
    if not 0 <= h <= l:
        raise ValueError("h must lie in [0, l]")
    n = torus.n_sites
    if n ** (k + l) > cap * 16:
        raise ValueError("coincidence brute force too large")
    gt = [G.factor_site_table(i, torus) for i in range(k)]
    ht = [H.factor_site_table(j, torus) for j in range(l)]
    total = 0.0
    subsets = list(itertools.combinations(range(l), h))
    for x in itertools.product(range(n), repeat=k):
        gval = 1.0
        for i in range(k):
            gval *= gt[i][x[i]]
        if gval == 0.0:
            continue
        for J in subsets:
            rest = [j for j in range(l) if j not in J]
            for assign in itertools.permutations(range(k), h):
                glued = 1.0
                for j, i in zip(J, assign):
                    glued *= ht[j][x[i]]
                if glued == 0.0:
                    continue
                for y_rest in itertools.product(range(n), repeat=len(rest)):
                    hval = glued
                    for j, yj in zip(rest, y_rest):
                        hval *= ht[j][yj]
                    if hval == 0.0:
                        continue
                    ff = falling_factorial_joint(occupancy, tuple(x) + y_rest)
                    if ff:
                        total += gval * hval * ff
    return total / float(n) ** (k + l - h)


def check_product_expansion(
    G: ProductTestFunction, H: ProductTestFunction, occupancy: np.ndarray, torus: Torus
) -> float:
    """Residual of the exact per-configuration product expansion

    field(G)*field(H) = sum_{h=0..l} N^{-hd} * coincidence_term(G, H, h).
    """
    if H.k > G.k:
        G, H = H, G
    lhs = eval_field_bruteforce(G, occupancy, torus) * eval_field_bruteforce(H, occupancy, torus)
    rhs = 0.0
    n = torus.n_sites
    for h in range(H.k + 1):
        rhs += eval_coincidence_term(G, H, h, occupancy, torus) / float(n) ** h
    return lhs - rhs


# ---------------------------------------------------------------------------
# stationary centerings and fluctuation fields


def weighted_tuple_sum(site_tables: list[np.ndarray], sigma: int, alpha: int) -> float:
    """sum over all m-tuples w of prod_i tables[i][w_i] * pi(w), closed form.

    pi factorizes over coincidence blocks, so the same partition collapse
    as for fields applies with cell weights alpha * sigma^{|A|-1} (|A|-1)!.
    """
    m = len(site_tables)
    total = 0.0
    for P in partitions_of_size(m):
        term = 1.0
        for cell in P:
            tab = site_tables[cell[0]]
            for i in cell[1:]:
                tab = tab * site_tables[i]
            term *= weight_cell_weight(len(cell), sigma, alpha) * float(tab.sum())
        total += term
    return total


def centering_mean(G, torus: Torus, params: ModelParams, theta: float) -> float:
    """Stationary mean of field(G) under the product measure with constant
    density parameter theta: theta^k * N^{-kd} * sum_x G(x/N) pi(x)."""
    G = as_sum(G)
    total = 0.0
    for c, p in G.terms:
        tabs = [p.factor_site_table(i, torus) for i in range(p.k)]
        total += c * weighted_tuple_sum(tabs, params.sigma, params.alpha)
    return theta**G.k * total * float(torus.n_sites) ** (-G.k)


def fluctuation_field(G, occupancy: np.ndarray, params: ModelParams, theta: float) -> float:
    """Equilibrium fluctuation of field(G): N^{d/2} (field - stationary mean).

    The centering is closed form; the field value is computed in extended
    precision since the difference is an order N^{-d/2} quantity.
    """
    torus = params.torus
    val = eval_field(G, occupancy, torus, extended=True)
    mean = centering_mean(G, torus, params, theta)
    return float(torus.n_sites) ** 0.5 * (val - mean)


def _coarsened_site_function(G_sym: SumOfProducts, keep: int, torus: Torus, params: ModelParams):
    """Site table of the order-`keep` function obtained by averaging out the
    trailing k-keep coordinates of G_sym against the tuple-weight ratio
    pi(x:y)/pi(x).  Direct summation; used by the orthogonal centering."""
    k = G_sym.k
    drop = k - keep
    n = torus.n_sites
    sigma, alpha = params.sigma, params.alpha
    if keep == 0:
        out = 0.0
        for c, p in G_sym.terms:
            tabs = [p.factor_site_table(i, torus) for i in range(k)]
            out += c * weighted_tuple_sum(tabs, sigma, alpha)
        return out / float(n) ** drop  # scalar; the weight of the empty tuple is 1
    if keep == 1:
        out = np.zeros(n)
        for c, p in G_sym.terms:
            tabs = [p.factor_site_table(i, torus) for i in range(k)]
            for x in range(n):
                if drop == 0:
                    out[x] += c * tabs[0][x]
                    continue
                # sum over the dropped coordinates with pi-ratio weights
                acc = 0.0
                for y in itertools.product(range(n), repeat=drop):
                    w = 1.0
                    counts = {x: 1}
                    ratio = 1.0
                    for j, yj in enumerate(y):
                        cnt = counts.get(yj, 0)
                        ratio *= alpha + sigma * cnt
                        counts[yj] = cnt + 1
                        w *= tabs[1 + j][yj]
                    acc += w * ratio
                out[x] += c * tabs[0][x] * acc / alpha
        return out / float(n) ** drop
    raise NotImplementedError("orthogonal centering implemented for k <= 2")


def orthogonal_fluctuation_field(G, occupancy: np.ndarray, params: ModelParams, theta: float) -> float:
    """Fluctuation field with the orthogonal-duality centering

        N^{kd/2} sum_{l=0..k} C(k,l) (-theta)^{k-l} field_l(coarsen(G, l)),

    where coarsening averages the removed coordinates against tuple-weight
    ratios.  Coincides with ``fluctuation_field`` for k=1.  Supported for
    k <= 2 (direct summation at desk scale).
    """
    from fieldslab.testfunctions import symmetrize

    G = as_sum(G)
    k = G.k
    if k > 2:
        raise ValueError("orthogonal fluctuation field supports k <= 2 only")
    torus = params.torus
    n = torus.n_sites
    occf = occupancy.astype(np.float64)
    Gs = symmetrize(G)
    total = 0.0
    for l in range(k + 1):
        coef = math.comb(k, l) * (-theta) ** (k - l)
        if coef == 0.0:
            continue
        if l == 0:
            val = _coarsened_site_function(Gs, 0, torus, params)
        elif l == k:
            val = eval_field(Gs, occupancy, torus, extended=True)
        else:  # l == 1, k == 2
            tab = _coarsened_site_function(Gs, 1, torus, params)
            val = float(np.dot(tab, occf)) / n
        total += coef * val
    return float(n) ** (k / 2.0) * total


# ---------------------------------------------------------------------------
# carre du champ


def carre_du_champ(G, occupancy: np.ndarray, params: ModelParams) -> float:
    """Instantaneous quadratic-variation rate of field(G):

        sum over directed edges (z, w) of rate(z,w) * (field delta)^2.

    Vectorized over edges; the per-edge field delta uses the telescoped
    multilinear expansion, so the result is exact (and >= 0 by construction).
    """
    torus = params.torus
    occ = np.asarray(occupancy, dtype=np.int64)
    nbr = torus.neighbor_table()
    n = torus.n_sites
    ndirs = nbr.shape[1]

    src = np.repeat(np.arange(n), ndirs)
    dst = nbr.reshape(-1)
    rates = params.n2 * occ[src] * (params.alpha + params.sigma * occ[dst])
    live = rates > 0
    if not np.any(live):
        return 0.0
    src, dst, rates = src[live], dst[live], rates[live].astype(np.float64)

    occf = occ.astype(np.float64)
    dfield = np.zeros(len(src))
    for c, p in as_sum(G).terms:
        plan = _plan_cache(p, torus)
        acc = {A: float(np.dot(tab, occf)) for A, tab in plan.subset_tables.items()}
        deltas = {A: tab[dst] - tab[src] for A, tab in plan.subset_tables.items()}
        for w, cells in plan.partitions:
            m = len(cells)
            for j in range(m):
                term = (c * plan.scale * w) * deltas[cells[j]]
                for l in range(j):
                    term = term * (acc[cells[l]] + deltas[cells[l]])
                for l in range(j + 1, m):
                    term = term * acc[cells[l]]
                dfield += term
    return float(np.sum(rates * dfield**2))
