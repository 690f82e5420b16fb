import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fieldslab.dynamics import ModelParams
from fieldslab.fields import (
    FieldState,
    carre_du_champ,
    centering_mean,
    check_product_expansion,
    eval_coincidence_term,
    eval_field,
    eval_field_bruteforce,
    falling_factorial_joint,
    fluctuation_field,
    orthogonal_fluctuation_field,
)
from fieldslab.lattice import Torus
from fieldslab.measures import MarginalSpec, sample_configuration
from fieldslab.rng import make_generator
from fieldslab.testfunctions import (
    Bump,
    Constant,
    ProductTestFunction,
    SumOfProducts,
    Trig,
    symmetrize,
)

G_SIN = Trig([([1], 0.0, 1.0)])
G_UP = Trig([([1], 0.0, 0.5)], offset=1.0)
G_BUMP = Bump([0.4], 0.12, amplitude=1.2)
ONE = Constant(1.0)


def test_falling_factorial_examples():
    occ = np.array([0, 3, 2, 0])
    assert falling_factorial_joint(occ, [1, 1]) == 6
    assert falling_factorial_joint(occ, [1, 2]) == 6
    assert falling_factorial_joint(occ, [1, 1, 1]) == 6  # 3*2*1
    occ2 = np.array([2, 0])
    assert falling_factorial_joint(occ2, [0, 0, 0]) == 0


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_falling_factorial_permutation_invariant(data):
    occ = np.array(data.draw(st.lists(st.integers(0, 4), min_size=4, max_size=4)))
    x = data.draw(st.lists(st.integers(0, 3), min_size=1, max_size=4))
    base = falling_factorial_joint(occ, x)
    perm = data.draw(st.permutations(x))
    assert falling_factorial_joint(occ, perm) == base


def test_bruteforce_examples():
    # N=2, one particle per site, k=2, unit factors: pairs with x1 != x2
    t = Torus(1, 2)
    occ = np.array([1, 1])
    G = ProductTestFunction([ONE, ONE])
    assert eval_field_bruteforce(G, occ, t) == pytest.approx(0.5)
    assert eval_field_bruteforce(G, np.zeros(2, dtype=int), t) == 0.0
    # k=1 is the plain density pairing
    t = Torus(1, 4)
    occ = np.array([2, 1, 0, 0])
    tab = G_SIN.values(t.positions())
    want = float(tab @ occ) / 4
    assert eval_field_bruteforce(ProductTestFunction([G_SIN]), occ, t) == pytest.approx(want)


def test_fast_field_oracle_grid():
    # exhaustive small grid: all interactions, k = 1..3, N = 2..6
    rng = make_generator(0, 77)
    factors = [G_SIN, G_BUMP, G_UP]
    for sigma in (-1, 0, 1):
        for alpha in (1, 2):
            cap = alpha if sigma == -1 else 3
            for N in range(2, 7):
                t = Torus(1, N)
                for k in (1, 2, 3):
                    G = ProductTestFunction(factors[:k])
                    for _ in range(6):
                        occ = rng.integers(0, cap + 1, size=N).astype(np.int64)
                        a = eval_field(G, occ, t)
                        b = eval_field_bruteforce(G, occ, t)
                        assert abs(a - b) <= 1e-10 * (1 + abs(b))


def test_field_of_single_particle_vanishes_for_k2():
    t = Torus(1, 8)
    occ = np.zeros(8, dtype=int)
    occ[3] = 1
    G = ProductTestFunction([G_SIN, G_SIN])
    assert eval_field(G, occ, t) == pytest.approx(0.0, abs=1e-15)


def test_field_state_delta_and_moves():
    t = Torus(1, 6)
    rng = make_generator(1, 5)
    occ = rng.integers(0, 3, size=6).astype(np.int64)
    occ[2] += 1
    st_ = FieldState(occ, t)
    G1 = ProductTestFunction([G_SIN])
    G2 = ProductTestFunction([G_UP, G_BUMP])
    Gc = ProductTestFunction([ONE])
    for G in (G1, G2, Gc):
        st_.register(G)

    # k=1 delta is the table difference; constants conserve mass
    d = st_.delta_on_move(G1, 2, 3)
    tab = G1.factor_site_table(0, t)
    assert d == pytest.approx((tab[3] - tab[2]) / 6, rel=1e-12)
    assert st_.delta_on_move(Gc, 2, 3) == 0.0

    # k=2 delta matches the brute-force difference
    occ2 = occ.copy()
    occ2[2] -= 1
    occ2[3] += 1
    want = eval_field_bruteforce(G2, occ2, t) - eval_field_bruteforce(G2, occ, t)
    got = st_.delta_on_move(G2, 2, 3)
    assert abs(got - want) <= 1e-12 * (1 + abs(want))

    # committed moves keep accumulators in sync with from-scratch values
    st_.apply_move(2, 3)
    assert st_.field(G2) == pytest.approx(eval_field(G2, occ2, t), rel=1e-12)
    with pytest.raises(ValueError):
        FieldState(np.zeros(6, dtype=int), t).delta_on_move(G1, 0, 1)


def test_coincidence_term_examples():
    t = Torus(1, 4)
    occ = np.array([2, 1, 1, 0])
    G = ProductTestFunction([G_UP])
    H = ProductTestFunction([G_BUMP])
    # h=0 is the plain tensor field
    tens = eval_field_bruteforce(ProductTestFunction([G_UP, G_BUMP]), occ, t)
    assert eval_coincidence_term(G, H, 0, occ, t) == pytest.approx(tens, rel=1e-12)
    # h=l=k=1: single-coincidence pairing sum_x g(x) h(x) eta(x) / N
    gt = G_UP.values(t.positions())
    ht = G_BUMP.values(t.positions())
    want = float((gt * ht) @ occ) / 4
    assert eval_coincidence_term(G, H, 1, occ, t) == pytest.approx(want, rel=1e-12)


def test_product_expansion_hand_value():
    # unit factors, eta=(2,1,0,0) on N=4: both sides equal 9/16
    t = Torus(1, 4)
    occ = np.array([2, 1, 0, 0])
    G = ProductTestFunction([ONE])
    H = ProductTestFunction([ONE])
    lhs = eval_field_bruteforce(G, occ, t) * eval_field_bruteforce(H, occ, t)
    assert lhs == pytest.approx(0.5625)
    assert abs(check_product_expansion(G, H, occ, t)) < 1e-14


def test_product_expansion_grid():
    rng = make_generator(2, 9)
    cases = [
        (ProductTestFunction([G_SIN]), ProductTestFunction([G_BUMP])),
        (ProductTestFunction([G_UP, G_BUMP]), ProductTestFunction([G_SIN])),
        (ProductTestFunction([G_UP, G_SIN]), ProductTestFunction([G_BUMP, G_UP])),
    ]
    for N in (2, 3, 4, 5, 6):
        t = Torus(1, N)
        for G, H in cases:
            for _ in range(4):
                occ = rng.integers(0, 3, size=N).astype(np.int64)
                lhs = eval_field_bruteforce(G, occ, t) * eval_field_bruteforce(H, occ, t)
                res = check_product_expansion(G, H, occ, t)
                assert abs(res) <= 1e-10 * (1 + abs(lhs))
    # empty configuration: zero equals zero
    assert check_product_expansion(cases[0][0], cases[0][1], np.zeros(4, dtype=int), Torus(1, 4)) == 0.0


def test_fluctuation_field_density_formula():
    # k=1 with unit factor: N^{d/2} (mean occupancy - alpha theta)
    p = ModelParams(0, 2, 16, 1)
    occ = make_generator(3, 1).poisson(1.0, size=16).astype(np.int64)
    G = ProductTestFunction([ONE])
    got = fluctuation_field(G, occ, p, 0.5)
    want = math.sqrt(16) * (occ.mean() - 2 * 0.5)
    assert got == pytest.approx(want, rel=1e-12)
    # exact-density configuration centers to zero
    occ = np.full(16, 1, dtype=np.int64)
    assert fluctuation_field(G, occ, p, 0.5) == pytest.approx(0.0, abs=1e-12)


def test_fluctuation_field_empirical_mean_near_zero():
    p = ModelParams(1, 1, 32, 1)
    spec = MarginalSpec(1, 1, 0.6)
    rng = make_generator(4, 2)
    G = ProductTestFunction([G_UP, G_BUMP])
    vals = np.array(
        [fluctuation_field(G, sample_configuration(spec, p.torus, rng), p, 0.6) for _ in range(4000)]
    )
    se = vals.std(ddof=1) / math.sqrt(len(vals))
    assert abs(vals.mean()) < 4 * se


def test_orthogonal_field_k1_equals_mean_centering():
    p = ModelParams(1, 1, 8, 1)
    rng = make_generator(5, 3)
    occ = sample_configuration(MarginalSpec(1, 1, 0.5), p.torus, rng)
    G = ProductTestFunction([G_BUMP])
    a = orthogonal_fluctuation_field(G, occ, p, 0.5)
    b = fluctuation_field(G, occ, p, 0.5)
    assert abs(a - b) < 1e-12 * (1 + abs(b))


def test_orthogonal_field_theta_zero():
    p = ModelParams(-1, 1, 6, 1)
    occ = np.array([1, 0, 1, 0, 1, 0], dtype=np.int64)
    G = ProductTestFunction([G_UP, G_BUMP])
    got = orthogonal_fluctuation_field(G, occ, p, 0.0)
    want = p.torus.n_sites * eval_field(symmetrize(G), occ, p.torus)
    assert got == pytest.approx(want, rel=1e-12)
    with pytest.raises(ValueError):
        orthogonal_fluctuation_field(ProductTestFunction([ONE, ONE, ONE]), occ, p, 0.1)


def test_orthogonal_field_centering_mc():
    # mean of the orthogonally-centered field vanishes under the stationary law
    p = ModelParams(1, 1, 16, 1)
    spec = MarginalSpec(1, 1, 0.5)
    rng = make_generator(6, 4)
    G = ProductTestFunction([G_UP, G_UP])
    vals = np.array(
        [
            orthogonal_fluctuation_field(G, sample_configuration(spec, p.torus, rng), p, 0.5)
            for _ in range(4000)
        ]
    )
    se = vals.std(ddof=1) / math.sqrt(len(vals))
    assert abs(vals.mean()) < 4 * se


def test_carre_du_champ_basics():
    p = ModelParams(0, 1, 8, 1)
    occ = np.zeros(8, dtype=np.int64)
    occ[0] = 1
    # constant field: zero
    assert carre_du_champ(ProductTestFunction([ONE]), occ, p) == 0.0
    # single particle, two moves: N^(2-2d) [(g(1/N)-g(0))^2 + (g(-1/N)-g(0))^2]
    g = G_SIN
    G = ProductTestFunction([g])
    tab = g.values(p.torus.positions())
    want = p.n2 / 8**2 * ((tab[1] - tab[0]) ** 2 + (tab[7] - tab[0]) ** 2)
    assert carre_du_champ(G, occ, p) == pytest.approx(want, rel=1e-12)
    # frozen full-exclusion configuration: zero
    pf = ModelParams(-1, 1, 8, 1)
    assert carre_du_champ(G, np.ones(8, dtype=np.int64), pf) == 0.0


def test_carre_du_champ_nonnegative_random():
    rng = make_generator(7, 5)
    G = ProductTestFunction([G_UP, G_BUMP])
    for sigma in (-1, 0, 1):
        p = ModelParams(sigma, 1, 10, 1)
        for _ in range(10):
            occ = rng.integers(0, 2, size=10).astype(np.int64)
            assert carre_du_champ(G, occ, p) >= 0.0


def test_symmetrized_field_equality():
    rng = make_generator(8, 6)
    t = Torus(1, 6)
    G = ProductTestFunction([G_SIN, G_BUMP, G_UP])
    S = symmetrize(G)
    for _ in range(5):
        occ = rng.integers(0, 3, size=6).astype(np.int64)
        assert eval_field(S, occ, t) == pytest.approx(eval_field(G, occ, t), abs=1e-12)


def test_centering_mean_example():
    # alpha=1, sigma=+1, k=2, theta=1, unit factors, N=4: mean = 20/16
    p = ModelParams(1, 1, 4, 1)
    G = ProductTestFunction([ONE, ONE])
    assert centering_mean(G, p.torus, p, 1.0) == pytest.approx(1.25)


def test_field_order_cap():
    with pytest.raises(ValueError):
        eval_field(ProductTestFunction([ONE] * 7), np.zeros(4, dtype=int), Torus(1, 4))
