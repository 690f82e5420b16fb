import math

import numpy as np

from fieldslab.partitions import (
    field_cell_weight,
    partitions_of_size,
    set_partitions,
    weight_cell_weight,
)

BELL = {1: 1, 2: 2, 3: 5, 4: 15, 5: 52, 6: 203}


def test_bell_numbers():
    for k, b in BELL.items():
        assert len(partitions_of_size(k)) == b


def test_partitions_cover_all_elements():
    for p in set_partitions(range(4)):
        flat = sorted(x for cell in p for x in cell)
        assert flat == [0, 1, 2, 3]


def falling(n, r):
    out = 1
    for j in range(r):
        out *= n - j
    return out


def test_field_weight_collapses_falling_factorials():
    # sum over partitions of [m] of mobius weights times falling-factorial
    # products equals (-1)^(m-1) (m-1)! n for every n
    for m in range(1, 6):
        for n in range(0, 7):
            acc = 0.0
            for p in partitions_of_size(m):
                term = (-1) ** (len(p) - 1) * math.factorial(len(p) - 1)
                for cell in p:
                    term *= falling(n, len(cell))
                acc += term
            assert acc == field_cell_weight(m) * n


def test_weight_cell_collapses_tuple_weights():
    # same collapse for the per-site weight factors a_m = prod(alpha + j sigma)
    for sigma in (-1, 0, 1):
        for alpha in (1, 2, 3):
            for m in range(1, 6):
                acc = 0.0
                for p in partitions_of_size(m):
                    term = (-1) ** (len(p) - 1) * math.factorial(len(p) - 1)
                    for cell in p:
                        a = 1.0
                        for j in range(len(cell)):
                            a *= alpha + j * sigma
                        term *= a
                    acc += term
                assert np.isclose(acc, weight_cell_weight(m, sigma, alpha), atol=1e-9)
