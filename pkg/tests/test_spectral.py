import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from torikam.families import unit_pair_t3
from torikam.intmat import CAT, IntMatrix, mat_mul, mat_pow
from torikam.spectral import (
    growth_constant_fit,
    integer_ball,
    lyapunov_table,
    measured_exponent,
    pair_growth_rate,
    project,
    split,
)

PHI = (1 + math.sqrt(5)) / 2
ROT = IntMatrix([[0, -1], [1, 0]])


def test_cat_split():
    sp = split(CAT)
    assert sp.dims == (1, 0, 1)
    assert sp.rho == pytest.approx((3 + math.sqrt(5)) / 2, rel=1e-14)


def test_unipotent_split_is_all_neutral():
    sp = split(IntMatrix([[1, 1], [0, 1]]))
    assert sp.dims == (0, 2, 0)


def test_block_cat_rotation_dims():
    assert split(IntMatrix.block_diag(CAT, ROT)).dims == (1, 2, 1)


def test_cat_projection_matches_eigenvector_formula():
    sp = split(CAT)
    e = np.array([PHI, 1.0]) / math.hypot(PHI, 1.0)
    assert np.allclose(project(sp, (1, 0), 1), e * e[0], atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-50, 50), min_size=4, max_size=4))
def test_projections_sum_to_identity(v):
    sp = split(IntMatrix.block_diag(CAT, ROT))
    total = sum(sp.project(v, i) for i in (1, 2, 3))
    assert np.allclose(total, v, atol=1e-9 * (1 + max(abs(x) for x in v)))


def test_subspaces_are_invariant():
    sp = split(IntMatrix.block_diag(CAT, CAT))
    f = sp.matrix.to_float()
    for p in sp.proj:
        # P F = F P for a spectral projection
        assert np.allclose(p @ f, f @ p, atol=1e-12)


def test_dependent_pair_reports_zero_line():
    g = pair_growth_rate(CAT, mat_pow(CAT, 2))
    assert not g.ok
    k1, k2 = g.certificate["integer_direction"]
    assert k1 + 2 * k2 == 0


def test_unit_pair_has_positive_rate_and_symmetry():
    a, b = unit_pair_t3()
    g1, g2 = pair_growth_rate(a, b), pair_growth_rate(b, a)
    assert g1.ok and g1.tau > 0
    assert g1.tau == pytest.approx(g2.tau, rel=1e-9)


def test_lyapunov_additivity_on_words():
    a, b = unit_pair_t3()
    table = lyapunov_table({"a": a, "b": b})
    for k1 in range(-3, 4):
        for k2 in range(-3, 4):
            w = mat_mul(mat_pow(a, k1), mat_pow(b, k2)).to_float()
            for basis, (ea, eb) in table.spaces:
                val, _ = measured_exponent(w, basis)
                assert val == pytest.approx(k1 * ea + k2 * eb, abs=1e-6)


def test_growth_constant_fit():
    assert growth_constant_fit(split(CAT), 10) > 0
    # no expanding space: only the neutral inequality can bind
    assert growth_constant_fit(split(IntMatrix.identity(2)), 5) > 0


def test_integer_ball_counts():
    assert len(integer_ball(2, 1)) == 4
    assert len(integer_ball(2, 1.5)) == 8
    assert len(integer_ball(3, 1, include_zero=True)) == 7


def test_split_json_has_schema_and_precision():
    js = split(CAT, precision=40).to_json()
    assert js["schema"] == "torikam.split/1" and js["precision"] == 40
