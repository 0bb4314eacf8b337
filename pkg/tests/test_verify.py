import json

import pytest

from torikam import verify as V
from torikam.families import t2_pair, theorem2_family, unit_pair_t3
from torikam.intmat import CAT, mat_pow
from torikam.kam import conjugated_family

T2 = theorem2_family().generators


def test_growth_suite_passes_on_unit_pair():
    a, b = unit_pair_t3()
    res = V.growth_suite(a, b, k_bound=4, v_radius=10)
    assert res.passed and res.constant > 0
    assert res.rows[0]["violations"] == 0


def test_growth_suite_fails_for_dependent_pair():
    res = V.growth_suite(CAT, mat_pow(CAT, 2))
    assert not res.passed and "not higher rank" in res.rows[0]["status"]


def test_growth_constant_is_fitted_not_chosen():
    a, b = unit_pair_t3()
    res = V.growth_suite(a, b, k_bound=3, v_radius=6)
    train_min = V._scan(*V.pair_growth_data(a, b, 2, 5, V.pair_growth_rate(a, b).tau))[0]
    assert res.constant == pytest.approx(V.MARGIN * train_min)


def test_unipotent_suite_small_box():
    res = V.unipotent_suite(T2["A1"], T2["A2"], k1_bound=3, k2_bound=12, v_radius=5)
    assert res.passed and res.rows[0]["n1"] == 44


def test_displacement_suite_fixed_n():
    res = V.displacement_suite(T2["A1"], {"A2": T2["A2"], "A3": T2["A3"]}, n=1, count=100)
    assert res.passed and res.rows[0]["violations"] == 0


def test_e_set_suite_small_sample():
    res = V.e_set_suite(T2["A1"], {"A2": T2["A2"]}, 1, radius=10, count=12)
    assert res.passed and res.rows[0]["unique_minimal_points"]


def test_obstruction_suite_and_json():
    pa = conjugated_family(t2_pair(), 1e-3, trunc_radius=6)
    res = V.obstruction_suite(pa, count=12)
    js = res.to_json()
    assert res.passed and js["schema"] == "torikam.suite/1"
    json.dumps(js)
    assert res.table().startswith("suite obstruction: PASS")
