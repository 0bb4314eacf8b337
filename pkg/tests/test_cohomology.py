import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from torikam.cohomology import (
    NotErgodicError,
    ObstructionError,
    box,
    fit_tame_exponent,
    group_orbits,
    obstruction,
    obstruction_at,
    random_coboundary,
    residual,
    solve_twisted,
    twisted_coboundary,
    weighted_sum,
    weighted_sum_unipotent,
)
from torikam.families import theorem2_family
from torikam.fourier import FourierMap, gq, random_map, single_mode
from torikam.intmat import CAT, IntMatrix, dual_map, mat_pow

SHEAR = IntMatrix([[1, 1], [0, 1]])


def brute_obstruction(theta: FourierMap, p: IntMatrix, q: IntMatrix, v, span: int = 40) -> np.ndarray:
    """Sum_k P^{-(k+1)} theta^_{Q*^k v} over a long window, walking the dual orbit by hand."""
    th = theta.to_float().as_dict()
    qs = dual_map(q)
    acc = np.zeros(theta.dim_out, dtype=np.complex128)
    for k in range(-span, span + 1):
        u = mat_pow(qs, k).apply(v)
        c = th.get(u)
        if c is not None:
            acc += np.array(mat_pow(p, -(k + 1)).entries, dtype=float) @ c
    return acc


def test_single_mode_obstruction_matches_brute_force():
    th = single_mode((1, 2), [1.0 + 0.5j, -0.25j])
    got = obstruction_at(th, CAT, CAT, (1, 2))
    assert np.allclose(got, brute_obstruction(th, CAT, CAT, (1, 2)), atol=1e-13)
    assert np.allclose(got, np.array(CAT.inv().entries, float) @ np.array([1.0 + 0.5j, -0.25j]), atol=1e-13)


def test_obstruction_report_covers_support():
    th = random_map(2, radius=4, count=5, seed=3)
    rep = obstruction(th, CAT, CAT)
    assert rep.covered == len(th)
    for e in rep.entries:
        assert np.allclose(e.value, brute_obstruction(th, CAT, CAT, e.anchor), atol=1e-12)
    js = rep.to_json()
    assert js["schema"] == "torikam.obstruction/1" and len(js["orbits"]) == len(rep.entries)


def test_orbit_grouping_collects_dual_images():
    v = (1, 0)
    qs = dual_map(CAT)
    d = {v: [1.0, 0.0], qs.apply(v): [0.0, 1.0], mat_pow(qs, -2).apply(v): [1.0, 1.0]}
    groups, zero = group_orbits(FourierMap.from_dict(d, 2), CAT)
    assert zero is None and len(groups) == 1 and len(groups[0].terms) == 3


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 100_000))
def test_exact_coboundary_round_trip(seed):
    theta, _ = random_coboundary(seed, CAT, CAT, radius=8, count=5, exact=True)
    omega = solve_twisted(theta, CAT, CAT)
    assert residual(theta, omega, CAT, CAT) == 0.0
    assert twisted_coboundary(omega, CAT, CAT).equals(theta)


def test_float_coboundary_round_trip():
    theta, _ = random_coboundary(7, CAT, CAT, radius=8, count=5, exact=False)
    omega, cert = solve_twisted(theta, CAT, CAT, return_certificate=True)
    assert cert.residual_max <= 1e-12 and cert.zero_frequency == "absent"
    assert cert.to_json()["schema"] == "torikam.solve-certificate/1"


def test_injected_obstruction_is_refused():
    theta, _ = random_coboundary(8, CAT, CAT, radius=6, count=4, exact=True)
    bad = theta + single_mode((2, -1), [gq(1, 0), gq(0, 1)], exact=True)
    with pytest.raises(ObstructionError) as err:
        solve_twisted(bad, CAT, CAT)
    assert err.value.report.max_abs > 0.5


def test_zero_frequency_solved_when_p_minus_i_invertible():
    theta = FourierMap.constant([1.0, 2.0])
    omega = solve_twisted(theta, CAT, CAT)
    assert residual(theta, omega, CAT, CAT) < 1e-14


def test_twisted_with_distinct_p_and_q():
    p = mat_pow(CAT, 2)
    theta, _ = random_coboundary(11, p, CAT, radius=5, count=4, exact=True)
    omega = solve_twisted(theta, p, CAT)
    assert residual(theta, omega, p, CAT) == 0.0


def test_non_ergodic_base_is_rejected():
    with pytest.raises(NotErgodicError):
        obstruction(single_mode((1, 0), [1.0, 0.0]), SHEAR, SHEAR)


def test_weighted_sum_vanishes_off_support():
    # (5, 7) lies on a dual orbit that never meets (1, 0)
    th = single_mode((1, 0), [1.0, 0.0])
    val = weighted_sum(th, (5, 7), CAT, CAT, CAT, mat_pow(CAT, 2), box(2))
    assert np.allclose(val, 0)
    assert len(box(2)) == 25 and len(box(2, "K+")) == 15 and len(box(2, "K-")) == 10


def test_weighted_sum_unipotent_terminates_and_hits_support():
    g = theorem2_family().generators
    f, q = g["A1"], g["A2"]
    v = next(tuple(int(x) for x in w) for w in np.ndindex(3, 3, 3, 3)
             if any(w) and dual_map(q).apply(tuple(int(x) for x in w)) != tuple(int(x) for x in w))
    phi = single_mode(v, [1.0, 0.0, 0.0, 0.0])
    rep = weighted_sum_unipotent(phi, v, f, q, "K+", report=True)
    assert rep.terms >= 1 and "consecutive" in rep.stop_reason and rep.growth_floor > 0
    with pytest.raises(ValueError):
        weighted_sum_unipotent(phi, (1, 0, 0, 0), f, IntMatrix.identity(4))


def test_tame_fit_reports_a_finite_loss():
    pairs = []
    for s in range(4):
        theta, _ = random_coboundary(s, CAT, CAT, radius=6, count=4, exact=False)
        pairs.append((theta, solve_twisted(theta, CAT, CAT)))
    fit = fit_tame_exponent(pairs, a=1.0, c_target=10.0)
    assert 0 <= fit.sigma <= 16 and fit.constant <= 10.0
