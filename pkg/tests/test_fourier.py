import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from torikam.fourier import (
    ContractionError,
    FourierMap,
    compose_auto,
    compose_nonlinear,
    cr_proxy,
    dumps,
    from_grid,
    invert_near_identity,
    loads,
    norm_a,
    random_map,
    single_mode,
    to_grid,
    truncate,
    twisted_diff,
)
from torikam.intmat import CAT, IntMatrix, mat_mul


def evaluate(theta: FourierMap, pts: np.ndarray) -> np.ndarray:
    """Direct pointwise sum, independent of the package kernels."""
    th = theta.to_float()
    out = np.zeros((len(pts), th.dim_out), dtype=np.complex128)
    for f, c in zip(th.freqs, th.coeffs):
        out += np.exp(2j * np.pi * pts @ f.astype(float))[:, None] * c[None, :]
    return out


def test_single_mode_is_real_cosine():
    th = single_mode((1, 0), [0.5])
    pts = np.random.default_rng(0).random((20, 2))
    vals = evaluate(th, pts)
    assert np.allclose(vals.imag, 0, atol=1e-14)
    assert np.allclose(vals.real[:, 0], np.cos(2 * np.pi * pts[:, 0]), atol=1e-14)


def test_compose_auto_moves_frequencies_by_transpose():
    th = single_mode((1, 0), [1.0])
    out = compose_auto(th, CAT)
    assert set(map(tuple, out.freqs)) == {(2, 1), (-2, -1)}
    pts = np.random.default_rng(1).random((10, 2))
    direct = evaluate(th, (pts @ np.array(CAT.entries, dtype=float).T) % 1.0)
    assert np.allclose(evaluate(out, pts), direct, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_compose_auto_is_a_right_action(seed):
    th = random_map(2, radius=3, count=4, seed=seed, exact=True)
    b = IntMatrix([[1, 1], [0, 1]])
    lhs = compose_auto(compose_auto(th, CAT), b)
    assert lhs.equals(compose_auto(th, mat_mul(CAT, b)))


def test_twisted_diff_linear_identity():
    om = random_map(2, radius=2, count=3, seed=4, exact=True)
    d = twisted_diff(om, CAT)
    assert d.equals(om.apply_matrix(CAT) - compose_auto(om, CAT))


def test_exact_arithmetic_cancels():
    th = random_map(3, radius=2, count=5, seed=2, exact=True)
    assert len(th - th) == 0
    assert th.is_real()


def test_grid_round_trip():
    th = random_map(3, radius=3, count=6, seed=3)
    back, rep = from_grid(to_grid(th, 16))
    assert cr_proxy(back - th) < 1e-13


def test_grid_rejects_unresolvable_support():
    th = single_mode((8, 0), [1.0])
    with pytest.raises(ValueError):
        to_grid(th, 16)


@pytest.mark.parametrize("method", ["sparse", "grid"])
def test_compose_nonlinear_matches_pointwise(method):
    th = random_map(2, radius=3, count=4, seed=5)
    om = random_map(2, radius=2, count=3, amplitude=0.01, seed=6)
    res, rep = compose_nonlinear(th, om, method=method, tol=1e-16)
    pts = np.random.default_rng(7).random((50, 2))
    shifted = pts + evaluate(om, pts).real
    assert np.allclose(evaluate(res, pts), evaluate(th, shifted), atol=1e-12)
    assert rep.method == method


def test_compose_nonlinear_grid_and_sparse_agree():
    th = random_map(3, radius=2, count=3, seed=8)
    om = random_map(3, radius=1.5, count=2, amplitude=0.005, seed=9)
    a, _ = compose_nonlinear(th, om, method="sparse")
    b, _ = compose_nonlinear(th, om, method="grid")
    assert cr_proxy(a - b) < 1e-12


def test_invert_near_identity():
    om = random_map(2, radius=2, count=3, amplitude=0.002, seed=10)
    psi, info = invert_near_identity(om, tol=1e-12, radius=5)
    # (I + om) o (I + psi) = I means psi + om o (I + psi) = 0
    comp, _ = compose_nonlinear(om, psi, radius=5)
    assert cr_proxy(psi + comp) < 1e-10
    assert info["lipschitz"] < 0.5


def test_invert_refuses_large_maps():
    with pytest.raises(ContractionError):
        invert_near_identity(single_mode((3, 0), [1.0, 0.0]))


def test_norms():
    th = FourierMap.from_dict({(3, 4): [2.0], (-3, -4): [2.0], (0, 0): [1.0]}, 2, 1)
    assert norm_a(th, 0) == pytest.approx(2.0)
    assert norm_a(th, 1) == pytest.approx(10.0)
    assert cr_proxy(th) == pytest.approx(5.0)
    kept, lost = truncate(th, 4.9)
    assert len(kept) == 1 and lost == pytest.approx(4.0)


def test_json_round_trip_exact_and_float():
    for exact in (True, False):
        th = random_map(2, radius=2, count=3, seed=11, exact=exact)
        back = loads(dumps(th))
        assert back.exact == exact and back.equals(th)
