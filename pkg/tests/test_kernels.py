import os
import subprocess
import sys

import numpy as np
import pytest

from torikam import kernels
from torikam.fourier import random_map
from torikam.spectral import integer_ball, split
from torikam.intmat import CAT, IntMatrix


def test_eval_trig_backends_agree():
    th = random_map(3, radius=4, count=8, seed=0)
    pts = np.random.default_rng(1).random((300, 3))
    a = kernels.eval_trig_numba(th.freqs, th.coeffs, pts)
    b = kernels.eval_trig_numpy(th.freqs, th.coeffs, pts)
    assert np.allclose(a, b, atol=1e-12)


def test_eval_trig_matches_closed_form():
    freqs = np.array([[1, 0], [-1, 0]])
    coeffs = np.array([[0.5], [0.5]], dtype=complex)
    pts = np.random.default_rng(2).random((10, 2))
    out = kernels.eval_trig(freqs, coeffs, pts)
    assert np.allclose(out[:, 0], np.cos(2 * np.pi * pts[:, 0]), atol=1e-13)


def test_ball_floor_backends_agree():
    sp = split(IntMatrix.block_diag(CAT, CAT))
    a = kernels.ball_floor_numba(sp.proj[0], sp.proj[2], 6.0, 4)
    b = kernels.ball_floor_numpy(sp.proj[0], sp.proj[2], 6.0, 4)
    assert a == pytest.approx(b, rel=1e-12) and a > 0


def test_min_ratio_backends_agree_and_match_loop():
    rng = np.random.default_rng(3)
    mats = rng.integers(-3, 4, size=(7, 3, 3)).astype(float)
    vs = integer_ball(3, 3).astype(float)
    vpow = np.linalg.norm(vs, axis=1) ** 2
    scale = rng.uniform(0.5, 2, 7)
    a = kernels.min_ratio_numba(mats, scale, vs, vpow)
    b = kernels.min_ratio_numpy(mats, scale, vs, vpow)
    loop = [min(np.linalg.norm(m @ v) * p for v, p in zip(vs, vpow)) / s for m, s in zip(mats, scale)]
    assert np.allclose(a, b, rtol=1e-12) and np.allclose(b, loop, rtol=1e-12)


def test_numpy_fallback_selected_by_environment():
    env = dict(os.environ, TORIKAM_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", "from torikam import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
