"""Hot loops with numba implementations and pure-numpy fallbacks.

Set TORIKAM_NUMBA=0 to force the numpy path. Both paths are always importable
under explicit names so tests and the benchmark can compare them.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _numba_enabled() -> bool:
    return HAVE_NUMBA and os.environ.get("TORIKAM_NUMBA", "1") not in ("0", "false", "no")


BACKEND = "numba" if _numba_enabled() else "numpy"


# ---------------------------------------------------------------------------
# trigonometric polynomial evaluation at scattered points
# ---------------------------------------------------------------------------

def eval_trig_numpy(freqs: np.ndarray, coeffs: np.ndarray, pts: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """sum_q coeffs[q] * exp(2 pi i freqs[q] . x) at every row x of pts."""
    out = np.empty((pts.shape[0], coeffs.shape[1]), dtype=np.complex128)
    ff = freqs.astype(np.float64).T
    for s in range(0, pts.shape[0], chunk):
        phase = np.exp(2j * np.pi * (pts[s:s + chunk] @ ff))
        out[s:s + chunk] = phase @ coeffs
    return out


if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _eval_trig_nb(freqs, coeffs, pts, rad):
        npts, n = pts.shape
        nmodes, m = coeffs.shape
        out = np.zeros((npts, m), np.complex128)
        tab = np.empty((n, 2 * rad + 1), np.complex128)
        for p in range(npts):
            for k in range(n):
                w = np.exp(2j * np.pi * pts[p, k])
                winv = 1.0 / w
                tab[k, rad] = 1.0
                for j in range(1, rad + 1):
                    tab[k, rad + j] = tab[k, rad + j - 1] * w
                    tab[k, rad - j] = tab[k, rad - j + 1] * winv
            for q in range(nmodes):
                e = tab[0, freqs[q, 0] + rad]
                for k in range(1, n):
                    e *= tab[k, freqs[q, k] + rad]
                for c in range(m):
                    out[p, c] += coeffs[q, c] * e
        return out

    @numba.njit(cache=True)
    def _ball_floor_nb(p1, p3, radius, n):
        r = int(math.floor(radius))
        v = np.full(n, -r, np.int64)
        best = np.inf
        r2 = radius * radius + 1e-9
        while True:
            s = 0.0
            for k in range(n):
                s += v[k] * v[k]
            if s > 0 and s <= r2:
                nv = math.sqrt(s)
                weight = nv ** n
                for proj in (p1, p3):
                    if proj.shape[0] == 0:
                        continue
                    acc = 0.0
                    for i in range(n):
                        t = 0.0
                        for j in range(n):
                            t += proj[i, j] * v[j]
                        acc += t * t
                    val = math.sqrt(acc) * weight
                    if val < best:
                        best = val
            k = 0
            while k < n:
                v[k] += 1
                if v[k] <= r:
                    break
                v[k] = -r
                k += 1
            if k == n:
                break
        return best

    @numba.njit(cache=True)
    def _min_ratio_nb(mats, scale, vs, vnorm_pow):
        nm = mats.shape[0]
        nv, n = vs.shape
        out = np.full(nm, np.inf)
        for a in range(nm):
            best = np.inf
            for b in range(nv):
                acc = 0.0
                for i in range(n):
                    t = 0.0
                    for j in range(n):
                        t += mats[a, i, j] * vs[b, j]
                    acc += t * t
                val = math.sqrt(acc) * vnorm_pow[b]
                if val < best:
                    best = val
            out[a] = best / scale[a]
        return out


def eval_trig_numba(freqs, coeffs, pts):
    if not HAVE_NUMBA:
        return eval_trig_numpy(freqs, coeffs, pts)
    rad = int(np.abs(freqs).max()) if freqs.size else 0
    return _eval_trig_nb(np.ascontiguousarray(freqs, dtype=np.int64),
                         np.ascontiguousarray(coeffs, dtype=np.complex128),
                         np.ascontiguousarray(pts, dtype=np.float64), rad)


def ball_floor_numpy(p1: np.ndarray, p3: np.ndarray, radius: float, n: int) -> float:
    from .spectral import integer_ball

    ball = integer_ball(n, radius).astype(np.float64)
    weight = np.linalg.norm(ball, axis=1) ** n
    best = math.inf
    for p in (p1, p3):
        if p.shape[0] == 0:
            continue
        best = min(best, float((np.linalg.norm(ball @ p.T, axis=1) * weight).min()))
    return best


def ball_floor_numba(p1, p3, radius, n):
    if not HAVE_NUMBA:
        return ball_floor_numpy(p1, p3, radius, n)
    return float(_ball_floor_nb(np.ascontiguousarray(p1, dtype=np.float64),
                                np.ascontiguousarray(p3, dtype=np.float64), float(radius), int(n)))


def min_ratio_numpy(mats: np.ndarray, scale: np.ndarray, vs: np.ndarray, vnorm_pow: np.ndarray) -> np.ndarray:
    """For each matrix M_a: min_b ||M_a v_b|| * vnorm_pow[b] / scale[a]."""
    out = np.empty(mats.shape[0])
    for a in range(mats.shape[0]):
        out[a] = (np.linalg.norm(vs @ mats[a].T, axis=1) * vnorm_pow).min() / scale[a]
    return out


def min_ratio_numba(mats, scale, vs, vnorm_pow):
    if not HAVE_NUMBA:
        return min_ratio_numpy(mats, scale, vs, vnorm_pow)
    return _min_ratio_nb(np.ascontiguousarray(mats, dtype=np.float64), np.asarray(scale, dtype=np.float64),
                         np.ascontiguousarray(vs, dtype=np.float64), np.asarray(vnorm_pow, dtype=np.float64))


def eval_trig(freqs, coeffs, pts):
    return eval_trig_numba(freqs, coeffs, pts) if _numba_enabled() else eval_trig_numpy(freqs, coeffs, pts)


def ball_floor(p1, p3, radius, n):
    return ball_floor_numba(p1, p3, radius, n) if _numba_enabled() else ball_floor_numpy(p1, p3, radius, n)


def min_ratio(mats, scale, vs, vnorm_pow):
    if _numba_enabled():
        return min_ratio_numba(mats, scale, vs, vnorm_pow)
    return min_ratio_numpy(mats, scale, vs, vnorm_pow)
