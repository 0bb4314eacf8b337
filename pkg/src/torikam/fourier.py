"""Finitely supported Fourier maps T^N -> R^m.

Coefficients live in an (K, m) array indexed by a sorted (K, N) frequency
table. Float mode stores complex128; exact mode stores sympy Gaussian
rationals in object arrays so integer matrices act without rounding.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import fft as sfft
from sympy.polys.domains import QQ_I

from .intmat import IntMatrix

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# scalar helpers for exact mode
# ---------------------------------------------------------------------------

_QQ = QQ_I.dom


def _gq_raw(re: Fraction, im: Fraction):
    return QQ_I(_QQ(re.numerator, re.denominator), _QQ(im.numerator, im.denominator))


def gq(re, im=0):
    """Gaussian rational from ints, Fractions or floats (floats converted exactly)."""
    return _gq_raw(Fraction(re), Fraction(im))


def gq_parts(z) -> tuple[Fraction, Fraction]:
    return Fraction(int(z.x.numerator), int(z.x.denominator)), Fraction(int(z.y.numerator), int(z.y.denominator))


def gq_conj(z):
    return QQ_I(z.x, -z.y)


def gq_complex(z) -> complex:
    re, im = gq_parts(z)
    return complex(float(re), float(im))


def _to_exact_scalar(c):
    if isinstance(c, (complex, np.complexfloating, float, np.floating, int, np.integer)):
        c = complex(c)
        return _gq_raw(Fraction(c.real), Fraction(c.imag))
    return c


_exact_conj = np.frompyfunc(gq_conj, 1, 1)
_exact_complex = np.frompyfunc(gq_complex, 1, 1)
_exact_from = np.frompyfunc(_to_exact_scalar, 1, 1)


def _abs_array(c: np.ndarray) -> np.ndarray:
    if c.dtype == object:
        return np.abs(_exact_complex(c).astype(np.complex128))
    return np.abs(c)


def _conj(c: np.ndarray) -> np.ndarray:
    return _exact_conj(c) if c.dtype == object else np.conj(c)


def _row_nonzero(c: np.ndarray) -> np.ndarray:
    if c.dtype == object:
        return np.array([any(bool(x) for x in row) for row in c], dtype=bool) if len(c) else np.zeros(0, bool)
    return np.any(c != 0, axis=1)


# ---------------------------------------------------------------------------
# the map
# ---------------------------------------------------------------------------

def _canonical(freqs: np.ndarray, coeffs: np.ndarray):
    """Sort lexicographically, merge duplicate frequencies by summation, drop exact zeros."""
    if len(freqs) == 0:
        return freqs.reshape(0, freqs.shape[1]), coeffs
    uniq, inv = np.unique(freqs, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    if len(uniq) == len(freqs):
        out = np.empty_like(coeffs)
        out[inv] = coeffs
    else:
        out = np.zeros((len(uniq), coeffs.shape[1]), dtype=coeffs.dtype)
        if coeffs.dtype == object:
            out[:] = QQ_I.zero
            for src, dst in enumerate(inv):
                out[dst] = out[dst] + coeffs[src]
        else:
            np.add.at(out, inv, coeffs)
    keep = _row_nonzero(out)
    return uniq[keep], out[keep]


@dataclass(frozen=True)
class FourierMap:
    dim_in: int
    dim_out: int
    freqs: np.ndarray
    coeffs: np.ndarray
    exact: bool = False

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=np.int64).reshape(-1, self.dim_in)
        c = np.asarray(self.coeffs, dtype=object if self.exact else np.complex128).reshape(-1, self.dim_out)
        if len(f) != len(c):
            raise ValueError("frequency and coefficient tables differ in length")
        f, c = _canonical(f, c)
        f.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "coeffs", c)

    # construction ---------------------------------------------------------
    @classmethod
    def zero(cls, n: int, m: int | None = None, exact: bool = False) -> "FourierMap":
        m = n if m is None else m
        return cls(n, m, np.zeros((0, n), np.int64), np.zeros((0, m), object if exact else np.complex128), exact)

    @classmethod
    def from_dict(cls, d: dict, n: int, m: int | None = None, exact: bool = False) -> "FourierMap":
        m = n if m is None else m
        if not d:
            return cls.zero(n, m, exact)
        freqs = np.array([tuple(k) for k in d], dtype=np.int64)
        if exact:
            coeffs = np.array([[_to_exact_scalar(x) for x in d[k]] for k in d], dtype=object)
        else:
            coeffs = np.array([np.asarray(d[k], dtype=np.complex128) for k in d])
        return cls(n, m, freqs, coeffs, exact)

    @classmethod
    def constant(cls, c, exact: bool = False) -> "FourierMap":
        c = list(c)
        return cls.from_dict({tuple([0] * len(c)): c}, len(c), len(c), exact)

    def as_dict(self) -> dict:
        return {tuple(int(x) for x in f): c for f, c in zip(self.freqs, self.coeffs)}

    def coeff(self, v) -> np.ndarray:
        idx = self._index(v)
        if idx is None:
            return np.array([QQ_I.zero] * self.dim_out, dtype=object) if self.exact else np.zeros(self.dim_out, np.complex128)
        return self.coeffs[idx]

    def _index(self, v):
        v = np.asarray(v, dtype=np.int64)
        if not len(self.freqs):
            return None
        lo, hi = 0, len(self.freqs)
        key = tuple(v)
        while lo < hi:
            mid = (lo + hi) // 2
            if tuple(self.freqs[mid]) < key:
                lo = mid + 1
            else:
                hi = mid
        if lo < len(self.freqs) and tuple(self.freqs[lo]) == key:
            return lo
        return None

    def __len__(self) -> int:
        return len(self.freqs)

    @property
    def support_radius(self) -> float:
        return float(np.sqrt((self.freqs.astype(np.float64) ** 2).sum(axis=1)).max()) if len(self) else 0.0

    @property
    def support_radius_inf(self) -> int:
        return int(np.abs(self.freqs).max()) if len(self) else 0

    # conversions ----------------------------------------------------------
    def to_exact(self) -> "FourierMap":
        if self.exact:
            return self
        c = _exact_from(self.coeffs.astype(object)) if len(self) else np.zeros((0, self.dim_out), object)
        return FourierMap(self.dim_in, self.dim_out, self.freqs, c, True)

    def to_float(self) -> "FourierMap":
        if not self.exact:
            return self
        c = _exact_complex(self.coeffs).astype(np.complex128) if len(self) else np.zeros((0, self.dim_out))
        return FourierMap(self.dim_in, self.dim_out, self.freqs, c, False)

    def _coerce(self, other: "FourierMap") -> tuple["FourierMap", "FourierMap"]:
        if self.dim_in != other.dim_in or self.dim_out != other.dim_out:
            raise ValueError("dimension mismatch")
        if self.exact and other.exact:
            return self, other
        return self.to_float(), other.to_float()

    # arithmetic -----------------------------------------------------------
    def __add__(self, other: "FourierMap") -> "FourierMap":
        a, b = self._coerce(other)
        return FourierMap(a.dim_in, a.dim_out, np.concatenate([a.freqs, b.freqs]),
                          np.concatenate([a.coeffs, b.coeffs]), a.exact)

    def __neg__(self) -> "FourierMap":
        return FourierMap(self.dim_in, self.dim_out, self.freqs, -self.coeffs, self.exact)

    def __sub__(self, other: "FourierMap") -> "FourierMap":
        return self + (-other)

    def scale(self, t) -> "FourierMap":
        if self.exact:
            return FourierMap(self.dim_in, self.dim_out, self.freqs, self.coeffs * _to_exact_scalar(t), True)
        return FourierMap(self.dim_in, self.dim_out, self.freqs, self.coeffs * t, False)

    def __mul__(self, t) -> "FourierMap":
        return self.scale(t)

    __rmul__ = __mul__

    def apply_matrix(self, m) -> "FourierMap":
        """x -> M theta(x): M acts on every coefficient vector."""
        mm = _matrix_array(m, self.exact)
        if mm.shape[1] != self.dim_out:
            raise ValueError("matrix does not match the output dimension")
        return FourierMap(self.dim_in, mm.shape[0], self.freqs, self.coeffs @ mm.T, self.exact)

    def component(self, i: int) -> "FourierMap":
        return FourierMap(self.dim_in, 1, self.freqs, self.coeffs[:, i:i + 1], self.exact)

    def reality_defect(self) -> float:
        """max |c(-v) - conj(c(v))| over the support (0 for real maps)."""
        if not len(self):
            return 0.0
        d = self.as_dict()
        worst = 0.0
        for v, c in d.items():
            w = tuple(-x for x in v)
            partner = d.get(w)
            cc = _conj(np.asarray(c))
            if partner is None:
                diff = _abs_array(np.asarray(cc)[None, :])
            else:
                diff = _abs_array((np.asarray(partner) - cc)[None, :])
            worst = max(worst, float(diff.max()))
        return worst

    def is_real(self, tol: float = 0.0) -> bool:
        return self.reality_defect() <= tol

    def equals(self, other: "FourierMap") -> bool:
        """Exact coefficient equality (after canonicalisation)."""
        d = self - other
        return len(d) == 0


def _matrix_array(m, exact: bool) -> np.ndarray:
    if isinstance(m, IntMatrix):
        return np.array(m.entries, dtype=object if exact else np.float64)
    arr = np.asarray(m)
    if exact:
        return arr.astype(object)
    return arr.astype(np.float64)


# ---------------------------------------------------------------------------
# construction helpers
# ---------------------------------------------------------------------------

def canonical_half(v) -> bool:
    """True when the first nonzero coordinate is positive."""
    for x in v:
        if x:
            return x > 0
    return False


def ball_frequencies(n: int, radius: float) -> np.ndarray:
    r = int(math.floor(radius))
    axes = [np.arange(-r, r + 1)] * n
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    return grid[(grid.astype(np.float64) ** 2).sum(axis=1) <= radius * radius + 1e-9]


def single_mode(v, c, m: int | None = None, exact: bool = False) -> FourierMap:
    """Real map c e_v + conj(c) e_{-v}."""
    v = tuple(int(x) for x in v)
    n = len(v)
    c = list(c)
    m = len(c) if m is None else m
    if not any(v):
        return FourierMap.from_dict({v: c}, n, m, exact)
    if exact:
        c = [_to_exact_scalar(x) for x in c]
        cc = [gq_conj(x) for x in c]
    else:
        c = np.asarray(c, dtype=np.complex128)
        cc = np.conj(c)
    return FourierMap.from_dict({v: c, tuple(-x for x in v): cc}, n, m, exact)


def random_map(n: int, m: int | None = None, radius: float = 3, count: int = 6, amplitude: float = 1.0,
               seed: int = 0, exact: bool = False, include_zero: bool = False, denominator: int = 16) -> FourierMap:
    """Random real map with `count` conjugate pairs in the ball; exact mode uses small dyadic-free rationals."""
    m = n if m is None else m
    rng = np.random.default_rng(seed)
    ball = [tuple(int(x) for x in v) for v in ball_frequencies(n, radius) if canonical_half(v)]
    if not ball:
        return FourierMap.zero(n, m, exact)
    pick = rng.choice(len(ball), size=min(count, len(ball)), replace=False)
    d = {}
    for k in sorted(pick):
        v = ball[k]
        if exact:
            re = [Fraction(int(x), denominator) for x in rng.integers(-denominator, denominator + 1, m)]
            im = [Fraction(int(x), denominator) for x in rng.integers(-denominator, denominator + 1, m)]
            c = [_gq_raw(a * Fraction(amplitude).limit_denominator(10 ** 6), b * Fraction(amplitude).limit_denominator(10 ** 6))
                 for a, b in zip(re, im)]
            d[v] = c
            d[tuple(-x for x in v)] = [gq_conj(x) for x in c]
        else:
            c = amplitude * (rng.uniform(-1, 1, m) + 1j * rng.uniform(-1, 1, m))
            d[v] = c
            d[tuple(-x for x in v)] = np.conj(c)
    if include_zero:
        z = tuple([0] * n)
        if exact:
            d[z] = [_gq_raw(Fraction(int(x), denominator), Fraction(0)) for x in rng.integers(-denominator, denominator + 1, m)]
        else:
            d[z] = amplitude * rng.uniform(-1, 1, m) + 0j
    return FourierMap.from_dict(d, n, m, exact)


# ---------------------------------------------------------------------------
# exact linear operations
# ---------------------------------------------------------------------------

def compose_auto(theta: FourierMap, f: IntMatrix) -> FourierMap:
    """theta o F: the coefficient at v moves to F^T v."""
    if f.dim != theta.dim_in:
        raise ValueError("matrix does not match the input dimension")
    fm = np.array(f.entries, dtype=np.int64)
    return FourierMap(theta.dim_in, theta.dim_out, theta.freqs @ fm, theta.coeffs, theta.exact)


def twisted_diff(omega: FourierMap, f: IntMatrix) -> FourierMap:
    """F omega - omega o F."""
    if omega.dim_out != f.dim:
        raise ValueError("twisted difference needs dim_out = N")
    return omega.apply_matrix(f) - compose_auto(omega, f)


def _freq_norms(theta: FourierMap, split=None) -> np.ndarray:
    if split is None:
        return np.sqrt((theta.freqs.astype(np.float64) ** 2).sum(axis=1))
    return split.proj_norms(theta.freqs.astype(np.float64)).max(axis=1)


def norm_a(theta: FourierMap, a: float, split=None) -> float:
    """max over components of sup_v |theta_v| |v|^a (0^0 = 1)."""
    if a < 0:
        raise ValueError("a must be >= 0")
    if not len(theta):
        return 0.0
    w = _freq_norms(theta, split)
    weight = np.where(w == 0, 1.0 if a == 0 else 0.0, w ** a if a else 1.0)
    return float((_abs_array(theta.coeffs) * weight[:, None]).max())


def cr_proxy(theta: FourierMap, r: float = 0) -> float:
    """max over components of sum_v |theta_v| (1+|v|)^r; an upper bound for the C^r size."""
    if not len(theta):
        return 0.0
    w = (1.0 + _freq_norms(theta)) ** r
    return float((_abs_array(theta.coeffs) * w[:, None]).sum(axis=0).max())


def truncate(theta: FourierMap, radius: float) -> tuple[FourierMap, float]:
    """Keep |v| <= radius; also return the C^0 proxy of the discarded part."""
    if not len(theta):
        return theta, 0.0
    w = _freq_norms(theta)
    keep = w <= radius + 1e-9
    kept = FourierMap(theta.dim_in, theta.dim_out, theta.freqs[keep], theta.coeffs[keep], theta.exact)
    dropped = FourierMap(theta.dim_in, theta.dim_out, theta.freqs[~keep], theta.coeffs[~keep], theta.exact)
    return kept, cr_proxy(dropped, 0)


def prune(theta: FourierMap, tol: float) -> FourierMap:
    if not len(theta) or tol <= 0:
        return theta
    keep = _abs_array(theta.coeffs).max(axis=1) > tol
    return FourierMap(theta.dim_in, theta.dim_out, theta.freqs[keep], theta.coeffs[keep], theta.exact)


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

def _grid_axes(n: int, size: int):
    ks = [np.fft.fftfreq(size, 1.0 / size).astype(np.int64)] * (n - 1)
    ks.append(np.fft.rfftfreq(size, 1.0 / size).astype(np.int64))
    return ks


def _spectrum(theta: FourierMap, size: int) -> np.ndarray:
    """Half spectrum (rfftn layout) with the coefficients of a real map."""
    n = theta.dim_in
    if theta.support_radius_inf >= size // 2:
        raise ValueError(f"grid size {size} cannot resolve support radius {theta.support_radius_inf}")
    th = theta.to_float()
    shape = (size,) * (n - 1) + (size // 2 + 1,)
    spec = np.zeros(shape + (theta.dim_out,), dtype=np.complex128)
    sel = th.freqs[:, -1] >= 0
    idx = tuple((th.freqs[sel] % size).T)
    spec[idx] = th.coeffs[sel]
    return spec


def to_grid(theta: FourierMap, size: int, workers: int | None = None) -> np.ndarray:
    """Values at x = k/size, shape (size,)*N + (m,); theta must be real."""
    n = theta.dim_in
    spec = _spectrum(theta, size)
    axes = tuple(range(n))
    out = sfft.irfftn(spec, s=(size,) * n, axes=axes, workers=workers)
    return out * size ** n


@dataclass
class GridReport:
    size: int
    discarded: float = 0.0
    aliasing: float = 0.0
    orders: int = 0
    terms: int = 0
    method: str = "grid"
    doublings: int = 0
    notes: list = field(default_factory=list)


def from_grid(values: np.ndarray, radius: float | None = None, workers: int | None = None) -> tuple[FourierMap, GridReport]:
    """Inverse of to_grid. Frequencies with |v| > radius are dropped and their C^0 mass reported."""
    n = values.ndim - 1
    size = values.shape[0]
    m = values.shape[-1]
    spec = sfft.rfftn(values, axes=tuple(range(n)), workers=workers) / size ** n
    ks = _grid_axes(n, size)
    mesh = np.stack(np.meshgrid(*ks, indexing="ij"), axis=-1)          # half-space frequencies
    flat_f = mesh.reshape(-1, n)
    flat_c = spec.reshape(-1, m)
    last = flat_f[:, -1]
    nyq = size // 2
    # the Nyquist plane of the last axis is ambiguous; it is reported as aliasing
    inner = np.abs(flat_f).max(axis=1) < nyq
    mag = np.abs(flat_c).max(axis=1)
    rep = GridReport(size)
    band = np.abs(flat_f).max(axis=1) > (3 * size) // 8
    rep.aliasing = float(mag[band].max()) if band.any() else 0.0
    # mirror the half space: v with last > 0 gives -v as its conjugate
    pos = inner & (last > 0)
    zero = inner & (last == 0)
    freqs = np.concatenate([flat_f[pos], -flat_f[pos], flat_f[zero]])
    coeffs = np.concatenate([flat_c[pos], np.conj(flat_c[pos]), flat_c[zero]])
    keep = np.abs(coeffs).max(axis=1) > 0
    freqs, coeffs = freqs[keep], coeffs[keep]
    if radius is not None:
        w = np.sqrt((freqs.astype(np.float64) ** 2).sum(axis=1))
        inside = w <= radius + 1e-9
        rep.discarded = float(np.abs(coeffs[~inside]).sum(axis=0).max()) if (~inside).any() else 0.0
        freqs, coeffs = freqs[inside], coeffs[inside]
    return FourierMap(n, m, freqs, coeffs, False), rep


def dump_grid(path, values: np.ndarray) -> None:
    """Binary row-major float64 with a one-line JSON header."""
    header = {"schema": "torikam.grid/1", "shape": list(values.shape), "dtype": "float64", "order": "C"}
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode())
        fh.write(np.ascontiguousarray(values, dtype=np.float64).tobytes())


def load_grid(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        data = np.frombuffer(fh.read(), dtype=np.float64)
    return data.reshape(header["shape"]).copy()


# ---------------------------------------------------------------------------
# nonlinear composition theta(x + omega(x))
# ---------------------------------------------------------------------------

def _multi_indices(n: int, order: int):
    for combo in itertools.combinations_with_replacement(range(n), order):
        a = [0] * n
        for c in combo:
            a[c] += 1
        yield tuple(a)


def _taylor_plan(theta: FourierMap, omega: FourierMap, tol: float, max_order: int):
    """Multi-indices alpha whose term bound |d^alpha theta| |omega^alpha| / alpha! exceeds tol."""
    n = theta.dim_in
    if not len(theta):
        return []
    th = theta.to_float()
    om = omega.to_float()
    cabs = np.abs(th.coeffs).max(axis=1)
    freq_abs = TWO_PI * np.abs(th.freqs.astype(np.float64))
    wd = np.abs(om.coeffs).sum(axis=0) if len(om) else np.zeros(n)
    plan = []
    for k in range(max_order + 1):
        best = 0.0
        for a in _multi_indices(n, k):
            deriv = float((cabs * np.prod(freq_abs ** np.array(a), axis=1)).sum())
            bound = deriv * float(np.prod(wd ** np.array(a))) / float(np.prod([math.factorial(x) for x in a]))
            best = max(best, bound)
            if bound > tol:
                plan.append(a)
        if best <= tol and k > 0:
            break
    return plan


def _sparse_product(fa, ca, fb, cb):
    """Coefficients of the pointwise product: ca is (Ka,), cb is (Kb, m)."""
    if len(fa) == 0 or len(fb) == 0:
        return np.zeros((0, fa.shape[1] if len(fa.shape) > 1 else 0), np.int64), np.zeros((0, cb.shape[1]), np.complex128)
    f = (fa[:, None, :] + fb[None, :, :]).reshape(-1, fa.shape[1])
    c = (ca[:, None, None] * cb[None, :, :]).reshape(-1, cb.shape[1])
    return f, c


def _compose_sparse(theta: FourierMap, omega: FourierMap, plan, tol: float, radius):
    n = theta.dim_in
    th = theta.to_float()
    om = omega.to_float()
    m = th.dim_out
    res = FourierMap.zero(n, m)
    powers = {tuple([0] * n): (np.zeros((1, n), np.int64), np.ones(1, np.complex128))}
    prune_tol = tol * 1e-3
    for a in sorted(plan, key=lambda x: (sum(x), x)):
        if a not in powers:
            d = next(i for i in range(n) if a[i] > 0)
            prev = list(a)
            prev[d] -= 1
            pf, pc = powers[tuple(prev)]
            f, c = _sparse_product(pf, pc, om.freqs, om.coeffs[:, d:d + 1])
            tmp = FourierMap(n, 1, f, c, False)
            tmp = prune(tmp, prune_tol)
            powers[a] = (tmp.freqs, tmp.coeffs[:, 0])
        pf, pc = powers[a]
        factor = np.prod((2j * math.pi * th.freqs) ** np.array(a), axis=1) / float(np.prod([math.factorial(x) for x in a]))
        deriv_c = th.coeffs * factor[:, None]
        f, c = _sparse_product(pf, pc, th.freqs, deriv_c)
        # merge term by term so duplicate frequencies never pile up in memory
        res = res + prune(FourierMap(n, m, f, c, False), prune_tol)
    res = prune(res, prune_tol)
    discarded = 0.0
    if radius is not None:
        res, discarded = truncate(res, radius)
    return res, discarded


def _grid_size_for(theta: FourierMap, omega: FourierMap, radius) -> int:
    rt = theta.support_radius_inf
    ro = omega.support_radius_inf
    rout = int(math.ceil(radius)) if radius is not None else rt + ro
    need = max(2 * max(rt, rout) + 2, rt + ro + rout + 2)
    size = 8
    while size < need:
        size *= 2
    return size


def _compose_grid(theta: FourierMap, omega: FourierMap, plan, size: int, radius, workers):
    n = theta.dim_in
    th = theta.to_float()
    spec = _spectrum(th, size)
    om_grid = to_grid(omega, size, workers)
    ks = _grid_axes(n, size)
    kmesh = [k.reshape([-1 if i == j else 1 for j in range(n)]).astype(np.float64) for i, k in enumerate(ks)]
    axes = tuple(range(n))
    acc = np.zeros((size,) * n + (th.dim_out,))
    powers = {tuple([0] * n): None}
    order = 0
    for a in sorted(plan, key=lambda x: (sum(x), x)):
        if sum(a) > order:
            # monomials two orders down are never needed again
            order = sum(a)
            for key in [k for k in powers if sum(k) < order - 1]:
                del powers[key]
        if a not in powers:
            d = next(i for i in range(n) if a[i] > 0)
            prev = list(a)
            prev[d] -= 1
            base = powers[tuple(prev)]
            powers[a] = om_grid[..., d] if base is None else base * om_grid[..., d]
        factor = np.ones(spec.shape[:-1], dtype=np.complex128)
        for d in range(n):
            if a[d]:
                factor = factor * (2j * math.pi * kmesh[d]) ** a[d]
        deriv = sfft.irfftn(spec * factor[..., None], s=(size,) * n, axes=axes, workers=workers) * size ** n
        weight = 1.0 / float(np.prod([math.factorial(x) for x in a]))
        p = powers[a]
        acc += deriv * weight if p is None else deriv * (p[..., None] * weight)
    res, rep = from_grid(acc, radius, workers)
    return res, rep


def compose_nonlinear(theta: FourierMap, omega: FourierMap, grid_size: int | None = None, radius: float | None = None,
                      tol: float = 1e-17, method: str = "auto", max_order: int = 40, max_grid: int | None = None,
                      workers: int | None = None) -> tuple[FourierMap, GridReport]:
    """theta(x + omega(x)) by a Taylor expansion in omega.

    "sparse" multiplies coefficient tables directly (no aliasing); "grid" forms
    the products on a uniform grid and transforms back, doubling the grid while
    the outer band carries more than `tol` of energy.
    """
    if omega.dim_in != theta.dim_in or omega.dim_out != theta.dim_in:
        raise ValueError("omega must map T^N to R^N with N = theta.dim_in")
    plan = _taylor_plan(theta, omega, tol, max_order)
    orders = max((sum(a) for a in plan), default=0)
    if method == "auto":
        dense = len(theta) * max(len(omega), 1) ** min(orders, 2) > 2_000_000
        method = "grid" if dense else "sparse"
    if method == "sparse":
        res, discarded = _compose_sparse(theta, omega, plan, tol, radius)
        rep = GridReport(0, discarded, 0.0, orders, len(plan), "sparse")
        return res, rep
    size = grid_size or _grid_size_for(theta, omega, radius)
    cap = max_grid or max(size, 64 if theta.dim_in <= 3 else 32)
    doublings = 0
    while True:
        res, rep = _compose_grid(theta, omega, plan, size, radius, workers)
        rep.orders, rep.terms, rep.doublings = orders, len(plan), doublings
        if rep.aliasing <= max(tol, 1e-15) or size * 2 > cap:
            if rep.aliasing > max(tol, 1e-15):
                rep.notes.append(f"aliasing {rep.aliasing:.3e} above tolerance at grid cap {size}")
            return res, rep
        size *= 2
        doublings += 1


def jacobian_bound(omega: FourierMap) -> float:
    """Upper bound for sup_x ||D omega(x)||_inf from the coefficients."""
    if not len(omega):
        return 0.0
    om = omega.to_float()
    a = np.abs(om.coeffs)                                  # (K, m)
    f = TWO_PI * np.abs(om.freqs.astype(np.float64))       # (K, n)
    jac = a.T @ f                                          # (m, n)
    return float(jac.sum(axis=1).max())


class ContractionError(RuntimeError):
    pass


def invert_near_identity(omega: FourierMap, grid_size: int | None = None, tol: float = 1e-14, radius: float | None = None,
                         max_iter: int = 60) -> tuple[FourierMap, dict]:
    """Psi with (I + omega) o (I + psi) = I via psi <- -omega o (I + psi)."""
    lip = jacobian_bound(omega)
    if lip >= 0.5:
        raise ContractionError(f"|D omega| bound {lip:.3g} is not below 0.5")
    n = omega.dim_in
    psi = FourierMap.zero(n, n)
    if not len(omega):
        return psi, {"iterations": 0, "lipschitz": lip, "change": 0.0}
    change = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        comp, _ = compose_nonlinear(omega, psi, grid_size=grid_size, radius=radius, tol=tol * 1e-3)
        new = -comp
        change = cr_proxy(new - psi, 0)
        psi = new
        if change <= tol:
            break
    if change > tol:
        raise ContractionError(f"inversion did not converge: last change {change:.3e}")
    return psi, {"iterations": it, "lipschitz": lip, "change": change}


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------

def _scalar_json(x, exact: bool):
    if exact:
        re, im = gq_parts(x)
        return str(re), str(im)
    return float(x.real), float(x.imag)


def to_json(theta: FourierMap) -> dict:
    modes = []
    for f, c in zip(theta.freqs, theta.coeffs):
        parts = [_scalar_json(x, theta.exact) for x in c]
        modes.append({"freq": [int(x) for x in f], "re": [p[0] for p in parts], "im": [p[1] for p in parts]})
    return {"schema": "torikam.fourier/1", "dim_in": theta.dim_in, "dim_out": theta.dim_out,
            "exact": theta.exact, "modes": modes}


def from_json(data: dict) -> FourierMap:
    n = int(data["dim_in"])
    m = int(data.get("dim_out", n))
    exact = bool(data.get("exact", False))
    d = {}
    for mode in data["modes"]:
        f = tuple(int(x) for x in mode["freq"])
        if len(f) != n or len(mode["re"]) != m or len(mode["im"]) != m:
            raise ValueError(f"mode {f} has the wrong shape")
        if exact:
            d[f] = [_gq_raw(Fraction(a), Fraction(b)) for a, b in zip(mode["re"], mode["im"])]
        else:
            d[f] = [complex(float(a), float(b)) for a, b in zip(mode["re"], mode["im"])]
    return FourierMap.from_dict(d, n, m, exact)


def dumps(theta: FourierMap) -> str:
    return json.dumps(to_json(theta))


def loads(text: str) -> FourierMap:
    return from_json(json.loads(text))
