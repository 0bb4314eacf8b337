"""Expanding/neutral/contracting splittings, Lyapunov tables and growth rates."""

from __future__ import annotations

import itertools
import json
import math
import os
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .intmat import (
    IntMatrix,
    char_poly,
    factor_irreducible,
    _irreducible_circle_roots,
    mat_pow,
)


class PrecisionError(RuntimeError):
    pass


def default_precision() -> int:
    return int(os.environ.get("TORIKAM_PRECISION", "30"))


def _mp_matrix(m: IntMatrix) -> mpmath.matrix:
    return mpmath.matrix([[mpmath.mpf(x) for x in r] for r in m.entries])


@dataclass(frozen=True)
class Eigen:
    value: complex          # float copy for convenience
    modulus: float
    log_modulus: float
    klass: int              # 1 expanding, 2 neutral (certified), 3 contracting
    multiplicity: int
    mp_value: object = field(repr=False, compare=False, default=None)


def certified_eigenvalues(m: IntMatrix, precision: int | None = None) -> list[Eigen]:
    """Roots of det(xI - M) with the unit-circle class decided exactly per factor."""
    precision = precision or default_precision()
    out = []
    with mpmath.workdps(precision + 10):
        for f, mult in factor_irreducible(char_poly(m)):
            on_circle = _irreducible_circle_roots(f)
            coeffs = [mpmath.mpf(c) for c in reversed(f.coeffs)]
            if f.degree == 1:
                roots = [-coeffs[1] / coeffs[0]]
            else:
                try:
                    roots = mpmath.polyroots(coeffs, maxsteps=400, extraprec=4 * precision)
                except mpmath.libmp.NoConvergence as exc:
                    raise PrecisionError(f"root isolation failed for {f}") from exc
            roots = sorted(roots, key=lambda r: abs(abs(r) - 1))
            for idx, r in enumerate(roots):
                r = mpmath.mpc(r)
                if idx < on_circle:
                    klass, mod = 2, mpmath.mpf(1)
                else:
                    mod = abs(r)
                    klass = 1 if mod > 1 else 3
                out.append(Eigen(complex(r), float(mod), float(mpmath.log(mod)), klass, mult, r))
    out.sort(key=lambda e: (-e.log_modulus, e.value.imag))
    return out


def _kernel_basis(a: mpmath.matrix, dim: int) -> mpmath.matrix:
    """Orthonormal basis (columns) of the dim-dimensional numerical kernel of a."""
    n = a.rows
    if dim == 0:
        return None
    u, s, v = mpmath.svd_r(a)
    order = sorted(range(n), key=lambda i: s[i])
    cols = order[:dim]
    basis = mpmath.matrix(n, dim)
    for k, i in enumerate(cols):
        for j in range(n):
            basis[j, k] = v[i, j]
    return basis


def _group_polynomial_at(mmp: mpmath.matrix, eigs: list[Eigen]) -> mpmath.matrix:
    n = mmp.rows
    acc = mpmath.eye(n)
    for e in eigs:
        lam = e.mp_value
        if abs(lam.imag) < mpmath.mpf(10) ** (-(mpmath.mp.dps // 2)):
            fac = mmp - lam.real * mpmath.eye(n)
        elif lam.imag > 0:
            # real quadratic (x - lam)(x - conj lam)
            fac = mmp * mmp - 2 * lam.real * mmp + (abs(lam) ** 2) * mpmath.eye(n)
        else:
            continue
        for _ in range(e.multiplicity):
            acc = acc * fac
    return acc


def invariant_subspace(m: IntMatrix, eigs: list[Eigen], precision: int) -> mpmath.matrix | None:
    """Sum of generalized eigenspaces of the listed eigenvalues (closed under conjugation)."""
    dim = sum(e.multiplicity for e in eigs)
    if dim == 0:
        return None
    with mpmath.workdps(precision + 10):
        g = _group_polynomial_at(_mp_matrix(m), eigs)
        return _kernel_basis(g, dim)


def _to_np(basis) -> np.ndarray:
    if basis is None:
        return np.zeros((0, 0))
    return np.array([[float(basis[i, j]) for j in range(basis.cols)] for i in range(basis.rows)])


@dataclass
class SpectralSplit:
    """V1 (expanding), V2 (neutral), V3 (contracting) with projections."""

    matrix: IntMatrix
    v1_basis: np.ndarray      # rows are unit vectors
    v2_basis: np.ndarray
    v3_basis: np.ndarray
    rho: float
    c_const: float
    precision: int
    eigenvalues: list = field(repr=False, default_factory=list)
    proj: np.ndarray = field(repr=False, default=None)         # (3, N, N) float
    proj_mp: list = field(repr=False, default_factory=list)    # three mp matrices

    @property
    def dim(self) -> int:
        return self.matrix.dim

    @property
    def dims(self) -> tuple[int, int, int]:
        return (len(self.v1_basis), len(self.v2_basis), len(self.v3_basis))

    def project(self, v, i: int) -> np.ndarray:
        """pi_i(v); v may be one vector or a (k, N) array of vectors."""
        arr = np.asarray(v, dtype=np.float64)
        return arr @ self.proj[i - 1].T

    def proj_norms(self, vs) -> np.ndarray:
        """(k, 3) array of ||pi_i v|| for a batch of integer vectors."""
        arr = np.asarray(vs, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[None, :]
        return np.stack([np.linalg.norm(arr @ p.T, axis=1) for p in self.proj], axis=1)

    def proj_norms_mp(self, v, dps: int | None = None) -> list:
        dps = dps or 2 * self.precision
        with mpmath.workdps(dps):
            vm = mpmath.matrix([mpmath.mpf(int(x)) for x in v])
            return [mpmath.norm(p * vm) for p in self.proj_mp]

    def power(self, n: int) -> "SpectralSplit":
        """Splitting of F^n for n >= 1 (same subspaces)."""
        if n < 1:
            raise ValueError("power must be >= 1")
        eigs = [
            Eigen(e.value ** n, e.modulus ** n, n * e.log_modulus, e.klass, e.multiplicity,
                  None if e.mp_value is None else e.mp_value ** n)
            for e in self.eigenvalues
        ]
        return SpectralSplit(mat_pow(self.matrix, n), self.v1_basis, self.v2_basis, self.v3_basis,
                             self.rho ** n, self.c_const, self.precision, eigs, self.proj, self.proj_mp)

    def to_json(self) -> dict:
        def fmt(a):
            return [[repr(float(x)) for x in r] for r in a]
        return {
            "schema": "torikam.split/1",
            "matrix": self.matrix.to_json(),
            "dims": list(self.dims),
            "v1_basis": fmt(self.v1_basis),
            "v2_basis": fmt(self.v2_basis),
            "v3_basis": fmt(self.v3_basis),
            "rho": mpmath.nstr(self.rho, 17),
            "c_const": repr(self.c_const),
            "precision": self.precision,
            "eigenvalues": [
                {"re": mpmath.nstr(e.mp_value.real, self.precision),
                 "im": mpmath.nstr(e.mp_value.imag, self.precision),
                 "class": e.klass, "multiplicity": e.multiplicity}
                for e in self.eigenvalues
            ],
        }


def split(m: IntMatrix, precision: int | None = None) -> SpectralSplit:
    precision = precision or default_precision()
    eigs = certified_eigenvalues(m, precision)
    n = m.dim
    bases_mp = []
    for k in (1, 2, 3):
        bases_mp.append(invariant_subspace(m, [e for e in eigs if e.klass == k], precision))
    dims = [0 if b is None else b.cols for b in bases_mp]
    if sum(dims) != n:
        raise PrecisionError("subspace dimensions do not add up")
    with mpmath.workdps(precision + 10):
        cols = [b for b in bases_mp if b is not None]
        full = mpmath.matrix(n, n)
        c0 = 0
        for b in cols:
            for j in range(b.cols):
                for i in range(n):
                    full[i, c0 + j] = b[i, j]
            c0 += b.cols
        try:
            finv = mpmath.inverse(full)
        except ZeroDivisionError as exc:
            raise PrecisionError("spectral subspaces are not independent") from exc
        projs_mp = []
        offset = 0
        for d in dims:
            p = mpmath.matrix(n, n)
            for i in range(n):
                for j in range(n):
                    p[i, j] = mpmath.fsum(full[i, offset + k] * finv[offset + k, j] for k in range(d))
            projs_mp.append(p)
            offset += d
        # invariance certificate
        mmp = _mp_matrix(m)
        tol = mpmath.mpf(10) ** (-(precision // 2))
        for b, p in zip(bases_mp, projs_mp):
            if b is None:
                continue
            img = mmp * b
            if mpmath.mnorm(img - p * img, 1) > tol * (1 + mpmath.mnorm(img, 1)):
                raise PrecisionError("invariance check failed at requested precision")
    proj = np.stack([np.array(p.tolist(), dtype=np.float64) for p in projs_mp])
    expanding = [e.modulus for e in eigs if e.klass == 1]
    rho = min(expanding) if expanding else 1.0
    out = SpectralSplit(
        matrix=m,
        v1_basis=_to_np(bases_mp[0]).T if dims[0] else np.zeros((0, n)),
        v2_basis=_to_np(bases_mp[1]).T if dims[1] else np.zeros((0, n)),
        v3_basis=_to_np(bases_mp[2]).T if dims[2] else np.zeros((0, n)),
        rho=float(rho),
        c_const=1.0,
        precision=precision,
        eigenvalues=eigs,
        proj=proj,
        proj_mp=projs_mp,
    )
    return out


def project(sp: SpectralSplit, v, i: int) -> np.ndarray:
    return sp.project(v, i)


# ---------------------------------------------------------------------------
# integer balls and growth constants
# ---------------------------------------------------------------------------

def integer_ball(n: int, radius: float, include_zero: bool = False) -> np.ndarray:
    """All integer vectors with Euclidean norm <= radius, in lexicographic order."""
    r = int(math.floor(radius))
    axis = np.arange(-r, r + 1)
    grids = np.meshgrid(*([axis] * n), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    norm2 = (pts.astype(np.int64) ** 2).sum(axis=1)
    keep = norm2 <= radius * radius + 1e-9
    if not include_zero:
        keep &= norm2 > 0
    return pts[keep].astype(np.int64)


def growth_constant_fit(sp: SpectralSplit, sample_radius: int) -> float:
    """Largest C making the three splitting inequalities true on the sample."""
    n = sp.dim
    ball = integer_ball(n, sample_radius).astype(np.float64)
    f = sp.matrix.to_float()
    finv = sp.matrix.inv().to_float()
    c = math.inf
    powers_fwd = [np.eye(n)]
    powers_bwd = [np.eye(n)]
    for _ in range(sample_radius):
        powers_fwd.append(f @ powers_fwd[-1])
        powers_bwd.append(finv @ powers_bwd[-1])
    for k, (pows, sign) in ((1, (powers_fwd, 1)), (3, (powers_bwd, -1))):
        if sp.dims[k - 1] == 0:
            continue
        u = ball @ sp.proj[k - 1].T
        un = np.linalg.norm(u, axis=1)
        u = u[un > 1e-12]
        un = un[un > 1e-12]
        for i, p in enumerate(pows):
            ratio = np.linalg.norm(u @ p.T, axis=1) / (sp.rho ** i * un)
            c = min(c, float(ratio.min()))
    if sp.dims[1]:
        u = ball @ sp.proj[1].T
        un = np.linalg.norm(u, axis=1)
        u = u[un > 1e-12]
        un = un[un > 1e-12]
        for i in range(1, sample_radius + 1):
            for p in (powers_fwd[i], powers_bwd[i]):
                ratio = np.linalg.norm(u @ p.T, axis=1) * i ** n / un
                c = min(c, float(ratio.min()))
    return 1.0 if c is math.inf else c


# ---------------------------------------------------------------------------
# Lyapunov tables
# ---------------------------------------------------------------------------

def _null_space(a: np.ndarray, dim: int) -> np.ndarray:
    _, s, vh = np.linalg.svd(a)
    return vh[-dim:].conj().T


def _real_basis(cols: np.ndarray, dim: int) -> np.ndarray:
    stacked = np.concatenate([cols.real, cols.imag], axis=1)
    u, s, _ = np.linalg.svd(stacked, full_matrices=False)
    return u[:, :dim]


def _refine(spaces: list[tuple[np.ndarray, tuple]], m: np.ndarray, tol: float = 1e-6):
    out = []
    for basis, exps in spaces:
        d = basis.shape[1]
        x = np.linalg.lstsq(basis, m @ basis, rcond=None)[0]
        resid = np.linalg.norm(m @ basis - basis @ x) / max(1.0, np.linalg.norm(m @ basis))
        if resid > 1e-7:
            raise ValueError("generator does not preserve a common Lyapunov space")
        lam = np.linalg.eigvals(x)
        logs = np.log(np.abs(lam))
        order = np.argsort(-logs)
        groups: list[list[int]] = []
        for idx in order:
            if groups and abs(logs[groups[-1][0]] - logs[idx]) < tol:
                groups[-1].append(idx)
            else:
                groups.append([idx])
        if len(groups) == 1:
            out.append((basis, exps + (float(np.mean(logs)),)))
            continue
        for g in groups:
            acc = np.eye(d, dtype=complex)
            for idx in g:
                acc = acc @ (x - lam[idx] * np.eye(d))
            # acc annihilates exactly the generalized eigenspace (multiplicity counted)
            ker = _null_space(acc, len(g))
            sub = _real_basis(ker, len(g))
            out.append((basis @ sub, exps + (float(np.mean(logs[g])),)))
    return out


@dataclass
class LyapunovTable:
    names: list[str]
    spaces: list[tuple[np.ndarray, tuple[float, ...]]]

    def rows(self) -> list[tuple[tuple[float, ...], int]]:
        return [(exps, b.shape[1]) for b, exps in self.spaces]


def lyapunov_table(generators: dict[str, IntMatrix]) -> LyapunovTable:
    names = list(generators)
    n = generators[names[0]].dim
    spaces = [(np.eye(n), ())]
    for name in names:
        spaces = _refine(spaces, generators[name].to_float())
    return LyapunovTable(names, spaces)


def measured_exponent(m: np.ndarray, basis: np.ndarray) -> tuple[float, float]:
    """Mean log-modulus of M restricted to span(basis) and the spread of the values."""
    x = np.linalg.lstsq(basis, m @ basis, rcond=None)[0]
    logs = np.log(np.abs(np.linalg.eigvals(x)))
    return float(np.mean(logs)), float(np.ptp(logs))


# ---------------------------------------------------------------------------
# pair growth rate
# ---------------------------------------------------------------------------

@dataclass
class GrowthRate:
    ok: bool
    tau: float
    f_min: float
    t0: tuple[float, float]
    rows: list[tuple[float, float, int]]
    certificate: dict | None = None


def _minimax(rows: np.ndarray, grid: int = 4096) -> tuple[float, float]:
    def f(theta):
        return float(np.max(rows[:, 0] * math.cos(theta) + rows[:, 1] * math.sin(theta)))

    thetas = np.arange(grid) * (2 * math.pi / grid)
    vals = np.max(np.outer(np.cos(thetas), rows[:, 0]) + np.outer(np.sin(thetas), rows[:, 1]), axis=1)
    i = int(np.argmin(vals))
    h = 2 * math.pi / grid
    a, b = thetas[i] - h, thetas[i] + h
    g = (math.sqrt(5) - 1) / 2
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(80):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    theta = (a + b) / 2
    best = min(f(theta), float(vals[i]))
    if best == float(vals[i]) and f(theta) > vals[i]:
        theta = float(thetas[i])
    return best, theta


def pair_growth_rate(a: IntMatrix, b: IntMatrix, tol: float = 1e-9) -> GrowthRate:
    """tau = f(t0)/2 with f(t) = max_i (t1 chi_A,i + t2 chi_B,i) minimised on the circle."""
    table = lyapunov_table({"a": a, "b": b})
    rows = [(e[0], e[1], bs.shape[1]) for bs, e in table.spaces]
    arr = np.array([[r[0], r[1]] for r in rows])
    fmin, theta = _minimax(arr)
    t0 = (math.cos(theta), math.sin(theta))
    if fmin <= tol:
        cert = {"direction": t0, "values": (arr @ np.array(t0)).tolist()}
        # integer direction spanned by the vanishing line, if a small one exists
        best = None
        for k1 in range(-12, 13):
            for k2 in range(-12, 13):
                if (k1, k2) == (0, 0):
                    continue
                v = np.abs(arr @ np.array([k1, k2], dtype=float)).max()
                if v <= 1e-8 * (abs(k1) + abs(k2)):
                    key = (max(abs(k1), abs(k2)), -k1, -k2)
                    if best is None or key < best[0]:
                        best = (key, (k1, k2))
        cert["integer_direction"] = None if best is None else best[1]
        return GrowthRate(False, 0.0, fmin, t0, rows, cert)
    return GrowthRate(True, fmin / 2, fmin, t0, rows, None)


def dumps_split(sp: SpectralSplit) -> str:
    return json.dumps(sp.to_json(), indent=1)
