"""Twisted cohomological equations P w - w o Q = theta over the dual action.

Automorphisms act on coefficient vectors directly and move frequencies through
their duals: (theta o Q)^_n = theta^_{Q* n} with Q* = (Q^T)^{-1}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import orbits
from .fourier import FourierMap, QQ_I, _abs_array, compose_auto, norm_a, twisted_diff
from .intmat import IntMatrix, dual_map, is_ergodic, is_unipotent, mat_pow, rational_inverse
from .spectral import split as spectral_split

_QQ = QQ_I.dom


class NotErgodicError(ValueError):
    pass


class ObstructionError(RuntimeError):
    def __init__(self, report: "ObstructionReport", tol: float):
        super().__init__(f"obstruction {report.max_abs:.3e} exceeds tolerance {tol:.3e}")
        self.report = report
        self.tol = tol


@lru_cache(maxsize=64)
def dual_split(q: IntMatrix):
    return spectral_split(dual_map(q))


def _coeff_matrix(m: IntMatrix, exact: bool) -> np.ndarray:
    return np.array(m.entries, dtype=object if exact else np.float64)


class _Powers:
    """Cached P^k (k may be negative) as coefficient matrices."""

    def __init__(self, p: IntMatrix, exact: bool):
        self.p = p
        self.exact = exact
        self.cache: dict[int, np.ndarray] = {}

    def __call__(self, k: int) -> np.ndarray:
        if k not in self.cache:
            self.cache[k] = _coeff_matrix(mat_pow(self.p, k), self.exact)
        return self.cache[k]


def _zero_vec(m: int, exact: bool) -> np.ndarray:
    return np.array([QQ_I.zero] * m, dtype=object) if exact else np.zeros(m, np.complex128)


def _vec_abs(c) -> float:
    return float(_abs_array(np.asarray(c)[None, :]).max()) if len(c) else 0.0


# ---------------------------------------------------------------------------
# orbit grouping
# ---------------------------------------------------------------------------

@dataclass
class OrbitGroup:
    anchor: tuple[int, ...]                      # minimal point of the dual orbit
    terms: dict[int, np.ndarray]                 # offset k (freq = Q*^k anchor) -> coefficient

    @property
    def krange(self) -> tuple[int, int]:
        return min(self.terms), max(self.terms)


def group_orbits(theta: FourierMap, q: IntMatrix) -> tuple[list[OrbitGroup], np.ndarray | None]:
    """Split the nonzero support of theta into dual Q-orbits, anchored at minimal points."""
    if not is_ergodic(q):
        raise NotErgodicError("base automorphism is not ergodic; dual orbits need not escape")
    zero = None
    nz = []
    for f, c in zip(theta.freqs, theta.coeffs):
        if not f.any():
            zero = c
        else:
            nz.append((f, c))
    if not nz:
        return [], zero
    sp = dual_split(q)
    fs = np.array([f for f, _ in nz], dtype=np.int64)
    js, pts = orbits.minimal_points_batch(fs, sp)
    groups: dict[tuple, OrbitGroup] = {}
    for (f, c), j, p in zip(nz, js, pts):
        g = groups.setdefault(p, OrbitGroup(p, {}))
        g.terms[-int(j)] = c
    return [groups[k] for k in sorted(groups)], zero


# ---------------------------------------------------------------------------
# obstructions
# ---------------------------------------------------------------------------

@dataclass
class ObstructionEntry:
    anchor: tuple[int, ...]
    value: np.ndarray
    krange: tuple[int, int]

    @property
    def abs(self) -> float:
        return _vec_abs(self.value)


@dataclass
class ObstructionReport:
    p: IntMatrix
    q: IntMatrix
    entries: list[ObstructionEntry]
    exact: bool
    covered: int = 0

    @property
    def max_abs(self) -> float:
        return max((e.abs for e in self.entries), default=0.0)

    def to_json(self) -> dict:
        def fmt(c):
            c = np.asarray(c)
            if self.exact:
                from .fourier import gq_parts

                return [[str(x) for x in gq_parts(z)] for z in c]
            return [[float(z.real), float(z.imag)] for z in c]

        return {
            "schema": "torikam.obstruction/1",
            "p": self.p.to_json(),
            "q": self.q.to_json(),
            "exact": self.exact,
            "covered_frequencies": self.covered,
            "max_abs": self.max_abs,
            "orbits": [{"anchor": list(e.anchor), "value": fmt(e.value), "krange": list(e.krange)} for e in self.entries],
        }


def _orbit_obstruction(g: OrbitGroup, pinv: _Powers, m: int, exact: bool) -> np.ndarray:
    acc = _zero_vec(m, exact)
    for k, c in g.terms.items():
        acc = acc + pinv(k + 1) @ c
    return acc


def obstruction(theta: FourierMap, p: IntMatrix, q: IntMatrix) -> ObstructionReport:
    """O(anchor) = sum_k P^{-(k+1)} theta^_{Q*^k anchor} for every dual orbit meeting the support."""
    if theta.dim_out != p.dim or theta.dim_in != q.dim:
        raise ValueError("dimension mismatch")
    groups, _ = group_orbits(theta, q)
    pinv = _Powers(p.inv(), theta.exact)
    entries = [ObstructionEntry(g.anchor, _orbit_obstruction(g, pinv, theta.dim_out, theta.exact), g.krange) for g in groups]
    covered = sum(len(g.terms) for g in groups)
    return ObstructionReport(p, q, entries, theta.exact, covered)


def obstruction_at(theta: FourierMap, p: IntMatrix, q: IntMatrix, v) -> np.ndarray:
    """Obstruction of the orbit through v, anchored at v itself."""
    sp = dual_split(q)
    j, anchor = orbits.minimal_point(tuple(int(x) for x in v), sp)
    groups, _ = group_orbits(theta, q)
    pinv = _Powers(p.inv(), theta.exact)
    for g in groups:
        if g.anchor == anchor:
            # telescoping: O(Q*^k a) = P^k O(a) and v = Q*^{-j} anchor
            return _Powers(p, theta.exact)(-j) @ _orbit_obstruction(g, pinv, theta.dim_out, theta.exact)
    return _zero_vec(theta.dim_out, theta.exact)


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------

@dataclass
class SolveCertificate:
    obstruction_max: float
    residual_max: float
    zero_frequency: str
    kernel_component: float = 0.0
    orbits: int = 0
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"schema": "torikam.solve-certificate/1", "obstruction_max": self.obstruction_max,
                "residual_max": self.residual_max, "zero_frequency": self.zero_frequency,
                "kernel_component": self.kernel_component, "orbits": self.orbits, "notes": list(self.notes)}


def _solve_zero(p: IntMatrix, c, exact: bool) -> tuple[np.ndarray, str, float]:
    """(P - I) w0 = c; exact inverse when possible, least squares otherwise."""
    rows = [[p.entries[i][j] - (i == j) for j in range(p.dim)] for i in range(p.dim)]
    inv = rational_inverse(rows)
    if inv is not None:
        if exact:
            mat = np.array([[_QQ(x.numerator, x.denominator) for x in r] for r in inv], dtype=object)
            return mat @ c, "solved", 0.0
        mat = np.array([[float(x) for x in r] for r in inv])
        return mat @ np.asarray(c, dtype=np.complex128), "solved", 0.0
    a = np.array(rows, dtype=np.float64)
    cf = np.array([complex(x) if not exact else complex(float(x.x), float(x.y)) for x in c])
    w, *_ = np.linalg.lstsq(a, cf, rcond=None)
    kernel = float(np.abs(a @ w - cf).max())
    if exact:
        from .fourier import _to_exact_scalar

        w = np.array([_to_exact_scalar(x) for x in w], dtype=object)
    return w, "least-squares (P - I singular)", kernel


def solve_twisted(theta: FourierMap, p: IntMatrix, q: IntMatrix, tol: float = 1e-9,
                  return_certificate: bool = False):
    """w with P w - w o Q = theta; w^_u = sum_{j>=0} P^{-(j+1)} theta^_{Q*^j u} on each orbit segment."""
    rep = obstruction(theta, p, q)
    if rep.max_abs > tol:
        raise ObstructionError(rep, tol)
    groups, zero = group_orbits(theta, q)
    exact = theta.exact
    m = theta.dim_out
    pinv = _coeff_matrix(p.inv(), exact)
    qstar = dual_map(q)
    qstar_inv = qstar.inv()
    freqs = []
    coeffs = []
    for g in groups:
        kmin, kmax = g.krange
        # frequency at offset kmax, then walk backwards
        u = g.anchor
        step = qstar if kmax >= 0 else qstar_inv
        for _ in range(abs(kmax)):
            u = step.apply(u)
        w_next = _zero_vec(m, exact)
        for k in range(kmax, kmin - 1, -1):
            c = g.terms.get(k)
            w = pinv @ (w_next + c) if c is not None else pinv @ w_next
            freqs.append(u)
            coeffs.append(w)
            w_next = w
            u = qstar_inv.apply(u)
    zero_note = "absent"
    kernel = 0.0
    if zero is not None:
        w0, zero_note, kernel = _solve_zero(p, zero, exact)
        freqs.append(tuple([0] * theta.dim_in))
        coeffs.append(w0)
    if freqs:
        omega = FourierMap(theta.dim_in, m, np.array(freqs, dtype=np.int64),
                           np.array(coeffs, dtype=object if exact else np.complex128), exact)
    else:
        omega = FourierMap.zero(theta.dim_in, m, exact)
    if not return_certificate:
        return omega
    res = residual(theta, omega, p, q)
    cert = SolveCertificate(rep.max_abs, res, zero_note, kernel, len(groups))
    return omega, cert


def residual(theta: FourierMap, omega: FourierMap, p: IntMatrix, q: IntMatrix) -> float:
    """max coefficient of P w - w o Q - theta (0.0 means exact)."""
    d = omega.apply_matrix(p) - compose_auto(omega, q) - theta
    if not len(d):
        return 0.0
    return float(_abs_array(d.coeffs).max())


def twisted_coboundary(omega: FourierMap, p: IntMatrix, q: IntMatrix) -> FourierMap:
    """P w - w o Q."""
    return omega.apply_matrix(p) - compose_auto(omega, q)


# ---------------------------------------------------------------------------
# weighted sums along two-parameter orbits
# ---------------------------------------------------------------------------

def _as_lookup(phi: FourierMap) -> dict:
    return phi.as_dict()


def weighted_sum(phi: FourierMap, v, p1: IntMatrix, p2: IntMatrix, f1: IntMatrix, f2: IntMatrix, k_set) -> np.ndarray:
    """S_K = sum_{k in K} P1^{k1} P2^{k2} phi^_{F1*^{k1} F2*^{k2} v} over a finite k_set."""
    lookup = _as_lookup(phi)
    exact = phi.exact
    acc = _zero_vec(phi.dim_out, exact)
    f1s, f2s = dual_map(f1), dual_map(f2)
    pw1, pw2 = _Powers(p1, exact), _Powers(p2, exact)
    v = tuple(int(x) for x in v)
    for k1, k2 in k_set:
        u = mat_pow(f1s, k1).apply(mat_pow(f2s, k2).apply(v))
        c = lookup.get(u)
        if c is not None:
            acc = acc + pw1(k1) @ (pw2(k2) @ c)
    return acc


def box(k_bound: int, half: str = "Z2") -> list[tuple[int, int]]:
    """Finite k-sets: the full box, or its k2 >= 0 / k2 < 0 halves."""
    out = []
    for k1 in range(-k_bound, k_bound + 1):
        for k2 in range(-k_bound, k_bound + 1):
            if half == "K+" and k2 < 0:
                continue
            if half == "K-" and k2 >= 0:
                continue
            out.append((k1, k2))
    return out


@dataclass
class UnipotentSumReport:
    value: np.ndarray
    terms: int
    k2_range: tuple[int, int]
    growth_floor: float          # min ||F*^k1 Q*^k2 v|| / (rho^|k1| |k2|^(1/2) ||v||^-n1) over k2 != 0
    stop_reason: str


def _orbit_hits(w, fs, fs_inv, lookup, radius: float, dominance: float = 1e3):
    """(k1, coefficient) for every point of the dual F-orbit of w inside the support, plus min orbit norm."""
    hits = []
    best = math.inf
    for step, sign in ((fs, 1), (fs_inv, -1)):
        u = w if sign == 1 else fs_inv.apply(w)
        k = 0 if sign == 1 else -1
        prev = math.inf
        grown = 0
        while True:
            nrm = math.sqrt(sum(x * x for x in u))
            best = min(best, nrm)
            c = lookup.get(u)
            if c is not None:
                hits.append((k, c))
            if nrm > radius:
                grown = grown + 1 if nrm >= prev else 0
                if nrm > dominance * max(radius, 1.0) or grown >= 6:
                    break
            prev = nrm
            u = step.apply(u)
            k += sign
            if abs(k) > 10_000:
                break
    return hits, best


def weighted_sum_unipotent(phi: FourierMap, v, f: IntMatrix, q: IntMatrix, k_set="K+", patience: int = 8,
                           k2_max: int = 100_000, report: bool = False):
    """S_K(phi, v)(F, Q) = sum_{k in K} F^{-(k1+1)} Q^{-(k2+1)} phi^_{F*^{k1} Q*^{k2} v}.

    k_set is "K+" (k2 >= 0), "K-" (k2 < 0), "Z2", or an explicit finite list.
    For the half-planes k2 runs until the whole F-orbit of Q*^{k2} v stays
    outside the support radius for `patience` consecutive values.
    """
    v = tuple(int(x) for x in v)
    qs = dual_map(q)
    if qs.apply(v) == v:
        raise ValueError("Q fixes v; the k2 direction does not escape")
    if not is_ergodic(f):
        raise NotErgodicError("F must be ergodic")
    exact = phi.exact
    lookup = _as_lookup(phi)
    fs = dual_map(f)
    fs_inv = fs.inv()
    finv = _Powers(f.inv(), exact)
    qinv = _Powers(q.inv(), exact)
    radius = phi.support_radius
    sp = dual_split(f)
    n1 = 2 * f.dim ** 2 + 3 * f.dim
    vnorm = math.sqrt(sum(x * x for x in v))
    acc = _zero_vec(phi.dim_out, exact)
    terms = 0
    floor = math.inf
    reason = "explicit k-set"

    def record(k1, k2, u):
        nonlocal floor
        if k2 == 0:
            return
        nrm = math.sqrt(sum(x * x for x in mat_pow(fs, k1).apply(u)))
        floor = min(floor, nrm / (sp.rho ** abs(k1) * math.sqrt(abs(k2)) * vnorm ** (-n1)))

    if isinstance(k_set, str):
        if k_set == "Z2":
            a = weighted_sum_unipotent(phi, v, f, q, "K+", patience, k2_max, True)
            b = weighted_sum_unipotent(phi, v, f, q, "K-", patience, k2_max, True)
            out = UnipotentSumReport(a.value + b.value, a.terms + b.terms, (b.k2_range[0], a.k2_range[1]),
                                     min(a.growth_floor, b.growth_floor), a.stop_reason + "; " + b.stop_reason)
            return out if report else out.value
        direction = 1 if k_set == "K+" else -1
        k2 = 0 if direction == 1 else -1
        quiet = 0
        u = v if direction == 1 else qs.inv().apply(v)
        qstep = qs if direction == 1 else qs.inv()
        lo = hi = k2
        reason = "k2 cap reached"
        while abs(k2) <= k2_max:
            hits, min_norm = _orbit_hits(u, fs, fs_inv, lookup, radius)
            for k1, c in hits:
                acc = acc + finv(k1 + 1) @ (qinv(k2 + 1) @ c)
                terms += 1
                record(k1, k2, u)
            if k2 != 0:
                floor = min(floor, min_norm / (math.sqrt(abs(k2)) * vnorm ** (-n1)))
            lo, hi = min(lo, k2), max(hi, k2)
            quiet = quiet + 1 if min_norm > radius else 0
            if quiet >= patience:
                reason = f"orbit minimum above support radius for {patience} consecutive k2"
                break
            u = qstep.apply(u)
            k2 += direction
        out = UnipotentSumReport(acc, terms, (lo, hi), floor, reason)
        return out if report else out.value
    ks = list(k_set)
    for k1, k2 in ks:
        u = mat_pow(fs, k1).apply(mat_pow(qs, k2).apply(v))
        c = lookup.get(u)
        if c is not None:
            acc = acc + finv(k1 + 1) @ (qinv(k2 + 1) @ c)
            terms += 1
            record(k1, k2, mat_pow(qs, k2).apply(v))
    k2s = [k[1] for k in ks] or [0]
    out = UnipotentSumReport(acc, terms, (min(k2s), max(k2s)), floor, reason)
    return out if report else out.value


# ---------------------------------------------------------------------------
# tame estimates
# ---------------------------------------------------------------------------

@dataclass
class TameFit:
    a: float
    sigma: float
    constant: float
    table: list[tuple[float, float]]      # (sigma, max ratio)


def fit_tame_exponent(pairs: list[tuple[FourierMap, FourierMap]], a: float = 2.0, c_target: float = 1.0,
                      sigmas=None) -> TameFit:
    """Smallest sigma on a grid with max_i ||w_i||_a / ||theta_i||_{a+sigma} <= c_target."""
    if sigmas is None:
        sigmas = np.arange(0.0, 16.01, 0.25)
    table = []
    chosen = None
    for s in sigmas:
        ratios = []
        for theta, omega in pairs:
            den = norm_a(theta, a + s)
            num = norm_a(omega, a)
            if den > 0:
                ratios.append(num / den)
        r = max(ratios) if ratios else 0.0
        table.append((float(s), r))
        if chosen is None and r <= c_target:
            chosen = (float(s), r)
    if chosen is None:
        chosen = (float(sigmas[-1]), table[-1][1])
    return TameFit(a, chosen[0], chosen[1], table)


def random_coboundary(n_seed: int, p: IntMatrix, q: IntMatrix, radius: float = 4, count: int = 5,
                      exact: bool = True) -> tuple[FourierMap, FourierMap]:
    """(theta, omega0) with theta = P omega0 - omega0 o Q and omega0 free of the zero frequency."""
    from .fourier import random_map

    om = random_map(q.dim, p.dim, radius, count, 1.0, n_seed, exact)
    return twisted_coboundary(om, p, q), om
