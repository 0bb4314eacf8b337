"""Dual orbits: classification, minimal points, the set E_F and the displacement verifiers."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from . import kernels
from .algebra import commutator_chain
from .intmat import IntMatrix, dual_map, is_ergodic, mat_mul, mat_pow
from .spectral import SpectralSplit, integer_ball, split as spectral_split

NEAR_TIE = 1e-9
DOMINANCE = 1e3
MAX_WINDOW = 4000


class NoTransitionError(RuntimeError):
    pass


@dataclass(frozen=True)
class Tag:
    kind: str       # "mostly" or "absolutely"
    index: int

    def __str__(self) -> str:
        return f"{self.kind}-in {self.index}"


def _exact_norms(v, sp: SpectralSplit) -> list:
    return sp.proj_norms_mp(v)


def _tie_eps(sp: SpectralSplit):
    return mpmath.mpf(10) ** (-(2 * sp.precision - 8))


def _norms_with_ties(v, sp: SpectralSplit) -> tuple[np.ndarray, set[tuple[int, int]]]:
    """Float projection norms plus the set of index pairs that tie exactly."""
    nrm = sp.proj_norms(np.asarray(v, dtype=np.float64))[0]
    ties: set[tuple[int, int]] = set()
    scale = max(float(nrm.max()), 1e-300)
    # only comparisons against the largest projection can change a tag
    near = [(i, j) for i in range(3) for j in range(i + 1, 3)
            if abs(nrm[i] - nrm[j]) <= NEAR_TIE * scale and max(nrm[i], nrm[j]) >= (1 - 2 * NEAR_TIE) * scale]
    if near:
        ex = _exact_norms(v, sp)
        with mpmath.workdps(2 * sp.precision):
            eps = _tie_eps(sp) * max(ex)
            for i, j in near:
                if abs(ex[i] - ex[j]) <= eps:
                    ties.add((i, j))
            nrm = np.array([float(x) for x in ex])
            # keep exact ordering information for near pairs that do not tie
            for i, j in near:
                if (i, j) not in ties and nrm[i] == nrm[j]:
                    if ex[i] > ex[j]:
                        nrm[i] = np.nextafter(nrm[i], np.inf)
                    else:
                        nrm[j] = np.nextafter(nrm[j], np.inf)
    return nrm, ties


def _mostly(nrm, ties, i: int) -> bool:
    top = max(nrm)
    return nrm[i] == top or any(((i, j) in ties or (j, i) in ties) and nrm[j] == top for j in range(3) if j != i)


def _absolutely(nrm, ties, i: int) -> bool:
    if not _mostly(nrm, ties, i):
        return False
    return all(nrm[i] > nrm[j] and (min(i, j), max(i, j)) not in ties for j in range(3) if j != i)


def classify(v, sp: SpectralSplit) -> Tag:
    """argmax_i ||pi_i v||; strict maximum gives "absolutely", ties resolve to the lowest index."""
    if not any(int(x) for x in v):
        raise ValueError("zero vector has no classification")
    nrm, ties = _norms_with_ties(v, sp)
    for i in range(3):
        if _mostly(nrm, ties, i):
            return Tag("absolutely" if _absolutely(nrm, ties, i) else "mostly", i + 1)
    raise AssertionError("unreachable")


def _m3_a12(v, sp: SpectralSplit) -> tuple[bool, bool]:
    nrm, ties = _norms_with_ties(v, sp)
    return _mostly(nrm, ties, 2), _absolutely(nrm, ties, 0) or _absolutely(nrm, ties, 1)


@dataclass
class DualOrbitRecord:
    base: tuple[int, ...]
    map: IntMatrix
    window: list[tuple[int, tuple[int, ...]]]
    minimal_index: int

    @property
    def minimal_point(self) -> tuple[int, ...]:
        return dict(self.window)[self.minimal_index]


def _norm(v) -> float:
    return math.sqrt(float(sum(int(x) * int(x) for x in v)))


def _end_ok(v, sp: SpectralSplit, forward: bool, escape: float) -> bool:
    nrm = sp.proj_norms(np.asarray([float(x) for x in v]))[0]
    if _norm(v) < escape:
        return False
    if forward:
        return max(nrm[0], nrm[1]) >= DOMINANCE * nrm[2]
    return nrm[2] >= DOMINANCE * max(nrm[0], nrm[1])


def orbit_record(v, sp: SpectralSplit, escape_factor: float = 1e6, max_window: int = MAX_WINDOW) -> DualOrbitRecord:
    """Orbit window of v under sp.matrix with the minimal index located."""
    v = tuple(int(x) for x in v)
    if not any(v):
        raise ValueError("zero vector has no dual orbit")
    f = sp.matrix
    finv = f.inv()
    escape = escape_factor * _norm(v)
    fwd = [v]
    while not _end_ok(fwd[-1], sp, True, escape):
        fwd.append(f.apply(fwd[-1]))
        if len(fwd) > max_window:
            raise NoTransitionError("forward window exceeded the configured maximum")
    fwd.append(f.apply(fwd[-1]))
    bwd = [v]
    while not _end_ok(bwd[-1], sp, False, escape):
        bwd.append(finv.apply(bwd[-1]))
        if len(bwd) > max_window:
            raise NoTransitionError("backward window exceeded the configured maximum")
    window = [(-k, p) for k, p in reversed(list(enumerate(bwd)))][:-1] + list(enumerate(fwd))
    flags = [_m3_a12(p, sp) for _, p in window]
    jstar = None
    for idx in range(len(window) - 1):
        if flags[idx][0] and flags[idx + 1][1]:
            jstar = window[idx][0]
            break
    if jstar is None:
        raise NoTransitionError(f"no minimal point on the orbit of {v}")
    return DualOrbitRecord(v, f, window, jstar)


def minimal_point(v, sp: SpectralSplit) -> tuple[int, tuple[int, ...]]:
    """(j*, F^{j*} v): first index where the orbit is mostly in 3 and the next point absolutely in 1,2."""
    rec = orbit_record(v, sp)
    return rec.minimal_index, rec.minimal_point


def transition_indices(rec: DualOrbitRecord, sp: SpectralSplit) -> list[int]:
    """Every index of the window where the orbit is mostly in 3 and the next point absolutely in 1,2."""
    flags = [_m3_a12(p, sp) for _, p in rec.window]
    return [rec.window[i][0] for i in range(len(rec.window) - 1) if flags[i][0] and flags[i + 1][1]]


@dataclass
class UniquenessReport:
    checked: int
    multiple: list[tuple[tuple[int, ...], list[int]]]

    @property
    def ok(self) -> bool:
        return not self.multiple


def uniqueness_on_sample(sample, sp: SpectralSplit) -> UniquenessReport:
    """Orbits of the sample with more than one transition index (the smallest one is used elsewhere)."""
    multiple = []
    n = 0
    for v in sample:
        rec = orbit_record(v, sp)
        idx = transition_indices(rec, sp)
        n += 1
        if len(idx) > 1:
            multiple.append((tuple(int(x) for x in v), idx))
    return UniquenessReport(n, multiple)


def e_set_membership(v, sp: SpectralSplit) -> bool:
    return minimal_point(v, sp)[0] == 0


# ---------------------------------------------------------------------------
# batch minimal points (int64 fast path, exact fallback for near ties/overflow)
# ---------------------------------------------------------------------------

_INT_GUARD = 2 ** 52


def minimal_points_batch(vs, sp: SpectralSplit, escape_factor: float = 1e6) -> tuple[np.ndarray, list[tuple[int, ...]]]:
    """Vectorised minimal_point over many vectors; identical results to the exact path."""
    vs = np.asarray(vs, dtype=np.int64)
    k, n = vs.shape
    if k == 0:
        return np.zeros(0, dtype=np.int64), []
    f = np.array(sp.matrix.entries, dtype=np.int64)
    finv = np.array(sp.matrix.inv().entries, dtype=np.int64)
    fmax = max(int(np.abs(f).max()), int(np.abs(finv).max()))
    guard = _INT_GUARD // (n * fmax)
    base_norm = np.sqrt((vs.astype(np.float64) ** 2).sum(axis=1))
    escape = escape_factor * base_norm

    def walk(mat, forward):
        pts = [vs.copy()]
        done = np.zeros(k, dtype=bool)
        bad = np.zeros(k, dtype=bool)
        while True:
            cur = pts[-1]
            nrm = sp.proj_norms(cur.astype(np.float64))
            big = np.sqrt((cur.astype(np.float64) ** 2).sum(axis=1)) >= escape
            if forward:
                dom = np.maximum(nrm[:, 0], nrm[:, 1]) >= DOMINANCE * nrm[:, 2]
            else:
                dom = nrm[:, 2] >= DOMINANCE * np.maximum(nrm[:, 0], nrm[:, 1])
            done |= big & dom
            if done.all() or len(pts) > MAX_WINDOW:
                break
            bad |= np.abs(cur).max(axis=1) > guard
            if (done | bad).all():
                break
            pts.append(cur @ mat.T)
        return pts, done, bad

    fw, fdone, fbad = walk(f, True)
    last = fw[-1]
    if not (np.abs(last).max(axis=1) > guard).any():
        fw.append(last @ f.T)
    else:
        fbad |= np.abs(last).max(axis=1) > guard
    bw, bdone, bbad = walk(finv, False)
    stack = bw[:0:-1] + fw          # indices -(len(bw)-1) .. len(fw)-1
    offset = len(bw) - 1
    arr = np.stack(stack, axis=1).astype(np.float64)            # (k, L, n)
    nrm = np.stack([np.linalg.norm(arr @ p.T, axis=2) for p in sp.proj], axis=2)  # (k, L, 3)
    scale = np.maximum(nrm.max(axis=2), 1e-300)
    m3 = nrm[:, :, 2] >= np.maximum(nrm[:, :, 0], nrm[:, :, 1])
    a12 = ((nrm[:, :, 0] > np.maximum(nrm[:, :, 1], nrm[:, :, 2]))
           | (nrm[:, :, 1] > np.maximum(nrm[:, :, 0], nrm[:, :, 2])))
    srt = np.sort(nrm, axis=2)
    near = (srt[:, :, 2] - srt[:, :, 1]) <= NEAR_TIE * scale
    cand = m3[:, :-1] & a12[:, 1:]
    has = cand.any(axis=1)
    first = np.argmax(cand, axis=1)
    # rows whose decision could be affected by a near tie before (or at) the transition
    idx = np.arange(arr.shape[1])[None, :]
    touched = (near & (idx <= (first + 1)[:, None])).any(axis=1)
    exact_rows = ~has | touched | ~fdone | ~bdone | fbad | bbad
    jstar = first - offset
    points: list[tuple[int, ...]] = [None] * k
    for r in range(k):
        if exact_rows[r]:
            j, p = minimal_point(tuple(int(x) for x in vs[r]), sp)
            jstar[r] = j
            points[r] = p
        else:
            points[r] = tuple(int(x) for x in stack[first[r]][r])
    return jstar.astype(np.int64), points


# ---------------------------------------------------------------------------
# Katznelson floor and orbit norm checks
# ---------------------------------------------------------------------------

def katznelson_floor(sp: SpectralSplit, sample_radius: float) -> float:
    """min over the ball of ||pi_i v|| * ||v||^N for i in {1, 3}."""
    if sp.dims[0] == 0 or sp.dims[2] == 0:
        raise ValueError("Katznelson floor needs both expanding and contracting directions")
    return kernels.ball_floor(sp.proj[0], sp.proj[2], sample_radius, sp.dim)


def orbit_growth_constant(rec: DualOrbitRecord, sp: SpectralSplit) -> float:
    """Largest C with ||F^j v|| >= C rho^{|j - j*|} ||v||^{-N} over the window."""
    n = sp.dim
    vnorm = _norm(rec.base)
    best = math.inf
    for j, p in rec.window:
        val = _norm(p) * vnorm ** n / sp.rho ** abs(j - rec.minimal_index)
        best = min(best, val)
    return best


def write_orbit_csv(records: list[DualOrbitRecord], sp: SpectralSplit, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# torikam orbit report v1: base,j,point,norm_pi1,norm_pi2,norm_pi3,tag,minimal\n")
        w = csv.writer(fh)
        w.writerow(["base", "j", "point", "norm_pi1", "norm_pi2", "norm_pi3", "tag", "minimal"])
        for rec in records:
            for j, p in rec.window:
                nrm = sp.proj_norms(np.asarray([float(x) for x in p]))[0]
                w.writerow([" ".join(map(str, rec.base)), j, " ".join(map(str, p)),
                            f"{nrm[0]:.12e}", f"{nrm[1]:.12e}", f"{nrm[2]:.12e}",
                            str(classify(p, sp)), int(j == rec.minimal_index)])


# ---------------------------------------------------------------------------
# displacement (one-step) and E-set exclusion verifiers
# ---------------------------------------------------------------------------

def sample_ball(n: int, radius: float, count: int, seed: int = 0) -> np.ndarray:
    """Deterministic random nonzero integer vectors in the Euclidean ball."""
    rng = np.random.default_rng(seed)
    r = int(math.floor(radius))
    out = []
    seen = set()
    while len(out) < count:
        cand = rng.integers(-r, r + 1, size=(4 * count, n))
        for c in cand:
            s = int((c * c).sum())
            t = tuple(int(x) for x in c)
            if 0 < s <= radius * radius and t not in seen:
                seen.add(t)
                out.append(t)
                if len(out) == count:
                    break
    return np.array(out, dtype=np.int64)


def sample_e_set(sp: SpectralSplit, radius: float, count: int, seed: int = 0) -> list[tuple[int, ...]]:
    """Minimal points of random ball vectors (deduplicated, order of first appearance)."""
    _, pts = minimal_points_batch(sample_ball(sp.dim, radius, count, seed), sp)
    seen = set()
    out = []
    for p in pts:
        if p not in seen:
            seen.add(p)
            out.append(p)
    return out


@dataclass
class DisplacementReport:
    n: int
    depth: int
    checked: int
    violations: list[tuple[tuple[int, ...], str, int, int]]   # (v, x name, i, j)
    j_histogram: dict[int, int] = field(default_factory=dict)
    label: str = ""

    @property
    def ok(self) -> bool:
        return not self.violations


def _dual_chain(a_n: IntMatrix, x: IntMatrix, depth: int) -> list[IntMatrix]:
    return [dual_map(d) for d in commutator_chain(a_n, x, depth)]


def verify_displacement(a: IntMatrix, xs: dict[str, IntMatrix], n: int, sample, depth: int = 1,
                        sp: SpectralSplit | None = None) -> DisplacementReport:
    """Minimal index of D_i(A^n, x) v for samples v in E_{A^n} (dual action); expects j in {0, +-1}."""
    if n < 1:
        raise ValueError("n must be >= 1")
    sp_n = (sp or spectral_split(dual_map(a))).power(n)
    a_n = mat_pow(a, n)
    sample = [tuple(int(x) for x in v) for v in sample]
    violations = []
    hist: dict[int, int] = {}
    checked = 0
    for name, x in xs.items():
        for i, d in enumerate(_dual_chain(a_n, x, depth), start=1):
            imgs = np.array([d.apply(v) for v in sample], dtype=object)
            if max((abs(int(c)) for row in imgs for c in row), default=0) < 2 ** 40:
                js, _ = minimal_points_batch(imgs.astype(np.int64), sp_n)
            else:
                js = [minimal_point(w, sp_n)[0] for w in imgs]
            for v, j in zip(sample, js):
                j = int(j)
                hist[j] = hist.get(j, 0) + 1
                checked += 1
                if abs(j) > 1:
                    violations.append((v, name, i, j))
    rep = DisplacementReport(n, depth, checked, violations, dict(sorted(hist.items())))
    rep.label = "ok" if rep.ok else "below N1 threshold"
    return rep


def displacement_search(a: IntMatrix, xs: dict[str, IntMatrix], n_max: int = 50, radius: float = 30,
                        count: int = 400, depth: int = 1, seed: int = 0) -> tuple[int | None, list[DisplacementReport]]:
    """Smallest n <= n_max with zero violations on a fresh E_{A^n} sample."""
    sp = spectral_split(dual_map(a))
    base = sample_ball(a.dim, radius, count, seed)
    reports = []
    for n in range(1, n_max + 1):
        sp_n = sp.power(n)
        _, pts = minimal_points_batch(base, sp_n)
        sample = list(dict.fromkeys(pts))
        rep = verify_displacement(a, xs, n, sample, depth, sp)
        reports.append(rep)
        if rep.ok:
            return n, reports
    return None, reports


@dataclass
class ESetReport:
    n: int
    checked: int
    violations: list[tuple]

    @property
    def ok(self) -> bool:
        return not self.violations


def _sign_patterns(max_total: int, min_total: int):
    for js in itertools.product(range(-max_total, max_total + 1), repeat=3):
        tot = sum(abs(j) for j in js)
        if tot < min_total or tot > max_total:
            continue
        if all(j >= 0 for j in js) or all(j <= 0 for j in js):
            yield js


def verify_e_set_criteria(a: IntMatrix, xs: dict[str, IntMatrix], n: int, sample, depth: int = 1,
                          max_total: int = 4, sp: SpectralSplit | None = None) -> ESetReport:
    """Exclusion rules for words d(i1)(A^n d(l1))^j1 d(i2)(A^n d(l2))^j2 (A^n d(l3))^j3 applied to E_{A^n}."""
    sp_n = (sp or spectral_split(dual_map(a))).power(n)
    a_n = mat_pow(a, n)
    fdual = dual_map(a_n)
    sample = [tuple(int(x) for x in v) for v in sample]
    violations = []
    checked = 0

    def minimal_index(w):
        return minimal_point(w, sp_n)[0]

    for name, x in xs.items():
        ds = _dual_chain(a_n, x, depth)
        steps = [mat_mul(fdual, d) for d in ds]
        for i1, i2, l1, l2, l3 in itertools.product(range(depth), repeat=5):
            for js in _sign_patterns(max_total, 2):
                word = mat_mul(mat_mul(mat_mul(ds[i1], mat_pow(steps[l1], js[0])), ds[i2]),
                               mat_mul(mat_pow(steps[l2], js[1]), mat_pow(steps[l3], js[2])))
                nonneg = all(j >= 0 for j in js)
                tot = sum(abs(j) for j in js)
                for v in sample:
                    z = minimal_index(word.apply(v))
                    checked += 1
                    # membership means minimal index 0; otherwise A^{nz} w is in E exactly for z = j*
                    if z == 0:
                        violations.append(("for42a", name, (i1, i2, l1, l2, l3), js, v, z))
                    elif tot >= 3 and ((nonneg and z > -2) or (not nonneg and z < 2)):
                        violations.append(("for42b", name, (i1, i2, l1, l2, l3), js, v, z))
        # second family: v = F^{-m} u with u in E
        for i1, l1 in itertools.product(range(depth), repeat=2):
            for m in (1, 2, -2, -3):
                for j1 in range(-max_total, max_total + 1):
                    word = mat_mul(ds[i1], mat_pow(steps[l1], j1))
                    for u in sample:
                        v = mat_pow(fdual, -m).apply(u)
                        z = minimal_index(word.apply(v))
                        checked += 1
                        if m >= 1:
                            if j1 <= -1 and z == 0:
                                violations.append(("for68a", name, (i1, l1), m, j1, u, z))
                            if j1 <= -1 and z < 1:
                                violations.append(("for68b", name, (i1, l1), m, j1, u, z))
                        else:
                            if j1 >= 0 and z == 0:
                                violations.append(("for68a", name, (i1, l1), m, j1, u, z))
                            if j1 >= 1 and z > -2:
                                violations.append(("for68b", name, (i1, l1), m, j1, u, z))
    return ESetReport(n, checked, violations)
