"""KAM iteration for perturbed actions by toral automorphisms.

A perturbed action assigns to every registered group element g the map
x -> g x + R_g(x). One step splits the perturbation of the ergodic generator
into a twisted coboundary plus an E-set remainder, conjugates every element
by H = I - Omega and re-measures. Remainders are then quadratically small
when the perturbations come from a genuine action.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import orbits
from .algebra import ActionSpec, PreconditionError, commutator, commutator_chain
from .cohomology import (
    ObstructionError,
    _Powers,
    group_orbits,
    obstruction_at,
    solve_twisted,
    weighted_sum_unipotent,
)
from .families import square_zero_checks
from .fourier import (
    ContractionError,
    FourierMap,
    _abs_array,
    compose_auto,
    compose_nonlinear,
    cr_proxy,
    invert_near_identity,
    norm_a,
    prune,
    random_map,
    truncate,
)
from .intmat import IntMatrix, dual_map, is_ergodic, mat_mul, mat_pow
from .spectral import split as spectral_split

PRUNE_TOL = 1e-16


class SmallnessGateError(RuntimeError):
    def __init__(self, value: float, threshold: float):
        super().__init__(f"C^1 proxy {value:.3e} exceeds the smallness gate {threshold:.3e}")
        self.value = value
        self.threshold = threshold


class MissingPerturbationError(KeyError):
    pass


class HypothesisError(PreconditionError):
    pass


def opnorm(m: IntMatrix) -> float:
    return float(np.linalg.norm(m.to_float(), 2))


def _lin(m: IntMatrix, theta: FourierMap) -> FourierMap:
    return theta.apply_matrix(m)


def delta(omega: FourierMap, g: IntMatrix) -> FourierMap:
    """Delta_g omega = g omega - omega o g."""
    return omega.apply_matrix(g) - compose_auto(omega, g)


# ---------------------------------------------------------------------------
# perturbed actions
# ---------------------------------------------------------------------------

@dataclass
class PerturbedAction:
    base: ActionSpec
    perturbations: dict[str, FourierMap]
    trunc_radius: float | None = None
    grid_size: int | None = None
    gate: float | None = None
    ergodic: str | None = None
    l: int = 1
    extra: dict[str, IntMatrix] = field(default_factory=dict)
    method: str = "auto"
    source: FourierMap | None = None         # Omega0 when built by conjugation
    discarded: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.ergodic is None:
            wit = [w for w in self.base.ergodic_witnesses if w in self.base.generators]
            self.ergodic = wit[0] if wit else self.base.names()[0]
        n = self.base.dim
        for name, r in self.perturbations.items():
            if r.dim_in != n or r.dim_out != n:
                raise ValueError(f"perturbation of {name} must map T^{n} to R^{n}")

    @property
    def dim(self) -> int:
        return self.base.dim

    def elements(self) -> dict[str, IntMatrix]:
        out = self.base.all_elements()
        out.update(self.extra)
        return out

    def matrix(self, name: str) -> IntMatrix:
        el = self.elements()
        if name not in el:
            raise MissingPerturbationError(name)
        return el[name]

    def name_of(self, m: IntMatrix) -> str | None:
        for name, g in self.elements().items():
            if g == m:
                return name
        return None

    def perturbation(self, name: str) -> FourierMap:
        if name not in self.perturbations:
            raise MissingPerturbationError(name)
        return self.perturbations[name]

    @property
    def solved(self) -> str:
        """Name of the rescaled ergodic generator A^l."""
        return self.ergodic if self.l == 1 else f"{self.ergodic}^{self.l}"

    def gate_threshold(self) -> float:
        return self.gate if self.gate is not None else 1e-2 / opnorm(self.matrix(self.ergodic))

    def gate_value(self) -> float:
        return max((cr_proxy(r, 1) for r in self.perturbations.values()), default=0.0)

    def error(self) -> float:
        return max((cr_proxy(r, 0) + self.discarded.get(k, 0.0) for k, r in self.perturbations.items()), default=0.0)

    def replace(self, perturbations: dict[str, FourierMap], discarded: dict[str, float] | None = None) -> "PerturbedAction":
        return PerturbedAction(self.base, perturbations, self.trunc_radius, self.grid_size, self.gate, self.ergodic,
                               self.l, dict(self.extra), self.method, self.source, dict(discarded or {}))


def _compose(theta: FourierMap, omega: FourierMap, pa: PerturbedAction | None = None, radius=None,
             method: str | None = None, sink: list | None = None) -> FourierMap:
    """theta o (I + omega), pruned; mass dropped beyond `radius` is appended to `sink`."""
    if not len(theta) or not len(omega):
        return theta
    meth = method or (pa.method if pa is not None else "auto")
    grid = pa.grid_size if pa is not None else None
    if radius is None and pa is not None:
        radius = pa.trunc_radius
    res, rep = compose_nonlinear(theta.to_float(), omega.to_float(), grid_size=grid, radius=radius, method=meth)
    if sink is not None:
        sink.append(rep.discarded)
    return prune(res, PRUNE_TOL)


def _cleanup(r: FourierMap, radius) -> tuple[FourierMap, float]:
    small = prune(r, PRUNE_TOL)
    lost = cr_proxy(r - small, 0) if len(small) != len(r) else 0.0
    if radius is None:
        return small, lost
    kept, disc = truncate(small, radius)
    return kept, lost + disc


def register_rescaling(spec: ActionSpec, ergodic: str, l: int) -> dict[str, IntMatrix]:
    extra = {}
    if l != 1:
        extra[f"{ergodic}^{l}"] = mat_pow(spec.generators[ergodic], l)
    return extra


def conjugated_action(base: ActionSpec, omega0: FourierMap, trunc_radius: float | None = None,
                      grid_size: int | None = None, method: str = "auto", ergodic: str | None = None, l: int = 1,
                      gate: float | None = None) -> PerturbedAction:
    """alpha~(g) = (I + Omega0)^-1 o g o (I + Omega0) for every element of the spec.

    With (I + Omega0)^-1 = I + Psi0 this is R_g = g Omega0 + (Psi0 o g) o (I + Omega0).
    """
    omega0 = omega0.to_float()
    psi0, _ = invert_near_identity(omega0, grid_size=grid_size, tol=1e-16, radius=trunc_radius)
    skel = PerturbedAction(base, {}, trunc_radius, grid_size, gate, ergodic, l, {}, method, omega0)
    skel.extra = register_rescaling(base, skel.ergodic, l)
    perts, disc = {}, {}
    for name, g in skel.elements().items():
        sink: list = []
        r = omega0.apply_matrix(g) + _compose(compose_auto(psi0, g), omega0, skel, sink=sink)
        perts[name], disc[name] = _cleanup(r, trunc_radius)
        disc[name] += sum(sink)
    skel.perturbations = perts
    skel.discarded = disc
    return skel


def random_omega(n: int, radius: float = 1.5, count: int = 3, seed: int = 0) -> FourierMap:
    """Zero-mean real displacement with a few low modes, normalised to unit C^0 proxy."""
    om = random_map(n, n, radius=radius, count=count, amplitude=1.0, seed=seed)
    om = FourierMap(om.dim_in, om.dim_out, om.freqs[om.freqs.any(axis=1)], om.coeffs[om.freqs.any(axis=1)], False)
    return om.scale(1.0 / cr_proxy(om, 0))


def conjugated_family(base: ActionSpec, eps: float, seed: int = 0, radius: float = 1.5, count: int = 3,
                      **kw) -> PerturbedAction:
    """Conjugated action with max_g of the C^1 proxy of R_g close to eps.

    The scale is calibrated on the linear part g Omega0 - Omega0 o g, which is
    exact and cheap, so only one nonlinear build is needed; the achieved size
    is pa.gate_value().
    """
    om = random_omega(base.dim, radius, count, seed)
    lin = max(cr_proxy(delta(om, g), 1) for g in base.all_elements().values())
    t = eps / lin if lin > 0 else eps
    return conjugated_action(base, om.scale(t), **kw)


def scaled_perturbations(pa: PerturbedAction, t: float) -> PerturbedAction:
    return pa.replace({k: r.scale(t) for k, r in pa.perturbations.items()}, {k: v * t for k, v in pa.discarded.items()})


# ---------------------------------------------------------------------------
# perturbations of products and inverses
# ---------------------------------------------------------------------------

def product_perturbation(pa: PerturbedAction, rx: FourierMap, x: IntMatrix, ry: FourierMap, y: IntMatrix) -> FourierMap:
    """R_{xy} = x R_y + (R_x o y) o (I + y^-1 R_y)."""
    return ry.apply_matrix(x) + _compose(compose_auto(rx, y), ry.apply_matrix(y.inv()), pa, pa.trunc_radius)


def inverse_perturbation(pa: PerturbedAction, rx: FourierMap, x: IntMatrix, tol: float = 1e-16,
                         max_iter: int = 40) -> FourierMap:
    """R' = -x^-1 (R_x o x^-1) o (I + x R') by fixed-point iteration."""
    xi = x.inv()
    a = compose_auto(rx, xi).apply_matrix(xi)
    r = -a
    for _ in range(max_iter):
        new = -_compose(a, r.apply_matrix(x), pa, pa.trunc_radius)
        change = cr_proxy(new - r, 0)
        r = new
        if change <= tol:
            break
    return r


def extend_perturbations(pa: PerturbedAction) -> PerturbedAction:
    """Register A^l and the commutator chain of the spec, composing perturbations where missing."""
    perts = dict(pa.perturbations)
    extra = dict(pa.extra)
    extra.update(register_rescaling(pa.base, pa.ergodic, pa.l))
    out = pa.replace(perts, pa.discarded)
    out.extra = extra
    g = pa.matrix(pa.ergodic)
    if out.solved not in perts:
        acc, racc = g, perts[pa.ergodic]
        for _ in range(pa.l - 1):
            racc = product_perturbation(out, racc, acc, perts[pa.ergodic], g)
            acc = mat_mul(acc, g)
        perts[out.solved] = racc
    al = out.matrix(out.solved)
    for name, d in pa.base.d_chain:
        if name in perts:
            continue
        # d = al^-1 prev^-1 al prev, where prev is the preceding chain element
        prev_name = _chain_predecessor(out, name)
        prev = out.matrix(prev_name)
        ri = inverse_perturbation(out, perts[out.solved], al)
        rpi = inverse_perturbation(out, perts[prev_name], prev)
        r1 = product_perturbation(out, ri, al.inv(), rpi, prev.inv())
        r2 = product_perturbation(out, perts[out.solved], al, perts[prev_name], prev)
        perts[name] = product_perturbation(out, r1, mat_mul(al.inv(), prev.inv()), r2, mat_mul(al, prev))
    out.perturbations = perts
    return out


def _chain_predecessor(pa: PerturbedAction, name: str) -> str:
    names = [n for n, _ in pa.base.d_chain]
    i = names.index(name)
    if i > 0:
        return names[i - 1]
    others = [n for n in pa.base.names() if n != pa.ergodic]
    return others[0]


# ---------------------------------------------------------------------------
# cocycle difference
# ---------------------------------------------------------------------------

def cocycle_difference(pa: PerturbedAction, x: str, y: str) -> FourierMap:
    """L(x,y) = R_x o y + x R_y - R_y o (xz) - y R_x o z - (yx) R_z with z = x^-1 y^-1 x y.

    Every composition is with a linear map, so the result is exact on coefficients.
    """
    xm, ym = pa.matrix(x), pa.matrix(y)
    rx, ry = pa.perturbation(x), pa.perturbation(y)
    z = commutator(xm, ym)
    if z.is_identity():
        rz = FourierMap.zero(pa.dim, exact=rx.exact)
    else:
        zname = pa.name_of(z)
        if zname is None:
            raise MissingPerturbationError(f"commutator of {x} and {y} is not a registered element")
        rz = pa.perturbation(zname)
    xz = mat_mul(xm, z)
    yx = mat_mul(ym, xm)
    return (compose_auto(rx, ym) + ry.apply_matrix(xm) - compose_auto(ry, xz)
            - compose_auto(rx.apply_matrix(ym), z) - rz.apply_matrix(yx))


def relation_pairs(pa: PerturbedAction) -> list[tuple[str, str]]:
    """(A^l, d) for every other generator and chain element whose commutator is registered."""
    a = pa.solved
    out = []
    for name in list(pa.base.names()) + [n for n, _ in pa.base.d_chain]:
        if name in (a, pa.ergodic) or name not in pa.perturbations:
            continue
        z = commutator(pa.matrix(a), pa.matrix(name))
        if z.is_identity() or pa.name_of(z) in pa.perturbations:
            out.append((a, name))
    return out


@dataclass
class SlopeReport:
    slope: float | None
    table: list[tuple[float, float]]
    verdict: str


def quadratic_smallness_check(pa: PerturbedAction, scales=(1e-2, 1e-3, 1e-4), pairs=None) -> SlopeReport:
    """log-log slope of max ||L||_0 against the scale of the generating perturbation."""
    table = []
    for t in scales:
        if pa.source is not None:
            q = conjugated_action(pa.base, pa.source.scale(t / max(cr_proxy(pa.source, 0), 1e-300)),
                                  pa.trunc_radius, pa.grid_size, pa.method, pa.ergodic, pa.l, pa.gate)
        else:
            q = scaled_perturbations(pa, t)
        prs = pairs or relation_pairs(q)
        lmax = max((cr_proxy(cocycle_difference(q, x, y), 0) for x, y in prs), default=0.0)
        table.append((float(t), lmax))
    vals = [(t, v) for t, v in table if v > 0]
    if not vals:
        return SlopeReport(None, table, "identically small")
    if len(vals) < 2:
        return SlopeReport(None, table, "too few nonzero samples")
    slope = float(np.polyfit(np.log([t for t, _ in vals]), np.log([v for _, v in vals]), 1)[0])
    return SlopeReport(slope, table, "quadratic" if slope >= 1.9 else "not quadratic")


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------

def project_to_e_set(r: FourierMap, a: IntMatrix, tol: float | None = None) -> tuple[FourierMap, FourierMap]:
    """(rr, omega) with rr on minimal points and a omega - omega o a = r - rr.

    rr_u = sum_i a^-i r^_{a*^i u} over the dual orbit of u, i.e. a times the
    orbit obstruction; the zero frequency is left to omega.
    """
    if not is_ergodic(a):
        raise PreconditionError("splitting needs an ergodic automorphism")
    n = r.dim_in
    if not len(r):
        z = FourierMap.zero(n, r.dim_out, r.exact)
        return z, z
    groups, _ = group_orbits(r, a)
    exact = r.exact
    amat = _Powers(a, exact)
    ainv = _Powers(a.inv(), exact)
    freqs, coeffs = [], []
    for g in groups:
        acc = None
        for k, c in g.terms.items():
            term = ainv(k) @ c
            acc = term if acc is None else acc + term
        freqs.append(g.anchor)
        coeffs.append(acc)
    if freqs:
        rr = FourierMap(n, r.dim_out, np.array(freqs, np.int64), np.array(coeffs, dtype=object if exact else np.complex128), exact)
    else:
        rr = FourierMap.zero(n, r.dim_out, exact)
    if tol is None:
        tol = 0.0 if exact else 1e-9 * max(cr_proxy(r, 0), 1e-300)
    try:
        omega = solve_twisted(r - rr, a, a, tol=tol)
    except ObstructionError as e:      # pragma: no cover - rr absorbs every obstruction by construction
        raise AssertionError(f"E-set projection left an obstruction: {e}") from e
    return rr, omega


@dataclass
class SplitResult:
    omega: FourierMap
    remainders: dict[str, FourierMap]
    kind: str
    l: int
    ledger: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)


def reconstruction_defect(pa: PerturbedAction, s: SplitResult) -> dict[str, float]:
    """max |R_g - Delta_g Omega - RR_g| per element (0.0 in exact mode)."""
    out = {}
    for name, r in pa.perturbations.items():
        d = r - delta(s.omega, pa.matrix(name)) - s.remainders[name]
        out[name] = float(_abs_array(d.coeffs).max()) if len(d) else 0.0
    return out


def _remainders(pa: PerturbedAction, omega: FourierMap, rr: FourierMap) -> dict[str, FourierMap]:
    out = {}
    for name, r in pa.perturbations.items():
        if name == pa.solved:
            out[name] = rr
        else:
            out[name] = r - delta(omega, pa.matrix(name))
    return out


def _ledger(pa: PerturbedAction, omega: FourierMap, rem: dict[str, FourierMap]) -> dict:
    led = {"omega_c0": cr_proxy(omega, 0), "omega_c1": cr_proxy(omega, 1),
           "input": {k: cr_proxy(r, 0) for k, r in pa.perturbations.items()},
           "remainder": {k: cr_proxy(r, 0) for k, r in rem.items()}, "L": {}}
    for x, y in relation_pairs(pa):
        try:
            led["L"][f"{x},{y}"] = cr_proxy(cocycle_difference(pa, x, y), 0)
        except MissingPerturbationError:
            pass
    return led


def split_abelian(pa: PerturbedAction) -> SplitResult:
    """Ergodic generator commuting with every registered element."""
    a = pa.matrix(pa.solved)
    for name in pa.perturbations:
        if mat_mul(a, pa.matrix(name)) != mat_mul(pa.matrix(name), a):
            raise HypothesisError(f"{name} does not commute with {pa.solved}")
    rr, omega = project_to_e_set(pa.perturbation(pa.solved), a)
    rem = _remainders(pa, omega, rr)
    return SplitResult(omega, rem, "abelian", pa.l, _ledger(pa, omega, rem))


def split_nilpotent(pa: PerturbedAction) -> SplitResult:
    """Split along A^l; remainders of the chain elements d_i are R_{d_i} - Delta_{d_i} Omega."""
    al = pa.matrix(pa.solved)
    others = [n for n in pa.base.names() if n != pa.ergodic]
    if not others:
        raise HypothesisError("nilpotent split needs a second generator")
    d0 = pa.matrix(others[0])
    depth = pa.base.nilpotency_length or 4
    chain = [d for d in commutator_chain(al, d0, depth + 1) if not d.is_identity()]
    if len(chain) > depth:
        raise HypothesisError("commutator chain does not terminate; the action is not nilpotent")
    for d in chain:
        if pa.name_of(d) is None:
            raise HypothesisError(f"chain element {d} is not registered")
    rr, omega = project_to_e_set(pa.perturbation(pa.solved), al)
    rem = _remainders(pa, omega, rr)
    return SplitResult(omega, rem, "nilpotent", pa.l, _ledger(pa, omega, rem))


def _fixed_complement_projector(u: IntMatrix) -> np.ndarray:
    """Orthogonal projector onto the complement of ker(u* - I) in frequency space."""
    m = dual_map(u).to_float() - np.eye(u.dim)
    # row space of (u* - I) is the orthogonal complement of its kernel
    q, s, vt = np.linalg.svd(m)
    rank = int((s > 1e-9).sum())
    b = vt[:rank].T
    return b @ b.T


def split_abelian_unipotent(pa: PerturbedAction, diag_samples: int = 8) -> SplitResult:
    """A1 ergodic with square-zero unipotents A_i commuting with it and no common fixed vector."""
    a1 = pa.matrix(pa.ergodic)
    if pa.l != 1:
        a1 = pa.matrix(pa.solved)
    uni = {n: pa.base.generators[n] for n in pa.base.names() if n != pa.ergodic}
    checks = square_zero_checks(a1, uni)
    bad = [k for k, v in checks.items() if v is False]
    if bad or checks["dual_fixed_intersection_dim"] != 0:
        raise HypothesisError(f"abelian-unipotent hypotheses fail: {bad or checks}")
    rr, omega = project_to_e_set(pa.perturbation(pa.solved), a1)
    rem = _remainders(pa, omega, rr)
    led = _ledger(pa, omega, rem)
    led["hypotheses"] = checks
    projectors = {n: _fixed_complement_projector(u) for n, u in uni.items()}
    diags = []
    lmaps = {}
    a1inv = a1.inv().to_object() if rr.exact else np.linalg.inv(a1.to_float())
    order = np.argsort(-_abs_array(rr.coeffs).max(axis=1)) if len(rr) else []
    for idx in list(order)[:diag_samples]:
        u = tuple(int(x) for x in rr.freqs[idx])
        if not any(u):
            continue
        scores = {n: float(np.linalg.norm(p @ np.array(u, float))) for n, p in projectors.items()}
        i0 = max(scores, key=scores.get)
        if dual_map(uni[i0]).apply(u) == u:
            raise AssertionError("router found no generator moving the frequency")
        if i0 not in lmaps:
            lmaps[i0] = cocycle_difference(pa, pa.solved, i0)
        s = weighted_sum_unipotent(lmaps[i0], u, a1, uni[i0], "K+", report=True)
        lhs = a1inv @ rr.coeffs[idx]
        gap = float(_abs_array(np.atleast_2d(lhs + s.value)).max())
        diags.append({"u": u, "router": i0, "remainder": float(_abs_array(np.atleast_2d(rr.coeffs[idx])).max()),
                      "identity_gap": gap, "terms": s.terms, "stop": s.stop_reason})
    return SplitResult(omega, rem, "abelian-unipotent", pa.l, led, diags)


def split_kind(pa: PerturbedAction) -> str:
    a = pa.matrix(pa.solved)
    gens = {n: g for n, g in pa.base.generators.items() if n != pa.ergodic}
    if all(mat_mul(a, g) == mat_mul(g, a) for g in gens.values()):
        if gens:
            checks = square_zero_checks(a, gens)
            if all(v for k, v in checks.items() if k.startswith("square_zero")) and checks["dual_fixed_intersection_dim"] == 0:
                return "abelian-unipotent"
        return "abelian"
    return "nilpotent"


def split(pa: PerturbedAction) -> SplitResult:
    kind = split_kind(pa)
    if kind == "abelian-unipotent":
        return split_abelian_unipotent(pa)
    if kind == "abelian":
        return split_abelian(pa)
    return split_nilpotent(pa)


def obstruction_comparison(pa: PerturbedAction, other: str, sample, a_norm: float = 2.0, sigma: float = 0.0) -> dict:
    """|B O(v) - O(B* v)| for the obstruction O of R_A, against ||L(A,B)||_a |v|^(-a+sigma).

    The fitted constant is the largest ratio over the sample.
    """
    a = pa.matrix(pa.solved)
    b = pa.matrix(other)
    r = pa.perturbation(pa.solved)
    lnorm = norm_a(cocycle_difference(pa, pa.solved, other), a_norm)
    bstar = dual_map(b)
    rows = []
    for v in sample:
        v = tuple(int(x) for x in v)
        lhs = b.to_float() @ np.asarray(obstruction_at(r, a, a, v), dtype=np.complex128)
        rhs = np.asarray(obstruction_at(r, a, a, bstar.apply(v)), dtype=np.complex128)
        gap = float(np.abs(lhs - rhs).max())
        scale = lnorm * np.linalg.norm(v) ** (-a_norm + sigma)
        rows.append((v, gap, gap / scale if scale > 0 else (0.0 if gap == 0 else math.inf)))
    return {"L_norm": lnorm, "rows": rows, "constant": max((x[2] for x in rows), default=0.0)}


# ---------------------------------------------------------------------------
# one step and the iteration
# ---------------------------------------------------------------------------

@dataclass
class KamReport:
    iteration: int
    errors: dict[str, dict]
    L_norms: dict[str, float]
    discarded: float
    seconds: float
    l: int = 1
    status: str = "ok"
    notes: list = field(default_factory=list)

    @property
    def error(self) -> float:
        return max((e["err_c0"] for e in self.errors.values()), default=0.0)


def _error_table(pa: PerturbedAction) -> dict[str, dict]:
    return {k: {"err_c0": cr_proxy(r, 0) + pa.discarded.get(k, 0.0), "err_c1": cr_proxy(r, 1),
                "ladder": [norm_a(r, a) for a in (0, 1, 2)], "discarded": pa.discarded.get(k, 0.0)}
            for k, r in pa.perturbations.items()}


def conjugate_perturbation(pa: PerturbedAction, r: FourierMap, g: IntMatrix, w: FourierMap,
                           tol: float = 1e-16, max_iter: int = 30, sink: list | None = None) -> FourierMap:
    """R1 with (I + W) o (g + R1) = (g + R) o (I + W):

    R1 = g W + R o (I + W) - (W o g) o (I + g^-1 R1), solved by fixed-point iteration.
    """
    base = w.apply_matrix(g) + _compose(r, w, pa, sink=sink)
    wg = compose_auto(w, g)
    gi = g.inv()
    r1 = base - wg
    for _ in range(max_iter):
        new = base - _compose(wg, r1.apply_matrix(gi), pa)
        new = prune(new, PRUNE_TOL)
        change = cr_proxy(new - r1, 0)
        r1 = new
        if change <= tol * max(1.0, cr_proxy(r1, 0)):
            break
    return r1


def kam_step(pa: PerturbedAction, check_gate: bool = True, iteration: int = 1) -> tuple[PerturbedAction, KamReport, FourierMap]:
    """One conjugation step; returns (new action, report, displacement W of H = I + W)."""
    t0 = time.perf_counter()
    if check_gate:
        val, thr = pa.gate_value(), pa.gate_threshold()
        if val > thr:
            raise SmallnessGateError(val, thr)
    s = split(pa)
    # the split solves Delta Omega = R - RR while the step needs Delta W = -R, hence W = -Omega
    w = -s.omega.to_float()
    w, wdisc = _cleanup(w, pa.trunc_radius)
    new, disc = {}, {}
    for name, r in pa.perturbations.items():
        sink: list = []
        r1 = conjugate_perturbation(pa, r.to_float(), pa.matrix(name), w, sink=sink)
        new[name], disc[name] = _cleanup(r1, pa.trunc_radius)
        disc[name] += wdisc + sum(sink)
    out = pa.replace(new, disc)
    rep = KamReport(iteration, _error_table(out), dict(s.ledger.get("L", {})), max(disc.values(), default=0.0),
                    time.perf_counter() - t0, pa.l)
    rep.notes.append(f"split {s.kind}")
    return out, rep, w


@dataclass
class KamRun:
    reports: list[KamReport]
    status: str
    displacement: FourierMap
    final: PerturbedAction
    diagnostics: list = field(default_factory=list)

    @property
    def errors(self) -> list[float]:
        return [r.error for r in self.reports]


def _accumulate(total: FourierMap, w: FourierMap, pa: PerturbedAction) -> FourierMap:
    """Displacement of H_total o (I + W): W + total o (I + W)."""
    if not len(total):
        return w
    return prune(w + _compose(total, w, pa), PRUNE_TOL)


def kam_run(pa: PerturbedAction, max_iters: int = 8, target: float = 1e-12, check_gate: bool = True,
            csv_path=None, min_iters: int = 0) -> KamRun:
    """Iterate kam_step until the error drops below target, diverges or max_iters is reached."""
    n = pa.dim
    reports = [KamReport(0, _error_table(pa), {}, max(pa.discarded.values(), default=0.0), 0.0, pa.l)]
    total = FourierMap.zero(n, n)
    status = "max_iters"
    cur = pa
    growth = 0
    diags = []
    if reports[0].error <= target:
        status = "converged"
    else:
        for it in range(1, max_iters + 1):
            try:
                nxt, rep, w = kam_step(cur, check_gate=check_gate and it == 1, iteration=it)
            except SmallnessGateError as e:
                status = "gate"
                diags.append(str(e))
                break
            except (ContractionError, ObstructionError, FloatingPointError) as e:
                status = "failed"
                diags.append(f"{type(e).__name__}: {e}")
                break
            reports.append(rep)
            total = _accumulate(total, w, cur)
            cur = nxt
            err = rep.error
            if not math.isfinite(err):
                status = "diverged"
                diags.append("non-finite error")
                break
            growth = growth + 1 if err > reports[-2].error else 0
            if growth >= 2:
                status = "diverged"
                diags.append(f"error grew on two consecutive steps: {[r.error for r in reports[-3:]]}")
                break
            if err <= target and it >= min_iters:
                status = "converged"
                break
    if pa.trunc_radius is not None:
        total, _ = truncate(total, pa.trunc_radius)
    run = KamRun(reports, status, total, cur, diags)
    if csv_path is not None:
        write_csv(run, csv_path)
    return run


CSV_COLUMNS = ("iter", "generator", "err_c0", "err_c1", "L_norm", "discarded", "seconds")
CSV_VERSION = "torikam.kam-csv/1"


def write_csv(run: KamRun, path, timing: bool = True, stamp: bool = True) -> None:
    """Per-iteration rows; with timing=False the seconds column is 0 so reruns are byte-identical.

    Line 1 is a versioned column comment, line 2 (optional) a timestamp comment
    that regression comparisons skip.
    """
    with open(path, "w", newline="") as fh:
        fh.write(f"# {CSV_VERSION} columns={','.join(CSV_COLUMNS)}\n")
        if stamp:
            fh.write(f"# generated {time.strftime('%Y-%m-%dT%H:%M:%S')}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rep in run.reports:
            lmax = max(rep.L_norms.values(), default=0.0)
            secs = rep.seconds if timing else 0.0
            for name, e in rep.errors.items():
                w.writerow([rep.iteration, name, f"{e['err_c0']:.6e}", f"{e['err_c1']:.6e}", f"{lmax:.6e}",
                            f"{e['discarded']:.6e}", f"{secs:.3f}"])


def propagate_conjugacy(pa: PerturbedAction, h: FourierMap, g_solved: str | None = None, tol: float = 1e-6) -> dict:
    """||alpha~(g) o H - H o alpha(g)||_0 for every registered element, H = I + h."""
    g_solved = g_solved or pa.solved
    out = {}
    for name, r in pa.perturbations.items():
        g = pa.matrix(name)
        sink: list = []
        d = h.apply_matrix(g) + _compose(r.to_float(), h, pa, sink=sink) - compose_auto(h, g)
        out[name] = cr_proxy(prune(d, PRUNE_TOL), 0) + sum(sink)
    solved = out.get(g_solved, 0.0)
    return {"residuals": out, "solved": g_solved, "precondition_ok": solved <= tol,
            "max_ratio": max((v / solved for k, v in out.items() if k != g_solved), default=0.0) if solved > 0 else None}


def displacement_l(pa: PerturbedAction, n_max: int = 50, radius: float = 30, count: int = 400, seed: int = 0) -> int:
    """Smallest n from the displacement search over the non-ergodic generators (at least 1)."""
    a = pa.matrix(pa.ergodic)
    xs = {k: v for k, v in pa.base.generators.items() if k != pa.ergodic}
    n, _ = orbits.displacement_search(a, xs, n_max=n_max, radius=radius, count=count, seed=seed)
    if n is None:
        raise HypothesisError(f"no n <= {n_max} passes the displacement check")
    return n
