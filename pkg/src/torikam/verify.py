"""Verifier suites: growth inequalities, displacement, E-set criteria and obstruction comparison.

Every suite fits its constant on a small training domain and then checks the
full domain against that constant, so a pass is not true by construction.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels, orbits
from .intmat import IntMatrix, dual_map, mat_pow
from .spectral import integer_ball, pair_growth_rate, split as spectral_split


@dataclass
class SuiteResult:
    name: str
    rows: list[dict]
    passed: bool
    constant: float | None = None
    notes: list = field(default_factory=list)

    def table(self) -> str:
        lines = [f"suite {self.name}: {'PASS' if self.passed else 'FAIL'}"
                 + (f" (C = {self.constant:.6g})" if self.constant is not None else "")]
        for r in self.rows:
            lines.append("  " + "  ".join(f"{k}={v}" for k, v in r.items()))
        lines.extend("  note: " + n for n in self.notes)
        return "\n".join(lines)

    def to_json(self) -> dict:
        return {"schema": "torikam.suite/1", "name": self.name, "passed": self.passed, "constant": self.constant,
                "rows": [{k: (list(v) if isinstance(v, tuple) else v) for k, v in r.items()} for r in self.rows],
                "notes": list(self.notes)}


def _power_table(m: IntMatrix, bound: int) -> dict[int, np.ndarray]:
    return {k: np.array(mat_pow(m, k).entries, dtype=np.float64) for k in range(-bound, bound + 1)}


MARGIN = 0.5       # fitted constants are half the training minimum


def _scan(mats: np.ndarray, scale: np.ndarray, vs: np.ndarray, vpow: np.ndarray,
          c: float | None = None) -> tuple[float, int, int]:
    """(min ratio, number of ratios, number below c) for ratios ||M_a v_b|| vpow_b / scale_a."""
    per = kernels.min_ratio(mats, scale, vs, vpow)
    below = 0
    if c is not None:
        for a in np.nonzero(per < c)[0]:
            r = np.linalg.norm(vs @ mats[a].T, axis=1) * vpow / scale[a]
            below += int((r < c).sum())
    return float(per.min()), int(mats.shape[0] * vs.shape[0]), below


def pair_growth_data(a: IntMatrix, b: IntMatrix, k_bound: int, v_radius: float, tau: float,
                     tau_factor: float = 0.9, exponent: float = 3.0):
    """Matrices A^k1 B^k2 (k != 0), scales e^{tau_factor tau |k|}, ball vectors and ||v||^exponent."""
    vs = integer_ball(a.dim, v_radius).astype(np.float64)
    pa, pb = _power_table(a, k_bound), _power_table(b, k_bound)
    ks = [k for k in itertools.product(range(-k_bound, k_bound + 1), repeat=2) if k != (0, 0)]
    mats = np.stack([pa[k1] @ pb[k2] for k1, k2 in ks])
    scale = np.array([math.exp(tau_factor * tau * math.hypot(k1, k2)) for k1, k2 in ks])
    return mats, scale, vs, np.linalg.norm(vs, axis=1) ** exponent


def growth_suite(a: IntMatrix, b: IntMatrix, k_bound: int = 6, v_radius: float = 20, train_k: int = 2,
                 train_v: float = 5, tau_factor: float = 0.9) -> SuiteResult:
    """Pair growth ||A^k1 B^k2 v|| >= C e^{0.9 tau |k|} ||v||^-3 with C fitted on a training box."""
    g = pair_growth_rate(a, b)
    if not g.ok:
        return SuiteResult("growth", [{"tau": 0.0, "status": "pair is not higher rank"}], False)
    c = MARGIN * _scan(*pair_growth_data(a, b, train_k, train_v, g.tau, tau_factor))[0]
    worst, total, below = _scan(*pair_growth_data(a, b, k_bound, v_radius, g.tau, tau_factor), c)
    rows = [{"tau": round(g.tau, 9), "fitted_C": c, "worst_ratio": worst, "checked": total, "violations": below}]
    return SuiteResult("growth", rows, c > 0 and below == 0, c)


def unipotent_growth_data(f: IntMatrix, q: IntMatrix, k1_bound: int, k2_bound: int, v_radius: float,
                          rho: float, n1: int):
    """Matrices F^k1 Q^k2 (k2 != 0), scales rho^|k1| |k2|^(1/2), vectors with Qv != v and ||v||^n1."""
    vs = integer_ball(f.dim, v_radius).astype(np.float64)
    vs = vs[np.abs(vs @ q.to_float().T - vs).max(axis=1) > 0]
    pf, pq = _power_table(f, k1_bound), _power_table(q, k2_bound)
    ks = [(k1, k2) for k1 in range(-k1_bound, k1_bound + 1) for k2 in range(-k2_bound, k2_bound + 1) if k2 != 0]
    mats = np.stack([pf[k1] @ pq[k2] for k1, k2 in ks])
    scale = np.array([rho ** abs(k1) * math.sqrt(abs(k2)) for k1, k2 in ks])
    return mats, scale, vs, np.linalg.norm(vs, axis=1) ** n1


def unipotent_suite(f: IntMatrix, q: IntMatrix, k1_bound: int = 6, k2_bound: int = 50, v_radius: float = 10,
                    train: tuple[int, int, float] = (2, 8, 4)) -> SuiteResult:
    """||F^k1 Q^k2 v|| >= C rho^|k1| |k2|^(1/2) ||v||^-n1 with n1 = (2N+3)N."""
    sp = spectral_split(f)
    n = f.dim
    n1 = (2 * n + 3) * n
    c = MARGIN * _scan(*unipotent_growth_data(f, q, train[0], train[1], train[2], sp.rho, n1))[0]
    worst, total, below = _scan(*unipotent_growth_data(f, q, k1_bound, k2_bound, v_radius, sp.rho, n1), c)
    rows = [{"rho": round(sp.rho, 9), "n1": n1, "fitted_C": c, "worst_ratio": worst, "checked": total,
             "violations": below}]
    return SuiteResult("unipotent", rows, c > 0 and below == 0, c)


def displacement_suite(a: IntMatrix, xs: dict[str, IntMatrix], n: int | None = None, n_max: int = 50,
                       radius: float = 30, count: int = 400, seed: int = 0, depth: int = 1) -> SuiteResult:
    """With n given, check that n; otherwise search for the smallest passing n <= n_max."""
    sp = spectral_split(dual_map(a))
    if n is None:
        found, reps = orbits.displacement_search(a, xs, n_max=n_max, radius=radius, count=count, depth=depth, seed=seed)
        rep = reps[-1]
        rows = [{"n": r.n, "checked": r.checked, "violations": len(r.violations), "label": r.label} for r in reps]
        res = SuiteResult("displacement", rows, found is not None, None)
        if found is None:
            res.notes.append(f"no n <= {n_max} without violations")
        return res
    base = orbits.sample_ball(a.dim, radius, count, seed)
    _, pts = orbits.minimal_points_batch(base, sp.power(n))
    rep = orbits.verify_displacement(a, xs, n, list(dict.fromkeys(pts)), depth, sp)
    rows = [{"n": n, "checked": rep.checked, "violations": len(rep.violations), "label": rep.label}]
    for v in rep.violations[:10]:
        rows.append({"violation": str(v), "label": rep.label})
    return SuiteResult("displacement", rows, rep.ok)


def e_set_suite(a: IntMatrix, xs: dict[str, IntMatrix], n: int, radius: float = 20, count: int = 200,
                seed: int = 0, depth: int = 1) -> SuiteResult:
    sp = spectral_split(dual_map(a)).power(n)
    sample = orbits.sample_e_set(sp, radius, count, seed)
    rep = orbits.verify_e_set_criteria(a, xs, n, sample, depth)
    uniq = orbits.uniqueness_on_sample(sample[: min(len(sample), 100)], sp)
    rows = [{"n": n, "checked": rep.checked, "failures": len(rep.violations), "unique_minimal_points": uniq.ok}]
    for fail in rep.violations[:10]:
        rows.append({"failure": str(fail)})
    res = SuiteResult("e-set", rows, rep.ok)
    if not uniq.ok:
        res.notes.append(f"{len(uniq.multiple)} sampled orbits have several transition indices")
    return res


def obstruction_suite(pa, other: str | None = None, radius: float = 4, count: int = 24, seed: int = 0,
                      a_norm: float = 2.0, sigma: float = 0.0, train: int = 8) -> SuiteResult:
    """Obstruction comparison |B O(v) - O(B* v)| against ||L||_a |v|^(-a+sigma) on sampled E-set points."""
    from .kam import obstruction_comparison

    other = other or next(n for n in pa.base.names() if n != pa.ergodic)
    a = pa.matrix(pa.solved)
    sp = spectral_split(dual_map(a))
    sample = orbits.sample_e_set(sp, radius, count, seed)
    if not sample:
        return SuiteResult("obstruction", [], False, None, ["empty E-set sample"])
    fit = obstruction_comparison(pa, other, sample[:train], a_norm, sigma)
    full = obstruction_comparison(pa, other, sample, a_norm, sigma)
    c = fit["constant"]
    rows = [{"v": v, "gap": g, "ratio": r} for v, g, r in full["rows"]]
    ok = all(r["ratio"] <= max(c, 1e-300) * (1 + 1e-9) for r in rows) if c > 0 else all(r["gap"] == 0 for r in rows)
    res = SuiteResult("obstruction", rows, ok, c)
    res.notes.append(f"||L||_a = {full['L_norm']:.3e}; fitted on the first {train} points, checked on {len(sample)}")
    return res


SUITES = ("growth", "unipotent", "displacement", "e-set", "obstruction")
