"""Example actions and the bounded search for genuinely partially hyperbolic higher-rank actions."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .algebra import (
    ActionSpec,
    PreconditionError,
    commutator,
    commutator_chain,
    conjugate_ergodicity_check,
    fixed_space_intersection_dim,
    is_genuinely_partially_hyperbolic,
    is_higher_rank,
    lower_central_series,
    word_ball,
)
from .intmat import (
    CAT,
    IntMatrix,
    IntPolynomial,
    char_poly,
    companion,
    factor_irreducible,
    is_ergodic,
    is_hyperbolic,
    is_unipotent,
    mat_mul,
    mat_pow,
    unit_circle_root_count,
)

# b = CAT^2 - CAT commutes with CAT and is ergodic (det -1)
CAT_PARTNER = IntMatrix([[3, 2], [2, 1]])


def _kron(a: IntMatrix, b: IntMatrix) -> IntMatrix:
    n, m = a.dim, b.dim
    rows = [[a.entries[i // m][j // m] * b.entries[i % m][j % m] for j in range(n * m)] for i in range(n * m)]
    return IntMatrix(rows)


def _block(blocks: list[list[IntMatrix | int]], size: int) -> IntMatrix:
    """Assemble a block matrix; integer entries 0/1 stand for zero/identity blocks."""
    k = len(blocks)
    rows = []
    for bi in range(k):
        for r in range(size):
            row = []
            for bj in range(k):
                b = blocks[bi][bj]
                if isinstance(b, int):
                    row.extend([b if r == c else 0 for c in range(size)])
                else:
                    row.extend(b.entries[r])
            rows.append(row)
    return IntMatrix(rows)


def square_zero_checks(a1: IntMatrix, others: dict[str, IntMatrix]) -> dict:
    """Exact checks of the abelian-unipotent hypotheses."""
    out = {"ergodic_A1": is_ergodic(a1)}
    for name, u in others.items():
        e = [[u.entries[i][j] - (i == j) for j in range(u.dim)] for i in range(u.dim)]
        sq = [[sum(e[i][k] * e[k][j] for k in range(u.dim)) for j in range(u.dim)] for i in range(u.dim)]
        out[f"square_zero_{name}"] = all(x == 0 for row in sq for x in row) and any(x for row in e for x in row)
        out[f"commutes_{name}"] = mat_mul(a1, u) == mat_mul(u, a1)
    out["fixed_intersection_dim"] = fixed_space_intersection_dim(list(others.values()))
    out["dual_fixed_intersection_dim"] = fixed_space_intersection_dim([u.transpose() for u in others.values()])
    return out


def theorem2_family(n_blocks: int = 2, base: IntMatrix = CAT) -> ActionSpec:
    """A1 = diag(base, ..., base) with unipotents I + E_{i,i+1} (identity block, indices cyclic)."""
    if not is_ergodic(base):
        raise PreconditionError("base matrix must be ergodic")
    if n_blocks < 2:
        raise PreconditionError("a single square-zero unipotent always fixes a nonzero vector")
    s = base.dim
    a1 = IntMatrix.block_diag(*([base] * n_blocks))
    gens = {"A1": a1}
    for i in range(n_blocks):
        j = (i + 1) % n_blocks
        if n_blocks == 2 and i == 1:
            j = 0
        blocks = [[1 if r == c else 0 for c in range(n_blocks)] for r in range(n_blocks)]
        blocks[i][j] = 1
        gens[f"A{i + 2}"] = _block(blocks, s)
    checks = square_zero_checks(a1, {k: v for k, v in gens.items() if k != "A1"})
    if checks["fixed_intersection_dim"] != 0:
        raise PreconditionError("fixed spaces of the unipotents intersect nontrivially")
    if not all(v for k, v in checks.items() if k.startswith(("square_zero", "commutes"))):
        raise PreconditionError(f"hypothesis check failed: {checks}")
    return ActionSpec(a1.dim, gens, None, ["A1"], [], checks)


def t2_pair() -> ActionSpec:
    """Commuting ergodic pair on T^2 (the golden units phi^2 and phi^3)."""
    return ActionSpec(2, {"a": CAT, "b": CAT_PARTNER}, 1, ["a", "b"], [], {"commute": True})


def heisenberg_family(base: IntMatrix = CAT, partner: IntMatrix = CAT_PARTNER, l: int = 1) -> ActionSpec:
    """Nilpotent non-abelian action on T^{3s}: x = U_x (x) base, y = U_y (x) partner.

    U_x, U_y generate the integer Heisenberg group in GL(3, Z); base and partner
    commute, so [x, y] = U_z (x) I is central. The commutator chain is built
    from the ergodic element A^l.
    """
    if mat_mul(base, partner) != mat_mul(partner, base):
        raise PreconditionError("base and partner must commute")
    ux = IntMatrix([[1, 1, 0], [0, 1, 0], [0, 0, 1]])
    uy = IntMatrix([[1, 0, 0], [0, 1, 1], [0, 0, 1]])
    a = _kron(ux, base)
    b = _kron(uy, partner)
    al = mat_pow(a, l)
    chain = commutator_chain(al, b, 3)
    d_chain = [(f"d{i + 1}", d) for i, d in enumerate(chain) if not d.is_identity()]
    spec = ActionSpec(a.dim, {"A": a, "B": b}, None, ["A", "B"] if is_ergodic(b) else ["A"], d_chain,
                      {"chain_from_power": l})
    spec.nilpotency_length = lower_central_series(spec).length
    return spec


def unit_pair_t3() -> tuple[IntMatrix, IntMatrix]:
    """Higher-rank pair on T^3: companion of x^3 - 3x + 1 and A - I (both units)."""
    a = companion(IntPolynomial([1, -3, 0, 1]))
    b = IntMatrix([[a.entries[i][j] - (i == j) for j in range(3)] for i in range(3)])
    return a, b


def noncommuting_square_zero(base: IntMatrix = CAT) -> IntMatrix:
    """[[I, E], [0, I]] with E = e_11, which does not commute with diag(base, base)."""
    s = base.dim
    e = IntMatrix.identity(s)
    rows = [[0] * (2 * s) for _ in range(2 * s)]
    for i in range(2 * s):
        rows[i][i] = 1
    rows[0][s] = 1
    return IntMatrix(rows)


# ---------------------------------------------------------------------------
# reciprocal polynomial search
# ---------------------------------------------------------------------------

def reciprocal_polynomials(degree: int, coeff_bound: int):
    """Monic reciprocal integer polynomials of the given even degree, lexicographic in free coefficients."""
    if degree % 2:
        raise ValueError("degree must be even")
    m = degree // 2
    for free in itertools.product(range(-coeff_bound, coeff_bound + 1), repeat=m):
        c = [1] + list(free)
        full = c + list(reversed(c[:-1])) if m else [1, 1]
        # ascending order; reciprocal so ascending equals descending
        yield IntPolynomial(full)


def classify_polynomial(p: IntPolynomial) -> dict:
    facs = factor_irreducible(p)
    irreducible = len(facs) == 1 and facs[0][1] == 1
    on_circle = unit_circle_root_count(p)
    return {
        "irreducible": irreducible,
        "unimodular_roots": on_circle,
        "off_circle_roots": p.degree - on_circle,
    }


def search_reciprocal_nonhyperbolic(degree: int, coeff_bound: int) -> list[IntMatrix]:
    """Companions of irreducible reciprocal polynomials with roots both on and off the unit circle."""
    out = []
    for p in reciprocal_polynomials(degree, coeff_bound):
        info = classify_polynomial(p)
        if not info["irreducible"] or info["off_circle_roots"] == 0 or info["unimodular_roots"] == 0:
            continue
        c = companion(p)
        # irreducible with a root off the circle excludes roots of unity; checked again exactly
        if is_ergodic(c) and not is_hyperbolic(c):
            out.append(c)
    return out


# ---------------------------------------------------------------------------
# recipes and the results database
# ---------------------------------------------------------------------------

@dataclass
class ExampleRecipe:
    family: str                          # theorem2 | theorem3-search | cat-products | unit-pair
    params: dict
    spec: ActionSpec
    certificates: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"schema": "torikam.recipe/1", "family": self.family, "params": self.params,
                "spec": self.spec.to_json(), "certificates": self.certificates}

    @classmethod
    def from_json(cls, data: dict) -> "ExampleRecipe":
        return cls(data["family"], data.get("params", {}), ActionSpec.from_json(data["spec"]), data.get("certificates", {}))


def compute_certificates(family: str, spec: ActionSpec, radius: int = 2) -> dict:
    gens = spec.generators
    cert: dict = {}
    if family == "theorem2":
        a1 = gens["A1"]
        checks = square_zero_checks(a1, {k: v for k, v in gens.items() if k != "A1"})
        cert.update({k: (v if isinstance(v, bool) else int(v)) for k, v in checks.items()})
        ok = True
        for w in word_ball([k for k in gens if k != "A1"], radius):
            x = spec.evaluate(w)
            c = commutator(a1, x)
            ok &= conjugate_ergodicity_check(c, a1)
        cert["commutator_products_ergodic"] = bool(ok)
    elif family in ("theorem3-search", "cat-products"):
        names = spec.names()
        ph = is_genuinely_partially_hyperbolic(spec, radius)
        cert["genuinely_partially_hyperbolic"] = ph.passed
        cert["ergodic_witness"] = str(ph.ergodic_witness)
        if len(names) >= 2:
            hr = is_higher_rank(gens[names[0]], gens[names[1]])
            cert["higher_rank"] = hr.passed
            cert["tau"] = round(hr.tau, 9)
    elif family == "unit-pair":
        names = spec.names()
        hr = is_higher_rank(gens[names[0]], gens[names[1]])
        cert["higher_rank"] = hr.passed
        cert["tau"] = round(hr.tau, 9)
    return cert


def verify_recipe(recipe: ExampleRecipe) -> tuple[bool, dict]:
    """Recompute certificates from scratch and compare with the stored ones."""
    fresh = compute_certificates(recipe.family, recipe.spec, recipe.params.get("radius", 2))
    return fresh == recipe.certificates, fresh


def write_database(path, recipes: list[ExampleRecipe]) -> None:
    with open(path, "w") as fh:
        for r in recipes:
            fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")


def read_database(path, verify: bool = True) -> list[tuple[ExampleRecipe, bool]]:
    out = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            r = ExampleRecipe.from_json(json.loads(line))
            ok = verify_recipe(r)[0] if verify else True
            out.append((r, ok))
    return out


def _polynomial_in(seed: IntMatrix, coeffs) -> IntMatrix | None:
    n = seed.dim
    acc = [[0] * n for _ in range(n)]
    power = IntMatrix.identity(n)
    for c in coeffs:
        if c:
            for i in range(n):
                for j in range(n):
                    acc[i][j] += c * power.entries[i][j]
        power = mat_mul(power, seed)
    try:
        return IntMatrix(acc)
    except ValueError:
        return None


def centralizer_candidates(seed: IntMatrix, coeff_bound: int = 2, max_degree: int | None = None) -> list[tuple]:
    """Polynomials in the seed that are numerically units preserving the seed's neutral spectrum.

    Candidates that are +-seed^k are dropped. Every survivor is certified
    exactly by the caller. Order: small coefficient mass first, then lexicographic.
    """
    deg = seed.dim if max_degree is None else max_degree
    lam = np.linalg.eigvals(seed.to_float())
    vand = lam[None, :] ** np.arange(deg)[:, None]
    circ = np.abs(np.abs(lam) - 1) < 1e-9
    loglam = np.log(np.abs(lam))
    cands = np.array(list(itertools.product(range(-coeff_bound, coeff_bound + 1), repeat=deg)), dtype=float)
    mods = np.abs(cands @ vand)
    with np.errstate(divide="ignore"):
        logs = np.log(np.maximum(mods, 1e-300))
    unit = np.abs(logs.sum(axis=1)) < 1e-6
    neutral = np.all(np.abs(mods[:, circ] - 1) < 1e-6, axis=1) if circ.any() else np.ones(len(cands), bool)
    # reject log|values| proportional to log|lambda| (powers of the seed up to sign)
    k = (logs[:, ~circ] @ loglam[~circ]) / max(float(loglam[~circ] @ loglam[~circ]), 1e-300)
    power_like = np.abs(logs[:, ~circ] - k[:, None] * loglam[None, ~circ]).max(axis=1) < 1e-6
    idx = np.nonzero(unit & neutral & ~power_like)[0]
    rows = [tuple(int(x) for x in cands[i]) for i in idx]
    rows.sort(key=lambda c: (sum(abs(x) for x in c), c))
    return rows


def assemble_higher_rank_ph(seed: IntMatrix, strategy: str = "centralizer", coeff_bound: int = 2,
                            max_degree: int | None = None, radius: int = 2,
                            max_candidates: int = 64) -> ExampleRecipe | None:
    """Bounded search for a commuting partner B making (seed, B) higher rank and genuinely PH.

    Returns None when nothing is found within the bounds; this is not a proof of nonexistence.
    """
    if not is_ergodic(seed) or is_hyperbolic(seed):
        raise PreconditionError("seed must be ergodic and non-hyperbolic")
    partner = None
    for coeffs in centralizer_candidates(seed, coeff_bound, max_degree)[:max_candidates]:
        b = _polynomial_in(seed, coeffs)
        if b is None or b.det() not in (1, -1):
            continue
        if not is_higher_rank(seed, b).passed:
            continue
        spec = ActionSpec(seed.dim, {"A": seed, "B": b}, 1, ["A"], [])
        if not is_genuinely_partially_hyperbolic(spec, radius).passed:
            continue
        partner = (coeffs, b)
        break
    if partner is None:
        return None
    coeffs, b = partner
    if strategy == "centralizer":
        spec = ActionSpec(seed.dim, {"A": seed, "B": b}, 1, ["A"], [])
    elif strategy == "block-nilpotent":
        s = seed.dim
        u = _block([[1, 1], [0, 1]], s)
        spec = ActionSpec(2 * s, {"A": IntMatrix.block_diag(seed, seed), "B": IntMatrix.block_diag(b, b), "U": u},
                          None, ["A"], [])
        spec.nilpotency_length = lower_central_series(spec).length
    else:
        raise ValueError(f"unknown strategy {strategy}")
    family = "theorem3-search"
    cert = compute_certificates(family, spec, radius)
    if not cert.get("genuinely_partially_hyperbolic") or not cert.get("higher_rank"):
        return None
    params = {"strategy": strategy, "seed_poly": str(char_poly(seed)), "partner_coeffs": list(coeffs),
              "radius": radius}
    return ExampleRecipe(family, params, spec, cert)
