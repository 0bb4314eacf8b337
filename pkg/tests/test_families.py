import numpy as np
import sympy

from torikam.algebra import ActionSpec
from torikam.families import (
    ExampleRecipe,
    assemble_higher_rank_ph,
    centralizer_candidates,
    compute_certificates,
    heisenberg_family,
    noncommuting_square_zero,
    read_database,
    reciprocal_polynomials,
    search_reciprocal_nonhyperbolic,
    square_zero_checks,
    t2_pair,
    theorem2_family,
    unit_pair_t3,
    write_database,
)
from torikam.intmat import CAT, char_poly, is_ergodic, is_hyperbolic, mat_mul


def oracle_search(degree, bound):
    """Numeric roots plus sympy irreducibility, independent of the package classifier."""
    x = sympy.symbols("x")
    out = []
    for p in reciprocal_polynomials(degree, bound):
        coeffs = list(p.coeffs)
        roots = np.roots(coeffs[::-1])
        on = int((np.abs(np.abs(roots) - 1) < 1e-6).sum())
        if on == 0 or on == degree:
            continue
        if not sympy.Poly(list(reversed(coeffs)), x).is_irreducible:
            continue
        out.append(tuple(coeffs))
    return out


def test_reciprocal_polynomials_are_palindromic():
    ps = list(reciprocal_polynomials(4, 1))
    assert len(ps) == 9
    assert all(p.coeffs == tuple(reversed(p.coeffs)) for p in ps)


def test_search_matches_numeric_oracle():
    got = [char_poly(m).coeffs for m in search_reciprocal_nonhyperbolic(4, 2)]
    assert sorted(got) == sorted(oracle_search(4, 2))
    assert search_reciprocal_nonhyperbolic(2, 3) == []


def test_search_results_are_certified():
    for m in search_reciprocal_nonhyperbolic(6, 2):
        assert is_ergodic(m) and not is_hyperbolic(m)


def test_theorem2_family_hypotheses():
    spec = theorem2_family()
    g = spec.generators
    checks = square_zero_checks(g["A1"], {"A2": g["A2"], "A3": g["A3"]})
    assert checks["fixed_intersection_dim"] == 0
    assert all(v for k, v in checks.items() if k.startswith(("square_zero", "commutes")))
    # the two unipotents do not commute with each other
    assert mat_mul(g["A2"], g["A3"]) != mat_mul(g["A3"], g["A2"])


def test_noncommuting_square_zero_fails_commutation():
    u = noncommuting_square_zero()
    checks = square_zero_checks(theorem2_family().generators["A1"], {"U": u})
    assert checks["square_zero_U"] and not checks["commutes_U"]


def test_pairs_and_nilpotent_family():
    spec = t2_pair()
    a, b = spec.generators["a"], spec.generators["b"]
    assert mat_mul(a, b) == mat_mul(b, a) and is_ergodic(b)
    a3, b3 = unit_pair_t3()
    assert mat_mul(a3, b3) == mat_mul(b3, a3)
    assert heisenberg_family().nilpotency_length == 2


def test_centralizer_candidates_exclude_powers():
    seed = next(iter(search_reciprocal_nonhyperbolic(6, 2)))
    for coeffs in centralizer_candidates(seed, 1)[:5]:
        assert any(coeffs[1:])


def test_assemble_and_database_round_trip(tmp_path):
    seed = next(m for m in search_reciprocal_nonhyperbolic(6, 2) if char_poly(m).coeffs == (1, -1, -2, 1, -2, -1, 1))
    assert assemble_higher_rank_ph(seed, coeff_bound=1) is None
    recipe = assemble_higher_rank_ph(seed, coeff_bound=2)
    assert recipe is not None and recipe.params["partner_coeffs"] == [-1, 0, 0, -2, 1, 0]
    assert recipe.certificates["higher_rank"] and recipe.certificates["genuinely_partially_hyperbolic"]
    cat = ExampleRecipe("cat-products", {"radius": 1}, ActionSpec(2, {"a": CAT}, 1, ["a"], []))
    cat.certificates = compute_certificates("cat-products", cat.spec, 1)
    path = tmp_path / "db.jsonl"
    write_database(path, [recipe, cat])
    back = read_database(path)
    assert [ok for _, ok in back] == [True, True]
    # tampering with a certificate is detected
    cat.certificates["genuinely_partially_hyperbolic"] = True
    write_database(path, [cat])
    assert read_database(path)[0][1] is False
