import numpy as np
import pytest

from torikam.families import heisenberg_family, t2_pair, theorem2_family
from torikam.fourier import FourierMap, compose_auto, cr_proxy, random_map
from torikam.intmat import CAT, mat_mul
from torikam.kam import (
    PerturbedAction,
    SmallnessGateError,
    cocycle_difference,
    conjugate_perturbation,
    conjugated_family,
    delta,
    inverse_perturbation,
    kam_run,
    kam_step,
    product_perturbation,
    propagate_conjugacy,
    quadratic_smallness_check,
    reconstruction_defect,
    split,
    split_kind,
    write_csv,
)


def constant_action(spec, c):
    """x -> g(x + c) - c: a genuine action whose perturbations are the constants (g - I) c."""
    perts = {}
    for name, g in spec.all_elements().items():
        gc = np.array(g.entries, dtype=float) @ np.asarray(c, float) - np.asarray(c, float)
        perts[name] = FourierMap.constant(gc)
    return PerturbedAction(spec, perts)


@pytest.fixture(scope="module")
def t2():
    return conjugated_family(t2_pair(), 1e-3, seed=1, trunc_radius=16)


def test_delta_is_the_linear_twisted_difference():
    om = random_map(2, radius=2, count=3, seed=0, exact=True)
    assert delta(om, CAT).equals(om.apply_matrix(CAT) - compose_auto(om, CAT))


def test_cocycle_difference_vanishes_for_a_genuine_constant_action():
    pa = constant_action(t2_pair(), [0.125, -0.25])
    assert cr_proxy(cocycle_difference(pa, "a", "b")) < 1e-15


def test_product_and_inverse_rules_on_constants():
    pa = constant_action(t2_pair(), [0.5, 0.25])
    a, b = pa.matrix("a"), pa.matrix("b")
    ra, rb = pa.perturbation("a"), pa.perturbation("b")
    rab = product_perturbation(pa, ra, a, rb, b)
    expect = np.array(mat_mul(a, b).entries, float) @ [0.5, 0.25] - np.array([0.5, 0.25])
    assert np.allclose(rab.coeff((0, 0)), expect, atol=1e-14)
    rinv = inverse_perturbation(pa, ra, a)
    expect = np.array(a.inv().entries, float) @ [0.5, 0.25] - np.array([0.5, 0.25])
    assert np.allclose(rinv.coeff((0, 0)), expect, atol=1e-14)


def test_conjugate_by_zero_displacement_is_identity(t2):
    r = t2.perturbation("b")
    out = conjugate_perturbation(t2, r, t2.matrix("b"), FourierMap.zero(2))
    assert cr_proxy(out - r) < 1e-16


def test_split_kinds():
    assert split_kind(conjugated_family(t2_pair(), 1e-4, trunc_radius=6)) == "abelian"
    spec = theorem2_family()
    assert split_kind(constant_action(spec, [0.1, 0.2, 0.3, 0.4])) == "abelian-unipotent"
    assert split_kind(constant_action(heisenberg_family(), [0.1] * 6)) == "nilpotent"


def test_split_reconstruction_is_exact(t2):
    exact = t2.replace({k: r.to_exact() for k, r in t2.perturbations.items()})
    s = split(exact)
    assert all(v == 0.0 for v in reconstruction_defect(exact, s).values())
    assert s.ledger["omega_c0"] > 0


def test_quadratic_smallness_on_t2_sparse(t2):
    rep = quadratic_smallness_check(t2)
    assert rep.slope is not None and rep.slope >= 1.9 and rep.verdict == "quadratic"


def test_kam_run_converges_and_conjugates(t2, tmp_path):
    run = kam_run(t2, max_iters=6, target=1e-13, min_iters=3, csv_path=tmp_path / "run.csv")
    errs = run.errors
    assert run.status == "converged" and errs[-1] <= 1e-13
    assert all(b < a for a, b in zip(errs, errs[1:]))
    prop = propagate_conjugacy(t2, run.displacement)
    assert prop["precondition_ok"] and prop["residuals"]["a"] < 1e-13
    assert (tmp_path / "run.csv").read_text().startswith("# torikam.kam-csv/1")


def test_smallness_gate_refuses_large_perturbations():
    pa = conjugated_family(t2_pair(), 5e-2, seed=2, trunc_radius=6)
    with pytest.raises(SmallnessGateError):
        kam_step(pa)
    assert kam_run(pa, max_iters=2).status == "gate"


def test_csv_without_timing_is_reproducible(tmp_path):
    pa = conjugated_family(t2_pair(), 1e-3, seed=3, trunc_radius=6)
    paths = []
    for i in range(2):
        run = kam_run(pa, max_iters=2)
        p = tmp_path / f"r{i}.csv"
        write_csv(run, p, timing=False)
        paths.append(p.read_text().splitlines())
    assert paths[0][0] == paths[1][0] and paths[0][2:] == paths[1][2:]
    assert paths[0][1].startswith("# generated")
