import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from torikam.families import theorem2_family
from torikam.intmat import CAT, IntMatrix, dual_map
from torikam.orbits import (
    NoTransitionError,
    classify,
    displacement_search,
    e_set_membership,
    katznelson_floor,
    minimal_point,
    minimal_points_batch,
    orbit_growth_constant,
    orbit_record,
    sample_ball,
    sample_e_set,
    transition_indices,
    uniqueness_on_sample,
    verify_displacement,
    write_orbit_csv,
)
from torikam.spectral import split

SP = split(dual_map(CAT))


def test_classify_cat_eigendirections():
    # dual cat map expands along (1, -phi) and contracts along (phi, 1)
    assert classify((1, -2), SP).index == 1
    assert classify((1, 0), SP).index == 3
    assert classify((1, 0), SP).kind == "absolutely"
    with pytest.raises(ValueError):
        classify((0, 0), SP)


def test_minimal_point_is_the_lowest_transition():
    rec = orbit_record((3, 5), SP)
    j = rec.minimal_index
    window = dict(rec.window)
    assert classify(window[j], SP).index == 3 or classify(window[j], SP).kind == "mostly"
    assert classify(window[j + 1], SP).index in (1, 2)
    assert j == min(transition_indices(rec, SP))


@settings(max_examples=40, deadline=None)
@given(st.tuples(st.integers(-30, 30), st.integers(-30, 30)).filter(any))
def test_minimal_point_is_orbit_invariant(v):
    j, p = minimal_point(v, SP)
    w = SP.matrix.apply(v)
    j2, p2 = minimal_point(w, SP)
    assert p2 == p and j2 == j - 1
    assert e_set_membership(p, SP)


def test_batch_agrees_with_exact_path():
    vs = sample_ball(2, 40, 150, seed=1)
    js, pts = minimal_points_batch(vs, SP)
    for v, j, p in zip(vs, js, pts):
        assert (int(j), p) == minimal_point(tuple(int(x) for x in v), SP)


def test_batch_agrees_on_t4_dual():
    sp = split(dual_map(theorem2_family().generators["A1"]))
    vs = sample_ball(4, 6, 60, seed=2)
    js, pts = minimal_points_batch(vs, sp)
    for v, j, p in list(zip(vs, js, pts))[:20]:
        assert (int(j), p) == minimal_point(tuple(int(x) for x in v), sp)


def test_uniqueness_on_cat_sample():
    rep = uniqueness_on_sample(sample_ball(2, 20, 80, seed=3), SP)
    assert rep.checked == 80 and rep.ok


def test_e_set_sample_members():
    pts = sample_e_set(SP, 20, 50)
    assert pts and all(e_set_membership(p, SP) for p in pts)


def test_katznelson_floor_positive_and_needs_hyperbolic_parts():
    assert katznelson_floor(SP, 15) > 0
    with pytest.raises(ValueError):
        katznelson_floor(split(IntMatrix.identity(2)), 5)


def test_orbit_growth_constant_positive():
    rec = orbit_record((2, 7), SP)
    assert orbit_growth_constant(rec, SP) > 0


def test_no_transition_for_neutral_map():
    with pytest.raises(NoTransitionError):
        orbit_record((1, 0), split(IntMatrix([[1, 1], [0, 1]])), max_window=50)


def test_orbit_csv_has_versioned_header(tmp_path):
    path = tmp_path / "orbits.csv"
    write_orbit_csv([orbit_record((1, 1), SP)], SP, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# torikam orbit report v1")
    assert sum(1 for ln in lines[2:] if ln.endswith(",1")) == 1


def test_displacement_on_t4_family():
    g = theorem2_family().generators
    xs = {k: v for k, v in g.items() if k != "A1"}
    n, reports = displacement_search(g["A1"], xs, n_max=5, radius=30, count=200)
    assert n is not None and reports[-1].ok
    assert set(reports[-1].j_histogram) <= {-1, 0, 1}
    with pytest.raises(ValueError):
        verify_displacement(g["A1"], xs, 0, [])
