import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from apchern.errors import AttemptsExhausted, InvalidParameter, RelativeDensityWarning
from apchern.pattern import (DelonePattern, PatternEnsemble, TorusGeometry, chain_pattern,
                             dumps_pattern, generate_pattern, load_pattern, loads_pattern,
                             min_pair_distance, pairwise_distance, periodic_lattice,
                             save_pattern, torus_displacement, torus_distance,
                             translate_pattern, verify_delone)


def brute_distance(x, y, L):
    """Minimum Euclidean distance over the 3^d nearest periodic images."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    best = np.inf
    for k in itertools.product((-1, 0, 1), repeat=x.size):
        best = min(best, np.linalg.norm(x - y + L * np.array(k)))
    return best


# --- geometry and torus metric ---------------------------------------------

def test_geometry_validation():
    with pytest.raises(InvalidParameter):
        TorusGeometry(0.0)
    with pytest.raises(InvalidParameter):
        TorusGeometry(3.0, 0)
    g = TorusGeometry(5)
    assert g.d == 2 and g.volume == 25.0 and g.unit_density_count == 25


def test_displacement_wrap_example():
    assert np.allclose(torus_displacement([0.5, 0.5], [3.5, 0.5], 4.0), [1.0, 0.0])
    assert np.array_equal(torus_displacement([1.2, 3.3], [1.2, 3.3], 4.0), [0.0, 0.0])


def test_displacement_tie_convention():
    # +L/2 maps to -L/2 and -L/2 to +L/2 (truncation toward zero)
    assert torus_displacement(3.0, 1.0, 4.0) == -2.0
    assert torus_displacement(1.0, 3.0, 4.0) == 2.0


def test_displacement_matches_minimal_image_grid():
    L = 4.0
    deltas = np.linspace(-L, L, 801)[1:-1]
    got = torus_displacement(deltas, 0.0, L)
    cand = deltas[:, None] + L * np.array([-1.0, 0.0, 1.0])[None, :]
    best = np.min(np.abs(cand), axis=1)
    assert np.allclose(np.abs(got), best, atol=1e-12)
    # the value itself is one of the images
    assert np.all(np.min(np.abs(cand - got[:, None]), axis=1) < 1e-12)


def test_distance_wrap_example():
    assert torus_distance([0.0, 0.0], [3.9, 0.0], 4.0) == pytest.approx(0.1)
    assert torus_distance([1.0, 2.0], [1.0, 2.0], 4.0) == 0.0


@given(st.integers(1, 3), st.floats(1.0, 50.0),
       st.lists(st.floats(0, 0.999999), min_size=6, max_size=6))
def test_distance_equals_image_enumeration(d, L, u):
    x = np.array(u[:d]) * L
    y = np.array(u[3:3 + d]) * L
    assert torus_distance(x, y, L) == pytest.approx(brute_distance(x, y, L), abs=1e-9)


@given(st.floats(1.0, 30.0), st.lists(st.floats(0, 0.999999), min_size=6, max_size=6))
def test_distance_symmetric_and_triangle(L, u):
    x, y, z = (np.array(u[2 * i:2 * i + 2]) * L for i in range(3))
    dxy = torus_distance(x, y, L)
    assert dxy == pytest.approx(torus_distance(y, x, L), abs=1e-12)
    assert dxy <= torus_distance(x, z, L) + torus_distance(z, y, L) + 1e-9


@given(st.floats(1.0, 30.0), st.lists(st.floats(0, 0.999999), min_size=4, max_size=4))
def test_displacement_antisymmetric_off_boundary(L, u):
    x, y = np.array(u[:2]) * L, np.array(u[2:]) * L
    dxy = torus_displacement(x, y, L)
    if np.all(np.abs(np.abs(dxy) - L / 2) > 1e-9):
        assert np.allclose(dxy, -torus_displacement(y, x, L), atol=1e-12)
    assert np.all(np.abs(dxy) <= L / 2 + 1e-12)


# --- generation ---------------------------------------------------------------

def test_generate_no_hardcore():
    p = generate_pattern(TorusGeometry(4, 2), 0.0, seed=7)
    assert p.n == 16 and p.kind == "amorphous"
    assert np.all((p.points >= 0) & (p.points < 4))


def test_generate_deterministic_bytes():
    g = TorusGeometry(12, 2)
    a = generate_pattern(g, 0.83, seed=3)
    b = generate_pattern(g, 0.83, seed=3)
    assert a.points.tobytes() == b.points.tobytes()
    assert a.fingerprint() == b.fingerprint() and a.same_as(b)
    c = generate_pattern(g, 0.83, seed=4)
    assert not a.same_as(c)


@pytest.mark.parametrize("L,d,d_min", [(20, 2, 0.83), (9, 3, 0.6), (300, 1, 0.6)])
def test_generate_hardcore_and_unit_density(L, d, d_min):
    p = generate_pattern(TorusGeometry(L, d), d_min, seed=1)
    assert p.n == L ** d
    assert min_pair_distance(p) >= d_min
    D = pairwise_distance(p) if p.n <= 1000 else None
    if D is not None:
        np.fill_diagonal(D, np.inf)
        assert D.min() >= d_min


def test_generate_l60_scale_hardcore():
    p = generate_pattern(TorusGeometry(60, 2), 0.83, seed=11)
    assert p.n == 3600
    assert min_pair_distance(p) >= 0.83
    rep = verify_delone(p, 0.4, 4.0)
    assert rep.uniform_discrete and rep.relatively_dense


def test_generate_errors():
    g = TorusGeometry(5, 2)
    with pytest.raises(InvalidParameter):
        generate_pattern(g, 1.2)
    with pytest.raises(InvalidParameter):
        generate_pattern(g, 0.5, d_max=0.4)
    with pytest.raises(InvalidParameter):
        generate_pattern(g, 0.5, max_attempts=0)
    with pytest.raises(AttemptsExhausted):
        generate_pattern(TorusGeometry(10, 2), 0.83, max_attempts=50)


def test_relative_density_warning_and_strict():
    g = TorusGeometry(6, 2)
    with pytest.warns(RelativeDensityWarning):
        generate_pattern(g, 0.0, d_max=0.05, seed=1)
    with pytest.raises(AttemptsExhausted):
        generate_pattern(g, 0.0, d_max=0.05, seed=1, strict=True, max_restarts=2)


def test_ensemble_reproducible_and_distinct():
    ens = PatternEnsemble(TorusGeometry(8, 2), 0.7, seed=5, count=3)
    assert len(ens) == 3
    pats = list(ens)
    assert pats[1].same_as(ens[1])
    assert not pats[0].same_as(pats[1])
    with pytest.raises(IndexError):
        ens.sample_seed(3)


# --- lattice and chain --------------------------------------------------------

def test_periodic_lattice_examples():
    p = periodic_lattice(TorusGeometry(3, 2))
    assert p.n == 9 and p.kind == "periodic" and p.d_min == 1.0
    assert np.array_equal(p.points, np.round(p.points))
    p1 = periodic_lattice(TorusGeometry(3, 1))
    assert np.array_equal(p1.points[:, 0], [0.0, 1.0, 2.0])
    with pytest.raises(InvalidParameter):
        periodic_lattice(TorusGeometry(3.5, 2))


def test_chain_pattern():
    c = chain_pattern(50, 0.6, seed=2)
    assert c.d == 1 and c.n == 50 and min_pair_distance(c) >= 0.6


# --- verification ---------------------------------------------------------------

def test_verify_lattice_examples():
    lat = periodic_lattice(TorusGeometry(3, 2))
    assert verify_delone(lat, 0.5, 1.0).is_delone
    rep = verify_delone(periodic_lattice(TorusGeometry(6, 2)), 0.45, 0.8)
    assert rep.uniform_discrete and rep.relatively_dense
    assert rep.as_dict()["pair_witnesses"] == []


def test_verify_duplicate_point_witness():
    g = TorusGeometry(4, 2)
    pts = np.array([[0.5, 0.5], [0.5, 0.5], [2.0, 2.0]])
    rep = verify_delone(DelonePattern(g, pts), 0.1, 3.0)
    assert not rep.uniform_discrete
    assert sorted(rep.pair_witnesses[0].tolist()) == [0, 1]


def test_verify_hole_witness():
    g = TorusGeometry(10, 2)
    pts = np.array([[0.5, 0.5], [1.5, 0.5]])
    rep = verify_delone(DelonePattern(g, pts), 0.2, 1.0)
    assert rep.uniform_discrete and not rep.relatively_dense
    assert rep.hole_witnesses.shape == (1, 2)
    with pytest.raises(InvalidParameter):
        verify_delone(DelonePattern(g, pts), 1.0, 0.5)


def test_points_validated():
    g = TorusGeometry(4, 2)
    with pytest.raises(InvalidParameter):
        DelonePattern(g, np.array([[4.0, 0.0]]))
    with pytest.raises(InvalidParameter):
        DelonePattern(g, np.zeros((3, 3)))
    p = DelonePattern(g, np.array([[1.0, 1.0]]))
    with pytest.raises(ValueError):
        p.points[0, 0] = 2.0


# --- translation -----------------------------------------------------------------

def test_translate_zero_and_transversal():
    p = generate_pattern(TorusGeometry(8, 2), 0.7, seed=9)
    assert translate_pattern(p, [0.0, 0.0]).same_as(p)
    q = translate_pattern(p, p.points[5])
    assert np.array_equal(q.points[5], [0.0, 0.0])


@given(st.integers(0, 10 ** 6), st.lists(st.floats(-20, 20), min_size=4, max_size=4))
def test_translate_composition_and_isometry(seed, ab):
    p = generate_pattern(TorusGeometry(6, 2), 0.5, seed=seed)
    a, b = np.array(ab[:2]), np.array(ab[2:])
    two = translate_pattern(translate_pattern(p, a), b)
    one = translate_pattern(p, a + b)
    assert np.allclose(torus_displacement(two.points, one.points, p.L), 0.0, atol=1e-9)
    assert np.allclose(pairwise_distance(two), pairwise_distance(p), atol=1e-9)
    assert np.all((two.points >= 0) & (two.points < p.L))


# --- serialization -------------------------------------------------------------------

def test_serialization_roundtrip(tmp_path):
    p = generate_pattern(TorusGeometry(7, 2), 0.8, seed=21)
    text = dumps_pattern(p)
    assert text.splitlines()[0] == "# L=7.0 d=2 d_min=0.8 seed=21 kind=amorphous"
    q = loads_pattern(text)
    assert q.same_as(p) and q.seed == 21 and q.d_max == p.d_max and q.kind == p.kind
    save_pattern(p, tmp_path / "p.txt")
    assert load_pattern(tmp_path / "p.txt").same_as(p)


def test_serialization_custom_and_missing_header():
    p = DelonePattern(TorusGeometry(3, 1), np.array([0.1, 1.7]))
    assert loads_pattern(dumps_pattern(p)).same_as(p)
    with pytest.raises(InvalidParameter):
        loads_pattern("0.1 0.2\n")
