from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latticepart.lattice import (
    DimensionError,
    Lattice,
    basis_angle,
    covering_radius,
    fundamental_parallelepiped,
    packing_radius,
    points_in_ball,
    random_unimodular,
    reduce,
    volume,
)

from oracles import brute_covering_radius, brute_points_in_ball, brute_shortest_length, shoelace

A_HEX = math.sqrt(2 / math.sqrt(3))


def hex_lattice():
    return Lattice.from_vectors((A_HEX, 0.0), (A_HEX / 2, A_HEX * math.sqrt(3) / 2))


# -- volume ---------------------------------------------------------------------


def test_volume_identity():
    assert volume(Lattice.square()) == 1.0


def test_volume_diagonal():
    assert volume(Lattice.from_vectors((2, 0), (0, 3))) == pytest.approx(6.0, abs=1e-15)


def test_volume_hexagonal_unit():
    assert volume(hex_lattice()) == pytest.approx(1.0, abs=1e-14)
    assert volume(Lattice.hexagonal()) == pytest.approx(1.0, abs=1e-14)


def test_singular_basis_rejected():
    with pytest.raises(ValueError):
        Lattice.from_vectors((1, 2), (2, 4))


# -- reduction ------------------------------------------------------------------


def test_reduce_shear_of_z2():
    R = reduce(Lattice.from_vectors((1, 0), (5, 1)))
    assert np.allclose(R.basis, np.eye(2), atol=1e-14)


def test_reduce_keeps_reduced_basis():
    L = Lattice.from_vectors((1, 0), (0.5, 0.9))
    R = reduce(L)
    assert np.allclose(R.basis, L.basis, atol=1e-14)
    # brute force: no nontrivial combination is shorter than either vector
    u, v = L.vectors
    for a in range(-3, 4):
        for b in range(-3, 4):
            if (a, b) in ((0, 0),):
                continue
            w = a * u + b * v
            if (a, b) not in ((1, 0), (-1, 0)):
                assert np.linalg.norm(w) >= np.linalg.norm(u) - 1e-12
            if b != 0 and (a, b) not in ((0, 1), (0, -1)):
                assert np.linalg.norm(w) >= np.linalg.norm(v) - 1e-12


def test_reduce_scrambled_hexagonal():
    rng = np.random.default_rng(7)
    H = hex_lattice()
    for _ in range(10):
        M = random_unimodular(rng, 2, steps=8)
        R = reduce(Lattice(H.basis @ M))
        u, v = R.vectors
        assert np.linalg.norm(u) == pytest.approx(A_HEX, abs=1e-12)
        assert np.linalg.norm(v) == pytest.approx(A_HEX, abs=1e-12)
        assert brute_shortest_length(R.basis) == pytest.approx(A_HEX, abs=1e-12)


def test_reduce_unsupported_dimension():
    with pytest.raises(DimensionError):
        reduce(Lattice(np.eye(4)))


def test_reduce_three_dimensional_shortest_first():
    L = Lattice(np.array([[1.0, 4.0, 0.0], [0.0, 1.0, 7.0], [0.0, 0.0, 1.0]]))
    R = reduce(L)
    assert volume(R) == pytest.approx(volume(L), rel=1e-12)
    lengths = np.linalg.norm(R.basis, axis=0)
    assert lengths[0] == pytest.approx(brute_shortest_length(L.basis, 8), abs=1e-12)


# -- radii ----------------------------------------------------------------------


def test_packing_radius_z2():
    assert packing_radius(Lattice.square()) == pytest.approx(0.5, abs=1e-15)


def test_packing_radius_hexagonal():
    rho = packing_radius(hex_lattice())
    assert rho == pytest.approx(A_HEX / 2, abs=1e-14)
    assert rho == pytest.approx(0.53729, abs=1e-5)
    assert rho == pytest.approx(brute_shortest_length(hex_lattice().basis, 5) / 2, abs=1e-14)


def test_packing_radius_homogeneous():
    L = Lattice.from_vectors((1.0, 0.2), (0.3, 1.7))
    assert packing_radius(L.scaled(2.5)) == pytest.approx(2.5 * packing_radius(L), rel=1e-13)


def test_covering_radius_z2():
    assert covering_radius(Lattice.square()) == pytest.approx(math.sqrt(2) / 2, abs=1e-14)


def test_covering_radius_hexagonal():
    r = covering_radius(hex_lattice())
    assert r == pytest.approx(A_HEX / math.sqrt(3), abs=1e-14)
    assert r == pytest.approx(0.62040, abs=1e-5)
    assert brute_covering_radius(hex_lattice().basis, n=150) == pytest.approx(r, abs=5e-3)


def test_covering_radius_unsupported_dimension():
    with pytest.raises(DimensionError):
        covering_radius(Lattice(np.eye(3)))


# -- fundamental domain and enumeration -------------------------------------------


def test_parallelepiped_unit_square():
    P = fundamental_parallelepiped(Lattice.square())
    assert shoelace(P) == pytest.approx(1.0, abs=1e-15)


def test_parallelepiped_hexagonal():
    assert shoelace(fundamental_parallelepiped(hex_lattice())) == pytest.approx(1.0, abs=1e-14)


def test_parallelepiped_rectangle():
    P = fundamental_parallelepiped(Lattice.from_vectors((2, 0), (0, 3)))
    assert shoelace(P) == pytest.approx(6.0, abs=1e-14)
    assert np.allclose(P.max(axis=0), (2, 3))


def test_points_in_ball_unit():
    pts = points_in_ball(Lattice.square(), 1.0)
    assert set(pts) == {(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)}
    assert pts == sorted(pts)


def test_points_in_ball_one_and_a_half():
    pts = points_in_ball(Lattice.square(), 1.5)
    assert len(pts) == 9
    assert set(pts) == brute_points_in_ball(np.eye(2), 1.5, 2)


def test_points_in_ball_zero_radius():
    L = Lattice.from_vectors((1.3, 0.1), (0.2, 0.9))
    assert points_in_ball(L, 0.0) == [(0, 0)]


def test_basis_angle_hexagonal():
    assert basis_angle(hex_lattice()) == pytest.approx(60.0, abs=1e-10)
    assert basis_angle(Lattice.square()) == pytest.approx(90.0, abs=1e-10)


# -- properties ---------------------------------------------------------------------

basis_entries = st.floats(min_value=-3, max_value=3, allow_nan=False, allow_infinity=False)


def _lattice_or_skip(vals):
    B = np.array(vals, dtype=float).reshape(2, 2)
    if abs(np.linalg.det(B)) < 0.05 or np.abs(B).max() < 0.1:
        return None
    return Lattice(B)


@settings(max_examples=60, deadline=None)
@given(st.lists(basis_entries, min_size=4, max_size=4), st.integers(0, 2**32 - 1))
def test_unimodular_invariance(vals, seed):
    L = _lattice_or_skip(vals)
    if L is None:
        return
    M = random_unimodular(np.random.default_rng(seed), 2)
    L2 = Lattice(L.basis @ M)
    assert volume(L2) == pytest.approx(volume(L), rel=1e-9)
    assert volume(reduce(L)) == pytest.approx(volume(L), rel=1e-9)
    assert packing_radius(L2) == pytest.approx(packing_radius(L), rel=1e-9)
    assert covering_radius(L2) == pytest.approx(covering_radius(L), rel=1e-9)
    assert packing_radius(L) <= covering_radius(L) + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.lists(basis_entries, min_size=4, max_size=4), st.floats(min_value=0, max_value=4))
def test_points_in_ball_complete(vals, radius):
    L = _lattice_or_skip(vals)
    if L is None:
        return
    pts = points_in_ball(L, radius)
    for k in pts:
        assert np.linalg.norm(L.point(k)) <= radius + 1e-12
    # a brute window generous enough to contain the ball twice over
    R = reduce(L)
    K = int(math.ceil(2 * radius / (2 * packing_radius(L)) * 1.0)) + 2
    M = np.rint(np.linalg.solve(L.basis, R.basis)).astype(int)
    brute = {tuple(int(x) for x in M @ np.array(k)) for k in brute_points_in_ball(R.basis, radius, K + 2)}
    assert set(pts) == brute


@settings(max_examples=40, deadline=None)
@given(st.lists(basis_entries, min_size=4, max_size=4))
def test_reduce_finds_shortest_vector(vals):
    L = _lattice_or_skip(vals)
    if L is None:
        return
    R = reduce(L)
    assert np.linalg.norm(R.basis[:, 0]) == pytest.approx(brute_shortest_length(R.basis, 4), rel=1e-9)
    assert np.linalg.norm(R.basis[:, 0]) <= np.linalg.norm(R.basis[:, 1]) + 1e-12
