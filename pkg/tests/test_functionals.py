from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latticepart.functionals import (
    Anisotropy,
    Kernel,
    anisotropic_length,
    kernel_tail,
    lambda_constant,
    phi_eval,
    subadditivity_constants,
    wulff_shape,
)
from latticepart.lattice import Lattice
from latticepart.models import EnergyModel

from oracles import polygon_area, polygon_perimeter, radial_tail, shoelace

ALL_KINDS = [
    Anisotropy("euclidean"),
    Anisotropy("ell1"),
    Anisotropy("hexagonal"),
    Anisotropy.from_directions([(1, 0), (1, 2), (-1, 3)], [1.0, 1.5, 0.8]),
]


# -- phi ---------------------------------------------------------------------------


def test_phi_euclidean_unit():
    assert phi_eval(Anisotropy("euclidean"), (0.6, 0.8)) == pytest.approx(1.0, abs=1e-15)


def test_phi_ell1():
    assert phi_eval(Anisotropy("ell1"), (0.6, 0.8)) == pytest.approx(1.4, abs=1e-15)
    assert phi_eval(Anisotropy("ell1"), (1, 0)) == 1.0


def test_phi_zero_vector_rejected():
    with pytest.raises(ValueError):
        phi_eval(Anisotropy("ell1"), (0.0, 0.0))


def test_phi_from_directions_matches_definition():
    dirs = [(1, 0), (1, 2), (-1, 3)]
    w = [1.0, 1.5, 0.8]
    a = Anisotropy.from_directions(dirs, w)
    rng = np.random.default_rng(3)
    for v in rng.normal(size=(50, 2)):
        ref = max(wk * abs(np.dot(v, np.asarray(d) / np.linalg.norm(d))) for d, wk in zip(dirs, w))
        assert phi_eval(a, v) == pytest.approx(ref, rel=1e-13)


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        Anisotropy("crystal")


@settings(max_examples=200, deadline=None)
@given(
    st.sampled_from(range(len(ALL_KINDS))),
    st.floats(-10, 10, allow_nan=False),
    st.floats(-1, 1, allow_nan=False),
    st.floats(-1, 1, allow_nan=False),
)
def test_phi_homogeneous_and_even(k, t, x, y):
    if math.hypot(x, y) < 1e-6:
        return
    a = ALL_KINDS[k]
    v = np.array([x, y])
    base = phi_eval(a, v)
    assert base > 0
    assert phi_eval(a, -v) == pytest.approx(base, rel=1e-12)
    if t != 0:
        assert phi_eval(a, t * v) == pytest.approx(abs(t) * base, rel=1e-12)


def test_phi_homogeneity_bulk():
    rng = np.random.default_rng(0)
    V = rng.normal(size=(1000, 2))
    t = rng.uniform(-5, 5, size=1000)
    for a in ALL_KINDS:
        base = phi_eval(a, V)
        assert np.allclose(phi_eval(a, t[:, None] * V), np.abs(t) * base, rtol=1e-12, atol=0)
        assert np.allclose(phi_eval(a, -V), base, rtol=1e-12, atol=0)


# -- Wulff shapes --------------------------------------------------------------------


def test_wulff_ell1_is_unit_square():
    W = wulff_shape(Anisotropy("ell1"), 1.0)
    assert len(W) == 4
    assert shoelace(W) == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(np.sort(np.abs(W), axis=0), 0.5, atol=1e-12)


def test_wulff_hexagonal_regular_hexagon():
    W = wulff_shape(Anisotropy("hexagonal"), 1.0)
    assert len(W) == 6
    sides = np.linalg.norm(np.roll(W, -1, axis=0) - W, axis=1)
    assert np.allclose(sides, sides[0], rtol=1e-12)
    assert polygon_perimeter(W) == pytest.approx(2 * 12**0.25, abs=1e-9)
    assert polygon_perimeter(W) == pytest.approx(3.72242, abs=1e-5)
    # its own anisotropic perimeter coincides with the euclidean one
    a = Anisotropy("hexagonal")
    assert anisotropic_length(a, W) == pytest.approx(polygon_perimeter(W), rel=1e-12)


def test_wulff_scales_with_volume():
    for a in ALL_KINDS:
        assert np.allclose(wulff_shape(a, 4.0), 2 * wulff_shape(a, 1.0), atol=1e-12)


def test_wulff_euclidean_is_64gon():
    W = wulff_shape(Anisotropy("euclidean"), 1.0)
    assert len(W) == 64
    assert polygon_perimeter(W) == pytest.approx(2 * math.sqrt(math.pi), rel=2e-3)


@pytest.mark.parametrize("k", range(len(ALL_KINDS)))
@pytest.mark.parametrize("v", [0.3, 1.0, 2.7])
def test_wulff_area(k, v):
    W = wulff_shape(ALL_KINDS[k], v)
    assert shoelace(W) == pytest.approx(v, abs=1e-9)
    assert polygon_area(W) == pytest.approx(v, abs=1e-9)


def test_wulff_rejects_nonpositive_volume():
    with pytest.raises(ValueError):
        wulff_shape(Anisotropy("ell1"), 0.0)


def test_wulff_minimizes_anisotropic_perimeter():
    a = Anisotropy("hexagonal")
    W = wulff_shape(a, 1.0)
    best = anisotropic_length(a, W)
    rng = np.random.default_rng(1)
    for _ in range(30):
        Q = W @ np.array([[1.0, rng.uniform(-0.3, 0.3)], [0.0, 1.0]])
        Q = Q * math.sqrt(1.0 / shoelace(Q))
        assert anisotropic_length(a, Q) >= best - 1e-12


# -- kernels -------------------------------------------------------------------------


def test_kernel_tail_t1():
    k = Kernel(0.5, 2)
    assert kernel_tail(k, 1.0) == pytest.approx(4 * math.pi, rel=1e-14)
    assert kernel_tail(k, 1.0) == pytest.approx(radial_tail(0.5, 2, 1.0), rel=1e-6)


def test_kernel_tail_t4():
    k = Kernel(0.5, 2)
    assert kernel_tail(k, 4.0) == pytest.approx(2 * math.pi, rel=1e-14)
    assert kernel_tail(k, 4.0) == pytest.approx(radial_tail(0.5, 2, 4.0), rel=1e-6)


def test_kernel_tail_infinity():
    assert kernel_tail(Kernel(0.5, 2), math.inf) == 0.0


def test_kernel_tail_rejects_nonpositive():
    with pytest.raises(ValueError):
        kernel_tail(Kernel(0.5, 2), 0.0)
    with pytest.raises(ValueError):
        kernel_tail(Kernel(0.5, 2), -1.0)


def test_kernel_exponent_validated():
    for s in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(ValueError):
            Kernel(s, 2)


def test_kernel_symmetric_and_lower_bound():
    k = Kernel(0.3, 2)
    rng = np.random.default_rng(2)
    X = rng.normal(size=(200, 2))
    assert np.allclose(k(X), k(-X), rtol=1e-14)
    r = np.linalg.norm(X, axis=1)
    assert np.all(k(X) >= r ** (-2.3) * (1 - 1e-14))


def test_kernel_tabulated_profile_matches_power_law():
    s = 0.4
    k = Kernel(s, 2, profile=lambda r: r ** (-(2 + s)))
    assert kernel_tail(k, 1.3) == pytest.approx(kernel_tail(Kernel(s, 2), 1.3), rel=1e-6)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 0.95), st.integers(1, 3), st.floats(0.1, 50.0))
def test_kernel_tail_matches_quadrature(s, d, t):
    assert kernel_tail(Kernel(s, d), t) == pytest.approx(radial_tail(s, d, t), rel=1e-6)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.1, 20.0), st.floats(0.0, 20.0))
def test_subadditivity_tail_nonincreasing(s, t, dt):
    c = subadditivity_constants(Kernel(s, 2))
    assert c.c == 2.0
    assert c.tail(t + dt) <= c.tail(t) * (1 + 1e-14)


def test_subadditivity_local():
    c = subadditivity_constants()
    assert c.c == 1.0
    assert c.tail(0.7) == 0.0


def test_tail_vanishes_at_infinity():
    c = subadditivity_constants(Kernel(0.5, 2))
    assert c.tail(1e12) < 1e-4


# -- Lambda --------------------------------------------------------------------------


def test_lambda_local_constrained():
    m = EnergyModel.classical([1.0])
    for r in (0.0, 0.1, 0.2, 0.249):
        assert lambda_constant(m, Lattice.square(), r) == 0.0


def test_lambda_local_penalized():
    m = EnergyModel.classical([1.0], lam=2.5)
    assert lambda_constant(m, Lattice.square(), 0.1) == 2.5


def test_lambda_nonlocal_constrained():
    m = EnergyModel.nonlocal_(Kernel(0.5, 2), [1.0])
    val = lambda_constant(m, Lattice.square(), 0.1)
    assert val == pytest.approx(2 * math.pi * 0.3**-0.5 / 0.5, rel=1e-14)
    assert val == pytest.approx(22.943, abs=1e-3)
    assert val == pytest.approx(radial_tail(0.5, 2, 0.3), rel=1e-6)


def test_lambda_nonlocal_penalized():
    m = EnergyModel.nonlocal_(Kernel(0.5, 2), [1.0], lam=1.5)
    assert lambda_constant(m, Lattice.square(), 0.1) == pytest.approx(1.5 + kernel_tail(Kernel(0.5, 2), 0.3))


def test_lambda_radius_out_of_range():
    m = EnergyModel.classical([1.0])
    with pytest.raises(ValueError):
        lambda_constant(m, Lattice.square(), 0.25)
    with pytest.raises(ValueError):
        lambda_constant(m, Lattice.square(), -0.01)
