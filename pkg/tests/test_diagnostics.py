from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latticepart.constructions import (
    HEX_EDGE,
    HEX_PERIMETER,
    honeycomb,
    periodic_voronoi,
    perturb,
    slab_partition,
    square_grid,
    stretched_hex_domain,
)
from latticepart.diagnostics import (
    check_curvature_sums,
    check_junctions,
    diagnose,
    diameter_bound_check,
    fit_arcs,
    hausdorff_to_reference,
    junction_curvature_sum,
    minimality_probe,
)
from latticepart.lattice import Lattice, covering_radius
from latticepart.models import EnergyModel
from latticepart.optimizer import OptimizerConfig, minimize_poly
from latticepart.partition_grid import GridPartition
from latticepart.partition_poly import resample


@pytest.fixture(scope="module")
def curved_state():
    p = periodic_voronoi(Lattice.hexagonal(4.0), 4, seed=0)
    q, tr = minimize_poly(p, EnergyModel.classical([1.3, 1.3, 1.0, 0.4]), OptimizerConfig(max_iters=4000))
    assert tr.status == "converged"
    return q


def rotated(p, theta):
    c, s = math.cos(theta), math.sin(theta)
    R = np.array([[c, -s], [s, c]])
    return p.with_lattice(Lattice(R @ p.lattice.basis))


# -- junctions -------------------------------------------------------------------------------


def test_honeycomb_junctions_exact():
    reps = check_junctions(honeycomb(4, samples=4))
    assert len(reps) == 8
    assert all(r.degree == 3 for r in reps)
    assert max(r.max_deviation for r in reps) < 1e-9


def test_square_grid_degree_four_listed():
    rep = diagnose(square_grid(2, samples=4))
    assert rep.non_regular_junctions
    assert all(j.degree == 4 for j in rep.junctions)


def test_converged_stability_run_junctions():
    p = perturb(honeycomb(4), 0.05, seed=1)
    q, _ = minimize_poly(p, EnergyModel.classical([1.0] * 4), OptimizerConfig(max_iters=5000))
    assert max(r.max_deviation for r in check_junctions(resample(q, 4))) < 0.01


def test_curved_state_junctions(curved_state):
    reps = check_junctions(curved_state)
    assert all(r.degree == 3 for r in reps)
    assert max(r.max_deviation for r in reps) < 0.05


# -- arcs and curvature sums --------------------------------------------------------------------


def test_fit_arcs_needs_four_points():
    with pytest.raises(ValueError):
        fit_arcs(honeycomb(2, samples=1))
    assert all(f.is_line for f in fit_arcs(honeycomb(2, samples=2)))


def test_curved_state_arcs(curved_state):
    fits = fit_arcs(curved_state)
    lengths = [float(np.sum(np.linalg.norm(np.diff(curved_state.edge_polyline(e), axis=0), axis=1))) for e in range(len(fits))]
    assert any(not f.is_line for f in fits)
    for f, ell in zip(fits, lengths):
        assert f.rms < 1e-4 * ell


def test_curvature_sums_honeycomb_zero():
    sums = check_curvature_sums(honeycomb(3, samples=4))
    assert sums and all(v == 0.0 for v in sums.values())


def test_curvature_sum_synthetic():
    assert junction_curvature_sum([1.0, -0.4, -0.6]) == pytest.approx(0.0, abs=1e-15)
    assert junction_curvature_sum([1.0, 0.4, 0.6], [1, -1, -1]) == pytest.approx(0.0, abs=1e-15)


def test_curvature_sums_stretched_pair():
    p = periodic_voronoi(honeycomb(2).lattice, 2, seed=0)
    q, _ = minimize_poly(p, EnergyModel.classical([1.2, 0.8]), OptimizerConfig(max_iters=5000))
    assert max(check_curvature_sums(resample(q, 4)).values()) < 1e-3


def test_curvature_sums_curved_state(curved_state):
    sums = check_curvature_sums(curved_state)
    assert max(sums.values()) < 1e-3


@settings(max_examples=10, deadline=None)
@given(theta=st.floats(0, 2 * math.pi))
def test_curvature_sums_rotation_invariant(curved_state, theta):
    a = check_curvature_sums(curved_state)
    b = check_curvature_sums(rotated(curved_state, theta))
    assert a.keys() == b.keys()
    for v in a:
        assert b[v] == pytest.approx(a[v], abs=1e-9)


# -- minimality probe ------------------------------------------------------------------------


def test_probe_honeycomb_passes():
    res = minimality_probe(honeycomb(4), EnergyModel.classical([1.0] * 4), trials=100, seed=0)
    assert res.competitors > 0
    assert res.worst > -1e-9 and res.passed
    assert res.lam == 0.0


def test_probe_square_grid_finds_decrease():
    res = minimality_probe(square_grid(2, samples=2), EnergyModel.classical([1.0, 1.0]), trials=100, seed=0)
    assert res.worst < -1e-6 and not res.passed


def test_probe_zero_trials_vacuous():
    res = minimality_probe(honeycomb(2), EnergyModel.classical([1.0, 1.0]), trials=0)
    assert res.vacuous and res.passed and res.worst == 0.0


def test_probe_radius_precondition():
    with pytest.raises(ValueError):
        minimality_probe(honeycomb(2), EnergyModel.classical([1.0, 1.0]), trials=5, radius=10.0)


def test_probe_deterministic():
    m = EnergyModel.classical([1.0] * 3, lam=0.5)
    a = minimality_probe(honeycomb(3), m, trials=30, seed=7)
    b = minimality_probe(honeycomb(3), m, trials=30, seed=7)
    assert a == b


# -- diameters ---------------------------------------------------------------------------------


def test_diameter_honeycomb_cell():
    rep = diameter_bound_check(honeycomb(2))
    assert np.allclose(rep.cell_diameters, 2 * HEX_EDGE, atol=1e-12)
    assert np.allclose(rep.ratios, 2 * HEX_EDGE / HEX_PERIMETER, atol=1e-12)
    assert rep.ratio_max == pytest.approx(1 / 3, abs=1e-12)
    assert rep.passes
    assert rep.covering_bound == pytest.approx(2 * covering_radius(honeycomb(2).lattice), abs=1e-12)


def test_diameter_unit_square():
    rep = diameter_bound_check(square_grid(1))
    assert rep.ratio_max == pytest.approx(math.sqrt(2) / 4, abs=1e-12)


def test_diameter_thin_slab_approaches_half():
    prev = 0.0
    for w in (0.3, 0.1, 0.01, 0.001):
        rep = diameter_bound_check(slab_partition(Lattice.square(), [w, 1 - w]))
        r = float(rep.ratios[0])
        assert prev < r < 0.5
        prev = r
    assert prev > 0.499


def test_diameter_grid_state():
    lab = np.ones((8, 8), dtype=int)
    lab[2:4, 2:6] = 2
    rep = diameter_bound_check(GridPartition(Lattice.square(), lab, 2))
    # the background wraps around the torus, so its unwrapped diameter is unbounded
    assert rep.ratios[0] == math.inf and not rep.passes
    assert rep.ratios[1] == pytest.approx(math.hypot(0.5, 0.25) / 1.5, abs=1e-12)
    assert math.isnan(rep.domain_diameter)


# -- reference distance and the full report ----------------------------------------------------


def test_hausdorff_to_self_zero_and_perturbed_small():
    p = honeycomb(2)
    assert hausdorff_to_reference(p, p) == 0.0
    assert hausdorff_to_reference(perturb(p, 0.03, seed=2), p) < 0.15
    with pytest.raises(ValueError):
        hausdorff_to_reference(honeycomb(3), p)


def test_diagnose_report_finite_and_deterministic():
    p = stretched_hex_domain([1.2, 0.8], samples=4)
    a = diagnose(p, trials=10, seed=3, reference=stretched_hex_domain([1.2, 0.8]))
    b = diagnose(p, trials=10, seed=3, reference=stretched_hex_domain([1.2, 0.8]))
    for name in ("junction_angle_max_dev", "arc_rms_max", "curvature_sum_max", "pressure_residual", "diameter_ratio_max"):
        assert math.isfinite(getattr(a, name))
        assert getattr(a, name) == getattr(b, name)
    assert a.minimality_probe == b.minimality_probe
    assert a.hausdorff_to_reference == 0.0
    assert np.allclose(a.pressures, 0.0, atol=1e-9)
