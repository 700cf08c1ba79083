"""One evaluation interface over both partition representations, plus pressures."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arcfit import fit_arc
from .models import EnergyBreakdown, EnergyModel
from .partition_grid import GridPartition, grid_energy
from .partition_poly import PolyGeometry, PolyPartition, total_energy

__all__ = [
    "EnergyBreakdown",
    "EnergyModel",
    "PressureVector",
    "PENALTY_SMOOTHING",
    "evaluate",
    "gradient",
    "energy_and_gradient",
    "project_gradient",
    "edge_curvatures",
    "fit_pressures",
]

PENALTY_SMOOTHING = 1e-7


def evaluate(state, model: EnergyModel) -> EnergyBreakdown:
    """Energy breakdown of a polygonal or grid partition.

    In constrained mode the volume mismatch is reported in
    ``volume_residual``; it is not an error.
    """
    if isinstance(state, GridPartition):
        if model.perimeter == "anisotropic":
            raise TypeError("anisotropic perimeters need a polygonal partition")
        return grid_energy(state, model)
    if isinstance(state, PolyPartition):
        if not model.is_local:
            raise TypeError("nonlocal perimeters need a grid partition")
        return total_energy(state, model)
    raise TypeError(f"unsupported state type {type(state).__name__}")


def energy_and_gradient(geo: PolyGeometry, X: np.ndarray, model: EnergyModel):
    """Energy value and its gradient with respect to the point array X."""
    if not model.is_local:
        raise TypeError("gradients are defined for local perimeters only")
    phi = model.phi
    E = geo.perimeter_energy(X, phi, model.mu)
    G = geo.perimeter_gradient(X, phi, model.mu)
    if model.penalized:
        A = geo.areas(X)
        r = A - np.asarray(model.targets)
        E += model.lam * float(np.abs(r).sum())
        # subgradient 0 at the kink, linear ramp over the smoothing width
        w = model.lam * np.clip(r / PENALTY_SMOOTHING, -1.0, 1.0)
        G = G + np.tensordot(w, geo.area_jacobian(X), axes=1)
    return E, G


def gradient(state: PolyPartition, model: EnergyModel) -> np.ndarray:
    """Gradient of the energy with respect to vertex then sample positions."""
    if isinstance(state, GridPartition) or not model.is_local:
        raise TypeError("gradients are defined for local perimeters on polygonal partitions")
    geo = PolyGeometry(state)
    return energy_and_gradient(geo, geo.points(), model)[1]


def project_gradient(G: np.ndarray, J: np.ndarray) -> np.ndarray:
    """Remove the components of G along the area gradients of the first N-1 cells."""
    N = J.shape[0]
    if N < 2:
        return G.copy()
    A = J[: N - 1].reshape(N - 1, -1)
    g = G.ravel()
    gram = A @ A.T
    coef = np.linalg.solve(gram, A @ g)
    return (g - A.T @ coef).reshape(G.shape)


@dataclass
class PressureVector:
    values: np.ndarray  # one per cell, gauge sum = 0
    residual: float
    curvatures: np.ndarray  # fitted signed curvature per edge


def edge_curvatures(p: PolyPartition) -> tuple[np.ndarray, np.ndarray]:
    """Signed curvature and fit rms per edge, positive when the arc is concave toward its left cell."""
    kappa = np.zeros(len(p.edges))
    rms = np.zeros(len(p.edges))
    for e in range(len(p.edges)):
        P = p.edge_polyline(e)
        if len(P) < 3:
            continue
        f = fit_arc(P)
        kappa[e], rms[e] = f.curvature, f.rms
    return kappa, rms


def edge_sides(p: PolyPartition) -> tuple[np.ndarray, np.ndarray]:
    """Index of the cell left (+ traversal) and right (- traversal) of each edge."""
    left = -np.ones(len(p.edges), dtype=int)
    right = -np.ones(len(p.edges), dtype=int)
    for k, c in enumerate(p.cells):
        for e, s in c.loop:
            (left if s > 0 else right)[e] = k
    return left, right


def fit_pressures(p: PolyPartition, kappa: np.ndarray | None = None) -> PressureVector:
    """Least-squares pressures with kappa_e = rho_left - rho_right and sum rho = 0."""
    if kappa is None:
        kappa, _ = edge_curvatures(p)
    left, right = edge_sides(p)
    N = p.n_cells
    rows, rhs = [], []
    for e in range(len(p.edges)):
        r = np.zeros(N)
        r[left[e]] += 1.0
        r[right[e]] -= 1.0
        rows.append(r)
        rhs.append(kappa[e])
    Ainc = np.array(rows)
    if N > 1 and np.linalg.matrix_rank(Ainc) < N - 1:
        raise ValueError("interfaces do not determine the pressures (cell graph disconnected)")
    A = np.vstack([Ainc, np.ones((1, N))])
    b = np.r_[rhs, 0.0]
    rho, *_ = np.linalg.lstsq(A, b, rcond=None)
    res = float(np.max(np.abs(Ainc @ rho - kappa))) if len(kappa) else 0.0
    return PressureVector(rho, res, np.asarray(kappa))
