"""Structural checks on computed partitions.

Junction angles and arc fits test the triple-junction/circular-arc structure
of planar minimizers, curvature sums and pressures test the pressure law,
diameter ratios test the diameter-perimeter bound of connected cells, and
the minimality probe tests local minimality under perturbations in small
balls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull

from .arcfit import ArcFit, chord_tangent, fit_arc
from .energy import PressureVector, evaluate, fit_pressures
from .functionals import lambda_constant
from .lattice import covering_radius, packing_radius
from .models import EnergyModel
from .optimizer import junction_split_candidates
from .partition_grid import GridPartition, diameter_check, hausdorff_distance, rasterize_partition
from .partition_poly import (
    PartitionError,
    PolyGeometry,
    PolyPartition,
    SupportError,
    local_perturbation,
    restore_areas,
    symmetric_difference_area,
)


@dataclass
class JunctionReport:
    vertex: int
    degree: int
    angles: tuple  # consecutive angles between fitted tangents, degrees
    max_deviation: float  # from 120 degrees; nan for degree != 3


def fit_arcs(state: PolyPartition) -> list[ArcFit]:
    """Circle or line fit of every edge polyline (needs >= 4 points per edge)."""
    fits = []
    for e in range(len(state.edges)):
        P = state.edge_polyline(e)
        if len(P) < 4:
            raise ValueError(f"edge {e} has fewer than 4 points; resample before fitting")
        fits.append(fit_arc(P))
    return fits


def _half_edge_tangents(state: PolyPartition, fits):
    out: dict[int, list] = {v: [] for v in range(len(state.vertices))}
    for e, E in enumerate(state.edges):
        P = state.edge_polyline(e)
        out[E.tail].append((e, +1, chord_tangent(P, True, fits[e])))
        out[E.head].append((e, -1, chord_tangent(P, False, fits[e])))
    return out


def check_junctions(state: PolyPartition, fits=None) -> list[JunctionReport]:
    """Consecutive angles between fitted tangents at every topological vertex."""
    fits = fits if fits is not None else fit_arcs(state)
    reports = []
    for v, half in _half_edge_tangents(state, fits).items():
        T = np.array([t for _, _, t in half])
        ang = np.sort(np.degrees(np.arctan2(T[:, 1], T[:, 0])) % 360.0)
        gaps = np.diff(np.r_[ang, ang[0] + 360.0])
        dev = float(np.max(np.abs(gaps - 120.0))) if len(half) == 3 else math.nan
        reports.append(JunctionReport(v, len(half), tuple(float(g) for g in gaps), dev))
    return reports


def junction_curvature_sum(curvatures, outward_signs=None) -> float:
    """Signed sum of the curvatures of the arcs leaving one junction."""
    k = np.asarray(curvatures, dtype=float)
    s = np.ones_like(k) if outward_signs is None else np.asarray(outward_signs, dtype=float)
    return float(np.dot(k, s))


def check_curvature_sums(state: PolyPartition, fits=None) -> dict[int, float]:
    """|sum of outward-signed curvatures| at every degree-3 junction.

    An edge leaving the junction at its tail contributes +kappa, at its head
    -kappa, so each contribution is the pressure jump across it read
    counter-clockwise, and the three jumps telescope to zero.
    """
    fits = fits if fits is not None else fit_arcs(state)
    out = {}
    for v, half in _half_edge_tangents(state, fits).items():
        if len(half) != 3:
            continue
        out[v] = abs(junction_curvature_sum([fits[e].curvature for e, _, _ in half], [s for _, s, _ in half]))
    return out


@dataclass
class ProbeResult:
    trials: int
    competitors: int
    worst: float  # min over trials of E' - E + Lambda |E delta F|
    radius: float
    lam: float

    @property
    def passed(self) -> bool:
        return self.worst > -1e-9

    @property
    def vacuous(self) -> bool:
        return self.competitors == 0


def _bump(center, rho, vec):
    c = np.asarray(center, dtype=float)

    def field_(Y):
        r2 = ((Y - c) ** 2).sum(axis=1) / (rho * rho)
        w = np.where(r2 < 1.0, (1.0 - r2) ** 2, 0.0)
        return w[:, None] * vec[None, :]

    return field_


MAX_REDRAWS = 20


def _trial_competitors(state, X, deg, L, r, rng, amplitude, constrained):
    # centre near a random skeleton point so the ball meets interfaces
    k = int(rng.integers(len(X)))
    rb = r * float(rng.uniform(0.3, 0.99))
    c = X[k] + rng.uniform(-0.5, 0.5, size=2) * rb
    ang = rng.uniform(0, 2 * np.pi)
    vec = amplitude * rb * float(rng.uniform(0.05, 1.0)) * np.array([math.cos(ang), math.sin(ang)])
    cands = []
    try:
        cands.append(local_perturbation(state, c, rb, _bump(c, rb, vec), volume_preserving=constrained))
    except SupportError:
        pass
    high = [v for v in range(len(deg)) if deg[v] >= 4 and np.linalg.norm(_near(L, X[v], c) - c) < 0.5 * rb]
    for v in high:
        cands.extend(_split_trials(state, v, c, rb, constrained))
    return cands


def minimality_probe(
    state: PolyPartition,
    model: EnergyModel,
    trials: int = 100,
    seed: int = 0,
    radius: float | None = None,
    amplitude: float = 0.15,
) -> ProbeResult:
    """Random local competitors inside balls of radius r < rho_G / 2.

    Geometric trials move the points in a ball by a smooth bump (volumes
    restored inside the ball in constrained mode).  Whenever the ball holds a
    junction of degree >= 4, splitting that junction is tried as well.  A
    ball that yields no valid competitor is redrawn, up to MAX_REDRAWS times.
    Reports the minimum over trials of E(F) - E(E) + Lambda |E delta F|.
    """
    L = state.lattice
    rho = packing_radius(L)
    r = 0.45 * rho if radius is None else float(radius)
    lam = lambda_constant(model, L, r)
    E0 = evaluate(state, model).total
    rng = np.random.default_rng(seed)
    geo = PolyGeometry(state)
    X = geo.points()
    worst = math.inf
    competitors = 0
    constrained = not model.penalized
    deg = state.vertex_degrees()
    for _ in range(trials):
        # redraw a ball whose perturbation cannot restore the volumes locally
        for _attempt in range(MAX_REDRAWS):
            cands = _trial_competitors(state, X, deg, L, r, rng, amplitude, constrained)
            if cands:
                break
        for q in cands:
            try:
                Eq = evaluate(q, model).total
                sd = symmetric_difference_area(state, q) if lam > 0 else 0.0
            except (PartitionError, ValueError):
                continue
            worst = min(worst, Eq - E0 + lam * sd)
            competitors += 1
    return ProbeResult(trials, competitors, 0.0 if competitors == 0 else float(worst), r, lam)


def _near(L, x, c):
    f = L.to_fractional(np.asarray(x) - c)
    return c + L.to_cartesian(f - np.round(f))


def _split_trials(state, v, c, rb, constrained):
    out = []
    samples = max(len(E.samples) for E in state.edges)
    for _, q in junction_split_candidates(state, v, 0.2 * rb, samples):
        if constrained:
            geo = PolyGeometry(q)
            Xq = geo.points()
            near = np.array([np.linalg.norm(_near(q.lattice, x, c) - c) < rb for x in Xq])
            try:
                Xq = restore_areas(geo, Xq, state.target_volumes, near)
            except SupportError:
                continue
            q = q.with_points(Xq)
        out.append(q)
    return out


@dataclass
class DiameterReport:
    cell_diameters: np.ndarray
    cell_perimeters: np.ndarray
    ratios: np.ndarray
    domain_diameter: float
    covering_bound: float  # 2 r_G
    measured_constant: float  # diam(D) - 2 r_G

    @property
    def ratio_max(self) -> float:
        return float(np.max(self.ratios)) if len(self.ratios) else 0.0

    @property
    def passes(self) -> bool:
        return bool(np.all(self.ratios <= 0.5))


def _diameter(P: np.ndarray) -> float:
    if len(P) > 3:
        try:
            P = P[ConvexHull(P).vertices]
        except Exception:  # degenerate hull
            pass
    d = P[:, None, :] - P[None, :, :]
    return float(np.sqrt((d**2).sum(-1)).max())


def diameter_bound_check(state) -> DiameterReport:
    """Cell and domain diameters against perimeters and 2 r_G."""
    if isinstance(state, GridPartition):
        diams, pers = [], []
        for i in range(1, state.n_labels + 1):
            for chk in diameter_check(state, i):
                diams.append(chk.diameter)
                pers.append(chk.perimeter)
        diams, pers = np.array(diams), np.array(pers)
        dom = math.nan
    else:
        polys = [state.cell_polygon(k) for k in range(state.n_cells)]
        diams = np.array([_diameter(P) for P in polys])
        geo = PolyGeometry(state)
        L = geo.edge_lengths(geo.points())
        pers = np.zeros(state.n_cells)
        for k, c in enumerate(state.cells):
            pers[k] = sum(L[e] for e, _ in c.loop)
        dom = _diameter(np.vstack(polys))
    rG = covering_radius(state.lattice)
    ratios = np.divide(diams, pers, out=np.full_like(diams, np.inf), where=pers > 0)
    return DiameterReport(diams, pers, ratios, dom, 2 * rG, dom - 2 * rG)


def hausdorff_to_reference(state: PolyPartition, reference: PolyPartition, n: int = 64) -> float:
    """Max over cells of the Hausdorff distance between rasterized cells."""
    if state.n_cells != reference.n_cells:
        raise ValueError("state and reference have different cell counts")
    ref = rasterize_partition(reference, n)
    cur = rasterize_partition(state.with_lattice(reference.lattice), n)
    return max(
        hausdorff_distance(ref, cur.labels == i, ref.labels == i) for i in range(1, state.n_cells + 1)
    )


@dataclass
class DiagnosticsReport:
    junction_angle_max_dev: float
    junctions: list
    non_regular_junctions: list
    arc_fit: list  # (curvature, rms) per edge
    arc_rms_max: float
    curvature_sum_max: float
    pressures: np.ndarray | None
    pressure_residual: float
    diameter_ratio_max: float
    hausdorff_to_reference: float | None
    minimality_probe: ProbeResult | None
    notes: list = field(default_factory=list)


def diagnose(
    state: PolyPartition,
    model: EnergyModel | None = None,
    reference: PolyPartition | None = None,
    trials: int = 0,
    seed: int = 0,
) -> DiagnosticsReport:
    model = model or EnergyModel.classical(state.target_volumes)
    fits = fit_arcs(state)
    junctions = check_junctions(state, fits)
    regular = [j for j in junctions if j.degree == 3]
    dev = max((j.max_deviation for j in regular), default=0.0)
    sums = check_curvature_sums(state, fits)
    notes = []
    try:
        pv: PressureVector | None = fit_pressures(state, np.array([f.curvature for f in fits]))
        pres, pres_res = pv.values, pv.residual
    except ValueError as exc:
        pres, pres_res = None, math.nan
        notes.append(str(exc))
    dia = diameter_bound_check(state)
    haus = hausdorff_to_reference(state, reference) if reference is not None else None
    probe = minimality_probe(state, model, trials, seed) if trials > 0 else None
    return DiagnosticsReport(
        junction_angle_max_dev=float(dev),
        junctions=junctions,
        non_regular_junctions=[j.vertex for j in junctions if j.degree != 3],
        arc_fit=[(f.curvature, f.rms) for f in fits],
        arc_rms_max=max((f.rms for f in fits), default=0.0),
        curvature_sum_max=max(sums.values(), default=0.0),
        pressures=pres,
        pressure_residual=pres_res,
        diameter_ratio_max=dia.ratio_max,
        hausdorff_to_reference=haus,
        minimality_probe=probe,
        notes=notes,
    )
