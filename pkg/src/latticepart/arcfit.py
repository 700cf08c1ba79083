"""Least-squares circle/line fits of polylines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

STRAIGHT_TOL = 1e-6


@dataclass(frozen=True)
class ArcFit:
    curvature: float  # signed: positive when the center lies left of the polyline direction
    rms: float
    center: tuple | None
    is_line: bool


def _line_fit(P: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    c = P.mean(axis=0)
    _, _, Vt = np.linalg.svd(P - c)
    d = Vt[0]
    n = np.array([-d[1], d[0]])
    res = (P - c) @ n
    return float(np.sqrt(np.mean(res**2))), c, d


def _pratt(P: np.ndarray):
    """Algebraic circle fit; returns (center, radius) or None for collinear points."""
    z = (P**2).sum(axis=1)
    A = np.column_stack([z, P[:, 0], P[:, 1], np.ones(len(P))])
    # Pratt constraint B^2 + C^2 - 4AD = 1
    Cm = np.array([[0, 0, 0, -2], [0, 1, 0, 0], [0, 0, 1, 0], [-2, 0, 0, 0]], dtype=float)
    M = A.T @ A
    _, V = np.linalg.eig(np.linalg.solve(Cm, M))
    V = np.real(V)
    best = None
    for k in range(4):
        v = V[:, k]
        q = v @ Cm @ v
        if q <= 0:
            continue
        cost = (v @ M @ v) / q
        if best is None or cost < best[0]:
            best = (cost, v / np.sqrt(q))
    if best is None:
        return None
    a, b, c, d = best[1]
    if abs(a) < 1e-14:
        return None
    center = np.array([-b / (2 * a), -c / (2 * a)])
    r2 = (b * b + c * c - 4 * a * d) / (4 * a * a)
    if r2 <= 0:
        return None
    return center, float(np.sqrt(r2))


def fit_arc(P) -> ArcFit:
    """Fit a circle (or a line when |curvature| < 1e-6) to an ordered polyline.

    The geometric refinement uses the circle equation
    A|x|^2 + <B, x> + C = 0 normalized by |B|^2 - 4AC = 1, so the curvature
    2A passes smoothly through zero and straight polylines fit without blow-up.
    """
    P = np.asarray(P, dtype=float)
    if len(P) < 3:
        raise ValueError("need at least three points for an arc fit")
    scale = float(np.linalg.norm(P[-1] - P[0]))
    if scale <= 0:
        scale = float(np.ptp(P, axis=0).max())
    if scale <= 0:
        raise ValueError("degenerate (zero-length) polyline")
    origin = P.mean(axis=0)
    Q = (P - origin) / scale
    line_rms, c, d = _line_fit(Q)
    # initial guess from the line, improved by the algebraic fit when curved
    theta0 = np.arctan2(-d[0], d[1])
    nvec = np.array([np.cos(theta0), np.sin(theta0)])
    x0 = np.array([0.0, theta0, -float(nvec @ c)])
    pr = _pratt(Q) if line_rms > 1e-13 else None
    if pr is not None and pr[1] < 1e6:
        ctr, r = pr
        A = 1.0 / (2 * r)
        u = -2 * A * ctr
        th = np.arctan2(u[1], u[0])
        C = A * (ctr @ ctr - r * r)
        x0b = np.array([A, th, C])
        if _distances(x0b, Q).dot(_distances(x0b, Q)) < _distances(x0, Q).dot(_distances(x0, Q)):
            x0 = x0b
    sol = least_squares(_distances, x0, args=(Q,), method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
    A, th, C = sol.x
    res = _distances(sol.x, Q)
    rms = float(np.sqrt(np.mean(res**2))) * scale
    kappa_abs = abs(2 * A) / scale
    if kappa_abs < STRAIGHT_TOL:
        return ArcFit(0.0, min(rms, line_rms * scale), None, True)
    center_q = -_bvec(sol.x) / (2 * A)
    center = origin + scale * center_q
    # sign: center to the left of the local direction of travel
    m = len(P) // 2
    tang = P[m] - P[m - 1]
    rel = center - P[m]
    side = tang[0] * rel[1] - tang[1] * rel[0]
    return ArcFit(float(np.sign(side) * kappa_abs), rms, tuple(center), False)


def _bvec(x):
    A, th, C = x
    return np.sqrt(max(1.0 + 4.0 * A * C, 1e-300)) * np.array([np.cos(th), np.sin(th)])


def _distances(x, Q):
    A = x[0]
    Pq = A * (Q**2).sum(axis=1) + Q @ _bvec(x) + x[2]
    disc = np.maximum(1.0 + 4.0 * A * Pq, 0.0)
    return 2.0 * Pq / (1.0 + np.sqrt(disc))


def chord_tangent(P, at_start: bool = True, fit: ArcFit | None = None) -> np.ndarray:
    """Unit tangent of the fitted arc at an endpoint, pointing into the polyline."""
    P = np.asarray(P, dtype=float)
    fit = fit or fit_arc(P)
    a, b = (P[0], P[1]) if at_start else (P[-1], P[-2])
    if fit.is_line:
        t = (P[-1] - P[0]) if at_start else (P[0] - P[-1])
        return t / np.linalg.norm(t)
    c = np.asarray(fit.center)
    radial = a - c
    t = np.array([-radial[1], radial[0]])
    if t @ (b - a) < 0:
        t = -t
    return t / np.linalg.norm(t)
