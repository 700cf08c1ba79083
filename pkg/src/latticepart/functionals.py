"""Perimeter integrands: anisotropic norms, fractional kernels, tail bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .lattice import Lattice, packing_radius

EUCLIDEAN_WULFF_SIDES = 64


def _sphere_surface(d: int) -> float:
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


@dataclass(frozen=True)
class Anisotropy:
    """An even, convex, 1-homogeneous surface tension on the plane.

    Polyhedral kinds are stored as the vertex set of their (symmetric) Wulff
    polygon; the norm is then its support function, ``phi(n) = max_k <n, w_k>``.
    """

    kind: str = "euclidean"
    vertices: tuple = ()

    def __post_init__(self):
        if self.kind not in ("euclidean", "ell1", "hexagonal", "polygonal"):
            raise ValueError(f"unknown anisotropy kind {self.kind!r}")
        if self.kind == "ell1":
            verts = ((1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0))
        elif self.kind == "hexagonal":
            # Wulff shape: regular hexagon with inradius 1 and horizontal facets
            R = 2.0 / math.sqrt(3.0)
            verts = tuple(
                (R * math.cos(k * math.pi / 3), R * math.sin(k * math.pi / 3)) for k in range(6)
            )
        elif self.kind == "polygonal":
            if len(self.vertices) < 2:
                raise ValueError("polygonal anisotropy needs at least two vertices")
            pts = [tuple(map(float, v)) for v in self.vertices]
            pts += [(-x, -y) for x, y in pts]
            uniq = []
            for p in pts:
                if not any(abs(p[0] - q[0]) < 1e-14 and abs(p[1] - q[1]) < 1e-14 for q in uniq):
                    uniq.append(p)
            uniq.sort(key=lambda p: math.atan2(p[1], p[0]))
            verts = tuple(uniq)
        else:
            verts = ()
        object.__setattr__(self, "vertices", verts)

    @classmethod
    def from_directions(cls, directions, weights) -> "Anisotropy":
        """phi(n) = max_k weight_k |<n, direction_k>|."""
        verts = [
            tuple(w * np.asarray(d, dtype=float) / np.linalg.norm(d))
            for d, w in zip(directions, weights)
        ]
        if any(w <= 0 for w in weights):
            raise ValueError("weights must be positive")
        return cls("polygonal", tuple(verts))

    @property
    def vertex_array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float).reshape(-1, 2)

    def __call__(self, normal) -> np.ndarray:
        return phi_eval(self, normal)

    def gradient(self, v) -> np.ndarray:
        """A (sub)gradient of phi at each row of ``v``; ties share the weight."""
        v = np.atleast_2d(np.asarray(v, dtype=float))
        if self.kind == "euclidean":
            n = np.linalg.norm(v, axis=1, keepdims=True)
            return np.divide(v, n, out=np.zeros_like(v), where=n > 0)
        W = self.vertex_array
        vals = v @ W.T
        top = vals.max(axis=1, keepdims=True)
        scale = np.maximum(np.abs(top), 1e-300)
        mask = vals >= top - 1e-12 * scale
        return (mask @ W) / mask.sum(axis=1, keepdims=True)


def phi_eval(a: Anisotropy, normal) -> np.ndarray | float:
    """Value of the norm on one vector or on each row of an array."""
    v = np.asarray(normal, dtype=float)
    single = v.ndim == 1
    v2 = np.atleast_2d(v)
    if single and not np.any(v2):
        raise ValueError("normal must be nonzero")
    if a.kind == "euclidean":
        out = np.hypot(v2[:, 0], v2[:, 1])
    elif a.kind == "ell1":
        out = np.abs(v2[:, 0]) + np.abs(v2[:, 1])
    else:
        out = (v2 @ a.vertex_array.T).max(axis=1)
    return float(out[0]) if single else out


def polygon_area(P: np.ndarray) -> float:
    x, y = P[:, 0], P[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def anisotropic_length(a: Anisotropy, P: np.ndarray, closed: bool = True) -> float:
    """Per_phi of a polygon (or length of an open polyline) with normals from phi."""
    Q = np.vstack([P, P[:1]]) if closed else P
    seg = np.diff(Q, axis=0)
    rot = np.column_stack([seg[:, 1], -seg[:, 0]])
    return float(np.sum(phi_eval(a, rot)))


def wulff_shape(a: Anisotropy, volume: float) -> np.ndarray:
    """Wulff polygon of the anisotropy, scaled to the requested area.

    The euclidean case is approximated by a regular 64-gon.
    """
    if volume <= 0:
        raise ValueError("volume must be positive")
    if a.kind == "euclidean":
        t = np.arange(EUCLIDEAN_WULFF_SIDES) * 2 * np.pi / EUCLIDEAN_WULFF_SIDES
        W = np.column_stack([np.cos(t), np.sin(t)])
    else:
        W = a.vertex_array.copy()
        ang = np.arctan2(W[:, 1], W[:, 0])
        W = W[np.argsort(ang, kind="stable")]
    return W * math.sqrt(volume / polygon_area(W))


@dataclass(frozen=True)
class Kernel:
    """Fractional interaction kernel K(x) = |x|^-(d+s), truncated for periodization.

    ``profile`` optionally replaces the power law by a tabulated radial
    profile ``K(r)``; its tail is then integrated numerically.
    """

    s: float = 0.5
    dim: int = 2
    truncation_radius: float | None = None
    profile: Callable[[float], float] | None = field(default=None, compare=False)

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise ValueError("fractional exponent must lie in (0, 1)")
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        if self.truncation_radius is not None and self.truncation_radius <= 0:
            raise ValueError("truncation radius must be positive")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        if self.profile is not None:
            return np.vectorize(self.profile)(r)
        with np.errstate(divide="ignore"):
            return r ** (-(self.dim + self.s))

    def radial(self, r):
        if self.profile is not None:
            return self.profile(r)
        return r ** (-(self.dim + self.s))


def kernel_tail(k: Kernel, t: float) -> float:
    """Integral of K over the complement of the ball of radius t."""
    if t <= 0:
        raise ValueError("tail radius must be positive")
    if math.isinf(t):
        return 0.0
    if k.profile is None:
        return _sphere_surface(k.dim) * t ** (-k.s) / k.s
    val, _ = integrate.quad(lambda r: k.radial(r) * r ** (k.dim - 1), t, np.inf, limit=200)
    return _sphere_surface(k.dim) * val


@dataclass(frozen=True)
class SubadditivityConstants:
    c: float
    tail: Callable[[float], float]


def subadditivity_constants(kernel: Kernel | None = None) -> SubadditivityConstants:
    """Almost-subadditivity data: c = 1, tail 0 (local) or c = 2, kernel tail."""
    if kernel is None:
        return SubadditivityConstants(1.0, lambda t: 0.0)
    return SubadditivityConstants(2.0, lambda t: kernel_tail(kernel, t))


def lambda_constant(model, L: Lattice, r: float) -> float:
    """The local-minimality defect Lambda on balls of radius r < rho_G / 2."""
    rho = packing_radius(L)
    if not 0 <= r < rho / 2:
        raise ValueError(f"radius {r} must lie in [0, rho_G/2) = [0, {rho / 2})")
    lam = model.lam if model.penalized else 0.0
    if model.kernel is None:
        return float(lam)
    return float(lam + kernel_tail(model.kernel, rho - 2 * r))
