"""Lattices of translations: volume, reduction, packing/covering radii."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay

TIE_TOL = 1e-12


class DimensionError(ValueError):
    """Raised when an operation is not supported in the lattice dimension."""


@dataclass(frozen=True, eq=False)
class Lattice:
    """A rank-d lattice given by the columns of ``basis``."""

    basis: np.ndarray

    def __post_init__(self):
        b = np.array(self.basis, dtype=float)
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise ValueError("basis must be a square matrix")
        if not np.all(np.isfinite(b)):
            raise ValueError("basis must be finite")
        if abs(np.linalg.det(b)) <= 1e-14 * max(1.0, np.abs(b).max()) ** b.shape[0]:
            raise ValueError("basis is singular")
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)

    @classmethod
    def from_vectors(cls, *vectors) -> "Lattice":
        return cls(np.column_stack([np.asarray(v, dtype=float) for v in vectors]))

    @classmethod
    def square(cls, side: float = 1.0, dim: int = 2) -> "Lattice":
        return cls(side * np.eye(dim))

    @classmethod
    def hexagonal(cls, volume: float = 1.0) -> "Lattice":
        a = np.sqrt(2.0 * volume / np.sqrt(3.0))
        return cls.from_vectors((a, 0.0), (a / 2.0, a * np.sqrt(3.0) / 2.0))

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def vectors(self) -> list[np.ndarray]:
        return [self.basis[:, i].copy() for i in range(self.dim)]

    def to_cartesian(self, frac) -> np.ndarray:
        return np.asarray(frac, dtype=float) @ self.basis.T

    def to_fractional(self, x) -> np.ndarray:
        return np.linalg.solve(self.basis, np.asarray(x, dtype=float).T).T

    def point(self, coeffs) -> np.ndarray:
        """Cartesian position of the lattice vector with integer ``coeffs``."""
        return self.basis @ np.asarray(coeffs, dtype=float)

    def scaled(self, t: float) -> "Lattice":
        return Lattice(t * self.basis)

    def __eq__(self, other):
        return isinstance(other, Lattice) and np.array_equal(self.basis, other.basis)

    def __hash__(self):
        return hash(self.basis.tobytes())

    def __repr__(self):
        return f"Lattice({self.basis.tolist()!r})"


def volume(L: Lattice) -> float:
    return float(abs(np.linalg.det(L.basis)))


def _gauss_reduce(u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if u @ u > v @ v:
        u, v = v, u
    for _ in range(10_000):
        k = round(float(u @ v) / float(u @ u))
        v = v - k * u
        if v @ v < u @ u * (1.0 - TIE_TOL):
            u, v = v, u
        else:
            break
    else:  # pragma: no cover
        raise RuntimeError("Lagrange-Gauss reduction did not terminate")
    return u, v


def _canonical_pair(u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pick one basis among the equally short reduced bases.

    Preference: positive orientation, non-obtuse angle, then lexicographically
    largest vectors (so the standard basis of Z^2 maps to itself).
    """
    nu, nv = float(u @ u), float(v @ v)
    vol = abs(u[0] * v[1] - u[1] * v[0])
    ks = itertools.product(range(-2, 3), repeat=2)
    pool = [a * u + b * v for a, b in ks if (a, b) != (0, 0)]
    firsts = [w for w in pool if abs(w @ w - nu) <= TIE_TOL * nu]
    seconds = [w for w in pool if abs(w @ w - nv) <= TIE_TOL * nv]

    def key(ab):
        a, b = ab
        det = a[0] * b[1] - a[1] * b[0]
        return (det < 0, a @ b < -TIE_TOL * nu, tuple(-x for x in a), tuple(-x for x in b))

    cands = [
        (a, b)
        for a in firsts
        for b in seconds
        if abs(abs(a[0] * b[1] - a[1] * b[0]) - vol) <= 1e-9 * max(vol, 1e-300)
    ]
    return min(cands, key=key)


def _lll(B: np.ndarray, delta: float = 0.99) -> np.ndarray:
    B = [np.array(b, dtype=float) for b in B.T]
    n = len(B)

    def gso(B):
        Bs, mu = [], np.zeros((n, n))
        for i in range(n):
            v = B[i].copy()
            for j in range(i):
                mu[i, j] = (B[i] @ Bs[j]) / (Bs[j] @ Bs[j])
                v = v - mu[i, j] * Bs[j]
            Bs.append(v)
        return Bs, mu

    k = 1
    Bs, mu = gso(B)
    it = 0
    while k < n:
        it += 1
        if it > 100_000:  # pragma: no cover
            raise RuntimeError("LLL did not terminate")
        for j in range(k - 1, -1, -1):
            q = round(mu[k, j])
            if q:
                B[k] = B[k] - q * B[j]
                Bs, mu = gso(B)
        if Bs[k] @ Bs[k] >= (delta - mu[k, k - 1] ** 2) * (Bs[k - 1] @ Bs[k - 1]):
            k += 1
        else:
            B[k], B[k - 1] = B[k - 1], B[k]
            Bs, mu = gso(B)
            k = max(k - 1, 1)
    B.sort(key=lambda b: (round(float(b @ b), 12), tuple(-x for x in b)))
    return np.column_stack(B)


def reduce(L: Lattice) -> Lattice:
    """Return a reduced basis of the same lattice, shortest vector first.

    Lagrange-Gauss in the plane, LLL with size reduction in dimension 3.
    """
    d = L.dim
    if d == 1:
        return Lattice(np.abs(L.basis))
    if d == 2:
        u, v = _gauss_reduce(L.basis[:, 0].copy(), L.basis[:, 1].copy())
        u, v = _canonical_pair(u, v)
        return Lattice(np.column_stack([u, v]))
    if d == 3:
        return Lattice(_lll(L.basis))
    raise DimensionError(f"reduction is supported for d <= 3, got d={d}")


def _shortest_vector(L: Lattice) -> np.ndarray:
    d = L.dim
    if d == 1:
        return L.basis[:, 0].copy()
    R = reduce(L)
    if d == 2:
        return R.basis[:, 0].copy()
    # d = 3: brute force over a window around the LLL basis
    best = None
    for k in itertools.product(range(-2, 3), repeat=3):
        if not any(k):
            continue
        g = R.point(k)
        if best is None or g @ g < best @ best:
            best = g
    return best


def packing_radius(L: Lattice) -> float:
    """Half the length of a shortest nonzero lattice vector."""
    if L.dim > 3:
        raise DimensionError("packing radius is supported for d <= 3")
    return 0.5 * float(np.linalg.norm(_shortest_vector(L)))


def covering_radius(L: Lattice) -> float:
    """Covering radius of a planar lattice from Delaunay circumradii."""
    if L.dim == 1:
        return 0.5 * abs(float(L.basis[0, 0]))
    if L.dim != 2:
        raise DimensionError("covering radius is supported for d <= 2")
    R = reduce(L)
    ks = np.array(list(itertools.product(range(-2, 3), repeat=2)), dtype=float)
    pts = ks @ R.basis.T
    tri = Delaunay(pts)
    origin = int(np.flatnonzero((ks == 0).all(axis=1))[0])
    best = 0.0
    for simplex in tri.simplices:
        if origin not in simplex:
            continue
        a, b, c = pts[simplex]
        la, lb, lc = np.linalg.norm(b - c), np.linalg.norm(c - a), np.linalg.norm(a - b)
        area2 = abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
        if area2 <= 1e-15:
            continue
        best = max(best, la * lb * lc / (2.0 * area2))
    return float(best)


def fundamental_parallelepiped(L: Lattice) -> np.ndarray:
    """Corners of the half-open basis parallelepiped.

    In the plane the four corners are returned counter-clockwise, starting at
    the origin; in higher dimension all 2^d corners in binary order.
    """
    if L.dim == 2:
        e1, e2 = L.vectors
        corners = np.array([[0.0, 0.0], e1, e1 + e2, e2])
        area2 = e1[0] * e2[1] - e1[1] * e2[0]
        return corners if area2 > 0 else corners[::-1].copy()
    ks = np.array(list(itertools.product((0, 1), repeat=L.dim)), dtype=float)
    return ks @ L.basis.T


def points_in_ball(L: Lattice, radius: float) -> list[tuple[int, ...]]:
    """Integer coefficient vectors of all lattice points with |g| <= radius."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    dual = np.linalg.inv(L.basis)  # rows: dual basis
    bounds = np.floor(radius * np.linalg.norm(dual, axis=1) + 1e-9).astype(int)
    ranges = [range(-int(b), int(b) + 1) for b in bounds]
    ks = np.array(list(itertools.product(*ranges)), dtype=np.int64)
    g = ks @ L.basis.T
    r2 = np.einsum("ij,ij->i", g, g)
    keep = r2 <= radius * radius * (1.0 + 1e-12) + 1e-300
    return [tuple(int(x) for x in k) for k in ks[keep]]


def basis_angle(L: Lattice) -> float:
    """Angle in degrees between the reduced basis vectors, folded to [0, 90]."""
    R = reduce(L)
    u, v = R.vectors
    c = abs(float(u @ v)) / (np.linalg.norm(u) * np.linalg.norm(v))
    return float(np.degrees(np.arccos(min(1.0, c))))


def random_unimodular(rng: np.random.Generator, dim: int = 2, steps: int = 6) -> np.ndarray:
    """Random integer matrix with determinant +-1 built from elementary moves."""
    M = np.eye(dim, dtype=np.int64)
    for _ in range(steps):
        i, j = rng.choice(dim, size=2, replace=False)
        k = int(rng.integers(-3, 4))
        M[:, i] += k * M[:, j]
        if rng.random() < 0.3:
            M[:, [i, j]] = M[:, [j, i]]
    return M
