"""Reference configurations: honeycombs, stretched hexagons, tilings, slabs.

Every constructor returns a PolyPartition whose cell targets equal the exact
cell areas of the construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import Voronoi
from shapely.geometry import Polygon

from .functionals import Anisotropy
from .lattice import Lattice, volume
from .partition_poly import (
    DEFAULT_SAMPLES,
    PartitionError,
    PolyGeometry,
    PolyPartition,
    from_polygons,
    is_embedded,
)

HEX_EDGE = math.sqrt(2.0 / (3.0 * math.sqrt(3.0)))
HEX_HALF_HEIGHT = math.sqrt(3.0) * HEX_EDGE / 2.0
HEX_PERIMETER = 2.0 * 12.0**0.25
BRICK_ZIGZAG = 1.0 / math.sqrt(48.0)


class InfeasibleError(ValueError):
    """The requested configuration cannot be built."""


@dataclass(frozen=True)
class HexParams:
    """Unit-area flat-top hexagon whose two horizontal edges are lengthened by x."""

    x: float = 0.0

    def __post_init__(self):
        if not abs(self.x) < HEX_EDGE:
            raise ValueError(f"stretch |x| must be below l = {HEX_EDGE}")

    @property
    def l(self) -> float:
        return HEX_EDGE

    @property
    def area(self) -> float:
        return 1.0 + math.sqrt(3.0) * HEX_EDGE * self.x

    @property
    def perimeter(self) -> float:
        return HEX_PERIMETER + 2.0 * self.x

    @classmethod
    def from_area(cls, v: float) -> "HexParams":
        return cls((v - 1.0) / (math.sqrt(3.0) * HEX_EDGE))

    def polygon(self, center=(0.0, 0.0)) -> np.ndarray:
        l, h, x = HEX_EDGE, HEX_HALF_HEIGHT, self.x
        P = np.array(
            [
                (-l - x / 2, 0.0),
                (-l / 2 - x / 2, -h),
                (l / 2 + x / 2, -h),
                (l + x / 2, 0.0),
                (l / 2 + x / 2, h),
                (-l / 2 - x / 2, h),
            ]
        )
        return P + np.asarray(center, dtype=float)


def _hex_row(xs, samples) -> PolyPartition:
    l, h = HEX_EDGE, HEX_HALF_HEIGHT
    centers = [np.zeros(2)]
    for a, b in zip(xs[:-1], xs[1:]):
        centers.append(centers[-1] + (1.5 * l + (a + b) / 2, h))
    span = 1.5 * l * len(xs) + float(np.sum(xs))
    lat = Lattice.from_vectors((span, len(xs) * h), (0.0, 2 * h))
    polys = [HexParams(x).polygon(c) for x, c in zip(xs, centers)]
    return from_polygons(lat, polys, samples=samples)


def honeycomb(N: int, samples: int | None = DEFAULT_SAMPLES) -> PolyPartition:
    """N unit-area regular hexagons in a row, periodic under a lattice of volume N."""
    if N < 1:
        raise ValueError("N must be at least 1")
    return _hex_row(np.zeros(N), samples)


def stretched_hex_domain(volumes, samples: int | None = DEFAULT_SAMPLES) -> PolyPartition:
    """Row of stretched hexagons H(v_i) sharing oblique edges, closed periodically."""
    v = np.asarray(volumes, dtype=float)
    N = len(v)
    if N < 1:
        raise ValueError("need at least one volume")
    if np.any(v <= 0.5) or np.any(v >= 1.5):
        raise ValueError("volumes must lie in (1/2, 3/2)")
    if abs(v.sum() - N) > 1e-9 * N:
        raise ValueError(f"volumes must sum to N = {N}, got {v.sum()}")
    xs = np.array([HexParams.from_area(vi).x for vi in v])
    p = _hex_row(xs, samples)
    return p.with_targets(v)


def hex_stretches(volumes) -> np.ndarray:
    return np.array([HexParams.from_area(v).x for v in volumes])


def square_grid(N: int = 1, rows: int | None = None, samples: int | None = DEFAULT_SAMPLES) -> PolyPartition:
    """Unit squares, ``rows`` x (N / rows), on the matching rectangular lattice."""
    rows = rows or _square_rows(N)
    if N % rows:
        raise ValueError("rows must divide N")
    cols = N // rows
    lat = Lattice.from_vectors((float(cols), 0.0), (0.0, float(rows)))
    polys = [
        np.array([(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)], dtype=float)
        for j in range(rows)
        for i in range(cols)
    ]
    return from_polygons(lat, polys, samples=samples)


def _square_rows(N: int) -> int:
    r = int(math.isqrt(N))
    while N % r:
        r -= 1
    return r


def wulff_tiling(a: Anisotropy, volumes, samples: int | None = DEFAULT_SAMPLES) -> PolyPartition:
    """Axis-aligned square tiling for the ell1 anisotropy.

    Feasible when every volume has the same square side s and the number of
    squares fills a rectangle, or when all squares share a row of equal
    sides.  Anything else raises InfeasibleError.
    """
    if a.kind != "ell1":
        raise InfeasibleError("square Wulff tilings are built for the ell1 anisotropy only")
    v = np.asarray(volumes, dtype=float)
    if np.any(v <= 0):
        raise ValueError("volumes must be positive")
    sides = np.sqrt(v)
    if np.ptp(sides) > 1e-12 * sides.max():
        raise InfeasibleError("squares of unequal sides do not tile a periodic rectangle row")
    s = float(sides[0])
    N = len(v)
    p = square_grid(N, samples=samples)
    lat = p.lattice.scaled(s)
    return PolyPartition(lat, p.vertices, p.edges, p.cells).with_targets(v)


def slab_partition(L: Lattice, volumes, samples: int | None = DEFAULT_SAMPLES) -> PolyPartition:
    """Slice the basis parallelogram into slabs parallel to the first basis vector."""
    v = np.asarray(volumes, dtype=float)
    V = volume(L)
    if np.any(v <= 0):
        raise ValueError("volumes must be positive")
    if abs(v.sum() - V) > 1e-9 * max(1.0, V):
        raise ValueError(f"volumes must sum to the lattice volume {V}")
    e1, e2 = L.vectors
    if e1[0] * e2[1] - e1[1] * e2[0] < 0:
        e1, e2 = e2, e1
    ts = np.r_[0.0, np.cumsum(v) / V]
    ts[-1] = 1.0
    polys = [np.array([t0 * e2, t0 * e2 + e1, t1 * e2 + e1, t1 * e2]) for t0, t1 in zip(ts[:-1], ts[1:])]
    return from_polygons(L, polys, samples=samples).with_targets(v)


def twoblock_leading_term(N: int, delta: float) -> float:
    return (math.sqrt(1 - delta) + math.sqrt(1 + delta)) * HEX_PERIMETER * N * N / 4.0


@dataclass
class TwoBlockResult:
    partition: PolyPartition
    energy: float
    leading_term: float
    constant: float  # measured C with energy = leading + C N
    upper_bound: float


def twoblock_competitor(
    N: int,
    delta: float,
    C: float | None = None,
    samples: int | None = 4,
    straight_interfaces: bool = False,
) -> TwoBlockResult:
    """Two blocks of brick-hexagon cells with areas 1 - delta and 1 + delta.

    The torus N x N is split into columns [0, (1-delta)N/2] and the rest.
    Each block holds N/2 columns of N cells of height 1; neighbouring columns
    are offset by half a cell and separated by a 120-degree zigzag.  With
    ``straight_interfaces`` the two block interfaces are cut straight instead.
    ``C`` defaults to the measured constant.
    """
    if N < 2 or N % 2:
        raise ValueError("N must be an even integer >= 2")
    if not 0 <= delta < 0.5:
        raise ValueError("delta must lie in [0, 1/2)")
    widths = [1 - delta] * (N // 2) + [1 + delta] * (N // 2)
    xs = np.r_[0.0, np.cumsum(widths)]
    xs[-1] = float(N)
    # column boundary b sits at xs[b]; boundaries 0 and N/2 are block interfaces
    straight = {0, N // 2, N} if straight_interfaces else set()
    eps = BRICK_ZIGZAG

    def boundary(b, y):
        # x-coordinate of boundary b at height y; column offsets alternate 0, 1/2
        if b in straight:
            return xs[b]
        # left column (b-1) has cuts at y = k + off(b-1); protrudes where right column cuts
        off_left = 0.5 * ((b - 1) % 2)
        frac = (y - off_left) % 1.0
        return xs[b] - eps if abs(frac) < 1e-12 or abs(frac - 1) < 1e-12 else xs[b] + eps

    polys, targets = [], []
    for c in range(N):
        off = 0.5 * (c % 2)
        for k in range(N):
            y0, y1 = k + off, k + off + 1
            P = [
                (boundary(c, y0), y0),
                (boundary(c + 1, y0), y0),
                (boundary(c + 1, y0 + 0.5), y0 + 0.5),
                (boundary(c + 1, y1), y1),
                (boundary(c, y1), y1),
                (boundary(c, y0 + 0.5), y0 + 0.5),
            ]
            polys.append(np.array(P))
            targets.append(widths[c])
    lat = Lattice.square(float(N))
    p = from_polygons(lat, polys, samples=samples).with_targets(targets)
    geo = PolyGeometry(p)
    energy = float(geo.edge_lengths(geo.points()).sum())
    lead = twoblock_leading_term(N, delta)
    measured = (energy - lead) / N
    Cval = measured if C is None else float(C)
    return TwoBlockResult(p, energy, lead, measured, lead + Cval * N)


def perturb(p: PolyPartition, amplitude: float, seed: int, samples_only: bool = False) -> PolyPartition:
    """Seeded random displacement of vertices and samples.

    Displacements are clamped to a quarter of the shortest polyline segment
    so neighbouring points cannot swap order along an edge.
    """
    if amplitude < 0:
        raise ValueError("amplitude must be non-negative")
    if amplitude == 0:
        return p
    rng = np.random.default_rng(seed)
    geo = PolyGeometry(p)
    X = geo.points()
    seglen = np.hypot(*geo.segments(X).T)
    cap = 0.25 * float(seglen.min())
    D = rng.uniform(-1.0, 1.0, size=X.shape) * amplitude
    if samples_only:
        D[: geo.n_vertices] = 0.0
    norm = np.hypot(D[:, 0], D[:, 1])
    scale = np.minimum(1.0, cap / np.maximum(norm, 1e-300))
    D *= scale[:, None]
    q = p.with_points(X + D)
    if not is_embedded(q):
        raise PartitionError("perturbation produced a self-intersecting cell")
    return q


def _voronoi_polygons(L: Lattice, sites_frac: np.ndarray) -> list[np.ndarray]:
    n = len(sites_frac)
    shifts = [(i, j) for i in range(-2, 3) for j in range(-2, 3)]
    shifts.sort(key=lambda s: (s != (0, 0), s))
    pts = np.vstack([L.to_cartesian(sites_frac + np.asarray(s)) for s in shifts])
    vor = Voronoi(pts)
    polys = []
    for k in range(n):
        region = vor.regions[vor.point_region[k]]
        if -1 in region or not region:
            raise PartitionError("unbounded Voronoi region; sites too sparse")
        P = vor.vertices[region]
        c = P.mean(axis=0)
        P = P[np.argsort(np.arctan2(P[:, 1] - c[1], P[:, 0] - c[0]))]
        polys.append(P)
    return polys


def periodic_voronoi(
    L: Lattice, n_sites: int, seed: int, samples: int | None = DEFAULT_SAMPLES, sites=None
) -> PolyPartition:
    """Voronoi partition of seeded random (or given fractional) sites on the torus."""
    rng = np.random.default_rng(seed)
    S = rng.random((n_sites, 2)) if sites is None else np.asarray(sites, dtype=float) % 1.0
    polys = _voronoi_polygons(L, S)
    return from_polygons(L, polys, samples=samples, tol=1e-8)


def small_cell_candidate(
    n_large: int, small_area: float, samples: int | None = DEFAULT_SAMPLES
) -> PolyPartition:
    """Honeycomb of ``n_large`` cells with a small triangular cell cut at one junction.

    An exploratory configuration with one small volume; no optimality is claimed.
    """
    base = honeycomb(n_large, samples=0)
    t = math.sqrt(4.0 * small_area / (3.0 * math.sqrt(3.0)))
    if not 0 < t < 0.5 * HEX_EDGE:
        raise ValueError("small area too large for the hexagon edges")
    polys = [base.cell_polygon(k) for k in range(base.n_cells)]
    # the junction at the right vertex of cell 0, with its three edge directions
    J = polys[0][np.argmax(polys[0][:, 0])]
    dirs = [np.array([math.cos(a), math.sin(a)]) for a in (0.0, 2 * np.pi / 3, -2 * np.pi / 3)]
    tri = np.array([J + t * d for d in dirs])
    out = []
    lat = base.lattice
    for P in polys:
        poly = Polygon(P)
        for i in range(-1, 2):
            for j in range(-1, 2):
                g = lat.point((i, j))
                poly = poly.difference(Polygon(tri + g))
        coords = np.array(poly.exterior.coords)[:-1]
        out.append(coords)
    out.append(tri)
    return from_polygons(lat, out, samples=samples)
