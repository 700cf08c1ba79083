"""Label-grid partitions of the fundamental parallelepiped.

Pixel ``a`` (a multi-index in {0..n-1}^d) is the image of the cube
``(a + [0,1)^d) / n`` under the basis map, with its center at
``basis @ ((a + 1/2) / n)``.  All neighbourhoods wrap periodically.

The local and non-local perimeters share one evaluation scheme: an
interaction table ``T`` over pixel offsets, with

    1/2 sum_i Per(E_i) = 1/2 * scale * sum over ordered pixel pairs (p, q)
                         with different labels of T[p - q].

For the classical perimeter T holds the face measures at the 2d axis
neighbours (scale 1); for the kernel perimeter T is the periodized kernel
and scale = pixel_volume^2 (midpoint rule).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from matplotlib.path import Path
from scipy import integrate, ndimage
from scipy.spatial import ConvexHull, cKDTree

from .functionals import Kernel, kernel_tail
from .lattice import Lattice, fundamental_parallelepiped, points_in_ball, volume
from .models import EnergyBreakdown, EnergyModel


@dataclass(frozen=True, eq=False)
class GridPartition:
    lattice: Lattice
    labels: np.ndarray
    n_labels: int | None = None

    def __post_init__(self):
        lab = np.array(self.labels, dtype=np.int64)
        d = self.lattice.dim
        if lab.ndim != d or len(set(lab.shape)) != 1:
            raise ValueError(f"labels must be an n^{d} array")
        if lab.size and lab.min() < 1:
            raise ValueError("labels must be positive integers")
        n_lab = int(lab.max()) if self.n_labels is None else int(self.n_labels)
        if lab.max() > n_lab:
            raise ValueError("label exceeds n_labels")
        lab.setflags(write=False)
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "n_labels", n_lab)

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.lattice.dim

    @property
    def pixel_volume(self) -> float:
        return volume(self.lattice) / self.n**self.dim

    def volumes(self) -> np.ndarray:
        counts = np.bincount(self.labels.ravel(), minlength=self.n_labels + 1)[1:]
        return counts * self.pixel_volume

    def mask(self, i: int) -> np.ndarray:
        self._check_label(i)
        return self.labels == i

    def with_labels(self, labels) -> "GridPartition":
        return GridPartition(self.lattice, labels, self.n_labels)

    def centers(self) -> np.ndarray:
        """Cartesian pixel centers, shape (n^d, d), row-major order."""
        n, d = self.n, self.dim
        idx = np.indices((n,) * d).reshape(d, -1).T
        return self.lattice.to_cartesian((idx + 0.5) / n)

    def _check_label(self, i):
        if not 1 <= i <= self.n_labels:
            raise KeyError(f"unknown label {i}")


def face_measures(L: Lattice, n: int) -> np.ndarray:
    """(d-1)-measure of a pixel face orthogonal to each grid axis."""
    dual = np.linalg.inv(L.basis)
    return volume(L) * np.linalg.norm(dual, axis=1) / n ** (L.dim - 1)


def grid_perimeter(g: GridPartition, i: int) -> float:
    """Total measure of pixel faces between label i and other labels."""
    m = g.mask(i)
    w = face_measures(g.lattice, g.n)
    total = 0.0
    for k in range(g.dim):
        total += w[k] * np.count_nonzero(m != np.roll(m, 1, axis=k))
    return float(total)


def component_perimeter(g: GridPartition, comp: np.ndarray) -> float:
    w = face_measures(g.lattice, g.n)
    return float(sum(w[k] * np.count_nonzero(comp != np.roll(comp, 1, axis=k)) for k in range(g.dim)))


# -- interaction tables ------------------------------------------------------


def domain_diameter(L: Lattice) -> float:
    C = fundamental_parallelepiped(L)
    diff = C[:, None, :] - C[None, :, :]
    return float(np.sqrt((diff**2).sum(-1)).max())


def default_truncation(L: Lattice, k: Kernel) -> float:
    return k.truncation_radius if k.truncation_radius is not None else 6.0 * domain_diameter(L)


def kernel_table(L: Lattice, n: int, k: Kernel, R: float | None = None) -> np.ndarray:
    """T[a] = sum of K(z) over z = basis @ (a/n) + g, g in G, 0 < |z| <= R."""
    R = default_truncation(L, k) if R is None else R
    diam = domain_diameter(L)
    if R < diam:
        raise ValueError(f"truncation radius {R} is below the cell diameter {diam}")
    d = L.dim
    idx = np.indices((n,) * d).reshape(d, -1).T
    base = L.to_cartesian(idx / n)
    gs = np.array(points_in_ball(L, R + diam), dtype=float)
    shifts = gs @ L.basis.T
    T = np.zeros(len(base))
    for s in shifts:
        z = base + s
        r = np.sqrt((z * z).sum(axis=1))
        keep = (r <= R) & (r > 0)
        T[keep] += k.radial(r[keep])
    return T.reshape((n,) * d)


def face_table(L: Lattice, n: int) -> np.ndarray:
    d = L.dim
    w = face_measures(L, n)
    T = np.zeros((n,) * d)
    for ax in range(d):
        for sgn in (1, -1):
            idx = [0] * d
            idx[ax] = sgn % n
            T[tuple(idx)] += w[ax]
    return T


def _table_for(g: GridPartition, model: EnergyModel):
    if model.perimeter == "nonlocal":
        R = default_truncation(g.lattice, model.kernel)
        return kernel_table(g.lattice, g.n, model.kernel, R), g.pixel_volume**2
    if model.perimeter == "anisotropic":
        raise ValueError("anisotropic perimeters are evaluated on polygonal partitions")
    return face_table(g.lattice, g.n), 1.0


def correlate(field_: np.ndarray, T: np.ndarray) -> np.ndarray:
    """S[p] = sum_q T[p - q] field[q] on the periodic grid, by direct summation."""
    S = np.zeros_like(field_, dtype=float)
    for off in zip(*np.nonzero(T)):
        S += T[off] * np.roll(field_, shift=off, axis=tuple(range(field_.ndim)))
    return S


def _interaction_fields(g: GridPartition, T: np.ndarray) -> np.ndarray:
    return np.stack([correlate((g.labels == i).astype(float), T) for i in range(1, g.n_labels + 1)])


def _perimeters_from_fields(g: GridPartition, T, S, scale) -> np.ndarray:
    tot = T.sum()
    out = np.zeros(g.n_labels)
    for i in range(1, g.n_labels + 1):
        m = g.labels == i
        out[i - 1] = scale * float(np.sum(tot - S[i - 1][m]))
    return out


@dataclass
class NonlocalReport:
    value: float
    tail_bound: float
    truncation_radius: float
    discretization_error: float | None = None


def nonlocal_perimeter(g: GridPartition, i: int, k: Kernel) -> float:
    return nonlocal_perimeter_report(g, i, k).value


def nonlocal_perimeter_report(
    g: GridPartition, i: int, k: Kernel, with_discretization: bool = False
) -> NonlocalReport:
    """Midpoint-rule Per_K of label i with a certified truncation tail bound."""
    m = g.mask(i)
    R = default_truncation(g.lattice, k)
    T = kernel_table(g.lattice, g.n, k, R)
    if not m.any():
        val = 0.0
    else:
        S = correlate(m.astype(float), T)
        val = g.pixel_volume**2 * float(np.sum(T.sum() - S[m]))
    area = float(m.sum()) * g.pixel_volume
    tail = area * kernel_tail(k, R - domain_diameter(g.lattice)) if area > 0 else 0.0
    disc = None
    if with_discretization:
        faces = grid_perimeter(g, i) / float(face_measures(g.lattice, g.n).min())
        disc = faces * adjacent_pixel_error(g.lattice, g.n, k)
    return NonlocalReport(val, tail, R, disc)


def adjacent_pixel_error(L: Lattice, n: int, k: Kernel) -> float:
    """|exact - midpoint| interaction of two face-adjacent pixels (planar grids)."""
    if L.dim != 2:
        raise ValueError("adjacent-pixel error is computed for planar grids")
    B = L.basis / n
    jac = abs(np.linalg.det(B))

    def f(u2, u1):
        z = B @ np.array([u1, u2])
        r = math.hypot(z[0], z[1])
        return k.radial(r) * (1 - abs(u1 - 1)) * (1 - abs(u2)) if r > 0 else 0.0

    exact, _ = integrate.dblquad(f, 0.0, 2.0, -1.0, 1.0, epsabs=1e-12, epsrel=1e-8)
    exact *= jac * jac
    mid = jac * jac * k.radial(float(np.linalg.norm(B[:, 0])))
    return abs(exact - mid)


def grid_energy(g: GridPartition, model: EnergyModel) -> EnergyBreakdown:
    """mu Per(D_G) + 1/2 sum_i Per(E_i) (+ penalty) on the grid."""
    if len(model.targets) != g.n_labels:
        raise ValueError("model targets do not match the number of labels")
    T, scale = _table_for(g, model)
    S = _interaction_fields(g, T)
    pers = _perimeters_from_fields(g, T, S, scale)
    half = 0.5 * float(pers.sum())
    areas = g.volumes()
    v = np.asarray(model.targets)
    pen = model.lam * np.abs(areas - v) if model.penalized else np.zeros_like(areas)
    mu_term = model.mu * domain_perimeter(g.lattice, model, g.n) if model.mu else 0.0
    extra = {}
    if model.perimeter == "nonlocal":
        R = default_truncation(g.lattice, model.kernel)
        extra["tail_bound"] = float(areas.sum() * kernel_tail(model.kernel, R - domain_diameter(g.lattice)))
    return EnergyBreakdown(
        total=mu_term + half + float(pen.sum()),
        mu_term=mu_term,
        half_sum_perimeters=half,
        penalty_term=float(pen.sum()),
        areas=areas,
        perimeters=pers,
        penalties=pen,
        volume_residual=float(np.max(np.abs(areas - v))),
        extra=extra,
    )


def domain_perimeter(L: Lattice, model: EnergyModel, n: int) -> float:
    """Perimeter of the basis parallelepiped itself (local or kernel)."""
    if model.perimeter != "nonlocal":
        w = face_measures(L, 1)
        return float(2.0 * w.sum())
    k = model.kernel
    R = default_truncation(L, k)
    T = kernel_table(L, n, k, R)
    d = L.dim
    h2 = (volume(L) / n**d) ** 2
    total = 0.0
    for delta in itertools.product(range(-n + 1, n), repeat=d):
        mult = np.prod([n - abs(x) for x in delta])
        z = L.to_cartesian(np.asarray(delta, dtype=float) / n)
        r = float(np.linalg.norm(z))
        own = k.radial(r) if 0 < r <= R else 0.0
        total += mult * (T[tuple(x % n for x in delta)] - own)
    return float(h2 * total)


# -- flips -------------------------------------------------------------------


class FlipState:
    """Mutable label grid with interaction fields for O(n^d) flip updates."""

    def __init__(self, g: GridPartition, model: EnergyModel):
        self.lattice = g.lattice
        self.n_labels = g.n_labels
        self.model = model
        self.labels = g.labels.copy()
        self.T, self.scale = _table_for(g, model)
        self.T0 = float(self.T[(0,) * g.dim])
        self.S = _interaction_fields(g, self.T)
        self.counts = np.bincount(self.labels.ravel(), minlength=self.n_labels + 1)[1:].astype(np.int64)
        self.pixel_volume = g.pixel_volume
        self.targets = np.asarray(model.targets, dtype=float)

    def grid(self) -> GridPartition:
        return GridPartition(self.lattice, self.labels.copy(), self.n_labels)

    def penalty(self, counts) -> float:
        if not self.model.penalized:
            return 0.0
        return float(self.model.lam * np.abs(counts * self.pixel_volume - self.targets).sum())

    def flip_delta(self, p, b: int) -> float:
        """Energy change of relabeling pixel p to b."""
        a = int(self.labels[p])
        if a == b:
            return 0.0
        d = self.scale * (self.S[a - 1][p] - self.T0 - self.S[b - 1][p])
        if self.model.penalized:
            c = self.counts.copy()
            before = self.penalty(c)
            c[a - 1] -= 1
            c[b - 1] += 1
            d += self.penalty(c) - before
        return float(d)

    def apply(self, p, b: int) -> None:
        a = int(self.labels[p])
        if a == b:
            return
        rolled = np.roll(self.T, shift=p, axis=tuple(range(self.T.ndim)))
        self.S[a - 1] -= rolled
        self.S[b - 1] += rolled
        self.labels[p] = b
        self.counts[a - 1] -= 1
        self.counts[b - 1] += 1

    def boundary_moves(self):
        """Candidate (pixel, new label) pairs: labels of axis neighbours."""
        lab = self.labels
        moves = set()
        for ax in range(lab.ndim):
            for s in (1, -1):
                nb = np.roll(lab, s, axis=ax)
                diff = np.argwhere(nb != lab)
                for idx in diff:
                    moves.add((tuple(int(x) for x in idx), int(nb[tuple(idx)])))
        return sorted(moves)

    def pair_interaction(self, p, q) -> float:
        off = tuple((a - b) % self.labels.shape[0] for a, b in zip(p, q))
        return float(self.T[off])


# -- components --------------------------------------------------------------


def _wrap_label(mask: np.ndarray, connectivity: int) -> tuple[np.ndarray, int]:
    """Connected components on the torus, numbered 1..count (0 = background)."""
    d = mask.ndim
    struct = ndimage.generate_binary_structure(d, connectivity)
    lab, count = ndimage.label(mask, structure=struct)
    if count == 0:
        return lab, 0
    parent = list(range(count + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    n = mask.shape[0]
    # pair every pixel on the last slab of each axis with its wrapped neighbours
    offsets = [o for o in itertools.product((-1, 0, 1), repeat=d) if any(o)]
    if connectivity == 1:
        offsets = [o for o in offsets if sum(map(abs, o)) == 1]
    for o in offsets:
        shifted = np.roll(lab, shift=tuple(-x for x in o), axis=tuple(range(d)))
        # only pairs that actually cross a periodic boundary need merging
        cross = np.zeros(mask.shape, dtype=bool)
        for ax, x in enumerate(o):
            if x == 1:
                sl = [slice(None)] * d
                sl[ax] = n - 1
                cross[tuple(sl)] = True
            elif x == -1:
                sl = [slice(None)] * d
                sl[ax] = 0
                cross[tuple(sl)] = True
        sel = cross & (lab > 0) & (shifted > 0)
        for a, b in zip(lab[sel], shifted[sel]):
            ra, rb = find(int(a)), find(int(b))
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(a) for a in range(count + 1)])
    uniq = {r: k for k, r in enumerate(sorted(set(roots[1:].tolist())), start=1)}
    remap = np.zeros(count + 1, dtype=np.int64)
    for a in range(1, count + 1):
        remap[a] = uniq[roots[a]]
    return remap[lab], len(uniq)


def _sorted_components(mask: np.ndarray, connectivity: int) -> list[np.ndarray]:
    lab, count = _wrap_label(mask, connectivity)
    comps = []
    flat = lab.ravel()
    for c in range(1, count + 1):
        idx = np.flatnonzero(flat == c)
        comps.append((-len(idx), int(idx[0]), c))
    comps.sort()
    return [lab == c for _, _, c in comps]


@dataclass
class ComponentDecomposition:
    label: int
    components: list  # boolean masks, decreasing size

    @property
    def count(self) -> int:
        return len(self.components)

    @property
    def sizes(self) -> list[int]:
        return [int(c.sum()) for c in self.components]


def decompose(g: GridPartition, i: int) -> ComponentDecomposition:
    """4-connected components of label i on the torus, largest first."""
    return ComponentDecomposition(i, _sorted_components(g.mask(i), 1))


def saturate(g: GridPartition, component: np.ndarray) -> np.ndarray:
    """Fill the holes of a pixel set.

    Holes are the 8-connected components of the complement other than the
    largest one, which plays the role of the unbounded component.
    """
    comp = np.asarray(component, dtype=bool)
    if comp.all():
        raise ValueError("component covers the whole torus")
    outside = _sorted_components(~comp, comp.ndim)
    out = comp.copy()
    for hole in outside[1:]:
        out |= hole
    return out


def is_simple(g: GridPartition, i: int) -> bool:
    dec = decompose(g, i)
    if dec.count > 1:
        return False
    if dec.count == 0:
        return True
    c = dec.components[0]
    return c.all() or bool(np.array_equal(saturate(g, c), c))


def _shares_face(a: np.ndarray, b: np.ndarray) -> int:
    return int(sum(np.count_nonzero(a & np.roll(b, s, axis=ax)) for ax in range(a.ndim) for s in (1, -1)))


@dataclass
class MergeEvent:
    i: int
    j: int
    k: int
    pixels: int
    shared_faces: int
    perimeter_drop: float


def merge_secondary_component(g: GridPartition) -> tuple[GridPartition, bool, MergeEvent | None]:
    """Merge one secondary component of some label into an adjacent primary one.

    Candidates (i, j, k) with i != j and k > 1 (1-based component rank) are
    tried in lexicographic order; E_{j,k} must share at least one pixel face
    with E_{i,1}, and E_{j,1} must not meet the saturation of E_{i,1}.
    Raises LookupError when some label is not simple but no candidate exists.
    """
    labels = range(1, g.n_labels + 1)
    if all(is_simple(g, i) for i in labels):
        return g, False, None
    decs = {i: decompose(g, i) for i in labels}
    for i in labels:
        if decs[i].count == 0:
            continue
        Ei1 = decs[i].components[0]
        sat = saturate(g, Ei1) if not Ei1.all() else Ei1
        for j in labels:
            if j == i or decs[j].count < 2:
                continue
            if np.any(decs[j].components[0] & sat):
                continue
            for k in range(1, decs[j].count):
                Ejk = decs[j].components[k]
                faces = _shares_face(Ei1, Ejk)
                if faces == 0:
                    continue
                before = sum(grid_perimeter(g, l) for l in labels)
                lab = g.labels.copy()
                lab[Ejk] = i
                h = g.with_labels(lab)
                after = sum(grid_perimeter(h, l) for l in labels)
                return h, True, MergeEvent(i, j, k + 1, int(Ejk.sum()), faces, before - after)
    raise LookupError("labels are not all simple but no admissible merge exists")


def simplify(g: GridPartition, max_steps: int | None = None):
    """Apply merge_secondary_component until every label is simple; returns (grid, events)."""
    events = []
    bound = sum(max(decompose(g, i).count - 1, 0) for i in range(1, g.n_labels + 1))
    limit = bound + 1 if max_steps is None else max_steps
    for _ in range(limit):
        g, applied, ev = merge_secondary_component(g)
        if not applied:
            return g, events
        events.append(ev)
    g, applied, ev = merge_secondary_component(g)
    if applied:
        raise RuntimeError("surgery did not terminate within the component bound")
    return g, events


# -- diameters and Hausdorff ---------------------------------------------------


def _unwrap_component(comp: np.ndarray) -> np.ndarray | None:
    """Integer unwrapped coordinates of a 4-connected torus component, or None if it wraps."""
    n = comp.shape[0]
    d = comp.ndim
    pix = [tuple(int(x) for x in p) for p in np.argwhere(comp)]
    if not pix:
        return np.zeros((0, d))
    pos = {pix[0]: np.array(pix[0])}
    stack = [pix[0]]
    while stack:
        p = stack.pop()
        up = pos[p]
        for ax in range(d):
            for s in (1, -1):
                q = list(p)
                q[ax] = (q[ax] + s) % n
                q = tuple(q)
                if not comp[q]:
                    continue
                uq = up.copy()
                uq[ax] += s
                if q in pos:
                    if not np.array_equal(pos[q], uq):
                        return None
                else:
                    pos[q] = uq
                    stack.append(q)
    return np.array([pos[p] for p in pix])


@dataclass
class DiameterCheck:
    diameter: float
    perimeter: float
    ratio: float
    passes: bool


def diameter_check(g: GridPartition, i: int) -> list[DiameterCheck]:
    """Per component: unwrapped diameter vs. discrete perimeter (ratio <= 1/2)."""
    if g.dim != 2:
        raise ValueError("diameter checks are planar")
    out = []
    for comp in decompose(g, i).components:
        U = _unwrap_component(comp)
        per = component_perimeter(g, comp)
        if U is None:
            diam = math.inf
        else:
            corners = (U[:, None, :] + np.array([(0, 0), (1, 0), (0, 1), (1, 1)])[None]).reshape(-1, 2)
            corners = np.unique(corners, axis=0)
            P = g.lattice.to_cartesian(corners / g.n)
            if len(P) > 4:
                try:
                    P = P[ConvexHull(P).vertices]
                except Exception:  # collinear corner sets
                    pass
            diff = P[:, None, :] - P[None, :, :]
            diam = float(np.sqrt((diff**2).sum(-1)).max())
        ratio = diam / per if per > 0 else math.inf
        out.append(DiameterCheck(diam, per, ratio, ratio <= 0.5))
    return out


def rasterize_polygon(g: GridPartition, polygon) -> np.ndarray:
    """Pixels whose centers lie in the polygon or one of its lattice translates."""
    P = np.asarray(polygon, dtype=float)
    C = g.centers()
    inside = np.zeros(len(C), dtype=bool)
    F = g.lattice.to_fractional(P)
    lo, hi = np.floor(F.min(axis=0)) - 1, np.ceil(F.max(axis=0)) + 1
    path = Path(P)
    for a in range(int(lo[0]), int(hi[0]) + 1):
        for b in range(int(lo[1]), int(hi[1]) + 1):
            inside |= path.contains_points(C + g.lattice.point((a, b)))
    return inside.reshape((g.n,) * 2)


def rasterize_partition(p, n: int) -> GridPartition:
    """Label grid of a polygonal partition: each pixel takes the cell containing its center."""
    empty = GridPartition(p.lattice, np.ones((n, n), dtype=np.int64), p.n_cells)
    C = empty.centers()
    lab = np.zeros(len(C), dtype=np.int64)
    for k in range(p.n_cells):
        m = rasterize_polygon(empty, p.cell_polygon(k)).ravel()
        lab[m & (lab == 0)] = k + 1
    if np.any(lab == 0):
        # centers exactly on an interface: nearest labelled pixel
        miss = np.flatnonzero(lab == 0)
        have = np.flatnonzero(lab > 0)
        tree = cKDTree(C[have])
        _, j = tree.query(C[miss])
        lab[miss] = lab[have[j]]
    return GridPartition(p.lattice, lab.reshape(n, n), p.n_cells)


def hausdorff_distance(g: GridPartition, a, b) -> float:
    """Symmetric Hausdorff distance between pixel-center sets in the torus metric.

    ``a`` and ``b`` are boolean masks; a polygon given for ``b`` is rasterized.
    """
    A = np.asarray(a, dtype=bool)
    Bm = np.asarray(b)
    if Bm.dtype != bool or Bm.shape != A.shape:
        Bm = rasterize_polygon(g, Bm)
    if not A.any() or not Bm.any():
        raise ValueError("Hausdorff distance of an empty set")
    C = g.centers()
    PA, PB = C[A.ravel()], C[Bm.ravel()]
    shifts = np.array([g.lattice.point(s) for s in itertools.product((-1, 0, 1), repeat=g.dim)])

    def directed(X, Y):
        Yr = (Y[None, :, :] + shifts[:, None, :]).reshape(-1, X.shape[1])
        dist, _ = cKDTree(Yr).query(X)
        return float(dist.max())

    return max(directed(PA, PB), directed(PB, PA))
