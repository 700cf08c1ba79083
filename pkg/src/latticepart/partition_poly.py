"""Periodic polygonal partitions of the plane.

A partition is stored on the torus R^2 / G: topological vertices (degree >= 3)
in fractional coordinates, edges as polylines from a tail vertex to a head
vertex translated by an integer ``wrap``, and cells as closed loops of signed
edges.  Every cell loop is unwrapped to a planar polygon before any geometry
is computed, so areas and perimeters are exact across the periodic boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.sparse import coo_matrix
from scipy.spatial import cKDTree
from shapely.geometry import Polygon

from .functionals import Anisotropy, phi_eval
from .lattice import Lattice, packing_radius, volume
from .models import EnergyBreakdown, EnergyModel

DEFAULT_SAMPLES = 16
MIN_CELL_AREA = 1e-8


class PartitionError(ValueError):
    """Invalid partition topology or geometry."""


@dataclass(frozen=True, eq=False)
class Edge:
    tail: int
    head: int
    wrap: tuple
    samples: np.ndarray  # (k, 2) fractional coordinates in the tail frame

    def __post_init__(self):
        s = np.array(self.samples, dtype=float).reshape(-1, 2)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "wrap", tuple(int(w) for w in self.wrap))


@dataclass(frozen=True)
class Cell:
    label: int
    loop: tuple  # ((edge id, +1 | -1), ...)
    target: float
    anchor: tuple = (0, 0)


@dataclass(frozen=True, eq=False)
class PolyPartition:
    lattice: Lattice
    vertices: np.ndarray  # (V, 2) fractional
    edges: tuple
    cells: tuple

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float).reshape(-1, 2)
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "cells", tuple(self.cells))

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def target_volumes(self) -> np.ndarray:
        return np.array([c.target for c in self.cells])

    @property
    def labels(self) -> list[int]:
        return [c.label for c in self.cells]

    def cell_index(self, label: int) -> int:
        for k, c in enumerate(self.cells):
            if c.label == label:
                return k
        raise KeyError(f"no cell with label {label}")

    def edge_polyline(self, e: int) -> np.ndarray:
        """Cartesian polyline of edge ``e`` with its tail at the stored vertex."""
        E = self.edges[e]
        f = np.vstack(
            [self.vertices[E.tail], E.samples, self.vertices[E.head] + np.asarray(E.wrap)]
        )
        return self.lattice.to_cartesian(f)

    def loop_occurrences(self, k: int):
        """Yield (edge id, sign, tail offset) for each edge of cell ``k``.

        The tail offset is the integer lattice translation of the edge's tail
        vertex in the unwrapped realization of the cell.
        """
        cell = self.cells[k]
        o = np.array(cell.anchor, dtype=np.int64)
        for e, sgn in cell.loop:
            w = np.array(self.edges[e].wrap, dtype=np.int64)
            if sgn > 0:
                yield e, sgn, o.copy()
                o = o + w
            else:
                yield e, sgn, o - w
                o = o - w

    def cell_polygon(self, k: int) -> np.ndarray:
        """Unwrapped Cartesian polygon of cell ``k`` (all polyline samples)."""
        pts = []
        for e, sgn, o in self.loop_occurrences(k):
            E = self.edges[e]
            f = np.vstack([self.vertices[E.tail], E.samples, self.vertices[E.head] + E.wrap]) + o
            pts.append(f[:-1] if sgn > 0 else f[::-1][:-1])
        return self.lattice.to_cartesian(np.vstack(pts))

    def vertex_degrees(self) -> np.ndarray:
        deg = np.zeros(len(self.vertices), dtype=int)
        for E in self.edges:
            deg[E.tail] += 1
            deg[E.head] += 1
        return deg

    def with_points(self, X: np.ndarray) -> "PolyPartition":
        """Copy with new Cartesian positions for vertices then samples (layout order)."""
        F = self.lattice.to_fractional(X)
        V = len(self.vertices)
        verts = F[:V]
        edges, pos = [], V
        for E in self.edges:
            k = len(E.samples)
            edges.append(Edge(E.tail, E.head, E.wrap, F[pos : pos + k]))
            pos += k
        return PolyPartition(self.lattice, verts, edges, self.cells)

    def points(self) -> np.ndarray:
        """Cartesian positions of vertices then samples, edge by edge."""
        F = np.vstack([self.vertices] + [E.samples for E in self.edges])
        return self.lattice.to_cartesian(F)

    def with_targets(self, targets) -> "PolyPartition":
        cells = [replace(c, target=float(t)) for c, t in zip(self.cells, targets)]
        return PolyPartition(self.lattice, self.vertices, self.edges, cells)

    def with_lattice(self, lattice: Lattice) -> "PolyPartition":
        """Same fractional geometry under another lattice basis."""
        return PolyPartition(lattice, self.vertices, self.edges, self.cells)

    def relabeled(self, perm) -> "PolyPartition":
        """Reorder cells: new cell k is old cell perm[k]."""
        return PolyPartition(self.lattice, self.vertices, self.edges, [self.cells[j] for j in perm])

    def translated_cell(self, k: int, g) -> "PolyPartition":
        """Realize cell ``k`` at a different lattice translate."""
        cells = list(self.cells)
        c = cells[k]
        cells[k] = replace(c, anchor=tuple(int(a + b) for a, b in zip(c.anchor, g)))
        return PolyPartition(self.lattice, self.vertices, self.edges, cells)

    def scaled(self, t: float) -> "PolyPartition":
        return PolyPartition(self.lattice.scaled(t), self.vertices, self.edges, self.cells).with_targets(
            self.target_volumes * t * t
        )


# -- geometry layout -------------------------------------------------------


class PolyGeometry:
    """Index arrays that turn a flat point array into energies and areas.

    ``X`` holds Cartesian positions of the vertices followed by all edge
    samples.  The topology (and lattice) is frozen at construction; only the
    positions vary, which is what the optimizer needs.
    """

    def __init__(self, p: PolyPartition):
        self.partition = p
        self.lattice = p.lattice
        B = p.lattice.basis
        V = len(p.vertices)
        self.n_vertices = V
        starts, pos = [], V
        for E in p.edges:
            starts.append(pos)
            pos += len(E.samples)
        self.sample_start = np.array(starts, dtype=np.int64)
        self.n_points = pos

        seg_a, seg_b, seg_off, seg_edge = [], [], [], []
        self.edge_index = []
        for e, E in enumerate(p.edges):
            idx = [E.tail] + list(range(starts[e], starts[e] + len(E.samples))) + [E.head]
            self.edge_index.append(np.array(idx, dtype=np.int64))
            n = len(idx) - 1
            seg_a += idx[:-1]
            seg_b += idx[1:]
            off = np.zeros((n, 2))
            off[-1] = B @ np.asarray(E.wrap, dtype=float)
            seg_off.append(off)
            seg_edge += [e] * n
        self.seg_a = np.array(seg_a, dtype=np.int64)
        self.seg_b = np.array(seg_b, dtype=np.int64)
        self.seg_off = np.vstack(seg_off) if seg_off else np.zeros((0, 2))
        self.seg_edge = np.array(seg_edge, dtype=np.int64)

        # cell polygons
        poly_idx, poly_off, poly_cell = [], [], []
        occ_offsets: dict[int, list] = {}
        for k in range(p.n_cells):
            for e, sgn, o in p.loop_occurrences(k):
                occ_offsets.setdefault(e, []).append(o)
                E = p.edges[e]
                ids = [E.tail] + list(range(starts[e], starts[e] + len(E.samples)))
                if sgn > 0:
                    offs = [o] * len(ids)
                else:
                    ids = [E.head] + ids[1:][::-1]
                    offs = [o + np.asarray(E.wrap)] + [o] * (len(ids) - 1)
                poly_idx += ids
                poly_off += [B @ np.asarray(x, dtype=float) for x in offs]
                poly_cell += [k] * len(ids)
        self.poly_idx = np.array(poly_idx, dtype=np.int64)
        self.poly_off = np.array(poly_off, dtype=float).reshape(-1, 2)
        self.poly_cell = np.array(poly_cell, dtype=np.int64)
        n = len(self.poly_idx)
        nxt = np.arange(1, n + 1)
        prv = np.arange(-1, n - 1)
        bounds = np.flatnonzero(np.diff(np.r_[-1, self.poly_cell, -2]))
        for a, b in zip(bounds[:-1], bounds[1:]):
            nxt[b - 1] = a
            prv[a] = b - 1
        self.poly_next = nxt
        self.poly_prev = prv
        self.n_cells = p.n_cells

        # edges on the boundary of the realized fundamental domain
        self.domain_edge = np.zeros(len(p.edges), dtype=bool)
        for e, offs in occ_offsets.items():
            if len(offs) != 2:
                raise PartitionError(f"edge {e} occurs {len(offs)} times in cell loops")
            self.domain_edge[e] = not np.array_equal(offs[0], offs[1])

    # positions
    def points(self) -> np.ndarray:
        return self.partition.points()

    def segments(self, X):
        return X[self.seg_b] + self.seg_off - X[self.seg_a]

    def edge_lengths(self, X, phi: Anisotropy | None = None) -> np.ndarray:
        s = self.segments(X)
        if phi is None or phi.kind == "euclidean":
            seg_len = np.hypot(s[:, 0], s[:, 1])
        else:
            seg_len = phi_eval(phi, np.column_stack([s[:, 1], -s[:, 0]]))
        return np.bincount(self.seg_edge, weights=seg_len, minlength=len(self.partition.edges))

    def areas(self, X) -> np.ndarray:
        Q = X[self.poly_idx] + self.poly_off
        Qn = Q[self.poly_next]
        cr = Q[:, 0] * Qn[:, 1] - Q[:, 1] * Qn[:, 0]
        return 0.5 * np.bincount(self.poly_cell, weights=cr, minlength=self.n_cells)

    def area_jacobian(self, X) -> np.ndarray:
        """(N, M, 2) derivative of each cell area with respect to each point."""
        Q = X[self.poly_idx] + self.poly_off
        d = Q[self.poly_next] - Q[self.poly_prev]
        g = 0.5 * np.column_stack([d[:, 1], -d[:, 0]])
        J = np.zeros((self.n_cells, self.n_points, 2))
        np.add.at(J, (self.poly_cell, self.poly_idx), g)
        return J

    def edge_weights(self, mu: float) -> np.ndarray:
        # an edge on the realized domain boundary appears twice on the boundary of D
        return 1.0 + 2.0 * mu * self.domain_edge

    def perimeter_energy(self, X, phi: Anisotropy, mu: float = 0.0) -> float:
        return float(np.dot(self.edge_weights(mu), self.edge_lengths(X, phi)))

    def perimeter_gradient(self, X, phi: Anisotropy, mu: float = 0.0) -> np.ndarray:
        s = self.segments(X)
        w = self.edge_weights(mu)[self.seg_edge]
        if phi.kind == "euclidean":
            n = np.hypot(s[:, 0], s[:, 1])
            g = s / np.maximum(n, 1e-300)[:, None]
        else:
            gr = phi.gradient(np.column_stack([s[:, 1], -s[:, 0]]))
            g = np.column_stack([-gr[:, 1], gr[:, 0]])
        g = g * w[:, None]
        G = np.zeros((self.n_points, 2))
        np.add.at(G, self.seg_b, g)
        np.add.at(G, self.seg_a, -g)
        return G


# -- construction from polygons ----------------------------------------------


class _DSU:
    def __init__(self, n):
        self.p = list(range(n))

    def find(self, a):
        while self.p[a] != a:
            self.p[a] = self.p[self.p[a]]
            a = self.p[a]
        return a

    def union(self, a, b):
        a, b = self.find(a), self.find(b)
        if a != b:
            self.p[max(a, b)] = min(a, b)


def _conform(lattice: Lattice, polygons: list[np.ndarray], tol: float) -> list[np.ndarray]:
    """Insert junction points lying in the interior of other polygons' segments."""
    allpts = np.vstack(polygons)
    shifts = np.array([(i, j) for i in range(-2, 3) for j in range(-2, 3)], dtype=float)
    cand = (allpts[:, None, :] + (shifts @ lattice.basis.T)[None]).reshape(-1, 2)
    tree = cKDTree(cand)
    out = []
    for P in polygons:
        new = []
        n = len(P)
        for k in range(n):
            a, b = P[k], P[(k + 1) % n]
            new.append(a)
            ab = b - a
            L = np.hypot(*ab)
            if L <= tol:
                continue
            mid = 0.5 * (a + b)
            near = tree.query_ball_point(mid, 0.5 * L + tol)
            ins = []
            for q in cand[near]:
                t = np.dot(q - a, ab) / (L * L)
                if t * L <= tol or (1 - t) * L <= tol:
                    continue
                dist = abs(ab[0] * (q[1] - a[1]) - ab[1] * (q[0] - a[0])) / L
                if dist <= tol:
                    ins.append((t, tuple(q)))
            for t, q in sorted(set(ins)):
                if not new or np.hypot(*(np.asarray(q) - new[-1])) > tol:
                    new.append(np.asarray(q))
        out.append(np.array(new))
    return out


def from_polygons(
    lattice: Lattice,
    polygons,
    targets=None,
    labels=None,
    samples: int | None = DEFAULT_SAMPLES,
    tol: float = 1e-9,
    conform: bool = True,
) -> PolyPartition:
    """Build a partition from cell polygons tiling the plane under ``lattice``.

    Points of different polygons that agree modulo the lattice (within
    ``tol``) are identified.  Points where three or more edges meet become
    topological vertices; the others become polyline samples.  With
    ``samples`` set, every edge is resampled to that many interior points.
    """
    polys = [np.asarray(P, dtype=float).reshape(-1, 2) for P in polygons]
    polys = [P if _signed_area(P) > 0 else P[::-1].copy() for P in polys]
    if conform:
        polys = _conform(lattice, polys, tol)
    # drop repeated consecutive points
    cleaned = []
    for P in polys:
        keep = np.hypot(*(P - np.roll(P, -1, axis=0)).T) > tol
        cleaned.append(P[keep])
    polys = cleaned
    N = len(polys)
    if targets is None:
        targets = [_signed_area(P) for P in polys]
    if labels is None:
        labels = list(range(1, N + 1))

    counts = [len(P) for P in polys]
    starts = np.cumsum([0] + counts[:-1])
    allpts = np.vstack(polys)
    F = lattice.to_fractional(allpts)
    scale = float(np.linalg.norm(lattice.basis, axis=0).max())
    ftol = tol / scale * 4
    Fm = F - np.floor(F)
    Fm[Fm >= 1.0] -= 1.0
    tree = cKDTree(Fm, boxsize=1.0 + 1e-15)
    pairs = tree.query_pairs(ftol, output_type="ndarray")
    M = len(F)
    if len(pairs):
        graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(M, M))
        _, comp = connected_components(graph, directed=False)
    else:
        comp = np.arange(M)
    # canonical class ids in order of first occurrence
    first = {}
    cls = np.empty(M, dtype=np.int64)
    for m in range(M):
        c = comp[m]
        if c not in first:
            first[c] = len(first)
        cls[m] = first[c]
    canon = np.zeros((len(first), 2))
    seen = np.zeros(len(first), dtype=bool)
    for m in range(M):
        if not seen[cls[m]]:
            canon[cls[m]] = np.floor(F[m])
            seen[cls[m]] = True
    # canonical positions: fractional mod 1 of the first occurrence
    pos = np.zeros((len(first), 2))
    seen[:] = False
    for m in range(M):
        c = cls[m]
        if not seen[c]:
            pos[c] = F[m] - np.floor(F[m])
            seen[c] = True
    off = np.rint(F - pos[cls]).astype(np.int64)

    # neighbor sets -> degree
    nbrs: list[set] = [set() for _ in range(len(first))]
    for p_i, P in enumerate(polys):
        s, n = starts[p_i], len(P)
        for k in range(n):
            m = s + k
            for m2 in (s + (k + 1) % n, s + (k - 1) % n):
                nbrs[cls[m]].add((int(cls[m2]), tuple(off[m2] - off[m])))
    degree = np.array([len(x) for x in nbrs])
    is_vertex = degree >= 3
    vid = -np.ones(len(first), dtype=np.int64)
    vorder = []
    for m in range(M):
        c = cls[m]
        if is_vertex[c] and vid[c] < 0:
            vid[c] = len(vorder)
            vorder.append(c)
    vertices = pos[vorder]

    edges: list[Edge] = []
    keys: dict = {}
    cells = []
    for p_i, P in enumerate(polys):
        s, n = starts[p_i], len(P)
        vk = [k for k in range(n) if is_vertex[cls[s + k]]]
        if not vk:
            raise PartitionError(f"cell {p_i} has no junction vertex on its boundary")
        k0 = vk[0]
        order = [(k0 + j) % n for j in range(n + 1)]
        loop = []
        chain = [order[0]]
        for k in order[1:]:
            chain.append(k)
            if not is_vertex[cls[s + k]]:
                continue
            ma, mb = s + chain[0], s + chain[-1]
            inner = [s + c for c in chain[1:-1]]
            ca, cb = int(cls[ma]), int(cls[mb])
            wrap = tuple(off[mb] - off[ma])
            first_in = (int(cls[inner[0]]), tuple(off[inner[0]] - off[ma])) if inner else None
            last_in = (int(cls[inner[-1]]), tuple(off[inner[-1]] - off[mb])) if inner else None
            key = (ca, cb, wrap, first_in)
            rkey = (cb, ca, tuple(-w for w in wrap), last_in)
            if key in keys:
                loop.append((keys[key], 1))
            elif rkey in keys:
                loop.append((keys[rkey], -1))
            else:
                eid = len(edges)
                keys[key] = eid
                smp = F[inner] - off[ma] if inner else np.zeros((0, 2))
                edges.append(Edge(int(vid[ca]), int(vid[cb]), wrap, smp))
                loop.append((eid, 1))
            chain = [k]
        anchor = tuple(int(x) for x in off[s + k0])
        cells.append(Cell(int(labels[p_i]), tuple(loop), float(targets[p_i]), anchor))

    p = PolyPartition(lattice, vertices, edges, cells)
    if samples is not None:
        p = resample(p, samples)
    validate(p, area_tol=max(1e-9, tol))
    return p


def _signed_area(P: np.ndarray) -> float:
    x, y = P[:, 0], P[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def resample(p: PolyPartition, samples: int = DEFAULT_SAMPLES) -> PolyPartition:
    """Redistribute every edge polyline to ``samples`` points uniform in arc length."""
    edges = []
    for e, E in enumerate(p.edges):
        P = p.edge_polyline(e)
        seg = np.hypot(*np.diff(P, axis=0).T)
        s = np.r_[0.0, np.cumsum(seg)]
        if s[-1] <= 0:
            new = np.repeat(P[:1], samples, axis=0)
        else:
            t = s[-1] * np.arange(1, samples + 1) / (samples + 1)
            new = np.column_stack([np.interp(t, s, P[:, 0]), np.interp(t, s, P[:, 1])])
        f = p.lattice.to_fractional(new) if samples else np.zeros((0, 2))
        edges.append(Edge(E.tail, E.head, E.wrap, f))
    return PolyPartition(p.lattice, p.vertices, edges, p.cells)


# -- validation and metrics --------------------------------------------------


def validate(p: PolyPartition, area_tol: float = 1e-9) -> None:
    """Raise PartitionError unless the cells tile the torus consistently."""
    if p.lattice.dim != 2:
        raise PartitionError("polygonal partitions are planar")
    uses = np.zeros((len(p.edges), 2), dtype=int)
    for k, c in enumerate(p.cells):
        o = np.zeros(2, dtype=np.int64)
        prev_end = None
        for e, sgn in c.loop:
            E = p.edges[e]
            start, end = (E.tail, E.head) if sgn > 0 else (E.head, E.tail)
            if prev_end is not None and start != prev_end:
                raise PartitionError(f"cell {k}: loop is not connected at edge {e}")
            prev_end = end
            o = o + sgn * np.asarray(E.wrap)
            uses[e, 0 if sgn > 0 else 1] += 1
        first = c.loop[0]
        E0 = p.edges[first[0]]
        if prev_end != (E0.tail if first[1] > 0 else E0.head):
            raise PartitionError(f"cell {k}: loop is not closed")
        if np.any(o != 0):
            raise PartitionError(f"cell {k}: loop does not close in the plane (offset {o})")
    if np.any(uses != 1):
        bad = np.flatnonzero((uses != 1).any(axis=1))
        raise PartitionError(f"edges {bad.tolist()} are not shared by two opposite loop sides")
    deg = p.vertex_degrees()
    if np.any(deg < 3):
        raise PartitionError("topological vertices must have degree >= 3")
    geo = PolyGeometry(p)
    A = geo.areas(geo.points())
    if np.any(A < MIN_CELL_AREA):
        raise PartitionError(f"degenerate cell areas {A.tolist()}")
    if abs(A.sum() - volume(p.lattice)) > area_tol * max(1.0, volume(p.lattice)):
        raise PartitionError(f"cell areas sum to {A.sum()}, lattice volume {volume(p.lattice)}")


def is_embedded(p: PolyPartition) -> bool:
    """True when every unwrapped cell polygon is simple (no self crossings)."""
    for k in range(p.n_cells):
        poly = Polygon(p.cell_polygon(k))
        if not poly.is_valid or poly.area <= 0:
            return False
    return True


@dataclass
class CellMetrics:
    areas: np.ndarray
    perimeters: np.ndarray
    interface_length: float


def cell_area(p: PolyPartition, label: int) -> float:
    k = p.cell_index(label)
    A = _signed_area(p.cell_polygon(k))
    if A <= 0:
        raise PartitionError(f"cell {label} has non-positive area")
    return A


def cell_perimeter(p: PolyPartition, label: int, a: Anisotropy | None = None) -> float:
    """Anisotropic length of the full boundary of the unwrapped cell."""
    a = a or Anisotropy("euclidean")
    P = p.cell_polygon(p.cell_index(label))
    seg = np.roll(P, -1, axis=0) - P
    return float(np.sum(phi_eval(a, np.column_stack([seg[:, 1], -seg[:, 0]]))))


def metrics(p: PolyPartition, a: Anisotropy | None = None) -> CellMetrics:
    a = a or Anisotropy("euclidean")
    areas = np.array([_signed_area(p.cell_polygon(k)) for k in range(p.n_cells)])
    pers = np.array([cell_perimeter(p, c.label, a) for c in p.cells])
    geo = PolyGeometry(p)
    return CellMetrics(areas, pers, float(geo.edge_lengths(geo.points(), a).sum()))


def domain_perimeter(p: PolyPartition, a: Anisotropy | None = None) -> float:
    """Perimeter of the realized fundamental domain D (union of the cells)."""
    geo = PolyGeometry(p)
    L = geo.edge_lengths(geo.points(), a)
    return float(2.0 * L[geo.domain_edge].sum())


def total_energy(p: PolyPartition, model: EnergyModel, geo: PolyGeometry | None = None, X=None) -> EnergyBreakdown:
    """mu Per(D) + 1/2 sum_i Per_phi(E_i) (+ penalty) for a local perimeter."""
    if not model.is_local:
        raise ValueError("nonlocal perimeters are evaluated on grid partitions")
    if len(model.targets) != p.n_cells:
        raise ValueError("model targets do not match the number of cells")
    geo = geo or PolyGeometry(p)
    X = geo.points() if X is None else X
    phi = model.phi
    L = geo.edge_lengths(X, phi)
    half = float(L.sum())
    mu_term = float(2.0 * model.mu * L[geo.domain_edge].sum())
    A = geo.areas(X)
    v = np.asarray(model.targets)
    if model.penalized:
        pen = model.lam * np.abs(A - v)
    else:
        pen = np.zeros_like(A)
    pens = float(pen.sum())
    # per-cell perimeters: each edge counts for both adjacent loop sides
    pers = np.zeros(p.n_cells)
    for k, c in enumerate(p.cells):
        pers[k] = sum(L[e] for e, _ in c.loop)
    return EnergyBreakdown(
        total=mu_term + half + pens,
        mu_term=mu_term,
        half_sum_perimeters=half,
        penalty_term=pens,
        areas=A,
        perimeters=pers,
        penalties=pen,
        volume_residual=float(np.max(np.abs(A - v))) if len(v) else 0.0,
    )


def junction_list(p: PolyPartition) -> list[tuple[int, np.ndarray]]:
    """Topological vertices with the outgoing unit tangents of their edges."""
    out: dict[int, list] = {v: [] for v in range(len(p.vertices))}
    for e, E in enumerate(p.edges):
        P = p.edge_polyline(e)
        t0 = P[1] - P[0]
        t1 = P[-2] - P[-1]
        out[E.tail].append(t0 / np.linalg.norm(t0))
        out[E.head].append(t1 / np.linalg.norm(t1))
    res = []
    for v in range(len(p.vertices)):
        if len(out[v]) >= 3:
            T = np.array(out[v])
            ang = np.arctan2(T[:, 1], T[:, 0])
            res.append((v, T[np.argsort(ang, kind="stable")]))
    return res


# -- local perturbations ------------------------------------------------------


def _nearest_copy(lattice: Lattice, X: np.ndarray, center) -> np.ndarray:
    """Translate each point to its lattice copy nearest to ``center``."""
    F = lattice.to_fractional(X - np.asarray(center))
    base = F - np.floor(F + 0.5)
    best = lattice.to_cartesian(base)
    bestd = np.hypot(best[:, 0], best[:, 1])
    for i in (-1, 0, 1):
        for j in (-1, 0, 1):
            Y = lattice.to_cartesian(base + (i, j))
            d = np.hypot(Y[:, 0], Y[:, 1])
            m = d < bestd
            best[m], bestd[m] = Y[m], d[m]
    return best + np.asarray(center)


class SupportError(ValueError):
    pass


def local_perturbation(
    p: PolyPartition,
    center,
    radius: float,
    displacement,
    volume_preserving: bool = True,
    tol: float = 1e-12,
) -> PolyPartition:
    """Move the points lying in the ball B(center, radius).

    ``displacement`` is a callable mapping an (M, 2) array of positions to
    displacements.  Points outside the ball must not move, and moved points
    must stay in the ball.  With ``volume_preserving`` the cell areas are
    restored by a corrective motion of the points inside the ball.
    """
    rho = packing_radius(p.lattice)
    if radius >= rho / 2:
        raise SupportError(f"radius {radius} must be below rho_G/2 = {rho / 2}")
    geo = PolyGeometry(p)
    X = geo.points()
    Y = _nearest_copy(p.lattice, X, center)
    dist = np.hypot(*(Y - np.asarray(center)).T)
    inside = dist < radius
    D = np.asarray(displacement(Y), dtype=float).reshape(-1, 2)
    moving = np.hypot(D[:, 0], D[:, 1]) > 0
    if np.any(moving & ~inside):
        raise SupportError("displacement is not supported inside the ball")
    if np.any(np.hypot(*(Y + D - np.asarray(center)).T)[moving] >= radius):
        raise SupportError("displaced points leave the ball")
    if not np.any(moving):
        return p
    X2 = X + D
    if volume_preserving:
        X2 = restore_areas(geo, X2, geo.areas(X), inside, tol)
        Yc = _nearest_copy(p.lattice, X2, center)
        if np.any(np.hypot(*(Yc - np.asarray(center)).T)[np.any(X2 != X, axis=1)] >= radius):
            raise SupportError("volume correction leaves the ball")
    return p.with_points(X2)


def restore_areas(geo: PolyGeometry, X: np.ndarray, areas, movable, tol: float = 1e-12) -> np.ndarray:
    """Gauss-Newton correction of the movable points until the cell areas match."""
    A0 = np.asarray(areas, dtype=float)
    mask = np.asarray(movable, dtype=float)[:, None]
    for _ in range(50):
        r = A0 - geo.areas(X)
        if np.max(np.abs(r)) <= tol:
            break
        Jf = (geo.area_jacobian(X) * mask[None]).reshape(len(A0), -1)
        lam, *_ = np.linalg.lstsq(Jf @ Jf.T, r, rcond=None)
        X = X + (Jf.T @ lam).reshape(-1, 2)
    if np.max(np.abs(A0 - geo.areas(X))) > 1e-10:
        raise SupportError("volume correction infeasible inside the ball")
    return X


def symmetric_difference_area(p: PolyPartition, q: PolyPartition) -> float:
    """sum_i |E_i delta F_i| for two partitions with the same cells and anchors."""
    tot = 0.0
    for k in range(p.n_cells):
        a = Polygon(p.cell_polygon(k)).buffer(0)
        b = Polygon(q.cell_polygon(k)).buffer(0)
        tot += a.symmetric_difference(b).area
    return float(tot)
