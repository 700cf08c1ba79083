"""Deterministic SVG renderings of periodic partitions.

The view is the reduced fundamental cell with one cell of margin on every
side, i.e. a 3x3 block of reduced cells filled with translates of the cells.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.collections import PolyCollection  # noqa: E402

from .lattice import reduce  # noqa: E402
from .partition_grid import GridPartition  # noqa: E402
from .partition_poly import PolyPartition  # noqa: E402

SVG_SALT = "latticepart"


def _colors(n: int):
    cmap = plt.get_cmap("tab20" if n > 10 else "tab10")
    return [cmap(k % cmap.N) for k in range(n)]


def _window(lattice):
    """Viewing box: the reduced fundamental cell with one cell of margin all round."""
    R = reduce(lattice)
    D = R.to_cartesian(np.array([(0, 0), (1, 0), (1, 1), (0, 1)], dtype=float))
    span = D.max(axis=0) - D.min(axis=0)
    return D.min(axis=0) - span, D.max(axis=0) + span


def _shifts(lattice, lo, hi, pts):
    """Lattice translates of the point cloud pts that meet the box [lo, hi]."""
    corners = np.array([(lo[0], lo[1]), (hi[0], lo[1]), (lo[0], hi[1]), (hi[0], hi[1])])
    F = lattice.to_fractional(corners)
    Fp = lattice.to_fractional(pts)
    a_lo = np.floor(F.min(axis=0) - Fp.max(axis=0)) - 1
    a_hi = np.ceil(F.max(axis=0) - Fp.min(axis=0)) + 1
    out = []
    for a in range(int(a_lo[0]), int(a_hi[0]) + 1):
        for b in range(int(a_lo[1]), int(a_hi[1]) + 1):
            g = lattice.point((a, b))
            if np.all(pts.min(axis=0) + g <= hi) and np.all(pts.max(axis=0) + g >= lo):
                out.append(g)
    return out


def _visible(P, lo, hi):
    return bool(np.all(P.min(axis=0) <= hi) and np.all(P.max(axis=0) >= lo))


def draw_partition(ax, p: PolyPartition, junctions: bool = True, arcs=None) -> None:
    """Cells of p and their translates around the fundamental cell, with junction markers."""
    lo, hi = _window(p.lattice)
    cols = _colors(p.n_cells)
    polys, faces = [], []
    cells = [p.cell_polygon(k) for k in range(p.n_cells)]
    for g in _shifts(p.lattice, lo, hi, np.vstack(cells)):
        for k, P in enumerate(cells):
            if _visible(P + g, lo, hi):
                polys.append(P + g)
                faces.append(cols[k])
    ax.add_collection(PolyCollection(polys, facecolors=faces, edgecolors="k", linewidths=0.6, alpha=0.85))
    if junctions and len(p.vertices):
        V = p.lattice.to_cartesian(p.vertices)
        regular = p.vertex_degrees() == 3
        W = np.vstack([V + g for g in _shifts(p.lattice, lo, hi, V)])
        ok = np.tile(regular, len(W) // len(V))
        ax.plot(W[ok, 0], W[ok, 1], "o", ms=2.5, color="k")
        ax.plot(W[~ok, 0], W[~ok, 1], "s", ms=4, color="crimson")
    if arcs is not None:
        for e, fit in enumerate(arcs):
            P = p.edge_polyline(e)
            ax.plot(P[:, 0], P[:, 1], "-", lw=1.2, color="gray" if fit.is_line else "navy")
    _frame(ax, p.lattice, lo, hi)


def draw_grid(ax, g: GridPartition) -> None:
    """Pixel raster of a planar grid partition around the fundamental cell."""
    if g.dim != 2:
        raise ValueError("only planar grids can be drawn")
    lo, hi = _window(g.lattice)
    cols = _colors(g.n_labels)
    n = g.n
    ij = np.stack(np.meshgrid(np.arange(n), np.arange(n), indexing="ij"), axis=-1).reshape(-1, 2)
    square = np.array([(0, 0), (1, 0), (1, 1), (0, 1)], dtype=float)
    pix = g.lattice.to_cartesian((ij[:, None, :] + square[None]) / n)
    lab = g.labels.ravel()
    polys, faces = [], []
    for s in _shifts(g.lattice, lo, hi, pix.reshape(-1, 2)):
        Q = pix + s
        keep = np.all(Q.min(axis=1) <= hi, axis=1) & np.all(Q.max(axis=1) >= lo, axis=1)
        polys.extend(Q[keep])
        faces.extend(cols[i - 1] for i in lab[keep])
    ax.add_collection(PolyCollection(polys, facecolors=faces, edgecolors="face", linewidths=0.2))
    _frame(ax, g.lattice, lo, hi)


def _frame(ax, lattice, lo, hi):
    D = lattice.to_cartesian(np.array([(0, 0), (1, 0), (1, 1), (0, 1), (0, 0)], dtype=float))
    ax.plot(D[:, 0], D[:, 1], "--", lw=1.0, color="k")
    ax.set_xlim(lo[0], hi[0])
    ax.set_ylim(lo[1], hi[1])
    ax.set_aspect("equal")
    ax.set_xticks([])
    ax.set_yticks([])


def save_svg(state, path, title: str | None = None, junctions: bool = True, arcs=None) -> Path:
    """Render a partition or grid to an SVG file; identical input gives identical bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(6, 6))
        try:
            if isinstance(state, GridPartition):
                draw_grid(ax, state)
            else:
                draw_partition(ax, state, junctions=junctions, arcs=arcs)
            if title:
                ax.set_title(title)
            fig.savefig(path, format="svg", metadata={"Date": None}, bbox_inches="tight")
        finally:
            plt.close(fig)
    return path


def save_sweep_plot(path, x, series: dict, xlabel: str, ylabel: str, title: str | None = None) -> Path:
    """Line plot of several named series against x, saved as SVG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        try:
            for name, y in series.items():
                ax.plot(x, y, "o-", label=name)
            ax.set_xlabel(xlabel)
            ax.set_ylabel(ylabel)
            if title:
                ax.set_title(title)
            ax.legend()
            fig.savefig(path, format="svg", metadata={"Date": None}, bbox_inches="tight")
        finally:
            plt.close(fig)
    return path
