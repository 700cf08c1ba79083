"""Text files for partitions, grids, energy breakdowns, traces and run manifests.

Floats are written with 17 significant digits, which round-trips IEEE
doubles exactly, so a state read back evaluates bit-identically.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .lattice import Lattice
from .models import EnergyBreakdown
from .partition_grid import GridPartition
from .partition_poly import Cell, Edge, PolyPartition

POLY_HEADER = "latticepart-partition 1"
GRID_HEADER = "latticepart-grid 1"


class FileFormatError(ValueError):
    """Malformed or unsupported state file."""


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _lattice_row(L: Lattice) -> str:
    return "lattice " + " ".join(fmt(x) for x in L.basis.T.ravel())


def _parse_lattice(tok: list[str]) -> Lattice:
    if tok[0] != "lattice":
        raise FileFormatError("expected lattice row")
    vals = np.array([float(t) for t in tok[1:]])
    d = int(round(np.sqrt(len(vals))))
    if d * d != len(vals):
        raise FileFormatError("lattice row must hold d*d numbers")
    return Lattice(vals.reshape(d, d).T)


def format_partition(p: PolyPartition, energy: float | None = None) -> str:
    lines = [POLY_HEADER, _lattice_row(p.lattice)]
    if energy is not None:
        lines.append(f"energy {fmt(energy)}")
    lines.append(f"vertices {len(p.vertices)}")
    lines += [f"{fmt(x)} {fmt(y)}" for x, y in p.vertices]
    lines.append(f"edges {len(p.edges)}")
    for E in p.edges:
        s = " ".join(fmt(v) for v in E.samples.ravel())
        lines.append(f"{E.tail} {E.head} {E.wrap[0]} {E.wrap[1]} {len(E.samples)} {s}".rstrip())
    lines.append(f"cells {len(p.cells)}")
    for c in p.cells:
        loop = " ".join(f"{e} {s}" for e, s in c.loop)
        lines.append(f"{c.label} {fmt(c.target)} {c.anchor[0]} {c.anchor[1]} {len(c.loop)} {loop}")
    return "\n".join(lines) + "\n"


def write_partition(path, p: PolyPartition, energy: float | None = None) -> None:
    _atomic_write(path, format_partition(p, energy))


def _section(rows, k, name):
    tok = rows[k]
    if len(tok) != 2 or tok[0] != name:
        raise FileFormatError(f"expected '{name} <count>' at line {k + 1}")
    return int(tok[1])


def parse_partition(text: str) -> tuple[PolyPartition, float | None]:
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not rows or " ".join(rows[0]) != POLY_HEADER:
        raise FileFormatError("not a partition file")
    try:
        L = _parse_lattice(rows[1])
        k = 2
        energy = None
        if rows[k][0] == "energy":
            energy = float(rows[k][1])
            k += 1
        nv = _section(rows, k, "vertices")
        verts = np.array([[float(t) for t in r] for r in rows[k + 1 : k + 1 + nv]]).reshape(-1, 2)
        k += 1 + nv
        ne = _section(rows, k, "edges")
        edges = []
        for r in rows[k + 1 : k + 1 + ne]:
            m = int(r[4])
            s = np.array([float(t) for t in r[5 : 5 + 2 * m]]).reshape(m, 2)
            edges.append(Edge(int(r[0]), int(r[1]), (int(r[2]), int(r[3])), s))
        k += 1 + ne
        nc = _section(rows, k, "cells")
        cells = []
        for r in rows[k + 1 : k + 1 + nc]:
            m = int(r[4])
            loop = tuple((int(r[5 + 2 * j]), int(r[6 + 2 * j])) for j in range(m))
            cells.append(Cell(int(r[0]), loop, float(r[1]), (int(r[2]), int(r[3]))))
        if len(cells) != nc or len(edges) != ne or len(verts) != nv:
            raise FileFormatError("truncated partition file")
    except (IndexError, ValueError) as exc:
        if isinstance(exc, FileFormatError):
            raise
        raise FileFormatError(f"malformed partition file: {exc}") from exc
    return PolyPartition(L, verts, tuple(edges), tuple(cells)), energy


def read_partition(path) -> tuple[PolyPartition, float | None]:
    return parse_partition(Path(path).read_text())


def format_grid(g: GridPartition) -> str:
    lines = [GRID_HEADER, _lattice_row(g.lattice), f"grid {g.n} {g.dim} {g.n_labels}"]
    lab = g.labels.reshape(-1, g.n)
    lines += [" ".join(str(int(v)) for v in row) for row in lab]
    return "\n".join(lines) + "\n"


def write_grid(path, g: GridPartition) -> None:
    _atomic_write(path, format_grid(g))


def parse_grid(text: str) -> GridPartition:
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not rows or " ".join(rows[0]) != GRID_HEADER:
        raise FileFormatError("not a grid file")
    try:
        L = _parse_lattice(rows[1])
        if rows[2][0] != "grid":
            raise FileFormatError("expected grid row")
        n, d, N = (int(t) for t in rows[2][1:4])
        vals = np.array([int(t) for r in rows[3:] for t in r], dtype=np.int64)
        if len(vals) != n**d:
            raise FileFormatError(f"expected {n**d} labels, found {len(vals)}")
    except (IndexError, ValueError) as exc:
        if isinstance(exc, FileFormatError):
            raise
        raise FileFormatError(f"malformed grid file: {exc}") from exc
    return GridPartition(L, vals.reshape((n,) * d), N)


def read_grid(path) -> GridPartition:
    return parse_grid(Path(path).read_text())


def read_state(path):
    """Partition or grid, chosen by the file header."""
    text = Path(path).read_text()
    head = text.split("\n", 1)[0].strip()
    if head == POLY_HEADER:
        return parse_partition(text)[0]
    if head == GRID_HEADER:
        return parse_grid(text)
    raise FileFormatError(f"{path}: unknown state file header")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def write_csv(path, header, rows) -> None:
    _atomic_write(path, _csv_text(header, rows))


def breakdown_rows(b: EnergyBreakdown, labels=None):
    labels = labels if labels is not None else list(range(1, len(b.areas) + 1))
    rows = [
        (lab, float(a), float(p), float(q), "", "")
        for lab, (a, p, q) in zip(labels, b.per_cell)
    ]
    rows.append(("total", float(np.sum(b.areas)), b.half_sum_perimeters, b.penalty_term, b.mu_term, b.total))
    return rows


BREAKDOWN_HEADER = ("cell", "area", "perimeter", "penalty", "mu_term", "total")


def write_breakdown(path, b: EnergyBreakdown, labels=None) -> None:
    write_csv(path, BREAKDOWN_HEADER, breakdown_rows(b, labels))


TRACE_HEADER = ("iteration", "energy", "volume_residual", "grad_norm", "segment_start")


def write_trace(path, trace) -> None:
    write_csv(path, TRACE_HEADER, trace.rows())


def write_manifest(path, config: dict) -> None:
    _atomic_write(path, json.dumps(config, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not serializable: {type(o).__name__}")
