"""Descent on polygonal states (with topology surgery), grids, and lattices."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .constructions import slab_partition
from .energy import energy_and_gradient, evaluate, project_gradient
from .lattice import Lattice, volume
from .models import EnergyModel
from .partition_grid import FlipState, GridPartition
from .partition_poly import (
    PartitionError,
    PolyGeometry,
    PolyPartition,
    from_polygons,
    resample,
)


@dataclass(frozen=True)
class OptimizerConfig:
    max_iters: int = 2000
    step_rule: str = "backtracking"  # or "fixed"
    step: float = 1e-2
    armijo: float = 1e-4
    tol_grad: float = 1e-8
    tol_volume: float = 1e-10
    surgery_edge_min: float | None = None  # default 1e-3 sqrt(d(G))
    resample_interval: int = 50
    samples: int | None = None  # keep the state's sample count when None
    surgery: bool = True
    seed: int = 0
    anneal: bool = False
    anneal_sweeps: int = 20
    anneal_temperature: float = 0.05
    lattice_iters: int = 60
    lattice_step: float = 0.1
    lattice_tol: float = 1e-4

    def __post_init__(self):
        if self.step_rule not in ("backtracking", "fixed"):
            raise ValueError("step_rule must be 'backtracking' or 'fixed'")
        for name in ("step", "tol_grad", "tol_volume", "lattice_step", "lattice_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.surgery_edge_min is not None and self.surgery_edge_min <= 0:
            raise ValueError("surgery_edge_min must be positive")
        if self.max_iters < 0 or self.resample_interval < 1:
            raise ValueError("max_iters must be >= 0 and resample_interval >= 1")

    def edge_min(self, L: Lattice) -> float:
        return self.surgery_edge_min if self.surgery_edge_min is not None else 1e-3 * math.sqrt(volume(L))


@dataclass
class RunTrace:
    """Per-iterate energies and residuals.

    ``breaks`` lists entry indices that start a new descent segment after a
    non-descent transition (topology surgery or a forced remesh); the
    monotonicity check covers the accepted descent steps within segments.
    """

    iterations: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    volume_residuals: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    events: list = field(default_factory=list)
    breaks: list = field(default_factory=list)
    status: str = "running"
    pending_break: bool = field(default=False, repr=False)

    def record(self, it, E, res, gnorm):
        self.iterations.append(int(it))
        self.energies.append(float(E))
        self.volume_residuals.append(float(res))
        self.grad_norms.append(float(gnorm))

    def start_segment(self, it, E, res, gnorm):
        """Record the first iterate of a descent run (after surgery, if any)."""
        if self.energies and not self.pending_break:
            return
        if self.energies:
            self.breaks.append(len(self.energies))
        self.pending_break = False
        self.record(it, E, res, gnorm)

    def mark_break(self):
        self.pending_break = True

    @property
    def monotone(self) -> bool:
        e = np.asarray(self.energies)
        if len(e) < 2:
            return True
        ok = np.diff(e) <= 1e-12 * np.maximum(1.0, np.abs(e[:-1]))
        ok[np.asarray(self.breaks, dtype=int) - 1] = True
        return bool(np.all(ok))

    @property
    def final_energy(self) -> float:
        return self.energies[-1] if self.energies else math.nan

    def rows(self):
        starts = set(self.breaks)
        for k in range(len(self.iterations)):
            yield (
                self.iterations[k],
                self.energies[k],
                self.volume_residuals[k],
                self.grad_norms[k],
                int(k in starts),
            )

    def extend(self, other: "RunTrace", offset: int | None = None):
        off = (self.iterations[-1] + 1 if self.iterations else 0) if offset is None else offset
        base = len(self.energies)
        if base:
            self.breaks.append(base)
        self.breaks.extend(base + b for b in other.breaks)
        for it, E, r, g, _ in other.rows():
            self.record(it + off, E, r, g)
        self.events.extend(other.events)


class SurgeryRejected(PartitionError):
    pass


# -- volume projection -----------------------------------------------------------


def project_volumes(geo: PolyGeometry, X: np.ndarray, targets, tol: float, max_iter: int = 30):
    """Newton projection of the first N-1 cell areas onto their targets."""
    v = np.asarray(targets, dtype=float)
    N = len(v)
    if N < 2:
        return X, 0.0
    for _ in range(max_iter):
        A = geo.areas(X)
        r = v - A
        res = float(np.max(np.abs(r)))
        if res <= tol:
            return X, res
        J = geo.area_jacobian(X)[: N - 1].reshape(N - 1, -1)
        lam = np.linalg.solve(J @ J.T, r[: N - 1])
        X = X + (J.T @ lam).reshape(X.shape)
    A = geo.areas(X)
    return X, float(np.max(np.abs(v - A)))


def _project_rows(geo: PolyGeometry, X: np.ndarray, targets, rows, tol: float, max_iter: int = 30):
    """Newton projection of the areas of the cells in ``rows`` onto their targets."""
    v = np.asarray(targets, dtype=float)
    rows = np.asarray(rows, dtype=int)
    if len(rows) == 0:
        return X, 0.0
    for _ in range(max_iter):
        r = (v - geo.areas(X))[rows]
        res = float(np.max(np.abs(r)))
        if res <= tol:
            return X, res
        J = geo.area_jacobian(X)[rows].reshape(len(rows), -1)
        X = X + (J.T @ np.linalg.solve(J @ J.T, r)).reshape(X.shape)
    return X, float(np.max(np.abs((v - geo.areas(X))[rows])))


# -- polygonal descent -------------------------------------------------------------


def _min_segment(geo, X) -> float:
    s = geo.segments(X)
    return float(np.hypot(s[:, 0], s[:, 1]).min())


def _descend(p: PolyPartition, model: EnergyModel, cfg: OptimizerConfig, iters: int, trace: RunTrace, it0: int):
    """Run up to ``iters`` descent steps at fixed topology. Returns (state, last_iter, status)."""
    if model.penalized:
        return _descend_penalized(p, model, cfg, iters, trace, it0)
    geo = PolyGeometry(p)
    X = geo.points()
    constrained = not model.penalized
    if constrained:
        X, res = project_volumes(geo, X, model.targets, cfg.tol_volume)
    else:
        res = float(np.max(np.abs(geo.areas(X) - np.asarray(model.targets))))
    E, G = energy_and_gradient(geo, X, model)
    J = geo.area_jacobian(X)
    Gp = project_gradient(G, J) if constrained else G
    gnorm = float(np.hypot(Gp[:, 0], Gp[:, 1]).max())
    trace.start_segment(it0, E, res, gnorm)
    alpha = cfg.step
    s_prev = y_prev = None
    status = "max_iters"
    it = it0
    for _ in range(iters):
        if gnorm <= cfg.tol_grad:
            status = "converged"
            break
        d = -Gp
        if s_prev is not None:
            sy = float((s_prev * y_prev).sum())
            if sy > 0:
                alpha = float((s_prev * s_prev).sum()) / sy
            else:
                alpha = cfg.step
        if cfg.step_rule == "fixed":
            alpha = cfg.step
        cap = 0.3 * _min_segment(geo, X) / max(gnorm, 1e-300)
        alpha = min(alpha, cap)
        accepted = False
        slope = float((Gp * Gp).sum())
        while alpha > 1e-16:
            Xt = X + alpha * d
            if constrained:
                Xt, rt = project_volumes(geo, Xt, model.targets, cfg.tol_volume)
                if rt > cfg.tol_volume:
                    alpha *= 0.5
                    continue
            else:
                rt = float(np.max(np.abs(geo.areas(Xt) - np.asarray(model.targets))))
            Et, Gt = energy_and_gradient(geo, Xt, model)
            if cfg.step_rule == "fixed" or Et <= E - cfg.armijo * alpha * slope:
                if Et <= E or cfg.step_rule == "fixed":
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            status = "step_underflow"
            break
        Jt = geo.area_jacobian(Xt)
        Gpt = project_gradient(Gt, Jt) if constrained else Gt
        s_prev, y_prev = Xt - X, Gpt - Gp
        X, E, Gp, res = Xt, Et, Gpt, rt
        gnorm = float(np.hypot(Gp[:, 0], Gp[:, 1]).max())
        it += 1
        trace.record(it, E, res, gnorm)
    else:
        if gnorm <= cfg.tol_grad:
            status = "converged"
    return p.with_points(X), it, status


def minimize_poly(init: PolyPartition, model: EnergyModel, cfg: OptimizerConfig | None = None):
    """Projected (constrained) or plain (penalized) descent with periodic surgery.

    Returns the final state and its RunTrace.  A line-search failure ends the
    run with status ``step_underflow`` and the last accepted state.
    """
    cfg = cfg or OptimizerConfig()
    if not model.is_local:
        raise TypeError("polygonal descent needs a local perimeter")
    if len(model.targets) != init.n_cells:
        raise ValueError("model targets do not match the number of cells")
    model.check_volume(volume(init.lattice))
    trace = RunTrace()
    p = init if cfg.samples is None else resample(init, cfg.samples)
    if cfg.surgery:
        p = _surgery_step(p, model, cfg, trace, 0)
    it = 0
    remeshes = 0
    status = "max_iters"
    while it < cfg.max_iters:
        chunk = min(cfg.resample_interval, cfg.max_iters - it)
        p, it_new, status = _descend(p, model, cfg, chunk, trace, it)
        progressed = it_new > it
        it = it_new
        if status == "converged" and not cfg.surgery:
            break
        changed = False
        if cfg.surgery:
            q = _surgery_step(p, model, cfg, trace, it)
            changed = q is not p
            p = q
        if not changed:
            q = _try_resample(p, model, cfg)
            if q is not None:
                p = q
                changed = True
        if not changed and remeshes < MAX_REMESH and (status == "step_underflow" or _degenerate(p)):
            q = _remesh(p, model, cfg)
            if q is not None:
                trace.events.append((it, "remesh", trace.final_energy, evaluate(q, model).total))
                trace.mark_break()
                remeshes += 1
                p = q
                changed = True
                status = "max_iters"
        if status == "converged" and not changed:
            break
        if status == "step_underflow" and not changed:
            break
        if not progressed and not changed:
            break
    trace.status = status
    return p, trace


def _samples_of(p: PolyPartition) -> int:
    return max((len(E.samples) for E in p.edges), default=0)


MAX_REMESH = 20
DEGENERATE_SEGMENT = 1e-6  # relative to the mean segment length of the edge


def _degenerate(p: PolyPartition) -> bool:
    """True when some polyline segment has shrunk far below its edge's mean segment."""
    geo = PolyGeometry(p)
    s = geo.segments(geo.points())
    L = np.hypot(s[:, 0], s[:, 1])
    mean = np.bincount(geo.seg_edge, weights=L) / np.maximum(np.bincount(geo.seg_edge), 1)
    return bool(np.any(L < DEGENERATE_SEGMENT * mean[geo.seg_edge]))


def _remesh(p, model, cfg):
    """Uniform resampling of a degenerate sampling, areas restored on the held constraints.

    Not a descent step: the energy may change slightly, and the caller logs it.
    """
    n = cfg.samples if cfg.samples is not None else _samples_of(p)
    if n == 0:
        return None
    q = resample(p, n)
    geo = PolyGeometry(q)
    X = geo.points()
    if model.penalized:
        gp = PolyGeometry(p)
        err = gp.areas(gp.points()) - np.asarray(model.targets)
        held = np.flatnonzero(np.abs(err) <= cfg.tol_volume)
        if len(held) == len(err):
            held = held[:-1]
        X, res = _project_rows(geo, X, model.targets, held, cfg.tol_volume)
    else:
        X, res = project_volumes(geo, X, model.targets, cfg.tol_volume)
    if res > cfg.tol_volume or not np.all(np.isfinite(X)):
        return None
    return q.with_points(X)


def _try_resample(p, model, cfg):
    """Uniform arc-length resampling, kept only if it does not raise the energy."""
    n = cfg.samples if cfg.samples is not None else _samples_of(p)
    if n == 0:
        return None
    q = resample(p, n)
    geo = PolyGeometry(q)
    X = geo.points()
    if not model.penalized:
        X, r = project_volumes(geo, X, model.targets, cfg.tol_volume)
        if r > cfg.tol_volume:
            return None
    E_old = evaluate(p, model).total
    q = q.with_points(X)
    E_new = evaluate(q, model).total
    if E_new <= E_old - 1e-13:
        return q
    return None


class _ActiveSet:
    """Cells held at their target volume while descending lambda * sum |A_i - v_i|.

    Inactive cells carry the sign of their volume error, so the penalty is
    smooth on the current face of the kink set.  A held cell is released when
    its pressure multiplier makes leaving the target cheaper than the penalty:
    |c_i| > lambda, or c_i - c_j > 2 lambda for a transfer between two cells
    when every cell is held (the areas always sum to d(G)).
    """

    def __init__(self, r, lam, tol):
        self.lam = lam
        self.active = np.abs(r) <= tol
        self.sign = np.where(self.active, 0.0, np.sign(r))

    def rows(self, active=None):
        idx = np.flatnonzero(self.active if active is None else active)
        if len(idx) == len(self.active):
            idx = idx[:-1]  # one row is dependent
        return idx

    def direction(self, geo, X, model):
        G = geo.perimeter_gradient(X, model.phi, model.mu)
        J = geo.area_jacobian(X)
        G = G + self.lam * np.tensordot(self.sign * ~self.active, J, axes=1)
        c = np.zeros(len(self.active))
        idx = self.rows()
        if len(idx):
            A = J[idx].reshape(len(idx), -1)
            coef = np.linalg.solve(A @ A.T, A @ G.ravel())
            G = G - (A.T @ coef).reshape(G.shape)
            c[idx] = coef
        return G, c

    def release(self, c) -> bool:
        act = self.active
        if not act.any():
            return False
        if act.all():
            i, j = int(np.argmax(c)), int(np.argmin(c))
            if c[i] - c[j] > 2 * self.lam * (1 + 1e-9):
                self.active[[i, j]] = False
                self.sign[i], self.sign[j] = -1.0, 1.0
                return True
            return False
        cand = np.where(act, np.abs(c), 0.0)
        i = int(np.argmax(cand))
        if cand[i] > self.lam * (1 + 1e-9):
            self.active[i] = False
            self.sign[i] = -np.sign(c[i])
            return True
        return False


def _penalized_energy(geo, X, model):
    r = geo.areas(X) - np.asarray(model.targets)
    return geo.perimeter_energy(X, model.phi, model.mu) + model.lam * float(np.abs(r).sum()), r


def _descend_penalized(p, model, cfg, iters, trace, it0):
    geo = PolyGeometry(p)
    X = geo.points()
    v = np.asarray(model.targets, dtype=float)
    tol = cfg.tol_volume
    E, r = _penalized_energy(geo, X, model)
    aset = _ActiveSet(r, model.lam, tol)
    G, c = aset.direction(geo, X, model)
    gnorm = float(np.hypot(G[:, 0], G[:, 1]).max())
    trace.start_segment(it0, E, float(np.abs(r).max()), gnorm)
    alpha = cfg.step
    s_prev = y_prev = None
    status = "max_iters"
    it = it0
    for _ in range(iters):
        if aset.release(c):
            G, c = aset.direction(geo, X, model)
            gnorm = float(np.hypot(G[:, 0], G[:, 1]).max())
            s_prev = None
        if gnorm <= cfg.tol_grad:
            status = "converged"
            break
        if s_prev is not None:
            sy = float((s_prev * y_prev).sum())
            alpha = float((s_prev * s_prev).sum()) / sy if sy > 0 else cfg.step
        if cfg.step_rule == "fixed":
            alpha = cfg.step
        alpha = min(alpha, 0.3 * _min_segment(geo, X) / max(gnorm, 1e-300))
        slope = float((G * G).sum())
        accepted = False
        while alpha > 1e-16:
            Xt, rt = _project_rows(geo, X - alpha * G, v, aset.rows(), tol)
            if rt > tol:
                alpha *= 0.5
                continue
            Et, rr = _penalized_energy(geo, Xt, model)
            if cfg.step_rule == "fixed" or (Et <= E - cfg.armijo * alpha * slope and Et <= E):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            status = "step_underflow"
            break
        # free cells that reached or crossed their target are snapped onto it
        hit = ~aset.active & ((rr * aset.sign <= 0) | (np.abs(rr) <= tol))
        changed = False
        if hit.any():
            act2 = aset.active | hit
            Xs, rs = _project_rows(geo, Xt, v, aset.rows(act2), tol)
            Es, rs_all = _penalized_energy(geo, Xs, model)
            if rs <= tol and Es <= Et:
                Xt, Et, rr = Xs, Es, rs_all
                aset.active = act2
                aset.sign[hit] = 0.0
                changed = True
            else:
                aset.sign[hit] = np.sign(rr[hit])
                changed = True
        Gt, c = aset.direction(geo, Xt, model)
        if changed:
            s_prev = None
        else:
            s_prev, y_prev = Xt - X, Gt - G
        X, E, G = Xt, Et, Gt
        gnorm = float(np.hypot(G[:, 0], G[:, 1]).max())
        it += 1
        trace.record(it, E, float(np.abs(rr).max()), gnorm)
    else:
        if gnorm <= cfg.tol_grad and not aset.release(c):
            status = "converged"
    return p.with_points(X), it, status


# -- surgery ---------------------------------------------------------------------


def _cell_point_lists(p: PolyPartition):
    """Per cell: list of (point index, Cartesian lattice offset) around the unwrapped polygon."""
    geo = PolyGeometry(p)
    out = [[] for _ in range(p.n_cells)]
    for idx, off, c in zip(geo.poly_idx, geo.poly_off, geo.poly_cell):
        out[c].append((int(idx), off.copy()))
    return geo, out


def _rebuild(p: PolyPartition, X, lists, samples) -> PolyPartition:
    polys = []
    for L in lists:
        P = np.array([X[i] + off for i, off in L])
        polys.append(P)
    q = from_polygons(
        p.lattice,
        polys,
        targets=[c.target for c in p.cells],
        labels=[c.label for c in p.cells],
        samples=samples,
        tol=1e-9 * max(1.0, math.sqrt(volume(p.lattice))),
    )
    if q.n_cells != p.n_cells:
        raise SurgeryRejected("cell count changed")
    return q


def collapse_short_edges(p: PolyPartition, edge_min: float, samples: int | None = None):
    """Merge the endpoints of every edge shorter than ``edge_min``.

    Returns (new state, list of collapsed edge ids).  Raises SurgeryRejected if
    a cell would be left with fewer than three boundary points.
    """
    geo, lists = _cell_point_lists(p)
    X = geo.points()
    L = geo.edge_lengths(X)
    short = [e for e in np.argsort(L, kind="stable") if L[e] < edge_min]
    if not short:
        return p, []
    samples = _samples_of(p) if samples is None else samples
    B = p.lattice.basis
    done = []
    used = set()
    for e in short:
        E = p.edges[e]
        if E.tail in used or E.head in used or E.tail == E.head:
            continue
        used.update((E.tail, E.head))
        head_pos = X[E.head] + B @ np.asarray(E.wrap, dtype=float)
        mid = 0.5 * (X[E.tail] + head_pos)
        ids = geo.edge_index[e]
        X[E.tail] = mid
        X[E.head] = mid - B @ np.asarray(E.wrap, dtype=float)
        for s in ids[1:-1]:
            X[s] = mid
        done.append(int(e))
    for L_ in lists:
        pts = np.array([X[i] + off for i, off in L_])
        uniq = np.unique(np.round(pts, 12), axis=0)
        if len(uniq) < 3:
            raise SurgeryRejected("collapse would create a degenerate cell")
    return _rebuild(p, X, lists, samples), done


def _incident(p: PolyPartition, geo: PolyGeometry, X, v: int):
    """Outgoing half-edges at vertex v: (angle, edge id, end) sorted by angle."""
    B = p.lattice.basis
    out = []
    for e, E in enumerate(p.edges):
        ids = geo.edge_index[e]
        w = B @ np.asarray(E.wrap, dtype=float)
        if E.tail == v:
            # the first neighbour is a sample (tail frame) or the wrapped head
            vec = X[ids[1]] + (0.0 if len(ids) > 2 else w) - X[v]
            out.append((math.atan2(vec[1], vec[0]), e, 0))
        if E.head == v:
            vec = X[ids[-2]] - w - X[v]
            out.append((math.atan2(vec[1], vec[0]), e, 1))
    out.sort()
    return out


def junction_split_candidates(p: PolyPartition, v: int, eps: float, samples):
    """All states obtained by pulling two consecutive half-edges off vertex v."""
    geo, lists = _cell_point_lists(p)
    X = geo.points()
    inc = _incident(p, geo, X, v)
    m = len(inc)
    dirs = []
    for ang, *_ in inc:
        dirs.append(np.array([math.cos(ang), math.sin(ang)]))
    cands = []
    for a in range(m):
        group = {a, (a + 1) % m}
        if m == 4 and a >= 2:
            break  # {2,3}|{0,1} repeats {0,1}|{2,3}
        uA = dirs[a] + dirs[(a + 1) % m]
        uB = sum(dirs[k] for k in range(m) if k not in group)
        if np.linalg.norm(uA) < 1e-12:
            uA = np.array([-dirs[a][1], dirs[a][0]])
        if np.linalg.norm(uB) < 1e-12:
            uB = -uA
        uA = uA / np.linalg.norm(uA)
        uB = uB / np.linalg.norm(uB)
        PA = X[v] + eps * uA
        PB = X[v] + eps * uB
        new_lists = []
        for L_ in lists:
            newL = []
            n = len(L_)
            for t, (i, off) in enumerate(L_):
                if i != v:
                    newL.append((i, off, None))
                    continue
                # wedge of this polygon corner: directions to previous and next points
                pi, poff = L_[(t - 1) % n]
                ni, noff = L_[(t + 1) % n]
                base = X[v] + off
                vp = X[pi] + poff - base
                vn = X[ni] + noff - base
                kp = _match_dir(dirs, vp)
                kn = _match_dir(dirs, vn)
                inA_p, inA_n = kp in group, kn in group
                if inA_p and inA_n:
                    newL.append((None, off, PA))
                elif not inA_p and not inA_n:
                    newL.append((None, off, PB))
                elif inA_p:
                    newL.append((None, off, PA))
                    newL.append((None, off, PB))
                else:
                    newL.append((None, off, PB))
                    newL.append((None, off, PA))
            new_lists.append(newL)
        polys = [np.array([X[i] + off if i is not None else P + off for i, off, P in L_]) for L_ in new_lists]
        try:
            q = from_polygons(
                p.lattice,
                polys,
                targets=[c.target for c in p.cells],
                labels=[c.label for c in p.cells],
                samples=samples,
                tol=1e-9 * max(1.0, math.sqrt(volume(p.lattice))),
            )
        except (PartitionError, ValueError):
            continue
        key = tuple(sorted(inc[k][1] for k in group))
        cands.append((key, q))
    return cands


def _match_dir(dirs, vec):
    u = vec / max(np.linalg.norm(vec), 1e-300)
    return int(np.argmax([float(d @ u) for d in dirs]))


def split_junctions(p: PolyPartition, model: EnergyModel, cfg: OptimizerConfig, samples=None):
    """Split every junction of degree >= 4 if some pairing lowers the energy."""
    samples = _samples_of(p) if samples is None else samples
    events = []
    for _ in range(4 * max(1, len(p.vertices))):
        deg = p.vertex_degrees()
        high = [v for v in range(len(deg)) if deg[v] >= 4]
        if not high:
            break
        v = high[0]
        geo = PolyGeometry(p)
        X = geo.points()
        L = geo.edge_lengths(X)
        inc_edges = [e for e, E in enumerate(p.edges) if v in (E.tail, E.head)]
        shortest = float(L[inc_edges].min())
        eps = min(0.2 * shortest, max(3.0 * cfg.edge_min(p.lattice), 0.02 * math.sqrt(volume(p.lattice) / p.n_cells)))
        E0 = _projected_energy(p, model, cfg)
        best = None
        for key, q in junction_split_candidates(p, v, eps, samples):
            try:
                Eq = _projected_energy(q, model, cfg)
            except (PartitionError, np.linalg.LinAlgError):
                continue
            if best is None or Eq < best[0] - 1e-12 or (abs(Eq - best[0]) <= 1e-12 and key < best[1]):
                best = (Eq, key, q)
        if best is None or best[0] >= E0:
            break
        events.append(("split", int(v), best[1], E0, best[0]))
        p = best[2]
    return p, events


def _projected_energy(p, model, cfg):
    if model.penalized:
        return evaluate(p, model).total
    geo = PolyGeometry(p)
    X, r = project_volumes(geo, geo.points(), model.targets, cfg.tol_volume)
    if r > 1e-8:
        raise PartitionError("volume projection failed")
    return float(evaluate(p.with_points(X), model).total)


def surgery(state: PolyPartition, cfg: OptimizerConfig | None = None, model: EnergyModel | None = None):
    """Collapse short edges, split degree >= 4 junctions, resample.

    Returns (state, applied flag, events).  If a collapse would degenerate a
    cell the input state is returned unchanged with events ["rejected"].
    """
    cfg = cfg or OptimizerConfig()
    model = model or EnergyModel.classical(state.target_volumes)
    samples = cfg.samples if cfg.samples is not None else _samples_of(state)
    try:
        p, collapsed = collapse_short_edges(state, cfg.edge_min(state.lattice), samples)
    except SurgeryRejected:
        return state, False, ["rejected"]
    events = [("collapse", e) for e in collapsed]
    p, ev = split_junctions(p, model, cfg, samples)
    events += ev
    if not events:
        return state, False, []
    return resample(p, samples) if samples else p, True, events


def _surgery_step(p, model, cfg, trace, it):
    q, applied, events = surgery(p, cfg, model)
    if events == ["rejected"]:
        trace.events.append((it, "rejected"))
        return p
    if applied:
        for ev in events:
            trace.events.append((it,) + tuple(ev))
        trace.mark_break()
        return q
    return p


# -- grids ---------------------------------------------------------------------


def minimize_grid(init: GridPartition, model: EnergyModel, cfg: OptimizerConfig | None = None):
    """Label-flip descent on boundary pixels.

    Penalized models use single flips; constrained models use paired swaps
    that keep every label's pixel count.  With ``cfg.anneal`` a seeded
    Metropolis phase precedes the greedy phase.
    """
    cfg = cfg or OptimizerConfig()
    st = FlipState(init, model)
    trace = RunTrace()
    E = evaluate(init, model).total
    res = evaluate(init, model).volume_residual
    trace.record(0, E, res, 0.0)
    rng = np.random.default_rng(cfg.seed)
    it = 0
    if cfg.anneal:
        E, it = _anneal(st, model, cfg, rng, E, trace)
    status = "max_iters"
    while it < cfg.max_iters:
        if model.penalized:
            move = _best_flip(st)
        else:
            move = _best_swap(st)
        if move is None:
            status = "converged"
            break
        delta, flips = move
        for pix, b in flips:
            st.apply(pix, b)
        E += delta
        it += 1
        g = st.grid()
        trace.record(it, E, float(np.max(np.abs(g.volumes() - np.asarray(model.targets)))), abs(delta))
    trace.status = status
    final = st.grid()
    return final, trace


def _best_flip(st: FlipState, tol: float = 1e-12):
    best = None
    for pix, b in st.boundary_moves():
        d = st.flip_delta(pix, b)
        if d < -tol and (best is None or d < best[0]):
            best = (d, [(pix, b)])
    return best


def _best_swap(st: FlipState, tol: float = 1e-12, width: int = 24):
    """Best pair (p: a->b, q: b->a) among the most favourable single flips."""
    by_pair: dict = {}
    for pix, b in st.boundary_moves():
        a = int(st.labels[pix])
        d = st.scale * (st.S[a - 1][pix] - st.T0 - st.S[b - 1][pix])
        by_pair.setdefault((a, b), []).append((float(d), pix))
    best = None
    for (a, b), lst in sorted(by_pair.items()):
        if a > b or (b, a) not in by_pair:
            continue
        P = sorted(lst)[:width]
        Q = sorted(by_pair[(b, a)])[:width]
        for d1, p in P:
            for d2, q in Q:
                if p == q:
                    continue
                d = d1 + d2 + 2.0 * st.scale * st.pair_interaction(p, q)
                if d < -tol and (best is None or d < best[0]):
                    best = (d, [(p, b), (q, a)])
    return best


def _anneal(st: FlipState, model, cfg, rng, E, trace):
    it = 0
    temps = cfg.anneal_temperature * np.linspace(1.0, 0.0, cfg.anneal_sweeps, endpoint=False)
    for T in temps:
        moves = st.boundary_moves()
        order = rng.permutation(len(moves))
        for k in order:
            pix, b = moves[k]
            if int(st.labels[pix]) == b:
                continue
            if model.penalized:
                d = st.flip_delta(pix, b)
                if d <= 0 or rng.random() < math.exp(-d / T):
                    st.apply(pix, b)
                    E += d
            else:
                continue
        it += 1
        trace.record(it, E, 0.0, T)
    return E, it


# -- lattices ---------------------------------------------------------------------


def lattice_from_params(t: float, p: float, V: float) -> Lattice:
    return Lattice.from_vectors((t, 0.0), (p, V / t))


def minimize_lattice(
    init: Lattice,
    model: EnergyModel,
    cfg: OptimizerConfig | None = None,
    state: PolyPartition | None = None,
):
    """Coordinate descent over the basis ((t, 0), (p, V/t)) with inner polygonal descent.

    ``state`` is the initial partition (default: the Voronoi-free slab
    partition of the initial lattice).  Returns (lattice, partition, trace).
    """
    cfg = cfg or OptimizerConfig()
    if init.dim != 2:
        raise ValueError("lattice descent is planar")
    V = volume(init)
    model.check_volume(V)
    # rotate the initial basis to the ((t, 0), (p, q)) form
    e1, e2 = init.vectors
    if e1[0] * e2[1] - e1[1] * e2[0] < 0:
        e2 = -e2
    t = float(np.linalg.norm(e1))
    c, s = e1 / t
    R = np.array([[c, s], [-s, c]])
    pq = R @ e2
    params = np.array([t, float(pq[0])])
    L0 = lattice_from_params(params[0], params[1], V)
    if state is None:
        state = slab_partition(init, model.targets)
    cur = state.with_lattice(L0)
    inner = replace(cfg, max_iters=cfg.max_iters)
    trace = RunTrace()
    lattices_seen = []

    def solve(prm, start):
        L = lattice_from_params(prm[0], prm[1], V)
        lattices_seen.append(L)
        q, tr = minimize_poly(start.with_lattice(L), model, inner)
        return q, tr

    cur, tr = solve(params, cur)
    best_E = tr.final_energy
    trace.extend(tr)
    step = cfg.lattice_step
    for _ in range(cfg.lattice_iters):
        improved = False
        for k, sgn in ((0, 1), (0, -1), (1, 1), (1, -1)):
            trial = params.copy()
            if k == 0:
                trial[0] *= math.exp(sgn * step)
            else:
                trial[1] += sgn * step * params[0]
            try:
                q, tr = solve(trial, cur)
            except (PartitionError, np.linalg.LinAlgError, ValueError):
                continue
            if tr.final_energy < best_E - 1e-12:
                params, cur, best_E = trial, q, tr.final_energy
                trace.extend(tr)
                trace.events.append(("lattice", float(params[0]), float(params[1]), best_E))
                improved = True
                break
        if not improved:
            step *= 0.5
            if step < cfg.lattice_tol:
                break
    trace.status = "converged" if step < cfg.lattice_tol else "max_iters"
    trace.events.append(("lattices_evaluated", len(lattices_seen)))
    return cur.lattice, cur, trace
