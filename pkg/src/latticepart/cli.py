"""Command-line front end.

Every subcommand resolves its parameters from built-in defaults, an optional
JSON config file and explicit flags (in that order of precedence), rejects
unknown config keys, and writes a manifest echoing the resolved parameters
next to its outputs.  Exit codes: 0 success, 2 invalid input, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .constructions import (
    HEX_PERIMETER,
    InfeasibleError,
    honeycomb,
    perturb,
    periodic_voronoi,
    slab_partition,
    square_grid,
    stretched_hex_domain,
    twoblock_competitor,
    wulff_tiling,
)
from .diagnostics import diagnose, fit_arcs
from .energy import evaluate
from .fileio import (
    FileFormatError,
    read_partition,
    read_state,
    write_breakdown,
    write_csv,
    write_grid,
    write_manifest,
    write_partition,
    write_trace,
)
from .functionals import Anisotropy, Kernel
from .lattice import Lattice, volume
from .models import EnergyModel
from .optimizer import OptimizerConfig, minimize_grid, minimize_lattice, minimize_poly
from .partition_grid import GridPartition, decompose, rasterize_partition, simplify
from .partition_poly import PartitionError, PolyPartition, SupportError
from .plotting import save_svg, save_sweep_plot

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
PRESETS = ["honeycomb", "stretched-hex", "square", "slab", "wulff", "twoblock", "voronoi", "grid"]

MODEL_DEFAULTS = {
    "perimeter": "classical",
    "anisotropy": "euclidean",
    "s": 0.5,
    "truncation": None,
    "mu": 0.0,
    "lam": None,
    "volumes": None,
}
OPT_DEFAULTS = {
    "max_iters": 2000,
    "tol_grad": 1e-8,
    "tol_volume": 1e-10,
    "samples": None,
    "surgery": True,
    "anneal": False,
    "seed": 0,
}

DEFAULTS = {
    "construct": {
        "preset": None,
        "n": 1,
        "volumes": None,
        "lattice": "zd",
        "delta": 0.1,
        "samples": 16,
        "seed": 0,
        "amplitude": 0.0,
        "source": None,
        "resolution": 32,
        "out": None,
    },
    "evaluate": {"state": None, "out": None, **MODEL_DEFAULTS},
    "minimize": {"state": None, "out": None, **MODEL_DEFAULTS, **OPT_DEFAULTS},
    "minimize-lattice": {
        "state": None,
        "out": None,
        **MODEL_DEFAULTS,
        **OPT_DEFAULTS,
        "max_iters": 400,
        "tol_grad": 1e-7,
        "lattice_iters": 60,
        "lattice_step": 0.1,
        "lattice_tol": 1e-4,
    },
    "diagnose": {"state": None, "out": None, "reference": None, "trials": 100, "seed": 0, **MODEL_DEFAULTS},
    "decompose": {"state": None, "out": None, "simplify": False},
    "sweep-delta": {
        "n": 4,
        "deltas": [0.0, 0.1, 0.2, 0.3, 0.4],
        "starts": 1,
        "max_iters": 300,
        "samples": 4,
        "seed": 0,
        "out": None,
    },
    "sweep-lambda": {
        "volumes": [1.4, 1.0, 0.6],
        "lams": [0.05, 0.1, 0.2, 0.5, 1.0, 2.0],
        "max_iters": 2000,
        "samples": 8,
        "seed": 0,
        "out": None,
    },
    "export-svg": {"state": None, "out": None, "junctions": True, "arcs": False},
}


class InputError(ValueError):
    """Invalid command-line or config input (exit code 2)."""


class NumericalFailure(RuntimeError):
    """A computation did not reach a usable result (exit code 3)."""


# -- argument parsing -----------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _bool(text: str) -> bool:
    t = text.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _add_model_flags(sp):
    sp.add_argument("--perimeter", choices=["classical", "anisotropic", "nonlocal"])
    sp.add_argument("--anisotropy", choices=["euclidean", "ell1", "hexagonal"])
    sp.add_argument("--s", type=float, help="fractional kernel exponent in (0, 1)")
    sp.add_argument("--truncation", type=float, help="kernel truncation radius")
    sp.add_argument("--mu", type=float, help="weight of the domain perimeter")
    sp.add_argument("--lam", type=float, help="volume penalty (omit for hard constraints)")
    sp.add_argument("--volumes", type=_floats, help="override target volumes")


def _add_opt_flags(sp):
    sp.add_argument("--max-iters", dest="max_iters", type=int)
    sp.add_argument("--tol-grad", dest="tol_grad", type=float)
    sp.add_argument("--tol-volume", dest="tol_volume", type=float)
    sp.add_argument("--samples", type=int, help="resample edges to this many interior points")
    sp.add_argument("--surgery", type=_bool)
    sp.add_argument("--anneal", type=_bool)
    sp.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="latticepart", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"latticepart {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_, argument_default=None)
        sp.add_argument("--config", help="JSON file with parameters (flags take precedence)")
        return sp

    sp = add("construct", "build a preset partition")
    sp.add_argument("preset", nargs="?", choices=PRESETS)
    sp.add_argument("--n", type=int)
    sp.add_argument("--volumes", type=_floats)
    sp.add_argument("--lattice", choices=["zd", "hex"])
    sp.add_argument("--delta", type=float)
    sp.add_argument("--samples", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--amplitude", type=float, help="seeded random perturbation of the construction")
    sp.add_argument("--source", help="grid preset: polygonal state file to rasterize")
    sp.add_argument("--resolution", type=int, help="grid preset: pixels per lattice direction")
    sp.add_argument("--out", help="output state file")

    sp = add("evaluate", "energy breakdown of a state file")
    sp.add_argument("state", nargs="?")
    _add_model_flags(sp)
    sp.add_argument("--out", help="breakdown CSV (default: print only)")

    sp = add("minimize", "descend from a state file")
    sp.add_argument("state", nargs="?")
    _add_model_flags(sp)
    _add_opt_flags(sp)
    sp.add_argument("--out", help="output state file")

    sp = add("minimize-lattice", "descend over lattices of fixed volume")
    sp.add_argument("state", nargs="?")
    _add_model_flags(sp)
    _add_opt_flags(sp)
    sp.add_argument("--lattice-iters", dest="lattice_iters", type=int)
    sp.add_argument("--lattice-step", dest="lattice_step", type=float)
    sp.add_argument("--lattice-tol", dest="lattice_tol", type=float)
    sp.add_argument("--out", help="output state file")

    sp = add("diagnose", "junction, arc, pressure, diameter and minimality checks")
    sp.add_argument("state", nargs="?")
    sp.add_argument("--reference", help="state file to measure Hausdorff distance against")
    sp.add_argument("--trials", type=int)
    sp.add_argument("--seed", type=int)
    _add_model_flags(sp)
    sp.add_argument("--out", help="output prefix (writes .txt, .csv, .svg)")

    sp = add("decompose", "connected components of a grid partition")
    sp.add_argument("state", nargs="?")
    sp.add_argument("--simplify", type=_bool, help="merge secondary components until all labels are simple")
    sp.add_argument("--out", help="output prefix")

    sp = add("sweep-delta", "honeycomb vs two-block competitor over a grid of delta")
    sp.add_argument("--n", type=int)
    sp.add_argument("--deltas", type=_floats)
    sp.add_argument("--starts", type=int, help="perturbed optimizer starts per delta")
    sp.add_argument("--max-iters", dest="max_iters", type=int)
    sp.add_argument("--samples", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", help="output CSV")

    sp = add("sweep-lambda", "penalized minimizers over a grid of lambda")
    sp.add_argument("--volumes", type=_floats)
    sp.add_argument("--lams", type=_floats)
    sp.add_argument("--max-iters", dest="max_iters", type=int)
    sp.add_argument("--samples", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", help="output CSV")

    sp = add("export-svg", "render a state file")
    sp.add_argument("state", nargs="?")
    sp.add_argument("--junctions", type=_bool)
    sp.add_argument("--arcs", type=_bool, help="overlay fitted arcs")
    sp.add_argument("--out", help="output SVG")
    return ap


def resolve(command: str, flags: dict, config_path: str | None = None) -> dict:
    """defaults <- config file <- explicit flags; unknown config keys are rejected."""
    cfg = dict(DEFAULTS[command])
    if config_path:
        try:
            data = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {config_path}: {exc}") from exc
        if not isinstance(data, dict):
            raise InputError("config must be a JSON object")
        if "command" in data:  # a manifest from an earlier run
            if data["command"] != command:
                raise InputError(f"manifest is for {data['command']!r}, not {command!r}")
            data = data.get("config", {})
        unknown = sorted(set(data) - set(cfg))
        if unknown:
            raise InputError(f"unknown config keys for {command}: {', '.join(unknown)}")
        cfg.update(data)
    cfg.update({k: v for k, v in flags.items() if v is not None and k in cfg})
    return cfg


# -- helpers --------------------------------------------------------------------


def _need(cfg, *keys):
    for k in keys:
        if cfg.get(k) in (None, ""):
            raise InputError(f"missing required parameter: {k}")


def _sidecar(path, suffix):
    p = Path(path)
    return p.with_name(p.stem + suffix)


def _model(cfg, state) -> EnergyModel:
    n = state.n_cells if isinstance(state, PolyPartition) else state.n_labels
    targets = cfg["volumes"] if cfg["volumes"] is not None else _targets(state)
    if len(targets) != n:
        raise InputError(f"{len(targets)} volumes given for {n} cells")
    kind = cfg["perimeter"]
    if kind == "classical":
        return EnergyModel.classical(targets, mu=cfg["mu"], lam=cfg["lam"])
    if kind == "anisotropic":
        return EnergyModel.anisotropic(Anisotropy(cfg["anisotropy"]), targets, mu=cfg["mu"], lam=cfg["lam"])
    dim = state.lattice.dim
    return EnergyModel.nonlocal_(Kernel(cfg["s"], dim, cfg["truncation"]), targets, mu=cfg["mu"], lam=cfg["lam"])


def _targets(state):
    if isinstance(state, PolyPartition):
        return list(state.target_volumes)
    # grids carry no targets: equal shares of the domain
    return [volume(state.lattice) / state.n_labels] * state.n_labels


def _opt_config(cfg) -> OptimizerConfig:
    keys = set(OptimizerConfig.__dataclass_fields__)
    return OptimizerConfig(**{k: v for k, v in cfg.items() if k in keys})


def _read(path):
    if path is None:
        raise InputError("a state file is required")
    try:
        return read_state(path)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _write_state(path, state, energy=None):
    if isinstance(state, GridPartition):
        write_grid(path, state)
    else:
        write_partition(path, state, energy)


def _manifest(path, command, cfg, outputs, extra=None):
    data = {"command": command, "config": cfg, "version": __version__, "outputs": [str(o) for o in outputs]}
    if extra:
        data["result"] = extra
    write_manifest(_sidecar(path, ".manifest.json"), data)


def _print_breakdown(b, out=None):
    out = out or sys.stdout
    print(f"energy {b.total:.17g}", file=out)
    print(f"half_sum_perimeters {b.half_sum_perimeters:.17g}", file=out)
    print(f"mu_term {b.mu_term:.17g}", file=out)
    print(f"penalty_term {b.penalty_term:.17g}", file=out)
    print(f"volume_residual {b.volume_residual:.3e}", file=out)


# -- subcommands ----------------------------------------------------------------


def cmd_construct(cfg) -> int:
    _need(cfg, "preset", "out")
    preset, n, samples = cfg["preset"], int(cfg["n"]), cfg["samples"]
    if preset == "grid":
        return _construct_grid(cfg)
    vols = cfg["volumes"]
    model = None
    if preset == "honeycomb":
        p = honeycomb(n, samples=samples)
    elif preset == "stretched-hex":
        _need(cfg, "volumes")
        p = stretched_hex_domain(vols, samples=samples)
    elif preset == "square":
        p = square_grid(n, samples=samples)
    elif preset == "slab":
        vols = vols or [1.0 / n] * n
        L = Lattice.square() if cfg["lattice"] == "zd" else Lattice.hexagonal()
        L = L.scaled(math.sqrt(sum(vols)))
        p = slab_partition(L, vols, samples=samples)
    elif preset == "wulff":
        a = Anisotropy("ell1")
        p = wulff_tiling(a, vols or [1.0] * n, samples=samples)
        model = EnergyModel.anisotropic(a, p.target_volumes)
    elif preset == "twoblock":
        p = twoblock_competitor(n, cfg["delta"], samples=samples).partition
    elif preset == "voronoi":
        L = Lattice.hexagonal(float(n)) if cfg["lattice"] == "hex" else Lattice.square(math.sqrt(n))
        p = periodic_voronoi(L, n, seed=cfg["seed"], samples=samples)
        if vols:
            p = p.with_targets(vols)
    else:
        raise InputError(f"unknown preset {preset!r}")
    if cfg["amplitude"]:
        p = perturb(p, cfg["amplitude"], seed=cfg["seed"])
    model = model or EnergyModel.classical(p.target_volumes)
    b = evaluate(p, model)
    out = Path(cfg["out"])
    write_partition(out, p, b.total)
    svg = save_svg(p, _sidecar(out, ".svg"), title=preset)
    csv_ = _sidecar(out, ".csv")
    write_breakdown(csv_, b, p.labels)
    _manifest(out, "construct", cfg, [out, svg, csv_], {"energy": b.total})
    print(f"{preset}: {p.n_cells} cells")
    _print_breakdown(b)
    return EXIT_OK


def _construct_grid(cfg) -> int:
    """Rasterized polygonal state, or a seeded random label field with n labels."""
    res = int(cfg["resolution"])
    if cfg["source"]:
        src = _read(cfg["source"])
        if not isinstance(src, PolyPartition):
            raise InputError("grid source must be a polygonal state")
        g = rasterize_partition(src, res)
    else:
        rng = np.random.default_rng(int(cfg["seed"]))
        g = GridPartition(Lattice.square(), rng.integers(1, int(cfg["n"]) + 1, size=(res, res)), int(cfg["n"]))
    model = EnergyModel.classical(_targets(g))
    b = evaluate(g, model)
    out = Path(cfg["out"])
    write_grid(out, g)
    svg = save_svg(g, _sidecar(out, ".svg"), title="grid")
    _manifest(out, "construct", cfg, [out, svg], {"energy": b.total})
    print(f"grid: {g.n}x{g.n} pixels, {g.n_labels} labels")
    _print_breakdown(b)
    return EXIT_OK


def cmd_evaluate(cfg) -> int:
    state = _read(cfg["state"])
    b = evaluate(state, _model(cfg, state))
    _print_breakdown(b)
    if cfg["out"]:
        labels = state.labels if isinstance(state, PolyPartition) else None
        write_breakdown(cfg["out"], b, labels)
        _manifest(cfg["out"], "evaluate", cfg, [cfg["out"]], {"energy": b.total})
    return EXIT_OK


def _finish_run(command, cfg, state, trace, model):
    out = Path(cfg["out"])
    b = evaluate(state, model)
    _write_state(out, state, b.total)
    tr = _sidecar(out, ".trace.csv")
    write_trace(tr, trace)
    svg = save_svg(state, _sidecar(out, ".svg"), title=f"{command}: E = {b.total:.10g}")
    _manifest(out, command, cfg, [out, tr, svg], {"energy": b.total, "status": trace.status})
    print(f"status {trace.status} after {trace.iterations[-1] if trace.iterations else 0} iterations")
    _print_breakdown(b)
    if not math.isfinite(b.total):
        raise NumericalFailure("non-finite final energy")
    return EXIT_OK


def cmd_minimize(cfg) -> int:
    _need(cfg, "out")
    state = _read(cfg["state"])
    model = _model(cfg, state)
    oc = _opt_config(cfg)
    if isinstance(state, GridPartition):
        final, trace = minimize_grid(state, model, oc)
    else:
        final, trace = minimize_poly(state, model, oc)
    return _finish_run("minimize", cfg, final, trace, model)


def cmd_minimize_lattice(cfg) -> int:
    _need(cfg, "out")
    state = _read(cfg["state"])
    if not isinstance(state, PolyPartition):
        raise InputError("lattice descent needs a polygonal state")
    model = _model(cfg, state)
    L, final, trace = minimize_lattice(state.lattice, model, _opt_config(cfg), state=state)
    return _finish_run("minimize-lattice", cfg, final, trace, model)


def cmd_diagnose(cfg) -> int:
    state = _read(cfg["state"])
    if not isinstance(state, PolyPartition):
        raise InputError("diagnostics need a polygonal state")
    model = _model(cfg, state)
    ref = read_partition(cfg["reference"])[0] if cfg["reference"] else None
    rep = diagnose(state, model, reference=ref, trials=int(cfg["trials"]), seed=int(cfg["seed"]))
    lines = [
        f"junctions {len(rep.junctions)}",
        f"non_regular_junctions {len(rep.non_regular_junctions)}",
        f"junction_angle_max_dev_deg {rep.junction_angle_max_dev:.6g}",
        f"arc_rms_max {rep.arc_rms_max:.6g}",
        f"curvature_sum_max {rep.curvature_sum_max:.6g}",
        f"pressure_residual {rep.pressure_residual:.6g}",
        f"diameter_ratio_max {rep.diameter_ratio_max:.6g}",
    ]
    if rep.pressures is not None:
        lines.append("pressures " + " ".join(f"{v:.10g}" for v in rep.pressures))
    if rep.hausdorff_to_reference is not None:
        lines.append(f"hausdorff_to_reference {rep.hausdorff_to_reference:.6g}")
    pr = rep.minimality_probe
    if pr is None:
        lines.append("minimality_probe vacuous (0 trials)")
    else:
        verdict = "vacuous" if pr.vacuous else ("pass" if pr.passed else "fail")
        lines.append(
            f"minimality_probe {verdict} trials={pr.trials} competitors={pr.competitors} "
            f"worst={pr.worst:.6g} radius={pr.radius:.6g} Lambda={pr.lam:.6g}"
        )
    lines += [f"note {n}" for n in rep.notes]
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if cfg["out"]:
        out = Path(cfg["out"])
        txt = out.with_suffix(".txt")
        txt.parent.mkdir(parents=True, exist_ok=True)
        txt.write_text(text)
        csv_ = out.with_suffix(".csv")
        write_csv(csv_, ("edge", "curvature", "rms"), [(e, k, r) for e, (k, r) in enumerate(rep.arc_fit)])
        svg = save_svg(state, out.with_suffix(".svg"), title="diagnostics", arcs=fit_arcs(state))
        _manifest(txt, "diagnose", cfg, [txt, csv_, svg])
    return EXIT_OK


def cmd_decompose(cfg) -> int:
    g = _read(cfg["state"])
    if not isinstance(g, GridPartition):
        raise InputError("decompose needs a grid state")
    rows = []
    for i in range(1, g.n_labels + 1):
        d = decompose(g, i)
        rows.append((i, d.count, " ".join(str(int(s)) for s in d.sizes)))
        print(f"label {i}: {d.count} component(s), sizes {list(map(int, d.sizes))}")
    outputs = []
    if cfg["out"]:
        out = Path(cfg["out"])
        csv_ = out.with_suffix(".csv")
        write_csv(csv_, ("label", "components", "sizes"), rows)
        outputs.append(csv_)
    if cfg["simplify"]:
        g2, events = simplify(g)
        print(f"simplify: {len(events)} merge(s)")
        for ev in events:
            print(f"  merge label {ev.i} component {ev.k} into label {ev.j}: perimeter drop {ev.perimeter_drop:.6g}")
        if cfg["out"]:
            st = out.with_suffix(".grid.txt")
            write_grid(st, g2)
            ev_csv = _sidecar(out, ".merges.csv")
            write_csv(
                ev_csv,
                ("i", "j", "k", "pixels", "shared_faces", "perimeter_drop"),
                [(e.i, e.j, e.k, e.pixels, e.shared_faces, float(e.perimeter_drop)) for e in events],
            )
            outputs += [st, ev_csv, save_svg(g2, out.with_suffix(".svg"), title="simplified")]
    if cfg["out"]:
        _manifest(out.with_suffix(".csv"), "decompose", cfg, outputs)
    return EXIT_OK


def cmd_sweep_delta(cfg) -> int:
    _need(cfg, "out")
    N = int(cfg["n"])
    M = N * N
    honey = M / 2 * HEX_PERIMETER
    rows = []
    for k, delta in enumerate(cfg["deltas"]):
        vols = [1 - delta] * (M // 2) + [1 + delta] * (M // 2)
        hexp = stretched_hex_domain(vols, samples=cfg["samples"])
        model = EnergyModel.classical(hexp.target_volumes)
        e_hex = evaluate(hexp, model).total
        tb = twoblock_competitor(N, delta, samples=cfg["samples"])
        best = math.nan
        for s in range(int(cfg["starts"])):
            seed = int(cfg["seed"]) + 1000 * k + s
            start = perturb(hexp, 0.02, seed=seed)
            oc = OptimizerConfig(max_iters=int(cfg["max_iters"]), seed=seed)
            fin, _ = minimize_poly(start, model, oc)
            e = evaluate(fin, model).total
            best = e if not math.isfinite(best) else min(best, e)
        rows.append(
            (
                float(delta),
                float(e_hex),
                float(honey),
                float(tb.leading_term),
                float(tb.energy),
                float(tb.constant),
                float(tb.upper_bound),
                float(best),
                int(tb.leading_term < honey),
                int(tb.energy < e_hex),
            )
        )
        print(
            f"delta {delta:.4g}: stretched-hex {e_hex:.10g}  two-block lead {tb.leading_term:.10g} "
            f"energy {tb.energy:.10g}  optimizer best {best:.10g}"
        )
    out = Path(cfg["out"])
    header = (
        "delta",
        "stretched_hex",
        "honeycomb",
        "twoblock_leading",
        "twoblock_energy",
        "twoblock_C",
        "twoblock_bound",
        "optimizer_best",
        "leading_beats_honeycomb",
        "competitor_beats_stretched_hex",
    )
    write_csv(out, header, rows)
    A = np.array([r[:8] for r in rows], dtype=float)
    svg = save_sweep_plot(
        _sidecar(out, ".svg"),
        A[:, 0],
        {"stretched hexagons": A[:, 1], "two-block leading term": A[:, 3], "two-block energy": A[:, 4]},
        "delta",
        "energy",
        title=f"N = {N}",
    )
    _manifest(out, "sweep-delta", cfg, [out, svg])
    return EXIT_OK


def cmd_sweep_lambda(cfg) -> int:
    _need(cfg, "out")
    vols = list(cfg["volumes"])
    # seeded Voronoi start on the hexagonal lattice of volume sum(v)
    L = Lattice.hexagonal(float(sum(vols)))
    base = periodic_voronoi(L, len(vols), seed=int(cfg["seed"]), samples=cfg["samples"]).with_targets(vols)
    rows = []
    for lam in cfg["lams"]:
        model = EnergyModel.classical(vols, lam=float(lam))
        fin, tr = minimize_poly(base, model, OptimizerConfig(max_iters=int(cfg["max_iters"]), seed=int(cfg["seed"])))
        b = evaluate(fin, model)
        dev = float(np.max(np.abs(b.areas - np.asarray(vols))))
        rows.append((float(lam), b.total, b.half_sum_perimeters, b.penalty_term, dev, tr.status))
        print(f"lambda {lam:.4g}: energy {b.total:.10g}  max volume deviation {dev:.3e}  ({tr.status})")
    out = Path(cfg["out"])
    write_csv(out, ("lambda", "energy", "half_sum_perimeters", "penalty", "max_volume_deviation", "status"), rows)
    A = np.array([r[:5] for r in rows], dtype=float)
    svg = save_sweep_plot(
        _sidecar(out, ".svg"), A[:, 0], {"energy": A[:, 1], "perimeter part": A[:, 2]}, "lambda", "energy"
    )
    _manifest(out, "sweep-lambda", cfg, [out, svg])
    return EXIT_OK


def cmd_export_svg(cfg) -> int:
    _need(cfg, "out")
    state = _read(cfg["state"])
    arcs = None
    if cfg["arcs"] and isinstance(state, PolyPartition):
        arcs = fit_arcs(state)
    save_svg(state, cfg["out"], junctions=bool(cfg["junctions"]), arcs=arcs)
    return EXIT_OK


COMMANDS = {
    "construct": cmd_construct,
    "evaluate": cmd_evaluate,
    "minimize": cmd_minimize,
    "minimize-lattice": cmd_minimize_lattice,
    "diagnose": cmd_diagnose,
    "decompose": cmd_decompose,
    "sweep-delta": cmd_sweep_delta,
    "sweep-lambda": cmd_sweep_lambda,
    "export-svg": cmd_export_svg,
}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors
        return EXIT_INPUT if exc.code else EXIT_OK
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        cfg = resolve(args.command, flags, args.config)
        return COMMANDS[args.command](cfg)
    # LinAlgError and SupportError derive from ValueError, so test them first
    except (NumericalFailure, SupportError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, FileFormatError, InfeasibleError, PartitionError, TypeError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
