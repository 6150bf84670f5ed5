"""Command-line front end.

Every command resolves its parameters in the order built-in default <
``--config`` file < ``--preset`` < explicit flags, and writes the resolved
values into the output's metadata header. Passing that output file back as
``--config`` reproduces it.

Exit codes: 0 success, 2 domain or configuration error, 3 the dynamics
terminated (stall, divergence, truncated cascade).
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from . import __version__
from . import output
from .calibration import DEFAULT_X0, calibrate
from .errors import DomainError, DynamicsTermination
from .eventsim import simulate
from .linear import (
    BOUNDARY_KINDS,
    NoCrossingError,
    boundary_residual,
    cell_centres,
    critical_delta_curves_1d,
    divergence_delta_t,
    region_label,
    trace_boundary,
)
from .maps import MapState, ModelParams, synchronous_drive
from .orbits import (
    MAP_KINDS,
    CascadeTruncated,
    bifurcation_scan_1d,
    classify_attractor,
    converge,
    feigenbaum_ratios,
    iterate,
)
from .parallel import ordered_map
from .presets import PARAM_FIELDS, load_presets

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TERMINATED = 3

PARAM_FLAGS = {"tau": "tau", "t_stim": "tstim", "delta_t": "delta_t", "delta_phi": "delta_phi"}

# command -> {option: built-in default}
COMMAND_OPTIONS: dict[str, dict[str, Any]] = {
    "iterate": {"map": "oieb", "i0": None, "phi0": 0.0, "steps": 100},
    "simulate": {"i0": None, "phi0": 0.0, "steps": 20, "tempo_change": None},
    "regions": {"window": "0:0.01,0:7", "res": "200x200"},
    "boundaries": {"fixed_point": 1, "kind": "lambda-minus-one", "window": "0:0.01,0:7",
                   "res": "200"},
    "sweep1d": {"kind": "bifurcation", "range": None, "samples": 200},
    "feigenbaum": {"map": "period1d", "k_max": 6},
    "attractor": {"map": "oieb", "i0": DEFAULT_X0.i, "phi0": DEFAULT_X0.phi,
                  "transient": 10_000, "observe": 100_000, "max_period": 512},
    "basin": {"map": "order_preserving", "window": None, "res": "40x40", "steps": 20_000},
    "calibrate": {"tau_range": "500:2000", "tau_steps": 7, "i0": DEFAULT_X0.i,
                  "phi0": DEFAULT_X0.phi, "transient": 10_000, "observe": 100_000},
}

BOUNDARY_CLI_KINDS = ("lambda-minus-one", "unit-modulus", "discriminant")


class ConfigError(DomainError):
    pass


# -- parsing helpers --------------------------------------------------------

def parse_range(text: str, name: str = "range") -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in str(text).split(":"))
    except ValueError:
        raise ConfigError(f"{name} must look like LO:HI, got {text!r}") from None
    if not hi > lo:
        raise ConfigError(f"{name} needs LO < HI, got {text!r}")
    return lo, hi


def parse_window(text: str) -> tuple[tuple[float, float], tuple[float, float]]:
    """``"a:b,c:d"`` -> ``((a, b), (c, d))``."""
    parts = str(text).split(",")
    if len(parts) != 2:
        raise ConfigError(f"window must look like A:B,C:D, got {text!r}")
    return parse_range(parts[0], "window"), parse_range(parts[1], "window")


def parse_res(text: str, dims: int = 2) -> tuple[int, ...]:
    """``"200x100"`` -> ``(200, 100)``; a single number is used for every axis."""
    try:
        vals = tuple(int(x) for x in str(text).lower().split("x"))
    except ValueError:
        raise ConfigError(f"resolution must look like NxM, got {text!r}") from None
    if len(vals) == 1:
        vals = vals * dims
    if len(vals) != dims or min(vals) < 1:
        raise ConfigError(f"resolution must have {dims} positive sizes, got {text!r}")
    return vals


def load_config_file(path: str) -> dict[str, Any]:
    """Options from a YAML/JSON mapping, or the ``config`` block of a previous output."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {path} not found")
    text = p.read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("#"):
        meta = output.read_meta(path)
        return dict(meta.get("config", {}))
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if isinstance(doc, dict) and "meta" in doc and "data" in doc:
        return dict(doc["meta"].get("config", {}))
    if not isinstance(doc, dict):
        raise ConfigError(f"{path} must hold a mapping of option names to values")
    return doc


def resolve(args: argparse.Namespace) -> tuple[ModelParams, dict[str, Any]]:
    """Merge defaults, config file, preset and flags into params and options."""
    cmd = args.command
    file_cfg = load_config_file(args.config) if args.config else {}
    if "command" in file_cfg and file_cfg["command"] != cmd:
        raise ConfigError(f"config was written for {file_cfg['command']!r}, not {cmd!r}")
    known = set(COMMAND_OPTIONS[cmd]) | set(PARAM_FIELDS) | {"preset", "format", "command"}
    unknown = sorted(set(file_cfg) - known)
    if unknown:
        raise ConfigError(f"unknown option(s) in config for {cmd}: {', '.join(unknown)}")

    preset = args.preset or file_cfg.get("preset") or "default"
    table = load_presets()
    if preset not in table:
        raise ConfigError(f"unknown preset {preset!r}; available: {', '.join(sorted(table))}")
    values = dict(table[preset])
    for key in PARAM_FIELDS:
        if key in file_cfg and not args.preset:
            values[key] = float(file_cfg[key])
        flag = getattr(args, PARAM_FLAGS[key])
        if flag is not None:
            values[key] = flag
    params = ModelParams(**values)

    opts = {}
    for key, default in COMMAND_OPTIONS[cmd].items():
        flag = getattr(args, key, None)
        if flag is not None:
            opts[key] = flag
        elif key in file_cfg:
            opts[key] = file_cfg[key]
        else:
            opts[key] = default
    opts["preset"] = preset
    opts["format"] = args.format or file_cfg.get("format") or "csv"
    if opts["format"] not in output.FORMATS:
        raise ConfigError(f"unknown format {opts['format']!r}")
    return params, opts


def _meta(cmd: str, params: ModelParams, opts: dict[str, Any], **extra: Any) -> dict[str, Any]:
    config = {"command": cmd, **params.as_dict(), **opts}
    meta = {"command": cmd, "config": config, "params": params.as_dict(), "version": __version__}
    meta.update(extra)
    return meta


def _initial_state(params: ModelParams, opts: dict[str, Any]) -> MapState:
    if opts["i0"] is None:
        opts["i0"] = synchronous_drive(params)
    return MapState(float(opts["i0"]), float(opts["phi0"]))


def _check_map(name: str, allowed=MAP_KINDS) -> str:
    if name not in allowed:
        raise ConfigError(f"unknown map {name!r}; choose from {', '.join(allowed)}")
    return name


# -- commands ----------------------------------------------------------------

def cmd_iterate(params, opts):
    kind = _check_map(opts["map"])
    x0 = _initial_state(params, opts)
    traj = iterate(kind, x0, params, int(opts["steps"]))
    n = list(range(len(traj.states)))
    cols: dict[str, list] = {"n": n, "i": [s.i for s in traj.states]}
    if kind != "period1d":
        cols["phi"] = [s.phi for s in traj.states]
    if kind == "oieb":
        recs = traj.records[: len(traj.states) - 1]
        cols["tones_in_cycle"] = [None] + [r.tones_in_cycle for r in recs]
        cols["order_switch"] = [None] + [r.order_switch for r in recs]
    extra = {}
    if traj.termination:
        extra["termination"] = traj.termination
        extra["termination_detail"] = traj.message
    return cols, extra, traj.termination


def cmd_simulate(params, opts):
    x0 = _initial_state(params, opts)
    tc = opts["tempo_change"]
    tempo = (float(tc[0]), float(tc[1])) if tc else None
    termination = None
    extra = {}
    try:
        trace = simulate(x0, params, int(opts["steps"]), tempo_change=tempo)
    except DynamicsTermination as exc:
        trace = exc.trace
        termination = exc.reason
        extra = {"termination": exc.reason, "termination_detail": str(exc)}
    if tempo is not None:
        opts["tempo_change"] = list(tempo)
    ev = trace.events
    cols = {
        "time_ms": [e.time for e in ev],
        "kind": [e.kind for e in ev],
        "i_before": [e.i_before for e in ev],
        "i_after": [e.i_after for e in ev],
        "v": [e.v for e in ev],
    }
    return cols, extra, termination


def _region_row(args):
    params, dts, dp = args
    p = ModelParams(**params)
    out = []
    for dt in dts:
        lab = region_label(p.with_(delta_t=dt, delta_phi=dp))
        out.append((dt, dp, lab.region, lab.class_phi0, lab.class_phi1, lab.flagged))
    return out


def cmd_regions(params, opts):
    (dt_lo, dt_hi), (dp_lo, dp_hi) = parse_window(opts["window"])
    if dt_lo < 0 or dp_lo < 0:
        raise ConfigError("region window must lie in the positive quadrant")
    n_dt, n_dp = parse_res(opts["res"])
    dts = [float(x) for x in cell_centres(dt_lo, dt_hi, n_dt)]
    dps = [float(x) for x in cell_centres(dp_lo, dp_hi, n_dp)]
    rows = ordered_map(_region_row, [(params.as_dict(), dts, dp) for dp in dps])
    flat = [cell for row in rows for cell in row]
    names = ("delta_t", "delta_phi", "region", "class_phi0", "class_phi1", "flagged")
    cols = {name: [c[j] for c in flat] for j, name in enumerate(names)}
    regions_found = sorted({c[2] for c in flat if c[2]}, key=_roman)
    extra = {"regions_found": regions_found, "flagged_cells": sum(c[5] for c in flat)}
    return cols, extra, None


def _roman(r: str) -> int:
    return ("I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX").index(r)


def cmd_boundaries(params, opts):
    fp = int(opts["fixed_point"])
    if fp not in (0, 1):
        raise ConfigError(f"fixed point must be 0 or 1, got {opts['fixed_point']!r}")
    kind = opts["kind"]
    if kind not in BOUNDARY_CLI_KINDS:
        raise ConfigError(f"unknown boundary kind {kind!r}; choose from {', '.join(BOUNDARY_CLI_KINDS)}")
    internal = {"lambda-minus-one": "lambda_minus_one", "unit-modulus": "unit_modulus",
                "discriminant": "discriminant_zero"}[kind] + f"_phi{fp}"
    if internal not in BOUNDARY_KINDS:
        raise ConfigError(f"no {kind} boundary exists for the fixed point at phi = {fp}")
    window = parse_window(opts["window"])
    (res,) = parse_res(opts["res"], dims=1)
    curve = trace_boundary(internal, window, params, resolution=res)
    pts = curve.points
    cols = {
        "delta_t": [x for x, _ in pts],
        "delta_phi": [y for _, y in pts],
        "residual": [boundary_residual(internal, params.with_(delta_t=x, delta_phi=y))
                     for x, y in pts],
    }
    return cols, {"boundary": internal}, None


def _bifurcation_cell(args):
    params, dt = args
    p = ModelParams(**params)
    diag = bifurcation_scan_1d(p, (dt, dt), 1)
    return diag.periods[0], diag.samples[0]


def cmd_sweep1d(params, opts):
    kind = opts["kind"]
    samples = int(opts["samples"])
    if samples < 1:
        raise ConfigError("samples must be positive")
    if kind == "critical":
        rng = opts["range"] or "100:1000"
        opts["range"] = rng
        lo, hi = parse_range(rng)
        if lo <= 0:
            raise ConfigError("stimulus periods must be positive")
        ts = np.linspace(lo, hi, samples)
        curves = critical_delta_curves_1d(ts, params)
        cols = {
            "t_stim": [float(x) for x in curves.t_stim],
            "stability_loss": [float(x) for x in curves.stability_loss],
            "optimal": [float(x) for x in curves.optimal],
            "divergence": [float(x) for x in curves.divergence],
            "error": [curves.failures.get(float(t), "") for t in curves.t_stim],
        }
        return cols, {}, None
    if kind != "bifurcation":
        raise ConfigError(f"unknown sweep kind {kind!r}; choose bifurcation or critical")
    if opts["range"] is None:
        opts["range"] = f"0:{divergence_delta_t(params)!r}"
    lo, hi = parse_range(opts["range"])
    if lo < 0:
        raise ConfigError("delta_t must be non-negative")
    dts = [float(x) for x in np.linspace(lo, hi, samples)]
    cells = ordered_map(_bifurcation_cell, [(params.as_dict(), dt) for dt in dts])
    cols = {"delta_t": [], "period": [], "i": []}
    for dt, (per, pts) in zip(dts, cells):
        for x in pts or [None]:
            cols["delta_t"].append(dt)
            cols["period"].append(per)
            cols["i"].append(x)
    return cols, {}, None


def cmd_feigenbaum(params, opts):
    fam = _check_map(opts["map"], ("period1d", "logistic"))
    k_max = int(opts["k_max"])
    if k_max < 3:
        raise ConfigError("k_max must be at least 3 to form a ratio")
    try:
        rep = feigenbaum_ratios(params, k_max=k_max, family=fam)
    except CascadeTruncated as exc:
        return {"k": [], "onset": [], "ratio": []}, {
            "termination": "cascade truncated", "termination_detail": str(exc)}, "cascade truncated"
    d = rep.doubling_params
    cols = {
        "k": list(range(1, len(d) + 1)),
        "onset": list(d),
        "ratio": [rep.ratio(k) if k >= 3 else None for k in range(1, len(d) + 1)],
    }
    return cols, {"family": fam}, None


def cmd_attractor(params, opts):
    kind = _check_map(opts["map"])
    x0 = MapState(float(opts["i0"]), float(opts["phi0"]))
    r = classify_attractor(kind, x0, params, transient=int(opts["transient"]),
                           observe=int(opts["observe"]), max_period=int(opts["max_period"]))
    fs = r.final_state
    cols = {
        "kind": [r.kind],
        "period": [r.period],
        "order_switches_per_period": [r.order_switches_per_period],
        "bg_spikes_per_period": [r.bg_spikes_per_period],
        "tones_per_period": [r.tones_per_period],
        "lyapunov": [r.lyapunov],
        "final_i": [fs.i if fs else None],
        "final_phi": [fs.phi if fs else None],
        "tones_per_cycle": [" ".join(str(t) for t in r.tones_per_cycle)],
        "detail": [r.detail],
    }
    return cols, {}, None


def _basin_row(args):
    kind, params, i_values, phi, budget = args
    p = ModelParams(**params)
    return [converge(kind, MapState(i, phi), p, budget) for i in i_values]


def cmd_basin(params, opts):
    kind = _check_map(opts["map"], ("order_preserving", "oieb"))
    if opts["window"] is None:
        istar = synchronous_drive(params)
        opts["window"] = f"{istar - 0.3!r}:{istar + 0.3!r},0:1"
    (i_lo, i_hi), (p_lo, p_hi) = parse_window(opts["window"])
    if i_lo <= 1 or p_lo < 0 or p_hi > 1:
        raise ConfigError("basin window needs drive > 1 and phase within [0, 1]")
    n_i, n_p = parse_res(opts["res"])
    i_vals = [float(x) for x in cell_centres(i_lo, i_hi, n_i)]
    p_vals = [float(x) for x in cell_centres(p_lo, p_hi, n_p)]
    budget = int(opts["steps"])
    rows = ordered_map(_basin_row, [(kind, params.as_dict(), i_vals, ph, budget) for ph in p_vals])
    cells = [c for row in rows for c in row]
    cols = {
        "i0": [c.i0 for c in cells],
        "phi0": [c.phi0 for c in cells],
        "kind": [c.kind for c in cells],
        "phase_label": [c.phase_label for c in cells],
        "order_switches": [c.order_switches for c in cells],
        "steps": [c.steps for c in cells],
    }
    return cols, {}, None


def cmd_calibrate(params, opts):
    lo, hi = parse_range(opts["tau_range"], "tau range")
    n = int(opts["tau_steps"])
    if lo <= 0 or n < 1:
        raise ConfigError("tau range must be positive with at least one step")
    taus = [lo] if n == 1 else [float(x) for x in np.linspace(lo, hi, n)]
    x0 = MapState(float(opts["i0"]), float(opts["phi0"]))
    rows = calibrate(taus, x0, transient=int(opts["transient"]), observe=int(opts["observe"]))
    cols = {
        "tau": [r.tau for r in rows],
        "preset": [r.preset for r in rows],
        "expected": [r.expected for r in rows],
        "achieved": [r.achieved for r in rows],
        "reproduced": [r.reproduced for r in rows],
    }
    summary: dict[str, list[str]] = {}
    for r in rows:
        hits = summary.setdefault(repr(r.tau), [])
        if r.reproduced:
            hits.append(r.preset)
    return cols, {"reproduced_by_tau": summary}, None


COMMANDS = {
    "iterate": (cmd_iterate, "iterate a map from an initial state"),
    "simulate": (cmd_simulate, "run the continuous-time event simulation"),
    "regions": (cmd_regions, "label a (delta_t, delta_phi) grid by stability region"),
    "boundaries": (cmd_boundaries, "trace a stability boundary in the (delta_t, delta_phi) plane"),
    "sweep1d": (cmd_sweep1d, "bifurcation diagram or critical delta_t curves of the period map"),
    "feigenbaum": (cmd_feigenbaum, "period-doubling onsets and gap ratios"),
    "attractor": (cmd_attractor, "classify the long-run behaviour from one state"),
    "basin": (cmd_basin, "map which synchronous phase each initial state converges to"),
    "calibrate": (cmd_calibrate, "report which orbit labels each tau reproduces"),
}


# -- argument parser -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("model parameters")
    g.add_argument("--preset", help="named parameter set from the preset file")
    g.add_argument("--config", help="YAML/JSON options file, or an earlier output file")
    g.add_argument("--tau", type=float, help="membrane time constant (ms)")
    g.add_argument("--tstim", type=float, help="stimulus interonset interval (ms)")
    g.add_argument("--delta-t", dest="delta_t", type=float, help="period-rule strength")
    g.add_argument("--delta-phi", dest="delta_phi", type=float, help="phase-rule strength")
    o = common.add_argument_group("output")
    o.add_argument("--format", choices=output.FORMATS)
    o.add_argument("--out", help="output path (stdout when omitted)")

    ap = argparse.ArgumentParser(prog="oieb", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    parsers = {name: sub.add_parser(name, parents=[common], help=help_)
               for name, (_, help_) in COMMANDS.items()}

    def state_opts(sp):
        sp.add_argument("--i0", type=float, help="initial drive")
        sp.add_argument("--phi0", type=float, help="initial phase")

    sp = parsers["iterate"]
    sp.add_argument("--map", choices=MAP_KINDS)
    state_opts(sp)
    sp.add_argument("--steps", type=int, help="number of map steps")

    sp = parsers["simulate"]
    state_opts(sp)
    sp.add_argument("--steps", type=int, help="number of cycles")
    sp.add_argument("--tempo-change", dest="tempo_change", nargs=2, type=float,
                    metavar=("T_SWITCH", "NEW_TSTIM"), help="switch the stimulus period")

    sp = parsers["regions"]
    sp.add_argument("--window", help="delta_t and delta_phi ranges, e.g. 0:0.01,0:7")
    sp.add_argument("--res", help="grid size, e.g. 200x200")

    sp = parsers["boundaries"]
    sp.add_argument("--fixed-point", dest="fixed_point", type=int, choices=(0, 1))
    sp.add_argument("--kind", choices=BOUNDARY_CLI_KINDS)
    sp.add_argument("--window", help="delta_t and delta_phi ranges, e.g. 0:0.01,0:7")
    sp.add_argument("--res", help="scan lines per axis")

    sp = parsers["sweep1d"]
    sp.add_argument("--kind", choices=("bifurcation", "critical"))
    sp.add_argument("--range", help="delta_t range (bifurcation) or t_stim range (critical)")
    sp.add_argument("--samples", type=int)

    sp = parsers["feigenbaum"]
    sp.add_argument("--map", choices=("period1d", "logistic"))
    sp.add_argument("--k-max", dest="k_max", type=int, help="deepest doubling to locate")

    sp = parsers["attractor"]
    sp.add_argument("--map", choices=MAP_KINDS)
    state_opts(sp)
    sp.add_argument("--transient", type=int)
    sp.add_argument("--observe", type=int)
    sp.add_argument("--max-period", dest="max_period", type=int)

    sp = parsers["basin"]
    sp.add_argument("--map", choices=("order_preserving", "oieb"))
    sp.add_argument("--window", help="drive and phase ranges, e.g. 2.3:2.8,0:1")
    sp.add_argument("--res", help="grid size, e.g. 40x40")
    sp.add_argument("--steps", type=int, help="iteration budget per cell")

    sp = parsers["calibrate"]
    sp.add_argument("--tau-range", dest="tau_range", help="e.g. 500:2000")
    sp.add_argument("--tau-steps", dest="tau_steps", type=int)
    state_opts(sp)
    sp.add_argument("--transient", type=int)
    sp.add_argument("--observe", type=int)
    return ap


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    cmd = args.command
    try:
        params, opts = resolve(args)
        fmt = opts.pop("format")
        fn = COMMANDS[cmd][0]
        cols, extra, termination = fn(params, opts)
        opts["format"] = fmt
        output.write(cols, _meta(cmd, params, opts, **extra), fmt, args.out)
    except (DomainError, NoCrossingError, ValueError) as exc:
        print(f"oieb {cmd}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"oieb {cmd}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if termination:
        print(f"oieb {cmd}: terminated: {termination}: {extra.get('termination_detail', '')}",
              file=sys.stderr)
        return EXIT_TERMINATED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
