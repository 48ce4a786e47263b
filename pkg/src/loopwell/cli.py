"""Batch front-end: every experiment as a subcommand with JSON config input
and CSV/JSON outputs.

Conventions: configs are schema-checked before any computation (unknown keys
are rejected); data files are written with fixed formatting and contain no
timestamps, so identical configs give byte-identical outputs; run metadata
goes to a separate ``*.meta.json`` sidecar.  Files are written to a temporary
name and renamed, so failed runs never leave partial outputs.

Exit codes: 0 ok, 1 contract/computation error, 2 config error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .lab import (
    compare_large_energy,
    compare_small_energy,
    detect_jumps,
    gap_scaling,
    oscillation_profile,
    sweep,
)
from .normalform import FormalDeformation, birkhoff_normal_form
from .quantize import (
    LatticeParams,
    build_circle_operator,
    build_spin_sz2,
    build_weyl_polynomial_plane,
    poly2d_from_terms,
)
from .series import FourierTaylorSeries, SymbolModel

__all__ = ["main"]


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- plumbing

def _require(cfg: dict, where: str, required: dict, optional: dict = {}):
    """Validate presence and rough type of every key; reject unknowns."""
    if not isinstance(cfg, dict):
        raise ConfigError(f"{where}: expected an object")
    allowed = set(required) | set(optional)
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    missing = set(required) - set(cfg)
    if missing:
        raise ConfigError(f"{where}: missing keys {sorted(missing)}")
    out = {}
    for key, kind in {**required, **optional}.items():
        if key not in cfg:
            continue
        val = cfg[key]
        if kind in (int, float):
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise ConfigError(f"{where}.{key}: expected a number")
            val = kind(val)
        elif kind is str and not isinstance(val, str):
            raise ConfigError(f"{where}.{key}: expected a string")
        elif kind is list and not isinstance(val, list):
            raise ConfigError(f"{where}.{key}: expected a list")
        elif kind is dict and not isinstance(val, dict):
            raise ConfigError(f"{where}.{key}: expected an object")
        out[key] = val
    return out


def _fourier_table(entries, where: str) -> dict[int, complex]:
    out = {}
    for row in entries:
        if not isinstance(row, list) or len(row) != 3:
            raise ConfigError(f"{where}: rows must be [k, re, im]")
        out[int(row[0])] = complex(float(row[1]), float(row[2]))
    return out


def _model_from_config(cfg: dict, where: str) -> SymbolModel:
    got = _require(cfg, where,
                   {"floor_energy": float, "action0": float,
                    "fold_taylor": list},
                   {"fold_sub_taylor": list, "pot0_fourier": list,
                    "pot1_fourier": list})
    kw = {"floor_energy": got["floor_energy"], "action0": got["action0"],
          "fold_taylor": np.asarray(got["fold_taylor"], dtype=float)}
    if "fold_sub_taylor" in got:
        kw["fold_sub_taylor"] = np.asarray(got["fold_sub_taylor"], dtype=float)
    for key in ("pot0_fourier", "pot1_fourier"):
        if key in got:
            kw[key] = _fourier_table(got[key], f"{where}.{key}")
    try:
        return SymbolModel(**kw)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _grid_from_config(cfg: dict, where: str) -> np.ndarray:
    got = _require(cfg, where, {}, {"start": float, "stop": float,
                                    "step": float, "count": int,
                                    "values": list,
                                    "dyadic_base": float,
                                    "j_start": int, "j_stop": int})
    if "values" in got:
        return np.asarray(got["values"], dtype=float)
    if "dyadic_base" in got:
        js = np.arange(got["j_start"], got["j_stop"] + 1)
        return got["dyadic_base"] * 2.0 ** (-js.astype(float))
    if "start" in got and "stop" in got:
        if "step" in got:
            n = int(np.floor((got["stop"] - got["start"]) / got["step"] + 1e-9))
            return got["start"] + got["step"] * np.arange(n + 1)
        if "count" in got:
            return np.linspace(got["start"], got["stop"], got["count"],
                               endpoint=False)
    raise ConfigError(f"{where}: give values, start/stop/step(or count), "
                      "or dyadic_base/j_start/j_stop")


def _atomic_write(path: str, text: str):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp_", text=True)
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: str, obj):
    _atomic_write(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _write_csv(path: str, header: list[str], rows):
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for x in row:
            if isinstance(x, (int, np.integer)):
                cells.append(str(int(x)))
            else:
                cells.append(f"{float(x):.17g}")
        lines.append(",".join(cells))
    _atomic_write(path, "\n".join(lines) + "\n")


def _sidecar(path: str, args):
    import datetime
    meta = {
        "tool": "loopwell",
        "version": __version__,
        "command": args.command,
        "config": os.path.abspath(args.config),
        "threads": args.threads,
        "seed": args.seed,
        "written_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    root, _ = os.path.splitext(path)
    _write_json(root + ".meta.json", meta)


def _out_path(args, name: str) -> str:
    return os.path.join(args.out, name)


# ------------------------------------------------------------- subcommands

def cmd_sweep(cfg: dict, args) -> int:
    got = _require(cfg, "sweep",
                   {"recipe": str, "m": int, "outputs": dict},
                   {"inv_hbar_grid": dict, "spins": list, "model": dict,
                    "half_width": int, "symbol_terms": list,
                    "hermite_size": int, "gap_fit": dict})
    outs = _require(got["outputs"], "sweep.outputs",
                    {"csv": str, "report": str})
    recipe = got["recipe"]
    if recipe == "circle":
        model = _model_from_config(got.get("model", {}), "sweep.model")
        half_width = int(got.get("half_width", 0))
        if half_width <= 0:
            raise ConfigError("sweep.half_width: required for circle recipe")
        builder = lambda h: build_circle_operator(model, h, half_width)
        inv = _grid_from_config(got.get("inv_hbar_grid", {}), "sweep.inv_hbar_grid")
    elif recipe == "plane-polynomial":
        if "symbol_terms" not in got:
            raise ConfigError("sweep.symbol_terms: required for plane recipe")
        symbol = poly2d_from_terms(got["symbol_terms"])
        size = int(got.get("hermite_size", 0))
        if size <= 0:
            raise ConfigError("sweep.hermite_size: required for plane recipe")
        builder = lambda h: build_weyl_polynomial_plane(symbol, h, size)
        inv = _grid_from_config(got.get("inv_hbar_grid", {}), "sweep.inv_hbar_grid")
    elif recipe == "spin":
        if "spins" not in got:
            raise ConfigError("sweep.spins: required for spin recipe")
        builder = lambda h: build_spin_sz2(1.0 / (2.0 * h))
        inv = 2.0 * np.asarray(got["spins"], dtype=float)
    else:
        raise ConfigError(f"sweep.recipe: unknown recipe {recipe!r}")

    m = got["m"]
    records = sweep(builder, 1.0 / inv if inv.size else inv, m, args.threads)

    header = ["inv_hbar"] + [f"lambda_{i}" for i in range(m)] \
        + [f"branch_{i}" for i in range(m)]
    rows = [[r.inv_hbar, *r.eigenvalues, *r.branch_ids] for r in records]
    csv_path = _out_path(args, outs["csv"])
    _write_csv(csv_path, header, rows)

    report = {"n_records": len(records),
              "jumps": detect_jumps(records) if len(records) >= 3 else []}
    if "gap_fit" in got:
        gf = _require(got["gap_fit"], "sweep.gap_fit",
                      {"period_inv_hbar": float},
                      {"window": list})
        window = tuple(gf["window"]) if "window" in gf else None
        fit = gap_scaling(records, gf["period_inv_hbar"], window)
        report["gap_fit"] = {"exponent": fit.exponent,
                             "prefactor": fit.prefactor,
                             "r_squared": fit.r_squared,
                             "n_points": fit.n_points}
    rep_path = _out_path(args, outs["report"])
    _write_json(rep_path, report)
    _sidecar(rep_path, args)
    return 0


def cmd_bnf(cfg: dict, args) -> int:
    got = _require(cfg, "bnf",
                   {"model": dict, "perturbations": list,
                    "fourier_cut": int, "taylor_cut": int, "outputs": dict},
                   {"eps_cut": int})
    outs = _require(got["outputs"], "bnf.outputs", {"result": str})
    model = _model_from_config(got["model"], "bnf.model")
    K, J = got["fourier_cut"], got["taylor_cut"]
    perts = []
    for i, p in enumerate(got["perturbations"]):
        try:
            perts.append(FourierTaylorSeries.from_dict(p))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bnf.perturbations[{i}]: {exc}") from exc
    eps_cut = int(got.get("eps_cut", len(perts)))
    deformation = FormalDeformation.from_perturbations(model, perts, K, J,
                                                       eps_cut)
    result = birkhoff_normal_form(deformation)
    path = _out_path(args, outs["result"])
    _write_json(path, result.to_dict())
    _sidecar(path, args)
    return 0


def cmd_oscillation(cfg: dict, args) -> int:
    got = _require(cfg, "oscillation",
                   {"sigma_grid": dict, "primary_slope": float,
                    "outputs": dict},
                   {"sub_slope": float, "coupling": list, "half_width": int})
    outs = _require(got["outputs"], "oscillation.outputs",
                    {"csv": str, "report": str})
    coupling = _fourier_table(got.get("coupling", []), "oscillation.coupling")
    params = LatticeParams(sigma=0.0,
                           primary_slope=got["primary_slope"],
                           sub_slope=got.get("sub_slope", 0.0),
                           coupling=coupling or None,
                           half_width=int(got.get("half_width", 32)))
    sigmas = _grid_from_config(got["sigma_grid"], "oscillation.sigma_grid")
    prof = oscillation_profile(params, sigmas)

    csv_path = _out_path(args, outs["csv"])
    _write_csv(csv_path, ["sigma", "lambda_0"],
               zip(prof.sigmas, prof.values))
    rep_path = _out_path(args, outs["report"])
    _write_json(rep_path, {"amplitude": prof.amplitude,
                           "periodicity_defect": prof.periodicity_defect,
                           "n_points": int(prof.sigmas.size)})
    _sidecar(rep_path, args)
    return 0


def _loglog_slope(hbars, devs):
    keep = [(h, d) for h, d in zip(hbars, devs) if d > 0]
    if len(keep) < 2:
        return None
    lh = np.log([h for h, _ in keep])
    ld = np.log([d for _, d in keep])
    return float(np.polyfit(lh, ld, 1)[0])


def cmd_compare_bs(cfg: dict, args) -> int:
    got = _require(cfg, "compare-bs",
                   {"mode": str, "model": dict, "hbar_grid": dict,
                    "outputs": dict},
                   {"window_scale": float, "energies": list,
                    "c1": float, "c2": float})
    outs = _require(got["outputs"], "compare-bs.outputs",
                    {"csv": str, "report": str})
    model = _model_from_config(got["model"], "compare-bs.model")
    hbars = _grid_from_config(got["hbar_grid"], "compare-bs.hbar_grid")

    rows = []
    report: dict = {"mode": got["mode"]}
    if got["mode"] == "small":
        if "window_scale" not in got:
            raise ConfigError("compare-bs.window_scale: required for small mode")
        devs = []
        for h in hbars:
            c = compare_small_energy(model, h, got["window_scale"])
            devs.append(c.max_deviation)
            rows.append([h, c.max_deviation, c.matched, int(c.window_shrunk)])
        report["slope"] = _loglog_slope(hbars, devs)
        header = ["hbar", "max_deviation", "matched", "window_shrunk"]
    elif got["mode"] == "large":
        if "energies" not in got:
            raise ConfigError("compare-bs.energies: required for large mode")
        c1 = got.get("c1", 0.25)
        c2 = got.get("c2", 1.0)
        slopes = {}
        prefactors = {}
        for energy in got["energies"]:
            devs = []
            for h in hbars:
                c = compare_large_energy(model, h, float(energy), c1, c2)
                devs.append(c.max_deviation)
                rows.append([energy, h, c.max_deviation, c.matched,
                             int(c.window_shrunk)])
            key = f"{float(energy):.17g}"
            slopes[key] = _loglog_slope(hbars, devs)
            pre = [d / h ** 2 for h, d in zip(hbars, devs) if d > 0]
            prefactors[key] = float(np.median(pre)) if pre else None
        report["slopes"] = slopes
        report["prefactors"] = prefactors
        vals = [p for p in prefactors.values() if p]
        report["prefactor_spread"] = (max(vals) / min(vals)) if vals else None
        header = ["energy", "hbar", "max_deviation", "matched", "window_shrunk"]
    else:
        raise ConfigError(f"compare-bs.mode: unknown mode {got['mode']!r}")

    csv_path = _out_path(args, outs["csv"])
    _write_csv(csv_path, header, rows)
    rep_path = _out_path(args, outs["report"])
    _write_json(rep_path, report)
    _sidecar(rep_path, args)
    return 0


def cmd_action(cfg: dict, args) -> int:
    from .lab import action_invariant
    got = _require(cfg, "action", {"descriptor": dict, "outputs": dict})
    outs = _require(got["outputs"], "action.outputs", {"report": str})
    desc = dict(got["descriptor"])
    kind = desc.get("kind")
    if kind == "curve" and "points" in desc:
        desc["points"] = np.asarray(desc["points"], dtype=float)
    elif kind == "cylinder_graph" and "samples" in desc:
        desc["samples"] = np.asarray(desc["samples"], dtype=float)
    try:
        value = action_invariant(desc)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"action.descriptor: {exc}") from exc
    path = _out_path(args, outs["report"])
    _write_json(path, {"kind": kind, "action": value})
    _sidecar(path, args)
    return 0


COMMANDS = {
    "sweep": cmd_sweep,
    "bnf": cmd_bnf,
    "oscillation": cmd_oscillation,
    "compare-bs": cmd_compare_bs,
    "action": cmd_action,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="loopwell",
        description="spectral experiments for wells on closed loops")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON config file")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0,
                        help="recorded for randomized drivers; deterministic "
                             "subcommands ignore it")
    args = parser.parse_args(argv)

    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
