"""Command-line entry point.

Every subcommand resolves its settings as CLI flag > config file > built-in
default, echoes the effective settings to stderr and embeds them (with the
tool version and seed) in its output, so ``--config <output file>`` reruns
the command and reproduces the file byte for byte.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .catalog import load_catalog
from .connectivity import failure_sweep, write_sweep_csv
from .covariance import ShadowingParams, geometry_corr
from .errors import ConfigError, LinkShadowError
from .estimation import (
    DEFAULT_DELTA_GRID,
    ResidualModel,
    fit_delta,
    fit_path_loss,
    freq_average,
    measure_geometries,
    read_measurements_csv,
)
from .field import FieldSampler, default_cell_size, empirical_pair_corr, extent_for
from .geometry import Deployment, PathLossParams, grid_deployment
from .gudmundson import compare_models
from .report import build_report, read_report_csv, write_report_csv
from .sampler import build_joint_covariance, sample_fading, write_realizations_csv
from .synthetic import synthesize_ensemble

SEED_ENV = "LINKSHADOW_SEED"
DEFAULT_SEED = 20061

_MODEL = {"delta": 0.21, "ratio": 0.29, "sigma_db": 5.0, "n_p": 2.5, "intercept": -40.0}

DEFAULTS = {
    "corr-table": {
        **_MODEL, "measurements": None, "deployment": None, "synthetic": False, "experiments": 15,
        "n_freq": 14, "catalog": None, "geometries": "reference", "d_ref": None, "pooled": False,
        "seed": DEFAULT_SEED,
    },
    "fit": {
        "measurements": None, "deployment": None, "pooled": False, "geometries": "all",
        "delta_grid": "0.10:0.40:0.01", "regressor": "residual", "catalog": None,
    },
    "simulate": {
        **_MODEL, "deployment": None, "kind": "fading", "gamma": None, "n_samples": 1000, "experiments": 15,
        "n_freq": 14, "workers": None, "seed": DEFAULT_SEED,
    },
    "oracle": {
        "delta": 0.21, "h": None, "n_realizations": 2000, "geometries": "reference", "catalog": None,
        "dump_field": None, "seed": DEFAULT_SEED,
    },
    "failure-sweep": {
        "nodes": "3,4", "beta_grid": "0:2.5:0.1", "spacing": 1.22, "n_p": 2.0, "sigma_db": 6.2, "ratio": 0.29,
        "delta": 0.21, "n_samples": 100000, "convention": "z", "hop_correlation": False, "seed": DEFAULT_SEED,
    },
    "gudmundson-compare": {"report": None},
}

log = logging.getLogger("linkshadow")


# -- parsing helpers ---------------------------------------------------------


def parse_grid(spec) -> list[float]:
    """``"a:b:step"`` (inclusive) or ``"x,y,z"``; lists pass through."""
    if isinstance(spec, (list, tuple)):
        return [float(v) for v in spec]
    text = str(spec).strip()
    try:
        if ":" in text:
            a, b, step = (float(v) for v in text.split(":"))
            if step <= 0 or b < a:
                raise ValueError
            n = int(math.floor((b - a) / step + 1e-9)) + 1
            return [round(a + k * step, 10) for k in range(n)]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse grid {spec!r}; use 'start:stop:step' or a comma list") from None


def load_config(path, command: str) -> dict:
    """Read settings from a JSON file, a JSON output, or a CSV output's header."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {path} not found")
    text = p.read_text()
    obj = None
    if text.lstrip().startswith("{"):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc.msg} (line {exc.lineno})") from exc
    else:
        for line in text.splitlines():
            if line.startswith("# config: "):
                obj = {"command": command, "config": json.loads(line[len("# config: "):])}
                break
        if obj is None:
            raise ConfigError(f"{path} has no embedded config line")
    if "config" in obj and isinstance(obj["config"], dict):
        if obj.get("command", command) != command:
            raise ConfigError(f"config in {path} is for command {obj['command']!r}")
        obj = obj["config"]
    unknown = sorted(set(obj) - set(DEFAULTS[command]))
    if unknown:
        raise ConfigError(f"unknown settings for {command}: {unknown}")
    return obj


def resolve(command: str, ns: argparse.Namespace, environ=os.environ) -> tuple[dict, str | None]:
    cfg = dict(DEFAULTS[command])
    seed_source = "default" if "seed" in cfg else None
    file_vals = load_config(ns.config, command) if ns.config else {}
    env_seed = environ.get(SEED_ENV)
    if "seed" in cfg and env_seed is not None:
        try:
            cfg["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env_seed!r}") from None
        seed_source = f"environment {SEED_ENV}"
    cfg.update(file_vals)
    if "seed" in file_vals:
        seed_source = "config file"
    cli_vals = {k: v for k, v in vars(ns).items() if k in cfg and v is not None}
    cfg.update(cli_vals)
    if "seed" in cli_vals:
        seed_source = "command line"
    return cfg, seed_source


def header_lines(command: str, cfg: dict) -> list[str]:
    lines = [f"tool: linkshadow {__version__}", f"command: {command}",
             "config: " + json.dumps(cfg, sort_keys=True, separators=(",", ":"))]
    if "seed" in cfg:
        lines.append(f"seed: {cfg['seed']}")
    return lines


def _deployment(path, required=False) -> Deployment:
    if path is None:
        if required:
            raise ConfigError("a deployment coordinates file is required (--deployment)")
        return grid_deployment()
    if not Path(path).exists():
        raise ConfigError(f"deployment file {path} not found")
    return Deployment.load(path)


def _shadowing(cfg) -> ShadowingParams:
    return ShadowingParams.from_ratio(float(cfg["delta"]), float(cfg["ratio"]), float(cfg["sigma_db"]) ** 2)


def _path_loss(cfg, gamma=None) -> PathLossParams:
    g = -math.inf if gamma is None else float(gamma)
    return PathLossParams(float(cfg["intercept"]), float(cfg["n_p"]), 1.0, float(cfg["sigma_db"]), g)


def _entries(catalog, which):
    if which == "reference":
        return catalog.reference_entries()
    if which == "all":
        return list(catalog.entries)
    return [catalog[g.strip()] for g in str(which).split(",") if g.strip()]


def _min_spacing(dep: Deployment) -> float:
    d = np.linalg.norm(dep.nodes[:, None, :] - dep.nodes[None, :, :], axis=-1)
    return float(d[d > 0].min())


# -- commands ----------------------------------------------------------------


def cmd_corr_table(cfg, out):
    catalog = load_catalog(cfg["catalog"])
    if cfg["measurements"]:
        dep = _deployment(cfg["deployment"], required=True)
        ens = read_measurements_csv(cfg["measurements"], dep)
    elif cfg["synthetic"]:
        dep = _deployment(cfg["deployment"])
        ens = synthesize_ensemble(dep, _path_loss(cfg), _shadowing(cfg), int(cfg["experiments"]), int(cfg["seed"]),
                                  n_freq=int(cfg["n_freq"]))
    else:
        raise ConfigError("corr-table needs --measurements or --synthetic")
    fit = fit_path_loss(freq_average(ens), dep, per_experiment=not cfg["pooled"])
    rows = measure_geometries(fit, dep, _entries(catalog, cfg["geometries"]))
    # the baseline is fitted on every common-node geometry, not just the reported ones
    common = measure_geometries(fit, dep, [e for e in catalog.entries if e.has_common_node])
    d_ref = float(cfg["d_ref"]) if cfg["d_ref"] else _min_spacing(dep)
    report, _ = build_report(rows, catalog, _shadowing(cfg), d_ref, baseline_rows=common)
    write_report_csv(out, report, header_lines("corr-table", cfg))
    return f"{len(report)} geometries"


def cmd_fit(cfg, out):
    if not cfg["measurements"]:
        raise ConfigError("fit needs --measurements")
    dep = _deployment(cfg["deployment"], required=True)
    catalog = load_catalog(cfg["catalog"])
    ens = read_measurements_csv(cfg["measurements"], dep)
    avg = freq_average(ens)
    plf = fit_path_loss(avg, dep, per_experiment=not cfg["pooled"])
    rows = measure_geometries(plf, dep, _entries(catalog, cfg["geometries"]))
    geoms = [catalog[r.geometry_id].geometry for r in rows]
    grid = parse_grid(cfg["delta_grid"]) if cfg["delta_grid"] else list(DEFAULT_DELTA_GRID)
    if cfg["regressor"] == "residual":
        rm = ResidualModel.from_fit(plf, dep, [r.pairs for r in rows])
        dfit = fit_delta([r.measured for r in rows], geoms, delta_grid=grid, residual_model=rm)
    else:
        dfit = fit_delta([r.measured for r in rows], geoms, delta_grid=grid, regressor=cfg["regressor"])
    result = {
        "tool": f"linkshadow {__version__}",
        "command": "fit",
        "config": cfg,
        "path_loss": {
            "intercept_dbm": plf.params.intercept_dbm,
            "n_p": plf.params.n_p,
            "delta0_m": plf.params.delta0_m,
            "sigma_db2": plf.sigma_db2,
            "per_experiment": plf.per_experiment,
            "intercepts_dbm": plf.intercepts.tolist(),
            "exponents": plf.exponents.tolist(),
        },
        "excluded_cells": [[m, ln.label] for m, ln in avg.excluded],
        "n_geometries": len(rows),
        "delta_fit": dfit.to_json(),
    }
    Path(out).write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    return f"delta*={dfit.delta_star:g} m, ratio={dfit.ratio:.3f}"


def cmd_simulate(cfg, out):
    dep = _deployment(cfg["deployment"])
    sp = _shadowing(cfg)
    seed = int(cfg["seed"])
    if cfg["kind"] == "measurements":
        ens = synthesize_ensemble(dep, _path_loss(cfg), sp, int(cfg["experiments"]), seed, n_freq=int(cfg["n_freq"]))
        ens.write_csv(out, header_lines("simulate", cfg))
        return f"{len(ens.rss_dbm)} records"
    if cfg["kind"] != "fading":
        raise ConfigError(f"unknown simulate kind {cfg['kind']!r}")
    fc = build_joint_covariance(dep, sp)
    batch = sample_fading(fc, int(cfg["n_samples"]), seed, workers=cfg["workers"])
    p = _path_loss(cfg, cfg["gamma"])
    header = {line.split(": ", 1)[0]: line.split(": ", 1)[1] for line in header_lines("simulate", cfg)}
    header.update({"delta_m": sp.delta_m, "sigma_x2": sp.sigma_x2, "sigma_db2": sp.sigma_db2,
                   "gamma_dbm": p.gamma_dbm, "jitter": fc.jitter})
    write_realizations_csv(out, dep, p, batch, header)
    return f"{len(batch)} samples x {fc.n_links} links"


def cmd_oracle(cfg, out):
    delta = float(cfg["delta"])
    h = float(cfg["h"]) if cfg["h"] else default_cell_size(delta)
    sp = ShadowingParams(delta, 1.0, 1.0)
    catalog = load_catalog(cfg["catalog"])
    entries = _entries(catalog, cfg["geometries"])
    # validates the resolution guard before any heavy work
    FieldSampler(extent_for(entries[0].geometry.segments(), delta), h, sp)
    lines = ["geometry_id,analytic,empirical,stderr,z"]
    for k, e in enumerate(entries):
        sa, sb = e.geometry.segments()
        rho = geometry_corr(sp, e.geometry)
        emp, se = empirical_pair_corr(sp, sa, sb, int(cfg["n_realizations"]), int(cfg["seed"]) + k, h)
        z = (emp - rho) / se if se > 0 else 0.0
        lines.append(f"{e.id},{rho:.6f},{emp:.6f},{se:.6f},{z:.3f}")
    if cfg["dump_field"]:
        pts = [p for e in entries for seg in e.geometry.segments() for p in seg]
        FieldSampler(extent_for([pts], delta), h, sp).sample(int(cfg["seed"])).dump(cfg["dump_field"])
    with open(out, "w") as fh:
        for line in header_lines("oracle", cfg):
            fh.write(f"# {line}\n")
        fh.write("\n".join(lines) + "\n")
    return f"{len(entries)} geometries"


def cmd_failure_sweep(cfg, out):
    nodes = [int(v) for v in parse_grid(cfg["nodes"])]
    grid = parse_grid(cfg["beta_grid"])
    sigma_db = float(cfg["sigma_db"])
    sp = ShadowingParams.from_ratio(float(cfg["delta"]), float(cfg["ratio"]), sigma_db**2)
    written = []
    for n in nodes:
        rows = failure_sweep(n, grid, float(cfg["spacing"]), float(cfg["n_p"]), sigma_db, sp,
                             n_samples=int(cfg["n_samples"]), seed=int(cfg["seed"]), convention=cfg["convention"],
                             hop_correlation=bool(cfg["hop_correlation"]))
        path = str(out).format(nodes=n) if "{nodes}" in str(out) else (
            str(out) if len(nodes) == 1 else f"{Path(out).with_suffix('')}_{n}nodes{Path(out).suffix or '.csv'}")
        write_sweep_csv(path, rows, header_lines("failure-sweep", cfg) + [f"nodes: {n}"])
        written.append(path)
    return ", ".join(written)


def cmd_gudmundson_compare(cfg, out):
    if not cfg["report"]:
        raise ConfigError("gudmundson-compare needs --report (a corr-table output)")
    rows = read_report_csv(cfg["report"])
    cmp = compare_models([r.measured for r in rows], [r.proposed for r in rows], [r.gudmundson for r in rows])
    cmp.write_csv(out, header_lines("gudmundson-compare", cfg))
    return f"proposed {cmp.proposed:.3f}, gudmundson {cmp.gudmundson:.3f}"


COMMANDS = {
    "corr-table": cmd_corr_table,
    "fit": cmd_fit,
    "simulate": cmd_simulate,
    "oracle": cmd_oracle,
    "failure-sweep": cmd_failure_sweep,
    "gudmundson-compare": cmd_gudmundson_compare,
}


def _add_model(p, full=True):
    p.add_argument("--delta", type=float, help="space constant (m)")
    p.add_argument("--ratio", type=float, help="sigma_x2 / sigma_db2")
    p.add_argument("--sigma-db", dest="sigma_db", type=float, help="total fading std (dB)")
    if full:
        p.add_argument("--n-p", dest="n_p", type=float, help="path-loss exponent")
        p.add_argument("--intercept", type=float, help="mean power at 1 m (dBm)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="linkshadow", description="Correlated link shadowing toolkit.")
    ap.add_argument("--version", action="version", version=f"linkshadow {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def cmd(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON settings file, or a previous output to rerun")
        p.add_argument("--out", "-o", required=True, help="output path")
        return p

    p = cmd("corr-table", "per-geometry measured vs model correlation report")
    p.add_argument("--measurements", help="measurement CSV")
    p.add_argument("--deployment", help="deployment JSON (node coordinates)")
    p.add_argument("--synthetic", action="store_const", const=True, help="synthesize the measurements")
    p.add_argument("--experiments", type=int)
    p.add_argument("--n-freq", dest="n_freq", type=int)
    p.add_argument("--catalog")
    p.add_argument("--geometries", help="reference, all, or comma-separated ids")
    p.add_argument("--d-ref", dest="d_ref", type=float, help="baseline reference distance (m)")
    p.add_argument("--pooled", action="store_const", const=True, help="one path-loss fit over all experiments")
    p.add_argument("--seed", type=int)
    _add_model(p)

    p = cmd("fit", "estimate path loss, space constant and variance ratio")
    p.add_argument("--measurements")
    p.add_argument("--deployment")
    p.add_argument("--pooled", action="store_const", const=True)
    p.add_argument("--geometries")
    p.add_argument("--delta-grid", dest="delta_grid", help="'start:stop:step' or comma list (m)")
    p.add_argument("--regressor", choices=["residual", "cov", "rho_x"])
    p.add_argument("--catalog")

    p = cmd("simulate", "sample joint fading or a synthetic measurement log")
    p.add_argument("--deployment")
    p.add_argument("--kind", choices=["fading", "measurements"])
    p.add_argument("--gamma", type=float, help="receive threshold (dBm)")
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--experiments", type=int)
    p.add_argument("--n-freq", dest="n_freq", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--seed", type=int)
    _add_model(p)

    p = cmd("oracle", "field-sampling check of model correlations")
    p.add_argument("--delta", type=float)
    p.add_argument("--h", type=float, help="field cell size (m), at most delta/5")
    p.add_argument("--n-realizations", dest="n_realizations", type=int)
    p.add_argument("--geometries")
    p.add_argument("--catalog")
    p.add_argument("--dump-field", dest="dump_field", help="write one field realization here")
    p.add_argument("--seed", type=int)

    p = cmd("failure-sweep", "path-failure increase of correlated vs i.i.d. shadowing")
    p.add_argument("--nodes", help="3, 4 or '3,4'")
    p.add_argument("--beta-grid", dest="beta_grid")
    p.add_argument("--spacing", type=float)
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--convention", choices=["z", "z_approx", "x"])
    p.add_argument("--hop-correlation", dest="hop_correlation", action="store_const", const=True)
    p.add_argument("--n-p", dest="n_p", type=float)
    p.add_argument("--seed", type=int)
    _add_model(p, full=False)

    p = cmd("gudmundson-compare", "agreement of both models with measured correlations")
    p.add_argument("--report", help="corr-table output CSV")
    return ap


def main(argv=None, environ=None) -> int:
    environ = os.environ if environ is None else environ
    ap = build_parser()
    ns = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg, seed_source = resolve(ns.command, ns, environ)
        print("effective config: " + json.dumps(cfg, sort_keys=True), file=sys.stderr)
        if seed_source is not None:
            print(f"seed: {cfg['seed']} ({seed_source})", file=sys.stderr)
        summary = COMMANDS[ns.command](cfg, ns.out)
    except LinkShadowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    print(f"{ns.command}: {summary} -> {ns.out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
