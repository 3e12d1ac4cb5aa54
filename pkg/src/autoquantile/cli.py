"""Command-line front end: ``autoquantile {demo,gridscan,gbm,certificate}``.

Configuration is a flat JSON object. Values come from the command defaults,
then ``--config FILE``, then ``--set KEY=VALUE`` (VALUE parsed as JSON when
possible), then the dedicated flags. Unknown keys are rejected. Every run
writes its CSV tables plus ``metadata.json`` echoing the resolved config.

Exit codes: 0 success, 1 configuration or input error, 2 more solver
failures than ``failure_budget`` allows.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DomainError, ParseError
from .experiments import (
    DEMO_POS_FRACTIONS,
    gbm_config,
    load_or_surrogate,
    run_certificate,
    run_demo,
    run_gbm,
    run_profile_scan,
    run_residual_scan,
    tau_grid,
)
from .tau_inference import TauSolveConfig
from .varpro import SolverConfig

log = logging.getLogger("autoquantile")

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE = 0, 1, 2

_COMMON = {"seed": 0, "out": "results", "failure_budget": 0}
_SOLVER = {"epsilon": 1e-6, "max_iter": 500, "memory": 10}
_DEMO_DATA = {
    "reps": 100,
    "n": 100,
    "x_true": [2.0, 5.0],
    "noise_scale": 2.5,
    "pos_fractions": list(DEMO_POS_FRACTIONS),
    "kappa": 1.0,
}

DEFAULTS = {
    "demo": {**_COMMON, **_SOLVER, **_DEMO_DATA},
    "gridscan": {
        **_COMMON,
        **_SOLVER,
        **_DEMO_DATA,
        "mode": "both",
        "n_residuals": 1000,
        "residual_scale": 1.0,
        "residual_pos_fractions": [0.1, 0.25, 0.5, 0.75, 1.0],
        "tau_lo": 0.01,
        "tau_hi": 0.99,
        "tau_step": 0.01,
    },
    "gbm": {
        **_COMMON,
        **_SOLVER,
        "data": None,
        "runs": 10,
        "kappa": 0.05,
        "n_stages": 200,
        "max_depth": 3,
        "min_leaf": 5,
        "tau0": 0.5,
        "train_fraction": 0.75,
        "noise_levels": [0.0, 2.0, 4.0],
        "sign_mixes": [0.75, 0.5, 0.25],
        "trajectory_mixes": [1.0, 0.0],
        "save_models": False,
    },
    "certificate": {
        "out": "results",
        "kappas": [0.0, 0.25, 0.5, 0.75, 1.0],
        "tau_lo": 0.01,
        "tau_hi": 0.99,
        "tau_step": 0.001,
    },
}


class ConfigError(ValueError):
    pass


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, rows, columns=None):
    columns = columns or (list(rows[0].keys()) if rows else [])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS[command])

    def merge(src, origin):
        for k, v in src.items():
            if k not in cfg:
                raise ConfigError(f"unknown config key {k!r} ({origin})")
            cfg[k] = v

    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a flat JSON object")
        merge(loaded, args.config)
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = _parse_value(v)
    merge(overrides, "--set")
    flags = {k: getattr(args, k) for k in _FLAG_KEYS.get(command, ()) if getattr(args, k, None) is not None}
    merge(flags, "flag")
    return cfg


_FLAG_KEYS = {
    "demo": ("seed", "out", "reps", "kappa", "noise_scale", "n"),
    "gridscan": ("seed", "out", "reps", "kappa", "noise_scale", "mode"),
    "gbm": ("seed", "out", "kappa", "data", "runs", "n_stages"),
    "certificate": ("out", "kappas"),
}


def _solver(cfg) -> SolverConfig:
    try:
        return SolverConfig(
            epsilon=float(cfg["epsilon"]),
            max_iter=int(cfg["max_iter"]),
            memory=int(cfg["memory"]),
            kappa=float(cfg["kappa"]),
            tau_cfg=TauSolveConfig(),
        )
    except (DomainError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _config_hash(cfg) -> str:
    # the output location does not change results, so it is left out
    settings = {k: v for k, v in cfg.items() if k != "out"}
    return hashlib.sha256(json.dumps(settings, sort_keys=True).encode()).hexdigest()


def _write_metadata(out: Path, command: str, cfg: dict, started: float, **extra):
    meta = {
        "command": command,
        "version": __version__,
        "config": cfg,
        "config_hash": _config_hash(cfg),
        **extra,
        "wall_time_s": round(time.perf_counter() - started, 3),
    }
    with open(out / "metadata.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _over_budget(failures, cfg):
    return failures > int(cfg.get("failure_budget", 0))


def cmd_demo(cfg: dict) -> int:
    started = time.perf_counter()
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    records, summary, failures = run_demo(
        seed=int(cfg["seed"]),
        reps=int(cfg["reps"]),
        n=int(cfg["n"]),
        x_true=[float(v) for v in cfg["x_true"]],
        noise_scale=float(cfg["noise_scale"]),
        pos_fractions=[float(v) for v in cfg["pos_fractions"]],
        solver=_solver(cfg),
    )
    write_csv(out / "demo_table.csv", summary)
    write_csv(out / "demo_reps.csv", records)
    _write_metadata(out, "demo", cfg, started, failures=failures)
    print(f"{'pos_fraction':>12} {'mse_least_squares':>18} {'mse_proposed':>13} {'mean_tau':>9}")
    for r in summary:
        print(f"{r['pos_fraction']:12.2f} {r['mse_least_squares']:18.4f} {r['mse_proposed']:13.4f} {r['mean_tau']:9.3f}")
    return EXIT_CONVERGENCE if _over_budget(failures, cfg) else EXIT_OK


def cmd_gridscan(cfg: dict) -> int:
    started = time.perf_counter()
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    mode = cfg["mode"]
    if mode not in ("residual", "fit", "both"):
        raise ConfigError(f"mode must be residual, fit or both, got {mode!r}")
    taus = tau_grid(float(cfg["tau_lo"]), float(cfg["tau_hi"]), float(cfg["tau_step"]))
    if taus[0] <= 0 or taus[-1] >= 1:
        raise ConfigError("tau grid must lie inside (0, 1)")
    failures = 0
    if mode in ("residual", "both"):
        curves, minima = run_residual_scan(
            seed=int(cfg["seed"]),
            n_residuals=int(cfg["n_residuals"]),
            residual_scale=float(cfg["residual_scale"]),
            pos_fractions=[float(v) for v in cfg["residual_pos_fractions"]],
            kappa=float(cfg["kappa"]),
            taus=taus,
        )
        write_csv(out / "residual_curves.csv", curves)
        write_csv(out / "residual_minima.csv", minima)
        for m in minima:
            print(f"residual scan pos={m['pos_fraction']:.2f} argmin tau={m['argmin_tau_grid']:.3f} solver tau={m['tau_solver']:.4f}")
    if mode in ("fit", "both"):
        curves, minima, failures = run_profile_scan(
            seed=int(cfg["seed"]),
            reps=int(cfg["reps"]),
            n=int(cfg["n"]),
            x_true=[float(v) for v in cfg["x_true"]],
            noise_scale=float(cfg["noise_scale"]),
            pos_fractions=[float(v) for v in cfg["pos_fractions"]],
            taus=taus,
            solver=_solver(cfg),
        )
        write_csv(out / "profile_curves.csv", curves)
        write_csv(out / "profile_minima.csv", minima)
        for m in minima:
            print(f"profile scan pos={m['pos_fraction']:.2f} argmin tau={m['argmin_tau']:.3f}")
    _write_metadata(out, "gridscan", cfg, started, failures=failures)
    return EXIT_CONVERGENCE if _over_budget(failures, cfg) else EXIT_OK


def cmd_gbm(cfg: dict) -> int:
    started = time.perf_counter()
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    try:
        gcfg = gbm_config(
            n_stages=int(cfg["n_stages"]),
            max_depth=int(cfg["max_depth"]),
            min_leaf=int(cfg["min_leaf"]),
            kappa=float(cfg["kappa"]),
            tau0=float(cfg["tau0"]),
            solver=_solver(cfg),
        )
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    ds = load_or_surrogate(cfg["data"], int(cfg["seed"]))
    per_run, summary, traj, failures = run_gbm(
        ds,
        seed=int(cfg["seed"]),
        runs=int(cfg["runs"]),
        noise_levels=[float(v) for v in cfg["noise_levels"]],
        sign_mixes=[float(v) for v in cfg["sign_mixes"]],
        trajectory_mixes=[float(v) for v in cfg["trajectory_mixes"]],
        train_fraction=float(cfg["train_fraction"]),
        cfg=gcfg,
    )
    write_csv(out / "gbm_table.csv", summary)
    write_csv(out / "gbm_runs.csv", per_run)
    write_csv(out / "gbm_trajectory.csv", traj, ["sigma", "pos_fraction", "run", "stage", "tau", "beta", "loss"])
    _write_metadata(
        out, "gbm", cfg, started,
        failures=failures,
        dataset={"source": cfg["data"] or "surrogate", "n": ds.n, "d": ds.d},
    )
    for r in summary:
        print(f"sigma={r['sigma']:g} pos={r['pos_fraction']} mse={r['mse_mean']:.4f}")
    return EXIT_CONVERGENCE if _over_budget(failures, cfg) else EXIT_OK


def cmd_certificate(cfg: dict) -> int:
    started = time.perf_counter()
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    taus = tau_grid(float(cfg["tau_lo"]), float(cfg["tau_hi"]), float(cfg["tau_step"]))
    try:
        rows = run_certificate([float(k) for k in cfg["kappas"]], taus)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    write_csv(out / "certificate.csv", rows)
    _write_metadata(out, "certificate", cfg, started)
    for r in rows:
        verdict = "PASS convex" if r["convex"] else "FAIL not certified"
        print(f"kappa={r['kappa']:g} certificate={r['certificate']:.6f} {verdict}")
    return EXIT_OK


COMMANDS = {"demo": cmd_demo, "gridscan": cmd_gridscan, "gbm": cmd_gbm, "certificate": cmd_certificate}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="autoquantile", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", metavar="PATH", help="flat JSON config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        p.add_argument("--out", metavar="DIR")
        if seed:
            p.add_argument("--seed", type=int)

    p = sub.add_parser("demo", help="least squares vs joint (x, tau) inference on linear data")
    common(p)
    p.add_argument("--reps", type=int)
    p.add_argument("--kappa", type=float)
    p.add_argument("--noise-scale", dest="noise_scale", type=float)
    p.add_argument("--n", type=int)

    p = sub.add_parser("gridscan", help="loss curves over tau and fixed-tau profile minima")
    common(p)
    p.add_argument("--reps", type=int)
    p.add_argument("--kappa", type=float)
    p.add_argument("--noise-scale", dest="noise_scale", type=float)
    p.add_argument("--mode", choices=("residual", "fit", "both"))

    p = sub.add_parser("gbm", help="quantile GBM with per-stage tau inference")
    common(p)
    p.add_argument("--kappa", type=float)
    p.add_argument("--data", metavar="CSV", help="dataset file; a synthetic surrogate is used if omitted")
    p.add_argument("--runs", type=int)
    p.add_argument("--stages", dest="n_stages", type=int)

    p = sub.add_parser("certificate", help="convexity certificate in tau per kappa")
    common(p, seed=False)
    p.add_argument("--kappas", type=float, nargs="+")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args.command, args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, ParseError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
