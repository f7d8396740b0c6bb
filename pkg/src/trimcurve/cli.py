"""Command-line front end: ``estimate``, ``simulate`` and ``tune``.

Settings come from built-in defaults, then an optional YAML file
(``--config``), then command-line flags; later sources win.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from ._accel import BACKEND
from .data import read_csv
from .dgp import DGPSpec, generate_dataset
from .errors import TrimcurveError
from .estimators import (
    CURVE_ESTIMATORS,
    ESTIMATOR_IDS,
    CrossfitPlan,
    TrimSpec,
    crossfit_table,
    estimate_curve,
    estimate_thresholds,
    trimmed_population_profile,
)
from .nuisance import kernel_fit_recipe, tabulate
from .simlab import ExperimentConfig, compute_truth, run_experiment, write_metrics_csv, write_raw_csv
from .smoothing import IndicatorConfig, KernelConfig, default_grid
from .tuning import integration_grid, select_bandwidth, select_epsilon, write_entropy_csv, write_risk_csv

log = logging.getLogger("trimcurve")

DEFAULTS = {
    "seed": 0,
    "threads": 1,
    "out": "trimcurve-out",
    "h": 0.1,
    "epsilon": 0.01,
    "conf_level": 0.95,
    "a_grid": None,
    "trim": {"t": 0.1, "gamma": None, "t_min": 0.0, "t_max": 0.5, "step": 0.005},
    "estimate": {
        "input": None,
        "estimators": ["SATE_DR", "STATE_DR"],
        "k_folds": 2,
        "bw_scale": 1.0,
        "profile_covariates": [1],
    },
    "simulate": {
        "dgp": "continuous",
        "n": 1000,
        "reps": 200,
        "alphas": [0.1, 0.2, 0.3, 0.4, 0.5],
        "estimators": list(CURVE_ESTIMATORS),
        "truth_mc_n": 100_000,
        "truth_seed": 20240601,
        "binary_effect": 0.0,
        "raw": False,
    },
    "tune": {
        "input": None,
        "dgp_n": 1000,
        "k_folds": 2,
        "bw_scale": 1.0,
        "h_candidates": [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5],
        "eps_candidates": [0.1, 0.01, 0.001, 0.0001, 0.00001],
        "target_entropy": 0.05,
    },
}


# --------------------------------------------------------------------------
# configuration


def _merge(base: dict, extra: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for key, value in (extra or {}).items():
        if key not in out:
            raise ValueError(f"unknown config key {path + key!r}")
        if isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = _merge(out[key], value, f"{path}{key}.")
        else:
            out[key] = value
    return out


def parse_a_grid(text):
    """``"0,0.5,1"`` (explicit values) or ``"0:1:0.05"`` (start:stop:step)."""
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    text = str(text).strip()
    if ":" in text:
        start, stop, step = (float(v) for v in text.split(":"))
        if step <= 0 or stop < start:
            raise ValueError(f"bad a-grid range {text!r}")
        k = int(np.floor((stop - start) / step + 1e-9))
        return [round(start + step * i, 12) for i in range(k + 1)]
    return [float(v) for v in text.split(",") if v.strip()]


def resolve_config(args) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = _merge(cfg, yaml.safe_load(fh) or {})
    for flag in ("seed", "threads", "out", "h", "epsilon"):
        value = getattr(args, flag, None)
        if value is not None:
            cfg[flag] = value
    if args.a_grid is not None:
        cfg["a_grid"] = args.a_grid
    if args.trim_t is not None:
        cfg["trim"]["t"], cfg["trim"]["gamma"] = args.trim_t, None
    if args.trim_gamma is not None:
        cfg["trim"]["gamma"] = args.trim_gamma
    section = cfg.get(args.command, {})
    if args.estimators is not None and "estimators" in section:
        section["estimators"] = [e.strip() for e in args.estimators.split(",") if e.strip()]
    if args.k_folds is not None and "k_folds" in section:
        section["k_folds"] = args.k_folds
    if getattr(args, "input", None) and "input" in section:
        section["input"] = args.input
    if args.command == "simulate" and args.raw:
        section["raw"] = True
    cfg["a_grid"] = parse_a_grid(cfg["a_grid"])
    return cfg


def trim_spec(cfg) -> TrimSpec:
    trim = cfg["trim"]
    if trim.get("gamma") is not None:
        return TrimSpec.quantile(trim["gamma"], trim["t_min"], trim["t_max"], trim["step"])
    return TrimSpec.fixed(trim["t"])


def _fmt(v) -> str:
    if v is None:
        return ""
    return format(float(v), ".17g")


def _write_manifest(out: Path, cfg: dict, outputs, extra=None) -> None:
    manifest = {
        "version": __version__,
        "backend": BACKEND,
        "seed": cfg["seed"],
        "config": cfg,
        "outputs": sorted(outputs),
    }
    manifest.update(extra or {})
    with open(out / "run_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


# --------------------------------------------------------------------------
# commands


CURVE_COLUMNS = ("estimator", "a", "psi_hat", "se", "ci_lo", "ci_hi", "num", "den", "t_used", "n_eval", "flags", "error")


def write_curve_csv(reports, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_COLUMNS)
        for r in reports:
            lo, hi = r.ci if r.ci is not None else (None, None)
            writer.writerow([
                r.estimator_id, _fmt(r.a), _fmt(r.psi_hat), _fmt(r.se), _fmt(lo), _fmt(hi), _fmt(r.num),
                _fmt(r.den), _fmt(r.t_used), r.n_eval, ";".join(r.flags), r.error or "",
            ])


def _default_a_grid(a):
    """Ten equally spaced points between the 5% and 95% treatment quantiles."""
    lo, hi = np.quantile(a, [0.05, 0.95])
    return list(np.round(np.linspace(lo, hi, 10), 12))


def _nuisance_table(data, cfg_section, seed, a_values, grid):
    recipe = kernel_fit_recipe(cfg_section["bw_scale"])
    k = int(cfg_section["k_folds"])
    if k >= 2:
        plan = CrossfitPlan.make(data.n, k, seed)
        return crossfit_table(data, plan, recipe, a_values, grid)
    return tabulate(recipe(data), data, a_values, grid)


def cmd_estimate(cfg: dict) -> int:
    sec = cfg["estimate"]
    if not sec["input"]:
        raise ValueError("estimate needs an input CSV (positional argument or estimate.input)")
    data = read_csv(sec["input"])
    a_values = cfg["a_grid"] or _default_a_grid(data.a)
    cfg["a_grid"] = [float(a) for a in a_values]
    kernel, indicator = KernelConfig(cfg["h"]), IndicatorConfig(cfg["epsilon"])
    trim = trim_spec(cfg)
    estimators = [e for e in sec["estimators"]]
    bad = [e for e in estimators if e not in ESTIMATOR_IDS or e == "BINARY_STATE"]
    if bad:
        raise ValueError(f"unknown or unsupported estimators {bad}")
    grid = default_grid(min(a_values), max(a_values), kernel.h, epsilon=indicator.epsilon)
    table = _nuisance_table(data, sec, cfg["seed"], a_values, grid)
    reports = estimate_curve(data, table, indicator, trim, kernel, a_values, estimators, cfg["conf_level"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_curve_csv(reports, out / "curve.csv")

    if trim.is_fixed:
        t_profile = trim.t
    else:
        t_profile = np.array([r.t_hat for r in estimate_thresholds(data, table, indicator, a_values, trim, kernel)])
    with open(out / "profile.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["covariate", "a", "untrimmed", "trimmed", "t", "missing"])
        for c in sec["profile_covariates"]:
            prof = trimmed_population_profile(data, table, kernel, indicator, t_profile, int(c) - 1, a_values)
            for j, a in enumerate(prof.a_values):
                writer.writerow([
                    f"x{c}", _fmt(a), "" if prof.missing[j] else _fmt(prof.untrimmed[j]),
                    "" if prof.missing[j] else _fmt(prof.trimmed[j]), _fmt(prof.t[j]), int(prof.missing[j]),
                ])
    failures = [f"{r.estimator_id}@{r.a}: {r.error}" for r in reports if not r.ok]
    _write_manifest(out, cfg, ["curve.csv", "profile.csv", "run_manifest.json"], {"failures": failures})
    for f in failures:
        log.warning("estimate failed: %s", f)
    return 0


def experiment_config(cfg: dict) -> ExperimentConfig:
    sec = cfg["simulate"]
    dgp = DGPSpec(sec["dgp"], n=int(sec["n"]), binary_effect=float(sec["binary_effect"]))
    a_grid = cfg["a_grid"] or ([1.0] if dgp.binary else [round(0.05 * i, 10) for i in range(21)])
    return ExperimentConfig(
        dgp=dgp,
        reps=int(sec["reps"]),
        alphas=tuple(float(a) for a in sec["alphas"]),
        a_grid=tuple(float(a) for a in a_grid),
        trim=trim_spec(cfg),
        h=float(cfg["h"]),
        epsilon=float(cfg["epsilon"]),
        conf_level=float(cfg["conf_level"]),
        master_seed=int(cfg["seed"]),
        estimators=tuple(sec["estimators"]),
        truth_mc_n=int(sec["truth_mc_n"]),
        truth_seed=int(sec["truth_seed"]),
    )


def cmd_simulate(cfg: dict) -> int:
    exp = experiment_config(cfg)
    cfg["a_grid"] = list(exp.a_grid)
    result = run_experiment(exp, threads=int(cfg["threads"]))
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(result.metrics, out / "metrics.csv")
    truth = result.truth
    with open(out / "truth.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["a", "p_a", "sate", "tate", "state", "t_tate", "t_state", "sate_se", "tate_se", "state_se"])
        for j, a in enumerate(truth.a_values):
            writer.writerow([_fmt(v) for v in (
                a, truth.p_a[j], truth.sate[j], truth.tate[j], truth.state[j], truth.t_tate[j],
                truth.t_state[j], truth.sate_se[j], truth.tate_se[j], truth.state_se[j],
            )])
    outputs = ["metrics.csv", "truth.csv", "run_manifest.json"]
    if cfg["simulate"]["raw"]:
        write_raw_csv(result, out / "raw.csv")
        outputs.append("raw.csv")
    _write_manifest(out, cfg, outputs, {"truth_mc_n": truth.mc_n})
    return 0


def cmd_tune(cfg: dict) -> int:
    sec = cfg["tune"]
    if sec["input"]:
        data = read_csv(sec["input"])
    else:
        data = generate_dataset(DGPSpec(n=int(sec["dgp_n"])), cfg["seed"])
    trim = trim_spec(cfg)
    if not trim.is_fixed:
        raise ValueError("tune needs a fixed threshold (--trim-t)")
    a_values = cfg["a_grid"] or _default_a_grid(data.a)
    cfg["a_grid"] = [float(a) for a in a_values]
    h_cand = [float(h) for h in sec["h_candidates"]]
    eps_cand = [float(e) for e in sec["eps_candidates"]]
    a_int = integration_grid(a_values, 2 * min(h_cand))
    grid = default_grid(float(a_int.min()), float(a_int.max()), max(h_cand), epsilon=float(cfg["epsilon"]))
    table = _nuisance_table(data, sec, cfg["seed"], a_int, grid)
    risk = select_bandwidth(h_cand, data, table, IndicatorConfig(cfg["epsilon"]), trim.t)
    eval_table = _nuisance_table(data, sec, cfg["seed"], a_values, None)
    ent = select_epsilon(eps_cand, data, eval_table, trim.t, sec["target_entropy"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_risk_csv(risk, out / "risk_path.csv")
    write_entropy_csv(ent, out / "entropy_path.csv")
    _write_manifest(out, cfg, ["risk_path.csv", "entropy_path.csv", "run_manifest.json"], {
        "chosen": {"h": risk.h_star, "epsilon": ent.eps_star},
        "degenerate": {"h": risk.degenerate, "epsilon": ent.degenerate},
    })
    return 0


COMMANDS = {"estimate": cmd_estimate, "simulate": cmd_simulate, "tune": cmd_tune}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trimcurve", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("estimate", "estimate treatment-effect curves from a CSV file"),
        ("simulate", "run a Monte-Carlo experiment"),
        ("tune", "select the bandwidth and indicator smoothing"),
    ):
        p = sub.add_parser(name, help=help_text)
        if name != "simulate":
            p.add_argument("input", nargs="?", help="CSV with columns x1..xp, a, y[, w]")
        p.add_argument("--config", help="YAML settings file")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--estimators", help="comma-separated estimator ids")
        p.add_argument("--a-grid", help="'v1,v2,...' or 'start:stop:step'")
        p.add_argument("--trim-t", type=float, help="fixed trimming threshold")
        p.add_argument("--trim-gamma", type=float, help="trim this propensity quantile instead")
        p.add_argument("--h", type=float, help="kernel bandwidth")
        p.add_argument("--epsilon", type=float, help="indicator smoothing")
        p.add_argument("--k-folds", type=int, help="cross-fitting folds (1 disables)")
        if name == "simulate":
            p.add_argument("--raw", action="store_true", help="also write per-replication estimates")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        cfg["command"] = args.command
        return COMMANDS[args.command](cfg)
    except (TrimcurveError, ValueError, OSError) as exc:
        print(f"trimcurve {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
