"""Command-line entry points.

    thermostat-dp simulate             fixed setpoints through the house model
    thermostat-dp optimize-thermostat  DP strategy under a peak-cap search
    thermostat-dp baseline             constant or precool reference schedule
    thermostat-dp optimize-prices      utility-side pattern search
    thermostat-dp verify               DP vs exhaustive enumeration on tiny instances

Every run takes an optional flat key = value config file plus flag
overrides, writes trajectory/summary CSVs and a text report, and by
default renders the matching figures alongside (disable with
--no-figures).  Exit code is 0 on success, 1 on any error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import oracle, plots, scenario
from .scenario import ConfigError, ScenarioConfig, config_from_mapping, load_config


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="flat key = value scenario file")
    p.add_argument("--out-dir", help="output directory (default from config)")
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    overrides = [
        ("--exterior-csv", "exterior_csv"), ("--p-on", "p_on"), ("--p-off", "p_off"),
        ("--p-d", "p_d"), ("--days", "days"), ("--dt-hours", "dt_hours"),
        ("--t-min", "t_min"), ("--t-max", "t_max"), ("--t-init", "t_init"),
        ("--grid-nodes", "grid_nodes"), ("--du", "du"), ("--b-max", "b_max"),
        ("--gamma-mode", "gamma_mode"), ("--gamma-hi", "gamma_hi"),
        ("--gamma-lo", "gamma_lo"), ("--demand-term", "demand_term"),
        ("--threads", "threads"), ("--m", "m"),
    ]
    for flag, key in overrides:
        p.add_argument(flag, dest=f"cfg_{key}", metavar="V")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thermostat-dp",
        description="Thermostat programming against TOU tariffs with demand "
                    "charges, and utility price optimization.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common_parser()

    p = sub.add_parser("simulate", parents=[common],
                       help="run a fixed setpoint schedule through the model")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--setpoint", type=float, help="constant setpoint, degC")
    group.add_argument("--controls-csv", help="CSV with a u_c column (or one value per line)")

    sub.add_parser("optimize-thermostat", parents=[common],
                   help="solve the DP strategy")

    p = sub.add_parser("baseline", parents=[common],
                       help="run a reference schedule")
    p.add_argument("--strategy", choices=("constant", "precool"), default="constant")
    p.add_argument("--precool-hours", type=float)

    p = sub.add_parser("optimize-prices", parents=[common],
                       help="utility-side price pattern search")
    p.add_argument("--marginal-a", type=float)
    p.add_argument("--marginal-b", type=float)
    p.add_argument("--init-pd", type=float)
    p.add_argument("--init-pon", type=float)
    p.add_argument("--step-pd", type=float)
    p.add_argument("--step-pon", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--diagonal-only", action="store_true")
    p.add_argument("--shrink-on-fail", action="store_true")

    p = sub.add_parser("verify",
                       help="certify DP against exhaustive enumeration")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _config_from_args(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    overrides = {key[len("cfg_"):]: val for key, val in vars(args).items()
                 if key.startswith("cfg_") and val is not None}
    if args.out_dir:
        overrides["out_dir"] = args.out_dir
    if overrides:
        cfg = config_from_mapping(overrides, base=cfg)
    return cfg


def _read_controls_csv(path, n_f: int) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"controls file not found: {path}")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ConfigError(f"{path}: no controls found")
    header = [c.strip().lower() for c in rows[0]]
    if "u_c" in header:
        col = header.index("u_c")
        values = [r[col] for r in rows[1:]]
    else:
        values = [r[0] for r in rows]
    try:
        controls = np.array([float(v) for v in values])
    except ValueError as exc:
        raise ConfigError(f"{path}: non-numeric control: {exc}") from None
    if len(controls) != n_f:
        raise ConfigError(
            f"{path}: got {len(controls)} controls, horizon needs {n_f}")
    return controls


def _emit(results, cfg: ScenarioConfig, no_figures: bool) -> None:
    written = scenario.emit_results(results, cfg.out_dir)
    if cfg.figures and not no_figures:
        written += plots.render_figures(results, cfg.out_dir)
    for path in written:
        print(path)


def _cmd_simulate(args) -> int:
    cfg = _config_from_args(args)
    if args.setpoint is not None:
        controls = np.full(cfg.n_f, args.setpoint)
    elif args.controls_csv:
        controls = _read_controls_csv(args.controls_csv, cfg.n_f)
    else:
        controls = np.full(cfg.n_f, cfg.t_max)
    result = scenario.run_fixed_controls(cfg, controls, "fixed")
    _emit([result], cfg, args.no_figures)
    return 0


def _cmd_strategies(args, strategies: tuple[str, ...]) -> int:
    cfg = _config_from_args(args)
    extra = {}
    if getattr(args, "precool_hours", None) is not None:
        extra["precool_hours"] = args.precool_hours
    for name in ("marginal_a", "marginal_b", "eps"):
        v = getattr(args, name, None)
        if v is not None:
            extra["price_eps" if name == "eps" else name] = v
    for src, dst in (("init_pd", "price_init_pd"), ("init_pon", "price_init_pon"),
                     ("step_pd", "price_step_pd"), ("step_pon", "price_step_pon")):
        v = getattr(args, src, None)
        if v is not None:
            extra[dst] = v
    if getattr(args, "diagonal_only", False):
        extra["diagonal_only"] = True
    if getattr(args, "shrink_on_fail", False):
        extra["shrink_on_fail"] = True
    extra["strategies"] = strategies
    cfg = dataclasses.replace(cfg, **extra)
    results = scenario.run_scenario(cfg)
    _emit(results, cfg, args.no_figures)
    return 0


def _cmd_verify(args) -> int:
    rng = np.random.default_rng(args.seed)
    failures = 0
    for i in range(args.instances):
        inst, grid = oracle.aligned_case(rng)
        res = oracle.certify_instance(inst, grid)
        if res.feasible:
            status = "ok" if res.ok else "MISMATCH"
            print(f"instance {i:02d}: dp={res.j_dp:.9g} enum={res.j_oracle:.9g} "
                  f"rel={res.rel_error:.2e} controls="
                  f"{'match' if res.controls_match else 'differ'} [{status}]")
        else:
            status = "ok" if res.ok else "MISMATCH"
            print(f"instance {i:02d}: infeasible for both sides [{status}]"
                  if res.ok else
                  f"instance {i:02d}: enumeration infeasible, dp disagrees [[MISMATCH]]")
        if not res.ok:
            failures += 1
    print(f"{args.instances - failures}/{args.instances} instances certified")
    return 1 if failures else 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "optimize-thermostat":
            return _cmd_strategies(args, ("optimal",))
        if args.command == "baseline":
            return _cmd_strategies(args, (args.strategy,))
        if args.command == "optimize-prices":
            return _cmd_strategies(args, ("prices",))
        if args.command == "verify":
            return _cmd_verify(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
