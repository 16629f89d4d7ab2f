"""Scenario configuration, exterior-trace ingestion, orchestration, emission.

A scenario is described by a flat key = value text file (see
ScenarioConfig for the keys and their defaults, which reproduce the
desert test house: 3 hourly days, comfort band 22..28 degC, on-peak
noon to 7 PM, TOU prices with a demand charge).  `run_scenario` executes
the requested strategies and `emit_results` writes, per strategy, a
trajectory CSV plus one shared summary CSV and a text report.  Floats in
the delimited outputs carry 6 significant digits.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import baselines, thermal
from .dp import (ComfortBand, DpSolver, GammaSearchConfig, StateGrid)
from .pricing import (MarginalCosts, PricePoint, UserProblem, pattern_search,
                      proportional_point)
from .tariff import BillBreakdown, TariffSchedule, production_cost, total_bill
from .thermal import BuildingParams

STRATEGIES = ("optimal", "constant", "precool", "prices")


class ConfigError(ValueError):
    """A scenario config file or override could not be interpreted."""


class TraceFormatError(ValueError):
    """An exterior trace CSV is missing, malformed, or too short."""


@dataclass(frozen=True)
class ScenarioConfig:
    # building
    alpha: float = 8.3e-7
    l_in: float = 0.4
    r_e: float = 0.0015
    c_in: float = 45.0
    m: int = 3
    # horizon, comfort, tariff
    dt_hours: float = 1.0
    days: int = 3
    t_min: float = 22.0
    t_max: float = 28.0
    on_peak_start_hour: float = 12.0
    on_peak_end_hour: float = 19.0
    p_on: float = 0.089
    p_off: float = 0.044
    p_d: float = 13.50
    demand_term: str = "per_day"
    t_init: float | None = None        # uniform initial wall degC; default t_max
    # solver
    grid_nodes: int = 21
    grid_margin: float = 2.0
    du: float = 0.25
    gamma_lo: float = 0.0
    gamma_hi: float | None = None      # None: derived so t_max is always admissible
    b_max: int = 16
    gamma_mode: str = "total"
    n_scan: int = 16
    use_symmetry: bool = True
    clamp_power_at_zero: bool = False
    # strategies
    strategies: tuple[str, ...] = ("optimal", "precool", "constant")
    precool_hours: float = 3.0
    # utility pricing
    marginal_a: float = 0.0814
    marginal_b: float = 59.76
    price_step_pd: float = 0.01
    price_step_pon: float = 0.01
    price_eps: float = 1e-3
    price_init_pd: float | None = None   # None: marginal-cost proportional
    price_init_pon: float | None = None
    diagonal_only: bool = False
    shrink_on_fail: bool = False
    # io
    exterior_csv: str = "bundled"
    out_dir: str = "out"
    figures: bool = True
    threads: int = 0                     # 0 = auto

    # -- derived builders -------------------------------------------------

    @property
    def n_f(self) -> int:
        spd = 24.0 / self.dt_hours
        if abs(spd - round(spd)) > 1e-9:
            raise ConfigError(f"24 h must be an integral number of steps, dt_hours={self.dt_hours}")
        return round(spd) * self.days

    def building(self) -> BuildingParams:
        return BuildingParams(alpha=self.alpha, l_in=self.l_in, r_e=self.r_e,
                              c_in=self.c_in, m=self.m, dt=self.dt_hours * 3600.0)

    def band(self) -> ComfortBand:
        return ComfortBand(self.t_min, self.t_max)

    def tariff(self) -> TariffSchedule:
        n_on = self.on_peak_start_hour / self.dt_hours
        n_off = self.on_peak_end_hour / self.dt_hours
        for name, val in (("on_peak_start_hour", n_on), ("on_peak_end_hour", n_off)):
            if abs(val - round(val)) > 1e-9:
                raise ConfigError(f"{name} must land on a step boundary, got {val * self.dt_hours}")
        return TariffSchedule(p_on=self.p_on, p_off=self.p_off, p_d=self.p_d,
                              n_on=round(n_on), n_off=round(n_off), n_f=self.n_f,
                              dt_hours=self.dt_hours, days=self.days,
                              demand_term=self.demand_term)

    def initial_state(self) -> np.ndarray:
        t0 = self.t_max if self.t_init is None else self.t_init
        return np.full(self.m, float(t0))

    def state_grid(self, ndim: int) -> StateGrid:
        return StateGrid.for_band(self.band(), ndim, self.grid_nodes, self.grid_margin)

    def marginals(self) -> MarginalCosts:
        return MarginalCosts(self.marginal_a, self.marginal_b)

    def search(self, gamma_hi: float) -> GammaSearchConfig:
        return GammaSearchConfig(gamma_lo=self.gamma_lo, gamma_hi=gamma_hi,
                                 b_max=self.b_max, mode=self.gamma_mode,
                                 du=self.du, n_scan=self.n_scan)


_BOOL_WORDS = {"true": True, "yes": True, "on": True, "1": True,
               "false": False, "no": False, "off": False, "0": False}


def _parse_bool(text: str) -> bool:
    try:
        return _BOOL_WORDS[text.strip().lower()]
    except KeyError:
        raise ConfigError(f"expected a boolean, got {text!r}") from None


def _parse_optional_float(text: str) -> float | None:
    if text.strip().lower() in ("", "none", "auto"):
        return None
    return float(text)


def _parse_strategies(text: str) -> tuple[str, ...]:
    names = tuple(s.strip() for s in text.split(",") if s.strip())
    for name in names:
        if name not in STRATEGIES:
            raise ConfigError(f"unknown strategy {name!r}; choose from {STRATEGIES}")
    if not names:
        raise ConfigError("strategies must name at least one strategy")
    return names


_PARSERS = {
    "float": float,
    "int": int,
    "str": str,
    "bool": _parse_bool,
    "float | None": _parse_optional_float,
    "tuple[str, ...]": _parse_strategies,
}


def parse_config_text(text: str) -> dict[str, str]:
    """Flat key = value lines; # starts a comment; blank lines ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def config_from_mapping(mapping: dict[str, str],
                        base: ScenarioConfig | None = None) -> ScenarioConfig:
    base = base if base is not None else ScenarioConfig()
    fields = {f.name: f for f in dataclasses.fields(ScenarioConfig)}
    updates = {}
    for key, raw in mapping.items():
        if key not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        ftype = fields[key].type
        parser = _PARSERS.get(ftype)
        if parser is None:
            raise ConfigError(f"no parser for config key {key!r}")
        try:
            updates[key] = parser(raw)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"config key {key!r}: {exc}") from None
    return dataclasses.replace(base, **updates)


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return config_from_mapping(parse_config_text(path.read_text()))


def resolve_threads(requested: int) -> int:
    """Worker count for parallel solves; THERMOSTAT_DP_THREADS caps it (0 = auto)."""
    auto = os.cpu_count() or 1
    threads = auto if requested <= 0 else requested
    cap_text = os.environ.get("THERMOSTAT_DP_THREADS")
    if cap_text is not None and cap_text.strip() != "":
        try:
            cap = int(cap_text)
        except ValueError:
            raise ConfigError(
                f"THERMOSTAT_DP_THREADS must be an integer, got {cap_text!r}") from None
        threads = min(threads, auto if cap <= 0 else cap)
    return max(threads, 1)


# -- exterior traces ------------------------------------------------------


def bundled_trace_path() -> Path:
    with resources.as_file(resources.files("thermostat_dp") / "data" / "phoenix_like.csv") as p:
        return Path(p)


def load_exterior_csv(path, dt_hours: float, n_steps: int) -> np.ndarray:
    """Resample an hourly `hour,temp_c` CSV onto the model step grid.

    Linear interpolation between samples; a query inside the final source
    hour holds the last sample.  Raises TraceFormatError with a distinct
    message for a missing file, a bad header, non-numeric or non-finite
    cells, non-increasing hours, or fewer hourly samples than the horizon
    spans.
    """
    path = Path(path)
    if not path.exists():
        raise TraceFormatError(f"exterior trace not found: {path}")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip().lower() for c in rows[0]] != ["hour", "temp_c"]:
        raise TraceFormatError(f"{path}: expected header 'hour,temp_c'")
    hours, temps = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 2:
            raise TraceFormatError(f"{path}:{lineno}: expected two columns, got {len(row)}")
        try:
            h, t = float(row[0]), float(row[1])
        except ValueError:
            raise TraceFormatError(
                f"{path}:{lineno}: non-numeric cell {row!r}") from None
        if not (math.isfinite(h) and math.isfinite(t)):
            raise TraceFormatError(f"{path}:{lineno}: non-finite value {row!r}")
        hours.append(h)
        temps.append(t)
    if len(hours) < 2:
        raise TraceFormatError(f"{path}: need at least two samples, got {len(hours)}")
    hours_arr = np.asarray(hours)
    if not np.all(np.diff(hours_arr) > 0):
        raise TraceFormatError(f"{path}: hours must be strictly increasing")
    needed = math.ceil(n_steps * dt_hours - 1e-9)
    if len(hours) < needed:
        raise TraceFormatError(
            f"{path}: trace too short: {len(hours)} hourly samples cover less than "
            f"the {needed} h horizon")
    t_query = np.arange(n_steps) * dt_hours
    return np.interp(t_query, hours_arr, np.asarray(temps))


def scenario_trace(config: ScenarioConfig) -> np.ndarray:
    source = config.exterior_csv
    path = bundled_trace_path() if source in ("", "bundled") else Path(source)
    return load_exterior_csv(path, config.dt_hours, config.n_f)


# -- orchestration ---------------------------------------------------------


@dataclass
class ScenarioResult:
    """One strategy's run: controls, states, power, and its money."""

    strategy: str
    controls: np.ndarray
    trajectory: np.ndarray   # (n_f+1, m)
    power_kw: np.ndarray
    bill: BillBreakdown
    production_usd: float
    peak_kw: float
    gamma_w: float           # peak cap; 0 when the strategy carries none
    tariff: TariffSchedule
    diagnostics: dict


def auto_gamma_hi(params: BuildingParams, tariff: TariffSchedule, exterior,
                  band: ComfortBand, grid_hi: float) -> float:
    """Cap that keeps u = t_max admissible at every node of the state grid."""
    on = tariff.on_peak_mask()
    te_max = float(np.asarray(exterior)[: tariff.n_f][on].max())
    c1 = 2.0 * params.c_in / params.dx
    bound = (te_max - band.t_max) / params.r_e + c1 * (grid_hi - band.t_max) + 1.0
    return max(bound, 1.0)


def _result_from_profile(strategy: str, config: ScenarioConfig, tariff, controls,
                         trajectory, powers_w, *, gamma_w: float = 0.0,
                         diagnostics: dict | None = None) -> ScenarioResult:
    bill = total_bill(tariff, powers_w)
    prod = production_cost(config.marginals(), tariff, powers_w)
    return ScenarioResult(strategy=strategy, controls=np.asarray(controls, float),
                          trajectory=trajectory, power_kw=np.asarray(powers_w) / 1000.0,
                          bill=bill, production_usd=prod, peak_kw=bill.peak_kw,
                          gamma_w=gamma_w, tariff=tariff,
                          diagnostics=diagnostics or {})


def run_fixed_controls(config: ScenarioConfig, controls, strategy: str,
                       exterior=None) -> ScenarioResult:
    params = config.building()
    tariff = config.tariff()
    exterior = scenario_trace(config) if exterior is None else np.asarray(exterior, float)
    trajectory, powers = thermal.simulate(params, config.initial_state(), controls,
                                          exterior,
                                          clamp_power_at_zero=config.clamp_power_at_zero)
    return _result_from_profile(strategy, config, tariff, controls, trajectory, powers)


def run_scenario(config: ScenarioConfig) -> list[ScenarioResult]:
    params = config.building()
    tariff = config.tariff()
    band = config.band()
    exterior = scenario_trace(config)
    t0 = config.initial_state()
    threads = resolve_threads(config.threads)
    results: list[ScenarioResult] = []

    for strategy in config.strategies:
        if strategy == "constant":
            controls = baselines.constant_strategy(band, tariff.n_f)
            results.append(run_fixed_controls(config, controls, strategy, exterior))
        elif strategy == "precool":
            controls = baselines.precool_strategy(band, tariff, config.precool_hours)
            results.append(run_fixed_controls(config, controls, strategy, exterior))
        elif strategy == "optimal":
            solver = _build_solver(config, params, tariff, band, exterior)
            gamma_hi = config.gamma_hi
            if gamma_hi is None:
                gamma_hi = auto_gamma_hi(params, tariff, exterior, band, solver.grid.hi)
            search = config.search(gamma_hi)
            found = solver.search_gamma(search, t0, threads=threads)
            roll = solver.rollout(found.solution.policy, t0)
            diag = {"clamp_count": found.solution.clamp_count + roll.clamp_count,
                    "gamma_evaluations": found.evaluations,
                    "dp_value_usd": found.j_star,
                    "gamma_mode": search.mode}
            results.append(_result_from_profile(strategy, config, tariff,
                                                roll.controls, roll.trajectory,
                                                roll.powers_w, gamma_w=found.gamma,
                                                diagnostics=diag))
        elif strategy == "prices":
            results.append(_run_prices(config, params, tariff, band, exterior, t0, threads))
        else:
            raise ConfigError(f"unknown strategy {strategy!r}")
    return results


def _build_solver(config, params, tariff, band, exterior) -> DpSolver:
    ndim = (params.m + 1) // 2 if config.use_symmetry else params.m
    return DpSolver(params, tariff, band, exterior,
                    grid=config.state_grid(ndim), du=config.du,
                    use_symmetry=config.use_symmetry,
                    clamp_power_at_zero=config.clamp_power_at_zero)


def _run_prices(config, params, tariff, band, exterior, t0, threads) -> ScenarioResult:
    costs = config.marginals()
    gamma_hi = config.gamma_hi
    if gamma_hi is None:
        ndim = (params.m + 1) // 2 if config.use_symmetry else params.m
        grid_hi = config.state_grid(ndim).hi
        gamma_hi = auto_gamma_hi(params, tariff, exterior, band, grid_hi)
    user = UserProblem(params=params, band=band, exterior=exterior,
                       tariff_template=tariff, search=config.search(gamma_hi),
                       t0=t0, grid=None, use_symmetry=config.use_symmetry,
                       clamp_power_at_zero=config.clamp_power_at_zero,
                       threads=threads)
    if config.price_init_pd is None or config.price_init_pon is None:
        init = proportional_point(costs)
    else:
        p_off = 1.0 - config.price_init_pd - config.price_init_pon
        init = PricePoint(config.price_init_pon, p_off, config.price_init_pd,
                          normalized=True)
    pr = pattern_search(init, costs, user, step_pd=config.price_step_pd,
                        step_pon=config.price_step_pon, eps=config.price_eps,
                        diagonal_only=config.diagonal_only,
                        shrink_on_fail=config.shrink_on_fail, threads=threads)
    scaled_tariff = user.tariff_at(pr.optimal_prices)
    response = pr.response
    diag = {"p_on_usd_kwh": pr.optimal_prices.p_on,
            "p_off_usd_kwh": pr.optimal_prices.p_off,
            "p_d_usd_kw": pr.optimal_prices.p_d,
            "iterations": pr.iterations,
            "evaluations": pr.evaluations,
            "user_bill_usd": pr.user_bill_usd}
    result = _result_from_profile("prices", config, scaled_tariff, response.controls,
                                  response.trajectory, response.powers_w,
                                  gamma_w=response.gamma, diagnostics=diag)
    result.production_usd = pr.production_usd
    return result


# -- emission ----------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def emit_results(results: list[ScenarioResult], out_dir) -> list[Path]:
    """Write per-strategy trajectory CSVs, a summary CSV, and a text report."""
    if not results:
        raise ValueError("no results to emit")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    for r in results:
        path = out / f"trajectory_{r.strategy}.csv"
        m = r.trajectory.shape[1]
        header = ["step", "hour", "u_c", "g_kw"] + [f"wall_t{i + 1}_c" for i in range(m)]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(len(r.controls)):
                row = [str(k), _fmt(k * r.tariff.dt_hours), _fmt(r.controls[k]),
                       _fmt(r.power_kw[k])]
                row += [_fmt(t) for t in r.trajectory[k]]
                w.writerow(row)
        written.append(path)

    summary = out / "summary.csv"
    with summary.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["strategy", "energy_usd", "demand_usd", "total_usd",
                    "peak_kw", "production_usd", "gamma_w"])
        for r in results:
            w.writerow([r.strategy, _fmt(r.bill.energy_usd), _fmt(r.bill.demand_usd),
                        _fmt(r.bill.total_usd), _fmt(r.peak_kw),
                        _fmt(r.production_usd), _fmt(r.gamma_w)])
    written.append(summary)

    report = out / "report.txt"
    lines = ["Thermostat programming scenario report",
             "=" * 38, ""]
    for r in results:
        t = r.tariff
        lines += [f"strategy: {r.strategy}",
                  f"  horizon:          {t.n_f} steps of {_fmt(t.dt_hours)} h "
                  f"({t.days} billing day(s))",
                  f"  prices:           on-peak {_fmt(t.p_on)} / off-peak "
                  f"{_fmt(t.p_off)} $/kWh, demand {_fmt(t.p_d)} $/kW",
                  f"  energy charge:    $ {_fmt(r.bill.energy_usd)}",
                  f"  demand charge:    $ {_fmt(r.bill.demand_usd)}",
                  f"  total bill:       $ {_fmt(r.bill.total_usd)}",
                  f"  on-peak peak:     {_fmt(r.peak_kw)} kW",
                  f"  production cost:  $ {_fmt(r.production_usd)}",
                  f"  peak cap:         {_fmt(r.gamma_w)} W"]
        for key, value in sorted(r.diagnostics.items()):
            shown = _fmt(value) if isinstance(value, float) else value
            lines.append(f"  {key}: {shown}")
        lines.append("")
    report.write_text("\n".join(lines))
    written.append(report)
    return written
