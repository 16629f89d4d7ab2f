"""Time-of-use tariffs: energy charges, demand charges, production cost.

Prices are flat within two daily regimes: on-peak during [t_on, t_off)
and off-peak otherwise, with membership decided half-open so the step
starting at t_off is already billed off-peak.  The demand charge bills
the single highest on-peak draw of the horizon at p_d $/kW, prorated by
/30 for a daily share of the monthly charge; multi-day horizons accrue
that daily share once per day by default (``demand_term="per_day"``) or
literally once for the whole horizon (``"single"``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .thermal import BuildingParams, power

DEMAND_TERMS = ("per_day", "single")


@dataclass(frozen=True)
class TariffSchedule:
    """Price schedule and horizon layout.

    p_on, p_off : energy prices, $/kWh
    p_d         : demand price, $/kW (monthly; /30 prorated per day)
    n_on, n_off : on-peak window as step indices within a day
    n_f         : horizon length, steps
    dt_hours    : step length, h (24/dt_hours must be integral)
    days        : billing days covered by the horizon
    """

    p_on: float
    p_off: float
    p_d: float
    n_on: int
    n_off: int
    n_f: int
    dt_hours: float = 1.0
    days: int = 1
    demand_term: str = "per_day"

    def __post_init__(self):
        for name in ("p_on", "p_off", "p_d"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)!r}")
        if not self.dt_hours > 0:
            raise ValueError(f"dt_hours must be positive, got {self.dt_hours!r}")
        spd = 24.0 / self.dt_hours
        if abs(spd - round(spd)) > 1e-9:
            raise ValueError(f"24 h must be an integral number of steps, dt_hours={self.dt_hours}")
        if not (isinstance(self.n_f, (int, np.integer)) and self.n_f >= 1):
            raise ValueError(f"n_f must be an integer >= 1, got {self.n_f!r}")
        if not 0 <= self.n_on < self.n_off <= round(spd):
            raise ValueError(
                f"need 0 <= n_on < n_off <= steps/day, got n_on={self.n_on}, "
                f"n_off={self.n_off}, steps/day={round(spd)}")
        if not (isinstance(self.days, (int, np.integer)) and self.days >= 1):
            raise ValueError(f"days must be an integer >= 1, got {self.days!r}")
        if self.demand_term not in DEMAND_TERMS:
            raise ValueError(f"demand_term must be one of {DEMAND_TERMS}, got {self.demand_term!r}")

    @property
    def steps_per_day(self) -> int:
        return round(24.0 / self.dt_hours)

    def is_on_peak(self, k: int) -> bool:
        """True when step k falls in [t_on, t_off) of its day."""
        d = k % self.steps_per_day
        return self.n_on <= d < self.n_off

    def on_peak_mask(self) -> np.ndarray:
        d = np.arange(self.n_f) % self.steps_per_day
        return (d >= self.n_on) & (d < self.n_off)

    def price(self, k: int) -> float:
        return self.p_on if self.is_on_peak(k) else self.p_off

    def price_array(self) -> np.ndarray:
        return np.where(self.on_peak_mask(), self.p_on, self.p_off)

    @property
    def demand_weight(self) -> float:
        """$/kW applied to the horizon's on-peak peak."""
        mult = self.days if self.demand_term == "per_day" else 1
        return self.p_d / 30.0 * mult


@dataclass(frozen=True)
class MarginalCosts:
    """Utility-side marginal production costs: a $/kWh energy, b $/kW peak."""

    a: float
    b: float

    def __post_init__(self):
        if not (self.a >= 0 and self.b >= 0):
            raise ValueError(f"marginal costs must be nonnegative, got a={self.a!r}, b={self.b!r}")


@dataclass(frozen=True)
class BillBreakdown:
    """One bill: energy charge, demand charge, their total, and the peak billed."""

    energy_usd: float
    demand_usd: float
    total_usd: float
    peak_kw: float


def _check_powers(tariff: TariffSchedule, powers_w) -> np.ndarray:
    powers = np.asarray(powers_w, dtype=float)
    if powers.shape != (tariff.n_f,):
        raise ValueError(
            f"power profile must have n_f = {tariff.n_f} samples, got shape {powers.shape}")
    if not np.all(np.isfinite(powers)):
        raise ValueError("power profile contains non-finite values")
    return powers


def energy_cost(tariff: TariffSchedule, powers_w) -> float:
    """Energy charge of a power profile, $: regime price times kWh per step."""
    powers = _check_powers(tariff, powers_w)
    kwh = powers * (tariff.dt_hours / 1000.0)
    on = tariff.on_peak_mask()
    return float(tariff.p_off * kwh[~on].sum() + tariff.p_on * kwh[on].sum())


def demand_cost(tariff: TariffSchedule, powers_w) -> tuple[float, float]:
    """Demand charge, $: (p_d/30) * on-peak peak kW, accrued per billing day.

    Returns (cost, peak_kw).  Raises if the horizon has no on-peak step.
    """
    powers = _check_powers(tariff, powers_w)
    on = tariff.on_peak_mask()
    if not on.any():
        raise ValueError("horizon contains no on-peak step; demand charge undefined")
    peak_kw = float(powers[on].max() / 1000.0)
    return tariff.demand_weight * peak_kw, peak_kw


def total_bill(tariff: TariffSchedule, powers_w) -> BillBreakdown:
    """Energy plus demand charge of a power profile."""
    e = energy_cost(tariff, powers_w)
    d, peak_kw = demand_cost(tariff, powers_w)
    return BillBreakdown(energy_usd=e, demand_usd=d, total_usd=e + d, peak_kw=peak_kw)


def production_cost(costs: MarginalCosts, tariff: TariffSchedule, powers_w) -> float:
    """Utility production cost, $: a * total kWh + b * on-peak peak kW."""
    powers = _check_powers(tariff, powers_w)
    on = tariff.on_peak_mask()
    if not on.any():
        raise ValueError("horizon contains no on-peak step; peak cost undefined")
    energy_kwh = float(powers.sum() * tariff.dt_hours / 1000.0)
    peak_kw = float(powers[on].max() / 1000.0)
    return costs.a * energy_kwh + costs.b * peak_kw


def cost_to_go(params: BuildingParams, tariff: TariffSchedule, exterior,
               j: int, controls, wall_t1, gamma: float) -> float:
    """Remaining cost of an explicit control tail from step j, $.

    Evaluates the tail cost by the regime case split: before the on-peak
    window both regimes are still billed; inside it the already-elapsed
    on-peak steps are dropped; after it only the off-peak remainder is
    billed.  A terminal (p_d/30)*(gamma/1000) demand term is included in
    every case (gamma is in W, demand is billed per kW), so at j = 0 this
    equals energy_cost + the demand term and at j = n_f it is the demand
    term alone.

    controls covers steps j..n_f-1; wall_t1 holds the matching first-node
    wall temperatures (length >= n_f - j).  The case split presumes one
    on-peak window, i.e. a horizon within a single day, for j > 0.
    """
    n_f = tariff.n_f
    if not 0 <= j <= n_f:
        raise ValueError(f"j must be in [0, {n_f}], got {j}")
    terminal = tariff.p_d / 30.0 * gamma / 1000.0
    if j == n_f:
        return float(terminal)
    if j > 0 and n_f > tariff.steps_per_day:
        raise ValueError("case split assumes a horizon within a single day for j > 0")

    controls = np.asarray(controls, dtype=float)
    wall_t1 = np.asarray(wall_t1, dtype=float)
    if len(controls) != n_f - j:
        raise ValueError(f"controls must cover steps {j}..{n_f - 1}, got {len(controls)}")
    if len(wall_t1) < n_f - j:
        raise ValueError(f"wall_t1 must have at least {n_f - j} samples, got {len(wall_t1)}")

    ks = np.arange(j, n_f)
    g = np.array([power(params, k, controls[k - j], wall_t1[k - j], exterior) for k in ks])
    on = np.array([tariff.is_on_peak(k) for k in ks])
    kwh = tariff.dt_hours / 1000.0
    if j < tariff.n_on:
        # off-peak steps before j already spent; every on-peak step still ahead
        cost = tariff.p_off * g[~on].sum() + tariff.p_on * g[on].sum()
    elif j < tariff.n_off:
        # drop on-peak steps n_on..j-1; off-peak remainder starts after the window
        cost = tariff.p_on * g[on].sum() + tariff.p_off * g[~on].sum()
    else:
        # past the window: whole remainder billed off-peak
        cost = tariff.p_off * g.sum()
    return float(cost * kwh + terminal)
