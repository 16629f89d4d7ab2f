"""Reference thermostat schedules to compare the DP strategy against."""

from __future__ import annotations

import math

import numpy as np

from .dp import ComfortBand
from .tariff import TariffSchedule


def constant_strategy(band: ComfortBand, n_f: int) -> np.ndarray:
    """Hold the warmest comfortable setpoint for the whole horizon."""
    if n_f < 1:
        raise ValueError(f"n_f must be >= 1, got {n_f}")
    return np.full(n_f, band.t_max)


def precool_strategy(band: ComfortBand, tariff: TariffSchedule,
                     precool_hours: float = 3.0) -> np.ndarray:
    """Drop to t_min just before the daily on-peak window, t_max otherwise.

    The precool window covers the precool_hours immediately before the
    window start each day, truncated at the day boundary if it would
    reach before it.
    """
    if precool_hours < 0:
        raise ValueError(f"precool_hours must be >= 0, got {precool_hours}")
    steps = math.ceil(precool_hours / tariff.dt_hours - 1e-9)
    u = np.full(tariff.n_f, band.t_max)
    d = np.arange(tariff.n_f) % tariff.steps_per_day
    lo = max(tariff.n_on - steps, 0)
    u[(d >= lo) & (d < tariff.n_on)] = band.t_min
    return u
