"""Shared fixtures: the stock three-day scenario and cheap solver variants."""

import numpy as np
import pytest

from thermostat_dp import (BuildingParams, ComfortBand, ScenarioConfig,
                           StateGrid, TariffSchedule)
from thermostat_dp.scenario import scenario_trace


@pytest.fixture(scope="session")
def stock_params() -> BuildingParams:
    return BuildingParams(alpha=8.3e-7, l_in=0.4, r_e=0.0015, c_in=45.0,
                          m=3, dt=3600.0)


@pytest.fixture(scope="session")
def stock_band() -> ComfortBand:
    return ComfortBand(22.0, 28.0)


@pytest.fixture(scope="session")
def stock_tariff() -> TariffSchedule:
    return TariffSchedule(p_on=0.089, p_off=0.044, p_d=13.50,
                          n_on=12, n_off=19, n_f=72, dt_hours=1.0, days=3)


@pytest.fixture(scope="session")
def stock_config() -> ScenarioConfig:
    return ScenarioConfig(figures=False, threads=1)


@pytest.fixture(scope="session")
def stock_trace(stock_config) -> np.ndarray:
    return scenario_trace(stock_config)


@pytest.fixture(scope="session")
def stock_t0(stock_params) -> np.ndarray:
    return np.full(stock_params.m, 28.0)


@pytest.fixture(scope="session")
def small_grid(stock_band) -> StateGrid:
    # coarse 2-D grid for quick DP solves (m=3 folds to 2 coordinates)
    return StateGrid.for_band(stock_band, 2, n_nodes=11)


def one_day_tariff(**overrides) -> TariffSchedule:
    base = dict(p_on=0.089, p_off=0.044, p_d=13.50,
                n_on=12, n_off=19, n_f=24, dt_hours=1.0, days=1)
    base.update(overrides)
    return TariffSchedule(**base)
