"""
Scenario generator - Synthetic weather, PV, load and grid series

Weather for an episode is a fixed diurnal base curve shifted by one
uniform offset per episode (temperature and humidity drawn separately)
from the phase's NoiseSpec. Solar generation and non-shiftable load are
non-linear functions of that weather:

    base_solar(t) = max(0, sin(pi * (t - 6) / 12)) * P_PEAK
    g(T, H) = clamp(1 - alpha_T * ((T - T_REF) / 10)^2 - alpha_H * (H - H_REF), 0.1, 1.2)
    E_solar = solar_scale * base_solar(t) * g(T, H)

    h(T, H) = max(0, T - COMFORT_SETPOINT)^1.5 * (1 + 0.5 * H)
    E_load = load_base[t] + ac_efficiency * h(T, H)
"""

import logging
import math
from typing import Optional

import numpy as np

from gridfed.core.seeding import make_rng
from gridfed.scenario.models import (
    HOURS,
    TEMPERATURE_BOUNDS,
    BuildingConfig,
    GridConfig,
    GridSeries,
    NoiseSpec,
    WeatherSeries,
)

logger = logging.getLogger(__name__)

T_REF = 25.0
H_REF = 0.5
P_PEAK = 5.0
COMFORT_SETPOINT = 22.0
G_BOUNDS = (0.1, 1.2)

_HOURS = np.arange(HOURS, dtype=np.float64)


def base_temperature() -> np.ndarray:
    """Diurnal temperature curve, minimum before dawn, maximum mid-afternoon"""
    return 20.0 + 5.0 * np.sin(np.pi * (_HOURS - 9.0) / 12.0)


def base_humidity() -> np.ndarray:
    """Relative humidity, highest at night"""
    return 0.6 - 0.2 * np.sin(np.pi * (_HOURS - 9.0) / 12.0)


def generate_weather(seed: int, episode_index: int, spec: NoiseSpec) -> WeatherSeries:
    """Draw one episode of weather from the phase's noise ranges"""
    rng = make_rng(seed, episode_index)
    temp_offset = rng.uniform(*spec.temp_noise_range)
    hum_offset = rng.uniform(*spec.humidity_noise_range)

    temperature = np.clip(base_temperature() + temp_offset, *TEMPERATURE_BOUNDS)
    humidity = np.clip(base_humidity() + hum_offset, 0.0, 1.0)
    return WeatherSeries(temperature=temperature, humidity=humidity)


def weather_factor(temperature: float, humidity: float, config: BuildingConfig) -> float:
    """Non-linear PV derating g(T, H); equals 1 at the reference weather"""
    coeffs = config.solar_coeffs
    raw = (1.0
           - coeffs.alpha_T * ((temperature - T_REF) / 10.0) ** 2
           - coeffs.alpha_H * (humidity - H_REF))
    return min(max(raw, G_BOUNDS[0]), G_BOUNDS[1])


def comfort_deviation(temperature: float, humidity: float) -> float:
    """Cooling demand term h(T, H); zero at or below the setpoint"""
    return max(0.0, temperature - COMFORT_SETPOINT) ** 1.5 * (1.0 + 0.5 * humidity)


def _check_hour(t: int) -> None:
    if not 0 <= t < HOURS:
        raise ValueError(f"Hour must be in [0, {HOURS - 1}], got {t}")


def solar_generation(config: BuildingConfig, weather: WeatherSeries, t: int) -> float:
    """PV output in kWh for hour t"""
    _check_hour(t)
    base = max(0.0, math.sin(math.pi * (t - 6) / 12.0)) * P_PEAK
    if base == 0.0:
        return 0.0
    g = weather_factor(float(weather.temperature[t]), float(weather.humidity[t]), config)
    return config.solar_scale * base * g


def nonshiftable_load(config: BuildingConfig, weather: WeatherSeries, t: int) -> float:
    """Building demand in kWh for hour t"""
    _check_hour(t)
    h = comfort_deviation(float(weather.temperature[t]), float(weather.humidity[t]))
    return config.load_base[t] + config.ac_efficiency * h


def solar_profile(config: BuildingConfig, weather: WeatherSeries) -> np.ndarray:
    return np.array([solar_generation(config, weather, t) for t in range(HOURS)])


def load_profile(config: BuildingConfig, weather: WeatherSeries) -> np.ndarray:
    return np.array([nonshiftable_load(config, weather, t) for t in range(HOURS)])


def grid_series(seed: int, config: Optional[GridConfig] = None) -> GridSeries:
    """Hourly ToU price and emission tables

    The tables do not vary between episodes, so ``seed`` does not change
    the result; it is accepted so grid and weather draws share one call shape.
    """
    config = config or GridConfig()
    logger.debug(f"Grid series for seed {seed}: peak price {max(config.price)}")
    return GridSeries(
        price=np.asarray(config.price, dtype=np.float64),
        emission_rate=np.asarray(config.emission_rate, dtype=np.float64),
    )
