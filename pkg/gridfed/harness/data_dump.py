"""
Scenario dumps - generated weather, solar, load and grid series as CSV
"""

import logging
from pathlib import Path
from typing import Callable, List

import numpy as np
import pandas as pd

from gridfed.core.io import PathLike, write_csv_atomic
from gridfed.core.seeding import DATA_DUMP, derive_seed
from gridfed.scenario.generator import generate_weather, grid_series, load_profile, solar_profile
from gridfed.scenario.models import HOURS, BuildingConfig, Phase, ScenarioConfig, WeatherSeries

logger = logging.getLogger(__name__)

SCENARIO_COLUMNS = ["building", "hour", "temperature", "humidity", "solar", "load",
                    "price", "emission_rate"]
COMPARISON_COLUMNS = ["hour", "building", "train_min", "train_max", "test_min", "test_max"]


def _weather_seed(seed: int, phase: Phase) -> int:
    return derive_seed(seed, DATA_DUMP, 0 if phase == Phase.TRAIN else 1)


def scenario_frame(scenario: ScenarioConfig, phase: Phase, seed: int,
                   episode_index: int = 0) -> pd.DataFrame:
    """One episode of every building's hourly series"""
    weather = generate_weather(_weather_seed(seed, phase), episode_index, scenario.noise_for(phase))
    grid = grid_series(seed, scenario.grid)
    rows: List[dict] = []
    for building in scenario.buildings:
        solar = solar_profile(building, weather)
        load = load_profile(building, weather)
        for t in range(HOURS):
            rows.append({
                "building": building.building_id,
                "hour": t,
                "temperature": weather.temperature[t],
                "humidity": weather.humidity[t],
                "solar": solar[t],
                "load": load[t],
                "price": grid.price[t],
                "emission_rate": grid.emission_rate[t],
            })
    return pd.DataFrame(rows, columns=SCENARIO_COLUMNS)


def _envelopes(scenario: ScenarioConfig, seed: int, episodes: int,
               profile: Callable[[BuildingConfig, WeatherSeries], np.ndarray]) -> pd.DataFrame:
    profiles = {}
    for phase in (Phase.TRAIN, Phase.TEST):
        weather_seed = _weather_seed(seed, phase)
        noise = scenario.noise_for(phase)
        weathers = [generate_weather(weather_seed, e, noise) for e in range(episodes)]
        profiles[phase] = {
            b.building_id: np.stack([profile(b, w) for w in weathers])
            for b in scenario.buildings
        }
    rows = []
    for t in range(HOURS):
        for b in scenario.buildings:
            train = profiles[Phase.TRAIN][b.building_id][:, t]
            test = profiles[Phase.TEST][b.building_id][:, t]
            rows.append({"hour": t, "building": b.building_id,
                         "train_min": train.min(), "train_max": train.max(),
                         "test_min": test.min(), "test_max": test.max()})
    return pd.DataFrame(rows, columns=COMPARISON_COLUMNS)


def solar_envelopes(scenario: ScenarioConfig, seed: int, episodes: int) -> pd.DataFrame:
    """Per-hour min/max solar generation under Train and Test weather for every building"""
    return _envelopes(scenario, seed, episodes, solar_profile)


def load_envelopes(scenario: ScenarioConfig, seed: int, episodes: int) -> pd.DataFrame:
    """Per-hour min/max demand under Train and Test weather for every building"""
    return _envelopes(scenario, seed, episodes, load_profile)


def dump_scenario(scenario: ScenarioConfig, out_dir: PathLike, seed: int,
                  episode_index: int = 0, compare_episodes: int = 0) -> List[Path]:
    out_dir = Path(out_dir)
    paths = [
        write_csv_atomic(out_dir / f"scenario_{phase.value}.csv",
                         scenario_frame(scenario, phase, seed, episode_index))
        for phase in (Phase.TRAIN, Phase.TEST)
    ]
    if compare_episodes > 0:
        paths.append(write_csv_atomic(out_dir / "solar_comparison.csv",
                                      solar_envelopes(scenario, seed, compare_episodes)))
        paths.append(write_csv_atomic(out_dir / "load_comparison.csv",
                                      load_envelopes(scenario, seed, compare_episodes)))
    logger.info(f"Scenario data written to {out_dir}")
    return paths
