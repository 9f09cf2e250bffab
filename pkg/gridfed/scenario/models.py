"""
Scenario models - Building coefficients, noise ranges and grid tables

Config-side types are pydantic models so they can be loaded from
settings.yaml and validated there; generated series are plain frozen
dataclasses over numpy arrays.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

HOURS = 24
TEMPERATURE_BOUNDS = (-20.0, 50.0)


class Phase(str, Enum):
    """Which data distribution a series is drawn from"""
    TRAIN = "train"
    TEST = "test"


class SolarCoeffs(BaseModel):
    """Weather sensitivity of a building's PV output"""
    alpha_T: float = Field(0.3, ge=0.0)
    alpha_H: float = Field(0.4, ge=0.0)


def default_load_base(scale: float, evening_peak: float) -> List[float]:
    """Residential profile with a morning bump and an evening peak (kWh per hour)"""
    return [
        round(scale * (0.4
                       + 0.5 * math.exp(-((t - 7.0) ** 2) / 4.0)
                       + 0.9 * math.exp(-((t - evening_peak) ** 2) / 5.0)), 4)
        for t in range(HOURS)
    ]


class BuildingConfig(BaseModel):
    """Per-building coefficients driving heterogeneity"""
    building_id: int = Field(ge=0)
    solar_scale: float = Field(gt=0.0)
    ac_efficiency: float = Field(gt=0.0)
    load_base: List[float]
    solar_coeffs: SolarCoeffs = Field(default_factory=SolarCoeffs)
    battery_capacity: float = Field(6.4, gt=0.0)

    @field_validator("load_base")
    @classmethod
    def _check_load_base(cls, value: List[float]) -> List[float]:
        if len(value) != HOURS:
            raise ValueError(f"load_base needs {HOURS} entries, got {len(value)}")
        if any(v < 0 for v in value):
            raise ValueError("load_base entries must be >= 0")
        return value

    @property
    def load_base_array(self) -> np.ndarray:
        return np.asarray(self.load_base, dtype=np.float64)


def default_buildings() -> List[BuildingConfig]:
    """The five reference buildings"""
    solar_scale = [0.8, 1.0, 1.2, 0.6, 1.5]
    ac_efficiency = [1.0, 1.5, 0.7, 2.0, 1.2]
    alpha_T = [0.30, 0.25, 0.35, 0.20, 0.40]
    alpha_H = [0.40, 0.50, 0.30, 0.60, 0.35]
    load_scale = [1.0, 1.3, 0.8, 1.1, 0.9]
    evening_peak = [19.0, 18.0, 20.0, 19.0, 21.0]
    return [
        BuildingConfig(
            building_id=i,
            solar_scale=solar_scale[i],
            ac_efficiency=ac_efficiency[i],
            load_base=default_load_base(load_scale[i], evening_peak[i]),
            solar_coeffs=SolarCoeffs(alpha_T=alpha_T[i], alpha_H=alpha_H[i]),
            battery_capacity=6.4,
        )
        for i in range(5)
    ]


class NoiseSpec(BaseModel):
    """Per-episode weather offset ranges for one phase"""
    phase: Phase
    temp_noise_range: Tuple[float, float]
    humidity_noise_range: Tuple[float, float]

    @field_validator("temp_noise_range", "humidity_noise_range")
    @classmethod
    def _check_range(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        lo, hi = value
        if lo > hi:
            raise ValueError(f"Range lower bound {lo} exceeds upper bound {hi}")
        return value


def default_train_noise() -> NoiseSpec:
    return NoiseSpec(phase=Phase.TRAIN, temp_noise_range=(-2.0, 2.0),
                     humidity_noise_range=(-0.05, 0.05))


def default_test_noise() -> NoiseSpec:
    return NoiseSpec(phase=Phase.TEST, temp_noise_range=(3.0, 5.0),
                     humidity_noise_range=(0.08, 0.15))


def default_price_table() -> List[float]:
    return [0.10] * 7 + [0.20] * 10 + [0.40] * 5 + [0.20] * 2


def default_emission_table() -> List[float]:
    return [0.45 if 17 <= t <= 21 else 0.30 for t in range(HOURS)]


class GridConfig(BaseModel):
    """Time-of-Use tariff and grid emission intensity, one entry per hour"""
    price: List[float] = Field(default_factory=default_price_table)
    emission_rate: List[float] = Field(default_factory=default_emission_table)

    @field_validator("price", "emission_rate")
    @classmethod
    def _check_table(cls, value: List[float]) -> List[float]:
        if len(value) != HOURS:
            raise ValueError(f"Grid tables need {HOURS} entries, got {len(value)}")
        if any(v <= 0 for v in value):
            raise ValueError("Grid table entries must be > 0")
        return value

    @field_validator("price")
    @classmethod
    def _check_tou_shape(cls, value: List[float]) -> List[float]:
        if max(value) <= min(value):
            raise ValueError("Price table must have a peak above its off-peak minimum")
        return value


class ScenarioConfig(BaseModel):
    """Everything needed to synthesize building data"""
    buildings: List[BuildingConfig] = Field(default_factory=default_buildings)
    train_noise: NoiseSpec = Field(default_factory=default_train_noise)
    test_noise: NoiseSpec = Field(default_factory=default_test_noise)
    grid: GridConfig = Field(default_factory=GridConfig)

    @model_validator(mode="after")
    def _check_scenario(self) -> "ScenarioConfig":
        if not self.buildings:
            raise ValueError("At least one building is required")
        ids = [b.building_id for b in self.buildings]
        if ids != list(range(len(ids))):
            raise ValueError(f"Building ids must be 0..{len(ids) - 1} in order, got {ids}")
        dumped = [b.model_dump(exclude={"building_id"}) for b in self.buildings]
        for i in range(len(dumped)):
            for j in range(i + 1, len(dumped)):
                if dumped[i] == dumped[j]:
                    raise ValueError(f"Buildings {i} and {j} have identical coefficients")
        if self.train_noise.phase != Phase.TRAIN or self.test_noise.phase != Phase.TEST:
            raise ValueError("train_noise/test_noise phases are swapped")
        same_temp = self.train_noise.temp_noise_range == self.test_noise.temp_noise_range
        same_hum = self.train_noise.humidity_noise_range == self.test_noise.humidity_noise_range
        if same_temp and same_hum:
            raise ValueError("Train and Test noise ranges must differ")
        return self

    def noise_for(self, phase: Phase) -> NoiseSpec:
        return self.train_noise if phase == Phase.TRAIN else self.test_noise


@dataclass(frozen=True)
class WeatherSeries:
    """Hourly outdoor temperature (degC) and relative humidity (fraction)"""
    temperature: np.ndarray
    humidity: np.ndarray


@dataclass(frozen=True)
class GridSeries:
    """Hourly price (currency/kWh) and emission rate (kgCO2e/kWh)"""
    price: np.ndarray
    emission_rate: np.ndarray
