"""
Microgrid Environment - 24-step battery dispatch MDP for one building

Battery model is ideal: no losses, no self-discharge, and the only power
limit is the [-1, 1] capacity fraction of the action. Surplus PV that the
battery cannot absorb is curtailed (no export credit), so the grid draw
floors at zero.
"""

import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Protocol, Tuple

import numpy as np
from pydantic import BaseModel, Field

from gridfed.core.errors import ContractViolation
from gridfed.scenario.generator import nonshiftable_load, solar_generation
from gridfed.scenario.models import HOURS, BuildingConfig, GridSeries, WeatherSeries
from gridfed.trpo.batch import EpisodeBatch

logger = logging.getLogger(__name__)

OBS_DIM = 6


class EnvConfig(BaseModel):
    """Environment shaping knobs"""
    penalty_weight: float = Field(0.1, ge=0.0)
    initial_soc: float = Field(0.5, ge=0.0, le=1.0)


@dataclass(frozen=True)
class Observation:
    """State features seen by the agent"""
    t_out: float
    h_out: float
    soc: float
    net_consumption: float
    price: float
    hour: int

    def as_array(self) -> np.ndarray:
        return np.array([self.t_out, self.h_out, self.soc,
                         self.net_consumption, self.price, float(self.hour)])


@dataclass(frozen=True)
class StepRecord:
    """Energy bookkeeping for one hour"""
    hour: int
    e_load: float
    e_solar: float
    e_batt: float
    e_grid: float
    reward: float
    penalty: float
    cost: float
    emission: float
    overflow: float
    soc: float


@dataclass(frozen=True)
class EnvState:
    """Everything needed to advance one building by one hour"""
    config: BuildingConfig
    weather: WeatherSeries
    grid: GridSeries
    soc_kwh: float
    hour: int
    last_net: float
    penalty_weight: float = 0.1

    @property
    def done(self) -> bool:
        return self.hour >= HOURS


def observe(state: EnvState) -> Observation:
    """Observation for the current hour; a finished episode repeats hour 23's exogenous features"""
    idx = min(state.hour, HOURS - 1)
    return Observation(
        t_out=float(state.weather.temperature[idx]),
        h_out=float(state.weather.humidity[idx]),
        soc=state.soc_kwh / state.config.battery_capacity,
        net_consumption=state.last_net,
        price=float(state.grid.price[idx]),
        hour=idx,
    )


def reset(config: BuildingConfig, weather: WeatherSeries, grid: GridSeries,
          env_config: Optional[EnvConfig] = None) -> Tuple[EnvState, Observation]:
    """Start an episode at hour 0 with the battery at its initial charge"""
    env_config = env_config or EnvConfig()
    state = EnvState(
        config=config,
        weather=weather,
        grid=grid,
        soc_kwh=env_config.initial_soc * config.battery_capacity,
        hour=0,
        last_net=0.0,
        penalty_weight=env_config.penalty_weight,
    )
    return state, observe(state)


def settle(e_load: float, e_solar: float, requested: float, soc_kwh: float,
           capacity: float, price: float, emission_rate: float,
           penalty_weight: float, hour: int = 0) -> StepRecord:
    """Apply a battery request against physical headroom and price the grid draw"""
    e_batt = min(max(requested, -soc_kwh), capacity - soc_kwh)
    overflow = abs(requested - e_batt)
    e_grid = max(e_load + e_batt - e_solar, 0.0)
    penalty = penalty_weight * overflow
    return StepRecord(
        hour=hour,
        e_load=e_load,
        e_solar=e_solar,
        e_batt=e_batt,
        e_grid=e_grid,
        reward=-e_grid - penalty,
        penalty=penalty,
        cost=e_grid * price,
        emission=e_grid * emission_rate,
        overflow=overflow,
        soc=(soc_kwh + e_batt) / capacity,
    )


def step(state: EnvState, action: float) -> Tuple[EnvState, Observation, StepRecord, bool]:
    """Advance one hour; the action is the requested charge as a fraction of capacity"""
    if state.done:
        raise ContractViolation("step() called on a finished episode; call reset() first")
    if not np.isfinite(action):
        raise ContractViolation(f"Action must be finite, got {action}")

    a = min(max(float(action), -1.0), 1.0)
    t = state.hour
    capacity = state.config.battery_capacity
    record = settle(
        e_load=nonshiftable_load(state.config, state.weather, t),
        e_solar=solar_generation(state.config, state.weather, t),
        requested=a * capacity,
        soc_kwh=state.soc_kwh,
        capacity=capacity,
        price=float(state.grid.price[t]),
        emission_rate=float(state.grid.emission_rate[t]),
        penalty_weight=state.penalty_weight,
        hour=t,
    )
    new_soc = min(max(state.soc_kwh + record.e_batt, 0.0), capacity)
    next_state = replace(state, soc_kwh=new_soc, hour=t + 1, last_net=record.e_grid)
    return next_state, observe(next_state), record, next_state.done


class RolloutPolicy(Protocol):
    """Anything that maps a raw observation vector to (raw action, log-prob, value)"""

    def act(self, observation: np.ndarray, rng: Optional[np.random.Generator],
            deterministic: bool = False) -> Tuple[float, float, float]:
        ...


@dataclass(frozen=True)
class EpisodeRollout:
    """One finished episode: learning batch plus the hourly records"""
    batch: EpisodeBatch
    records: List[StepRecord]

    @property
    def total_reward(self) -> float:
        return float(sum(r.reward for r in self.records))

    @property
    def total_cost(self) -> float:
        return float(sum(r.cost for r in self.records))

    @property
    def total_emission(self) -> float:
        return float(sum(r.emission for r in self.records))


def episode_rollout(policy: RolloutPolicy, config: BuildingConfig, weather: WeatherSeries,
                    grid: GridSeries, rng: Optional[np.random.Generator],
                    deterministic: bool = False, env_config: Optional[EnvConfig] = None,
                    gamma: float = 0.99, lam: float = 0.95) -> EpisodeRollout:
    """Run the policy for a full day and collect its trajectory"""
    state, obs = reset(config, weather, grid, env_config)
    observations, actions, log_probs, values, rewards = [], [], [], [], []
    records: List[StepRecord] = []

    done = False
    while not done:
        obs_vec = obs.as_array()
        raw_action, log_prob, value = policy.act(obs_vec, rng, deterministic)
        state, obs, record, done = step(state, raw_action)

        observations.append(obs_vec)
        actions.append(raw_action)
        log_probs.append(log_prob)
        values.append(value)
        rewards.append(record.reward)
        records.append(record)

    dones = np.zeros(len(records))
    dones[-1] = 1.0
    batch = EpisodeBatch(
        observations=np.asarray(observations),
        actions=np.asarray(actions, dtype=np.float64),
        log_probs_old=np.asarray(log_probs, dtype=np.float64),
        rewards=np.asarray(rewards, dtype=np.float64),
        values=np.asarray(values, dtype=np.float64),
        dones=dones,
        gamma=gamma,
        lam=lam,
        episode_rewards=[float(sum(rewards))],
        episode_costs=[float(sum(r.cost for r in records))],
        episode_emissions=[float(sum(r.emission for r in records))],
    )
    return EpisodeRollout(batch=batch, records=records)
