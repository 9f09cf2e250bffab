"""
Evaluation - deterministic test-distribution rollouts
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from gridfed.core.seeding import EVAL_WEATHER, derive_seed
from gridfed.env.microgrid import EnvConfig, RolloutPolicy, StepRecord, episode_rollout
from gridfed.scenario.generator import generate_weather, grid_series
from gridfed.scenario.models import BuildingConfig, Phase, ScenarioConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BuildingMetrics:
    building: int
    reward: float
    emission: float
    cost: float


@dataclass
class RoundMetrics:
    """Test metrics of every building after one round"""
    round: int
    buildings: List[BuildingMetrics] = field(default_factory=list)

    @property
    def mean_reward(self) -> float:
        return float(np.mean([b.reward for b in self.buildings]))

    @property
    def mean_emission(self) -> float:
        return float(np.mean([b.emission for b in self.buildings]))

    @property
    def mean_cost(self) -> float:
        return float(np.mean([b.cost for b in self.buildings]))


def evaluate_with_traces(policy: RolloutPolicy, building: BuildingConfig,
                         scenario: ScenarioConfig, episodes: int, seed: int,
                         env_config: Optional[EnvConfig] = None, round_index: int = 0
                         ) -> Tuple[BuildingMetrics, List[List[StepRecord]]]:
    """Mean reward/emission/cost over fresh Test episodes using the policy mean

    Test weather is keyed on (seed, round_index, building), so every evaluation
    round and every building draws its own episodes from the Test distribution.
    """
    grid = grid_series(seed, scenario.grid)
    weather_seed = derive_seed(seed, EVAL_WEATHER, round_index, building.building_id)
    noise = scenario.noise_for(Phase.TEST)
    rewards, emissions, costs, traces = [], [], [], []
    for episode in range(episodes):
        weather = generate_weather(weather_seed, episode, noise)
        rollout = episode_rollout(policy, building, weather, grid, None,
                                  deterministic=True, env_config=env_config)
        rewards.append(rollout.total_reward)
        emissions.append(rollout.total_emission)
        costs.append(rollout.total_cost)
        traces.append(rollout.records)
    metrics = BuildingMetrics(building.building_id, float(np.mean(rewards)),
                              float(np.mean(emissions)), float(np.mean(costs)))
    return metrics, traces


def evaluate(policy: RolloutPolicy, building: BuildingConfig, scenario: ScenarioConfig,
             episodes: int, seed: int, env_config: Optional[EnvConfig] = None,
             round_index: int = 0) -> BuildingMetrics:
    metrics, _ = evaluate_with_traces(policy, building, scenario, episodes, seed, env_config,
                                      round_index)
    return metrics


def evaluate_round(round_index: int, policies: Sequence[Tuple[BuildingConfig, RolloutPolicy]],
                   scenario: ScenarioConfig, episodes: int, seed: int,
                   env_config: Optional[EnvConfig] = None) -> RoundMetrics:
    result = RoundMetrics(round_index)
    for building, policy in policies:
        result.buildings.append(evaluate(policy, building, scenario, episodes, seed, env_config,
                                         round_index))
    logger.info(f"Round {round_index} test reward {result.mean_reward:.3f}, "
                f"emission {result.mean_emission:.3f} kgCO2e, cost {result.mean_cost:.3f}")
    return result
