"""
Building client - local TRPO training for one microgrid
"""

import copy
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from gridfed.core.seeding import TRAIN_ACTIONS, TRAIN_WEATHER, derive_seed, make_rng
from gridfed.env.microgrid import EnvConfig, episode_rollout
from gridfed.fed.aggregation import ClientUpdate
from gridfed.nn.params import Partition
from gridfed.policy.actor_critic import PersonalizedActorCritic
from gridfed.scenario.generator import generate_weather, grid_series
from gridfed.scenario.models import BuildingConfig, NoiseSpec, ScenarioConfig
from gridfed.trpo.batch import EpisodeBatch
from gridfed.trpo.optimizer import TrpoConfig, UpdateReport, trpo_update

logger = logging.getLogger(__name__)


@dataclass
class LocalRound:
    """What one client did during one round"""
    update: ClientUpdate
    reports: List[UpdateReport]
    mean_reward: float
    mean_cost: float
    mean_emission: float


@dataclass
class ClientSnapshot:
    params: np.ndarray
    rng_state: Dict[str, Any]
    episodes_run: int


class BuildingClient:
    """Owns one building's model, its Personal parameters and its training streams"""

    def __init__(self, building: BuildingConfig, model: PersonalizedActorCritic,
                 scenario: ScenarioConfig, noise: NoiseSpec, seed: int,
                 trpo_config: Optional[TrpoConfig] = None,
                 env_config: Optional[EnvConfig] = None):
        self.building = building
        self.model = model
        self.scenario = scenario
        self.noise = noise
        self.seed = seed
        self.trpo_config = trpo_config or TrpoConfig()
        self.env_config = env_config or EnvConfig()
        self.grid = grid_series(seed, scenario.grid)
        self.weather_seed = derive_seed(seed, TRAIN_WEATHER, building.building_id)
        self.action_rng = make_rng(seed, TRAIN_ACTIONS, building.building_id)
        self.episodes_run = 0

    @property
    def client_id(self) -> int:
        return self.building.building_id

    # -- parameters -----------------------------------------------------

    def shared_values(self) -> np.ndarray:
        return self.model.shared_values()

    def personal_values(self) -> np.ndarray:
        return self.model.get_params().restrict(Partition.PERSONAL)

    def load_shared(self, shared: np.ndarray) -> None:
        self.model.load_shared(shared)

    def snapshot(self) -> ClientSnapshot:
        return ClientSnapshot(self.model.get_flat(),
                              copy.deepcopy(self.action_rng.bit_generator.state),
                              self.episodes_run)

    def restore(self, snap: ClientSnapshot) -> None:
        self.model.set_flat(snap.params)
        self.action_rng.bit_generator.state = copy.deepcopy(snap.rng_state)
        self.episodes_run = snap.episodes_run

    # -- training -------------------------------------------------------

    def collect(self, episodes: int) -> EpisodeBatch:
        """Roll out ``episodes`` stochastic training days"""
        batches = []
        cfg = self.trpo_config
        for _ in range(episodes):
            weather = generate_weather(self.weather_seed, self.episodes_run, self.noise)
            rollout = episode_rollout(self.model, self.building, weather, self.grid,
                                      self.action_rng, deterministic=False,
                                      env_config=self.env_config,
                                      gamma=cfg.gamma, lam=cfg.gae_lambda)
            batches.append(rollout.batch)
            self.episodes_run += 1
        return EpisodeBatch.concat(batches)

    def train(self, local_updates: int) -> Tuple[int, List[UpdateReport], List[EpisodeBatch]]:
        steps, reports, batches = 0, [], []
        for _ in range(local_updates):
            batch = self.collect(self.trpo_config.episodes_per_update)
            reports.append(trpo_update(self.model, batch, self.trpo_config))
            batches.append(batch)
            steps += batch.size
        return steps, reports, batches

    def local_round(self, round_index: int, local_updates: int) -> LocalRound:
        """Train locally and report Shared parameters weighted by steps consumed"""
        steps, reports, batches = self.train(local_updates)
        rewards = [r for b in batches for r in b.episode_rewards]
        costs = [c for b in batches for c in b.episode_costs]
        emissions = [e for b in batches for e in b.episode_emissions]
        # no local steps still counts as one sample so the weighted mean stays defined
        update = ClientUpdate(client_id=self.client_id, n_k=max(steps, 1),
                              shared_params=self.shared_values(), round=round_index)
        accepted = sum(r.accepted for r in reports)
        logger.debug(f"Client {self.client_id} round {round_index}: {steps} steps, "
                     f"{accepted}/{len(reports)} steps accepted")
        return LocalRound(
            update=update,
            reports=reports,
            mean_reward=float(np.mean(rewards)) if rewards else float("nan"),
            mean_cost=float(np.mean(costs)) if costs else float("nan"),
            mean_emission=float(np.mean(emissions)) if emissions else float("nan"),
        )
