"""
Shared fixtures for the gridfed test suite
"""

import numpy as np
import pytest

from gridfed.core.settings import ExperimentConfig
from gridfed.policy.actor_critic import ModelConfig, PersonalizedActorCritic
from gridfed.scenario.models import WeatherSeries


class ZeroPolicy:
    """Always requests a = 0"""

    def act(self, observation, rng, deterministic=False):
        return 0.0, 0.0, 0.0


@pytest.fixture
def zero_policy():
    return ZeroPolicy()


@pytest.fixture
def reference_weather():
    return WeatherSeries(temperature=np.full(24, 25.0), humidity=np.full(24, 0.5))


@pytest.fixture
def small_model_config():
    return ModelConfig(encoding_dim=3, encoder_hidden=[4], trunk_hidden=[6],
                       processor_hidden=[5], head_hidden=[4])


@pytest.fixture
def small_model(small_model_config):
    return PersonalizedActorCritic.build(small_model_config, np.random.default_rng(1),
                                         np.random.default_rng(2))


@pytest.fixture
def tiny_experiment(small_model_config, tmp_path):
    """A run small enough for unit tests: 2 rounds, 2 episodes per update"""
    return ExperimentConfig(
        seeds=[0],
        rounds=2,
        eval_every=1,
        eval_episodes=2,
        out_dir=str(tmp_path / "out"),
        model=small_model_config,
        trpo={"episodes_per_update": 2, "value_epochs": 2},
    )
