"""
Batch types - Trajectories collected for one TRPO update
"""

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from gridfed.core.errors import ContractViolation


@dataclass(frozen=True)
class EpisodeBatch:
    """Per-step arrays over one or more complete episodes

    ``actions`` are the raw Gaussian samples (before the env clamps them),
    which is where ``log_probs_old`` was evaluated.
    """
    observations: np.ndarray
    actions: np.ndarray
    log_probs_old: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    gamma: float = 0.99
    lam: float = 0.95
    episode_rewards: List[float] = field(default_factory=list)
    episode_costs: List[float] = field(default_factory=list)
    episode_emissions: List[float] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.rewards)
        lengths = {
            "observations": len(self.observations),
            "actions": len(self.actions),
            "log_probs_old": len(self.log_probs_old),
            "values": len(self.values),
            "dones": len(self.dones),
        }
        bad = {k: v for k, v in lengths.items() if v != n}
        if bad:
            raise ContractViolation(f"Batch arrays disagree with {n} rewards: {bad}")
        if n == 0:
            raise ContractViolation("Batch is empty")
        if not self.dones[-1]:
            raise ContractViolation("Last step of a batch must end an episode")
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.lam <= 1.0):
            raise ContractViolation(f"gamma/lam outside [0, 1]: {self.gamma}, {self.lam}")

    @property
    def size(self) -> int:
        return len(self.rewards)

    @property
    def episode_count(self) -> int:
        return int(np.count_nonzero(self.dones))

    @classmethod
    def concat(cls, batches: Sequence["EpisodeBatch"]) -> "EpisodeBatch":
        """Stack batches collected with the same discounting"""
        if not batches:
            raise ContractViolation("Nothing to concatenate")
        first = batches[0]
        if any(b.gamma != first.gamma or b.lam != first.lam for b in batches):
            raise ContractViolation("Batches use different gamma/lam")
        return cls(
            observations=np.concatenate([b.observations for b in batches]),
            actions=np.concatenate([b.actions for b in batches]),
            log_probs_old=np.concatenate([b.log_probs_old for b in batches]),
            rewards=np.concatenate([b.rewards for b in batches]),
            values=np.concatenate([b.values for b in batches]),
            dones=np.concatenate([b.dones for b in batches]),
            gamma=first.gamma,
            lam=first.lam,
            episode_rewards=[r for b in batches for r in b.episode_rewards],
            episode_costs=[c for b in batches for c in b.episode_costs],
            episode_emissions=[e for b in batches for e in b.episode_emissions],
        )


@dataclass(frozen=True)
class AdvantageSet:
    """GAE advantages and the matching value targets"""
    advantages: np.ndarray
    returns: np.ndarray
