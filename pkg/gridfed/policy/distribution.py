"""
Gaussian action distribution over the battery command

Log-probabilities are evaluated at the raw Gaussian sample; clamping to
[-1, 1] is the environment's projection and does not enter the density.
"""

from dataclasses import dataclass
from typing import NamedTuple, Tuple, Union

import numpy as np

ArrayLike = Union[float, np.ndarray]

HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class PolicyDistribution:
    """Normal(mean, std); mean may be a batch, std is shared"""
    mean: ArrayLike
    std: float

    def log_prob(self, action: ArrayLike) -> ArrayLike:
        z = (np.asarray(action) - self.mean) / self.std
        return -0.5 * z * z - np.log(self.std) - HALF_LOG_2PI

    def log_prob_grads(self, action: ArrayLike) -> Tuple[ArrayLike, ArrayLike]:
        """d log_prob / d mean and d log_prob / d std"""
        diff = np.asarray(action) - self.mean
        var = self.std * self.std
        return diff / var, diff * diff / (var * self.std) - 1.0 / self.std


class Sample(NamedTuple):
    action: float
    log_prob: float
    raw_action: float


def sample_action(dist: PolicyDistribution, rng: np.random.Generator) -> Sample:
    """Draw a raw action, clamp it for the env, score the raw draw"""
    raw = float(rng.normal(float(dist.mean), dist.std))
    return Sample(action=min(max(raw, -1.0), 1.0),
                  log_prob=float(dist.log_prob(raw)),
                  raw_action=raw)


def gaussian_kl(old: PolicyDistribution, new: PolicyDistribution) -> ArrayLike:
    """KL(old || new), elementwise over batched means"""
    mean_diff = np.asarray(old.mean) - np.asarray(new.mean)
    return (np.log(new.std / old.std)
            + (old.std ** 2 + mean_diff ** 2) / (2.0 * new.std ** 2)
            - 0.5)


def gaussian_kl_grads(old: PolicyDistribution,
                      new: PolicyDistribution) -> Tuple[ArrayLike, ArrayLike]:
    """d KL(old || new) / d new.mean and / d new.std"""
    mean_diff = np.asarray(new.mean) - np.asarray(old.mean)
    var_new = new.std ** 2
    d_mean = mean_diff / var_new
    d_std = 1.0 / new.std - (old.std ** 2 + mean_diff ** 2) / (var_new * new.std)
    return d_mean, d_std
