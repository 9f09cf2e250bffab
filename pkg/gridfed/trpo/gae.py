"""
Generalized Advantage Estimation
"""

import numpy as np

from gridfed.trpo.batch import AdvantageSet, EpisodeBatch


def compute_gae(batch: EpisodeBatch, normalize: bool = True) -> AdvantageSet:
    """Backward GAE recursion; episodes are cut at every done flag"""
    rewards, values, dones = batch.rewards, batch.values, batch.dones
    n = batch.size
    advantages = np.zeros(n)
    last = 0.0
    for t in reversed(range(n)):
        nonterminal = 1.0 - dones[t]
        next_value = values[t + 1] if t + 1 < n else 0.0
        delta = rewards[t] + batch.gamma * next_value * nonterminal - values[t]
        last = delta + batch.gamma * batch.lam * nonterminal * last
        advantages[t] = last
    returns = advantages + values

    if normalize:
        centered = advantages - advantages.mean()
        std = centered.std()
        advantages = centered / std if std > 1e-12 else centered
    return AdvantageSet(advantages=advantages, returns=returns)
