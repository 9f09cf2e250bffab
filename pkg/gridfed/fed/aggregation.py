"""
FedAvg aggregation - sample-weighted mean of client Shared parameters
"""

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from gridfed.core.errors import AggregationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClientUpdate:
    """Shared parameters one client sends back after local training"""
    client_id: int
    n_k: int
    shared_params: np.ndarray
    round: int

    def __post_init__(self):
        if self.n_k <= 0:
            raise AggregationError(f"Client {self.client_id} reported n_k={self.n_k}; must be > 0")


def aggregate(updates: Sequence[ClientUpdate]) -> np.ndarray:
    """sum_k (n_k / n) * theta_k with n = sum_k n_k"""
    if not updates:
        raise AggregationError("No client updates to aggregate")
    rounds = {u.round for u in updates}
    if len(rounds) != 1:
        raise AggregationError(f"Updates come from different rounds: {sorted(rounds)}")
    lengths = {u.shared_params.size for u in updates}
    if len(lengths) != 1:
        raise AggregationError(f"Updates have different lengths: {sorted(lengths)}")
    ids = [u.client_id for u in updates]
    if len(set(ids)) != len(ids):
        raise AggregationError(f"Duplicate client ids in updates: {sorted(ids)}")

    ordered = sorted(updates, key=lambda u: u.client_id)
    stacked = np.stack([np.asarray(u.shared_params, dtype=np.float64) for u in ordered])
    counts = np.array([u.n_k for u in ordered], dtype=np.float64)
    weights = counts / counts.sum()
    # offsets from the first update keep identical inputs exact
    base = stacked[0]
    result = base + weights @ (stacked - base)
    logger.debug(f"Aggregated {len(ordered)} updates for round {ordered[0].round}")
    return result
