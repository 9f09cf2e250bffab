"""
FedAvg orchestrator - in-process rounds over a set of building clients
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from gridfed.core.errors import ContractViolation, RoundAbortedError
from gridfed.fed.aggregation import aggregate
from gridfed.fed.client import BuildingClient, LocalRound

logger = logging.getLogger(__name__)


@dataclass
class RoundState:
    """Server view between rounds"""
    round: int
    global_shared: np.ndarray
    client_personal: Dict[int, np.ndarray] = field(default_factory=dict)
    eta: float = 1.0


@dataclass
class RoundSummary:
    round: int
    local: Dict[int, LocalRound]

    @property
    def mean_reward(self) -> float:
        return float(np.mean([r.mean_reward for r in self.local.values()]))


def apply_server_step(global_shared: np.ndarray, averaged: np.ndarray, eta: float) -> np.ndarray:
    """theta - eta * (theta - average); eta == 1 is plain weight averaging"""
    if eta == 1.0:
        return averaged
    return global_shared - eta * (global_shared - averaged)


class FedAvgOrchestrator:
    """Runs synchronous rounds; a failing client aborts the round with nothing changed"""

    def __init__(self):
        self.aggregation_calls = 0
        self.history: List[np.ndarray] = []

    def initial_state(self, clients: Sequence[BuildingClient], eta: float = 1.0) -> RoundState:
        ordered = sorted(clients, key=lambda c: c.client_id)
        if not ordered:
            raise ContractViolation("Federation needs at least one client")
        state = RoundState(0, ordered[0].shared_values(),
                           {c.client_id: c.personal_values() for c in ordered}, eta)
        self.history = [state.global_shared.copy()]
        return state

    def run_round(self, state: RoundState, clients: Sequence[BuildingClient],
                  local_updates: int) -> Tuple[RoundState, RoundSummary]:
        ordered = sorted(clients, key=lambda c: c.client_id)
        snapshots = {c.client_id: c.snapshot() for c in ordered}
        local: Dict[int, LocalRound] = {}

        current = None
        try:
            for client in ordered:
                current = client.client_id
                client.load_shared(state.global_shared)
                local[client.client_id] = client.local_round(state.round, local_updates)
            current = None
            averaged = aggregate([r.update for r in local.values()])
        except Exception as e:
            for client in ordered:
                client.restore(snapshots[client.client_id])
            culprit = current if current is not None else -1
            logger.warning(f"⚠️ Round {state.round} aborted: {str(e)}")
            raise RoundAbortedError(state.round, culprit, e) from e

        self.aggregation_calls += 1
        new_shared = apply_server_step(state.global_shared, averaged, state.eta)
        for client in ordered:
            client.load_shared(new_shared)
        self.history.append(new_shared.copy())

        new_state = RoundState(
            round=state.round + 1,
            global_shared=new_shared,
            client_personal={c.client_id: c.personal_values() for c in ordered},
            eta=state.eta,
        )
        summary = RoundSummary(state.round, local)
        logger.info(f"Round {state.round} aggregated {len(ordered)} clients, "
                    f"mean train reward {summary.mean_reward:.3f}")
        return new_state, summary
