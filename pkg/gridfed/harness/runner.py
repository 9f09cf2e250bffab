"""
Experiment runner - trains one variant over every seed and writes CSVs and checkpoints
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from gridfed.core.io import write_csv_atomic
from gridfed.core.seeding import INIT_PERSONAL, INIT_SHARED, make_rng
from gridfed.core.settings import ExperimentConfig, Variant
from gridfed.fed.client import BuildingClient, LocalRound
from gridfed.fed.orchestrator import FedAvgOrchestrator
from gridfed.harness.evaluation import RoundMetrics, evaluate_round
from gridfed.nn.checkpoint import save_checkpoint
from gridfed.policy.actor_critic import PersonalizedActorCritic

logger = logging.getLogger(__name__)

METRICS_COLUMNS = ["variant", "seed", "round", "building", "reward", "emission", "cost"]
UPDATE_COLUMNS = ["round", "client", "accepted", "kl", "surrogate_gain", "backtracks",
                  "value_loss_before", "value_loss_after"]


def build_model(config: ExperimentConfig, seed: int, building_id: int,
                personalized: bool) -> PersonalizedActorCritic:
    """Shared layers from the seed's shared stream, encoder from the building's own stream"""
    return PersonalizedActorCritic.build(config.model,
                                         shared_rng=make_rng(seed, INIT_SHARED),
                                         personal_rng=make_rng(seed, INIT_PERSONAL, building_id),
                                         personalized=personalized)


def build_client(config: ExperimentConfig, seed: int, building_id: int,
                 variant: Optional[Variant] = None) -> BuildingClient:
    variant = variant or config.variant
    building = config.scenario.buildings[building_id]
    model = build_model(config, seed, building_id, variant.personalized)
    noise = config.scenario.noise_for(variant.train_phase)
    return BuildingClient(building, model, config.scenario, noise, seed,
                          trpo_config=config.trpo, env_config=config.env)


def build_clients(config: ExperimentConfig, seed: int,
                  variant: Optional[Variant] = None) -> List[BuildingClient]:
    return [build_client(config, seed, b.building_id, variant) for b in config.scenario.buildings]


def initial_shared(config: ExperimentConfig, seed: int,
                   variant: Optional[Variant] = None) -> np.ndarray:
    """Global Shared parameters before round 0 (those of building 0's model)"""
    return build_client(config, seed, 0, variant).shared_values()


def update_rows(round_number: int, client_id: int, local: LocalRound) -> List[dict]:
    return [
        {
            "round": round_number,
            "client": client_id,
            "accepted": int(r.accepted),
            "kl": r.kl,
            "surrogate_gain": r.surrogate_gain,
            "backtracks": r.backtracks,
            "value_loss_before": r.value_loss_before,
            "value_loss_after": r.value_loss_after,
        }
        for r in local.reports
    ]


def metrics_rows(variant: Variant, seed: int, metrics: RoundMetrics) -> List[dict]:
    return [
        {
            "variant": variant.value,
            "seed": seed,
            "round": metrics.round,
            "building": b.building,
            "reward": b.reward,
            "emission": b.emission,
            "cost": b.cost,
        }
        for b in metrics.buildings
    ]


def checkpoint_path(out_dir: Path, variant: Variant, seed: int, building_id: int) -> Path:
    return out_dir / "checkpoints" / variant.value / f"seed{seed}" / f"building{building_id}.gfnn"


@dataclass
class SeedRun:
    seed: int
    metrics: List[RoundMetrics] = field(default_factory=list)
    updates: List[dict] = field(default_factory=list)
    aggregation_calls: int = 0
    clients: List[BuildingClient] = field(default_factory=list)
    global_history: List[np.ndarray] = field(default_factory=list)


@dataclass
class RunResult:
    variant: Variant
    metrics: pd.DataFrame
    seeds: Dict[int, SeedRun]
    paths: List[Path]

    @property
    def aggregation_calls(self) -> int:
        return sum(run.aggregation_calls for run in self.seeds.values())


class ExperimentRunner:
    """In-process training of one variant"""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.variant = config.variant

    def _evaluate(self, round_number: int, seed: int, clients: List[BuildingClient]) -> RoundMetrics:
        return evaluate_round(round_number, [(c.building, c.model) for c in clients],
                              self.config.scenario, self.config.eval_episodes, seed,
                              self.config.env)

    def run_seed(self, seed: int) -> SeedRun:
        cfg = self.config
        clients = build_clients(cfg, seed, self.variant)
        run = SeedRun(seed=seed, clients=clients)
        logger.info(f"Training {self.variant.label} seed {seed}: {len(clients)} buildings, "
                    f"{cfg.rounds} rounds")

        orchestrator = FedAvgOrchestrator() if self.variant.federated else None
        state = orchestrator.initial_state(clients, cfg.fed.eta) if orchestrator else None

        for r in range(cfg.rounds):
            if orchestrator is not None:
                state, summary = orchestrator.run_round(state, clients, cfg.fed.local_updates)
                local = summary.local
            else:
                local = {c.client_id: c.local_round(r, cfg.fed.local_updates) for c in clients}

            round_number = r + 1
            for cid in sorted(local):
                run.updates.extend(update_rows(round_number, cid, local[cid]))
            if round_number % cfg.eval_every == 0:
                run.metrics.append(self._evaluate(round_number, seed, clients))

        if orchestrator is not None:
            run.aggregation_calls = orchestrator.aggregation_calls
            run.global_history = orchestrator.history
        return run

    def write_seed(self, run: SeedRun, out_dir: Path) -> List[Path]:
        paths = [write_csv_atomic(out_dir / f"updates_{self.variant.value}_seed{run.seed}.csv",
                                  pd.DataFrame(run.updates, columns=UPDATE_COLUMNS))]
        for client in run.clients:
            path = checkpoint_path(out_dir, self.variant, run.seed, client.client_id)
            paths.append(save_checkpoint(path, client.model.get_params()))
        return paths

    def run(self, out_dir: Optional[Path] = None) -> RunResult:
        out_dir = Path(out_dir or self.config.out_dir)
        seeds: Dict[int, SeedRun] = {}
        rows: List[dict] = []
        paths: List[Path] = []
        for seed in self.config.seeds:
            run = self.run_seed(seed)
            seeds[seed] = run
            for metrics in run.metrics:
                rows.extend(metrics_rows(self.variant, seed, metrics))
            paths.extend(self.write_seed(run, out_dir))

        frame = pd.DataFrame(rows, columns=METRICS_COLUMNS)
        metrics_path = write_csv_atomic(out_dir / f"metrics_{self.variant.value}.csv", frame)
        paths.insert(0, metrics_path)
        logger.info(f"✅ {self.variant.label} finished, metrics in {metrics_path}")
        return RunResult(self.variant, frame, seeds, paths)


def run_variant(config: ExperimentConfig, out_dir: Optional[Path] = None) -> RunResult:
    return ExperimentRunner(config).run(out_dir)
