"""
GridFed CLI - generate-data, train, evaluate and plot
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd
import uvicorn
from pydantic import ValidationError

from gridfed.core.errors import GridFedError
from gridfed.core.io import write_csv_atomic
from gridfed.core.logging_setup import configure_logging
from gridfed.core.settings import ExperimentConfig, Mode, Settings, Variant, load_settings
from gridfed.env.trace import write_trace
from gridfed.fed.app import create_app
from gridfed.fed.server import FederationClientSession, FederationServer
from gridfed.fed.transport import run_websocket_client
from gridfed.harness.data_dump import dump_scenario
from gridfed.harness.evaluation import RoundMetrics, evaluate_with_traces
from gridfed.harness.plotting import plot
from gridfed.harness.runner import (METRICS_COLUMNS, UPDATE_COLUMNS, build_client, build_model,
                                    checkpoint_path, initial_shared, metrics_rows, run_variant,
                                    update_rows)
from gridfed.nn.checkpoint import load_checkpoint, save_checkpoint

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridfed",
                                     description="Federated TRPO for building microgrids")
    parser.add_argument("--config", help="settings YAML (default config/settings.yaml)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, help="run a single seed")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate-data", help="dump generated scenario series to CSV")
    gen.add_argument("--episode", type=int, default=0, help="episode index to dump")
    gen.add_argument("--compare", action="store_true",
                     help="also write per-building train/test solar and load envelopes")
    gen.add_argument("--episodes", type=int, default=50,
                     help="episodes sampled for --compare")

    train = sub.add_parser("train", help="train one variant (or all)")
    train.add_argument("--variant", default=None, help="upperbound|ind_agent|fl|fl_personalization|all")
    train.add_argument("--rounds", type=int)
    train.add_argument("--local-updates", type=int)
    train.add_argument("--mode", choices=[m.value for m in Mode])
    train.add_argument("--listen", help="host:port for the federation server")
    train.add_argument("--connect", help="server address host:port or ws:// URL")
    train.add_argument("--client-id", type=int, help="building id when running as a client")

    ev = sub.add_parser("evaluate", help="reload checkpoints and recompute test metrics")
    ev.add_argument("--variant", default=None)
    ev.add_argument("--episodes", type=int, help="test episodes per building")
    ev.add_argument("--trace", help="write hour-by-hour env trace CSV of the first episode")

    pl = sub.add_parser("plot", help="render SVG learning curves")
    pl.add_argument("metrics", nargs="*", help="metrics CSVs (default <out>/metrics_*.csv)")
    return parser


def experiment_from_args(settings: Settings, args: argparse.Namespace,
                         variant: Optional[Variant] = None) -> ExperimentConfig:
    """Apply CLI overrides and re-validate"""
    data = settings.experiment.model_dump()
    if variant is not None:
        data["variant"] = variant
    if args.seed is not None:
        data["seeds"] = [args.seed]
    if args.out:
        data["out_dir"] = args.out
    if getattr(args, "rounds", None) is not None:
        data["rounds"] = args.rounds
        data["eval_every"] = min(data["eval_every"], args.rounds)
    fed = data["fed"]
    if getattr(args, "local_updates", None) is not None:
        fed["local_updates"] = args.local_updates
    if getattr(args, "mode", None):
        fed["mode"] = args.mode
    if getattr(args, "listen", None):
        fed["listen"] = args.listen
    if getattr(args, "connect", None):
        fed["connect"] = args.connect
    return ExperimentConfig(**data)


def _variants(text: Optional[str], settings: Settings) -> List[Variant]:
    if text is None:
        return [settings.experiment.variant]
    if text.lower() == "all":
        return list(Variant)
    return [Variant.parse(text)]


def _ws_url(address: str) -> str:
    if address.startswith(("ws://", "wss://")):
        return address
    return f"ws://{address}/ws/fed"


def cmd_generate_data(settings: Settings, args) -> None:
    cfg = experiment_from_args(settings, args)
    dump_scenario(cfg.scenario, cfg.out_dir, cfg.seeds[0], episode_index=args.episode,
                  compare_episodes=args.episodes if args.compare else 0)


def serve(cfg: ExperimentConfig) -> FederationServer:
    """Run the federation server until every round is aggregated"""
    seed = cfg.seeds[0]
    server = FederationServer(initial_shared(cfg, seed), len(cfg.scenario.buildings),
                              cfg.rounds, cfg.fed.eta)
    host, _, port = cfg.fed.listen.rpartition(":")
    uv_holder = {}
    app = create_app(server, on_finished=lambda: setattr(uv_holder["server"], "should_exit", True))
    uv_holder["server"] = uvicorn.Server(
        uvicorn.Config(app, host=host or "127.0.0.1", port=int(port), log_level="info"))
    logger.info(f"Serving federation for {cfg.variant.label} seed {seed} on {cfg.fed.listen}")
    uv_holder["server"].run()
    if server.aborted is not None:
        raise server.aborted
    return server


def run_client(cfg: ExperimentConfig, client_id: int, url: str) -> Path:
    """Train one building against a remote server, evaluate and write its own outputs"""
    seed = cfg.seeds[0]
    client = build_client(cfg, seed, client_id)
    out_dir = Path(cfg.out_dir)
    metrics: List[RoundMetrics] = []
    updates: List[dict] = []

    def on_round_done(round_index: int, local) -> None:
        round_number = round_index + 1
        if local is not None:
            updates.extend(update_rows(round_number, client_id, local))
        if round_number % cfg.eval_every == 0:
            m, _ = evaluate_with_traces(client.model, client.building, cfg.scenario,
                                        cfg.eval_episodes, seed, cfg.env, round_number)
            metrics.append(RoundMetrics(round_number, [m]))
            logger.info(f"Client {client_id} round {round_number} test reward {m.reward:.3f}")

    session = FederationClientSession(client, cfg.fed.local_updates, on_round_done)
    run_websocket_client(url, session)

    rows = [row for m in metrics for row in metrics_rows(cfg.variant, seed, m)]
    suffix = f"{cfg.variant.value}_seed{seed}_building{client_id}"
    write_csv_atomic(out_dir / f"updates_{suffix}.csv", pd.DataFrame(updates, columns=UPDATE_COLUMNS))
    save_checkpoint(checkpoint_path(out_dir, cfg.variant, seed, client_id), client.model.get_params())
    return write_csv_atomic(out_dir / f"metrics_{suffix}.csv",
                            pd.DataFrame(rows, columns=METRICS_COLUMNS))


def cmd_train(settings: Settings, args) -> None:
    for variant in _variants(args.variant, settings):
        cfg = experiment_from_args(settings, args, variant)
        if cfg.fed.mode == Mode.IN_PROCESS:
            run_variant(cfg)
        elif args.client_id is not None:
            address = cfg.fed.connect or settings.server_url or cfg.fed.listen
            run_client(cfg, args.client_id, _ws_url(address))
        else:
            serve(cfg)


def cmd_evaluate(settings: Settings, args) -> None:
    for variant in _variants(args.variant, settings):
        cfg = experiment_from_args(settings, args, variant)
        episodes = args.episodes or cfg.eval_episodes
        out_dir = Path(cfg.out_dir)
        rows, traces = [], []
        for seed in cfg.seeds:
            result = RoundMetrics(cfg.rounds)
            for building in cfg.scenario.buildings:
                model = build_model(cfg, seed, building.building_id, variant.personalized)
                model.set_params(load_checkpoint(
                    checkpoint_path(out_dir, variant, seed, building.building_id)))
                m, episode_records = evaluate_with_traces(model, building, cfg.scenario,
                                                          episodes, seed, cfg.env, cfg.rounds)
                result.buildings.append(m)
                if seed == cfg.seeds[0]:
                    traces.append((building.building_id, episode_records[0]))
            rows.extend(metrics_rows(variant, seed, result))
            logger.info(f"{variant.label} seed {seed}: test reward {result.mean_reward:.3f}")
        write_csv_atomic(out_dir / f"eval_{variant.value}.csv",
                         pd.DataFrame(rows, columns=METRICS_COLUMNS))
        if args.trace:
            write_trace(args.trace, traces)


def cmd_plot(settings: Settings, args) -> None:
    out_dir = Path(args.out or settings.experiment.out_dir)
    paths = args.metrics or sorted(str(p) for p in out_dir.glob("metrics_*.csv"))
    plot(paths, out_dir / "plots")


COMMANDS = {
    "generate-data": cmd_generate_data,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "plot": cmd_plot,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = load_settings(args.config)
        configure_logging(settings.logging)
        COMMANDS[args.command](settings, args)
    except (GridFedError, ValidationError, OSError) as e:
        logger.error(f"{args.command} failed: {str(e)}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
