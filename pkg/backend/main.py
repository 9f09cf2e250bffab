"""
GridFed - Federation server entry point
Builds the FedAvg server from config/settings.yaml and serves it with uvicorn
"""

import logging

from gridfed.core.logging_setup import configure_logging
from gridfed.core.settings import load_settings
from gridfed.fed.app import create_app
from gridfed.fed.server import FederationServer
from gridfed.harness.runner import initial_shared

settings = load_settings()
configure_logging(settings.logging)
logger = logging.getLogger(__name__)

experiment = settings.experiment
seed = experiment.seeds[0]
federation = FederationServer(
    initial_shared=initial_shared(experiment, seed),
    expected_clients=len(experiment.scenario.buildings),
    rounds=experiment.rounds,
    eta=experiment.fed.eta,
)
app = create_app(federation)
logger.info(f"Federation server ready: {experiment.variant.label}, seed {seed}, "
            f"{federation.expected_clients} clients, {federation.rounds} rounds")

if __name__ == "__main__":
    import uvicorn
    host, _, port = experiment.fed.listen.rpartition(":")
    uvicorn.run(app, host=host or "0.0.0.0", port=int(port))
