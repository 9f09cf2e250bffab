"""
Settings - YAML configuration with environment overrides
"""

import logging
import os
from enum import Enum
from pathlib import Path
from typing import List, Optional

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from gridfed.core.errors import ConfigError
from gridfed.env.microgrid import EnvConfig
from gridfed.policy.actor_critic import ModelConfig
from gridfed.scenario.models import Phase, ScenarioConfig
from gridfed.trpo.optimizer import TrpoConfig

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = Path("config/settings.yaml")


class Variant(str, Enum):
    UPPERBOUND = "upperbound"
    IND_AGENT = "ind_agent"
    FL = "fl"
    FL_PERSONALIZATION = "fl_personalization"

    @classmethod
    def parse(cls, text: str) -> "Variant":
        key = text.strip().lower().replace("-", "_").replace(" ", "_").replace(".", "")
        aliases = {"indagent": cls.IND_AGENT, "flpersonalization": cls.FL_PERSONALIZATION}
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"Unknown variant {text!r}; expected one of "
                              f"{[v.value for v in cls]}") from None

    @property
    def label(self) -> str:
        return {
            Variant.UPPERBOUND: "Upperbound",
            Variant.FL: "FL",
            Variant.IND_AGENT: "Ind. Agent",
            Variant.FL_PERSONALIZATION: "FL Personalization",
        }[self]

    @property
    def federated(self) -> bool:
        return self in (Variant.FL, Variant.FL_PERSONALIZATION)

    @property
    def personalized(self) -> bool:
        """FL shares every parameter; the others keep the encoder Personal"""
        return self != Variant.FL

    @property
    def train_phase(self) -> Phase:
        return Phase.TEST if self == Variant.UPPERBOUND else Phase.TRAIN


class Mode(str, Enum):
    IN_PROCESS = "in-process"
    NETWORKED = "networked"


class FedConfig(BaseModel):
    """Federation round settings"""
    mode: Mode = Mode.IN_PROCESS
    listen: str = "127.0.0.1:8765"
    connect: Optional[str] = None
    local_updates: int = Field(1, ge=0)
    eta: float = 1.0

    @field_validator("eta")
    @classmethod
    def _pinned_eta(cls, v: float) -> float:
        if v != 1.0:
            raise ValueError("Server step size is fixed at 1 (weight averaging)")
        return v


class LoggingConfig(BaseModel):
    level: str = "INFO"
    file: Optional[str] = "logs/gridfed.log"
    max_size: int = Field(10, gt=0)  # MB
    backup_count: int = Field(5, ge=0)


class ExperimentConfig(BaseModel):
    """One experiment: variant, seeds, schedule and every component config"""
    variant: Variant = Variant.FL_PERSONALIZATION
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    rounds: int = Field(200, gt=0)
    eval_every: int = 10
    eval_episodes: int = Field(20, gt=0)
    out_dir: str = "results"
    scenario: ScenarioConfig = Field(default_factory=ScenarioConfig)
    env: EnvConfig = Field(default_factory=EnvConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    trpo: TrpoConfig = Field(default_factory=TrpoConfig)
    fed: FedConfig = Field(default_factory=FedConfig)

    @field_validator("variant", mode="before")
    @classmethod
    def _parse_variant(cls, v):
        if not isinstance(v, str):
            return v
        try:
            return Variant.parse(v)
        except ConfigError as e:
            raise ValueError(str(e)) from e

    @model_validator(mode="after")
    def _check_schedule(self) -> "ExperimentConfig":
        if not self.seeds:
            raise ValueError("seeds must not be empty")
        if any(s < 0 for s in self.seeds):
            raise ValueError("seeds must be non-negative")
        if not 1 <= self.eval_every <= self.rounds:
            raise ValueError(f"eval_every must be in [1, {self.rounds}]")
        return self


class Settings(BaseModel):
    experiment: ExperimentConfig = Field(default_factory=ExperimentConfig)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)
    server_url: Optional[str] = None


def _read_yaml(path: Path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"Malformed config file {path}: {str(e)}") from e
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {str(e)}") from e
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"Config file {path} must contain a mapping")
    return raw


def load_settings(path: Optional[str] = None) -> Settings:
    """Read settings.yaml (or GRIDFED_CONFIG), apply env overrides, validate"""
    load_dotenv()
    config_path = Path(path or os.getenv("GRIDFED_CONFIG", str(DEFAULT_CONFIG_PATH)))
    if config_path.exists():
        raw = _read_yaml(config_path)
        logger.info(f"Loaded settings from {config_path}")
    else:
        logger.warning(f"⚠️ {config_path} not found, using defaults")
        raw = {}

    experiment = dict(raw.get("experiment") or {})
    for section in ("scenario", "env", "model", "trpo", "fed"):
        if raw.get(section) is not None:
            experiment[section] = raw[section]
    log_cfg = dict(raw.get("logging") or {})

    if os.getenv("GRIDFED_OUT_DIR"):
        experiment["out_dir"] = os.getenv("GRIDFED_OUT_DIR")
    if os.getenv("GRIDFED_LOG_LEVEL"):
        log_cfg["level"] = os.getenv("GRIDFED_LOG_LEVEL")
    server_url = os.getenv("GRIDFED_SERVER_URL")

    try:
        return Settings(experiment=experiment, logging=log_cfg, server_url=server_url)
    except ValidationError as e:
        raise ConfigError(f"Invalid settings in {config_path}: {str(e)}") from e
