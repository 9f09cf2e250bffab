"""
Personalized Actor-Critic - personal encoder feeding a shared policy/value network

    encoding  = personal_encoder(all 6 normalized features)         -> k
    trunk     = shared_trunk(concat(T_norm, H_norm, encoding))      -> 32
    processed = feature_processor(soc, net, price, hour normalized) -> 16
    head      = head(concat(trunk, processed))                      -> (mean_pre, value)
    mean      = tanh(mean_pre);  std = clip(exp(log_std), sigma_min, sigma_max)

Flat parameter order: personal_encoder, shared_trunk, feature_processor,
head, log_std. With ``personalized=False`` the encoder is tagged Shared and
the whole model is averaged by the server.
"""

import copy
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

from gridfed.core.errors import ContractViolation
from gridfed.nn.dense import DenseNet, ForwardCache
from gridfed.nn.params import ParamLayout, ParamVector, Partition, Segment
from gridfed.policy.distribution import PolicyDistribution, sample_action
from gridfed.policy.normalization import normalize

logger = logging.getLogger(__name__)

OBS_DIM = 6
WEATHER_FEATURES = 2


class ModelConfig(BaseModel):
    """Network sizes and exploration bounds"""
    encoding_dim: int = Field(8, gt=0)
    encoder_hidden: List[int] = Field(default_factory=lambda: [32])
    trunk_hidden: List[int] = Field(default_factory=lambda: [64, 32])
    processor_hidden: List[int] = Field(default_factory=lambda: [32, 16])
    head_hidden: List[int] = Field(default_factory=lambda: [32])
    sigma_min: float = Field(0.05, gt=0.0)
    sigma_max: float = Field(1.0, gt=0.0)
    init_log_std: float = math.log(0.5)

    @model_validator(mode="after")
    def _check_sigma(self) -> "ModelConfig":
        if self.sigma_min >= self.sigma_max:
            raise ValueError("sigma_min must be below sigma_max")
        if not self.trunk_hidden or not self.processor_hidden:
            raise ValueError("trunk and processor need at least one layer")
        return self


@dataclass
class _Pass:
    """Intermediates of one batched forward pass"""
    enc: ForwardCache
    trunk: ForwardCache
    proc: ForwardCache
    head: ForwardCache
    mean: np.ndarray
    value: np.ndarray
    encoding: np.ndarray


class PersonalizedActorCritic:
    """Gaussian policy and state value with a client-private encoder"""

    def __init__(self, encoder: DenseNet, trunk: DenseNet, processor: DenseNet, head: DenseNet,
                 log_std: float, config: ModelConfig, personalized: bool = True):
        if encoder.in_dim != OBS_DIM:
            raise ContractViolation(f"Encoder must read {OBS_DIM} features")
        if trunk.in_dim != WEATHER_FEATURES + encoder.out_dim:
            raise ContractViolation("Trunk input must be weather features plus encoding")
        if processor.in_dim != OBS_DIM - WEATHER_FEATURES:
            raise ContractViolation("Processor must read the non-weather features")
        if head.in_dim != trunk.out_dim + processor.out_dim or head.out_dim != 2:
            raise ContractViolation("Head must map trunk+processor outputs to (mean, value)")
        self.encoder = encoder
        self.trunk = trunk
        self.processor = processor
        self.head = head
        self.log_std = float(log_std)
        self.config = config
        self.personalized = personalized
        self.layout = self._build_layout()
        self._value_idx = self._value_indices()

    @classmethod
    def build(cls, config: ModelConfig, shared_rng: np.random.Generator,
              personal_rng: np.random.Generator, personalized: bool = True
              ) -> "PersonalizedActorCritic":
        """Glorot init; shared parts from shared_rng so every client starts identical"""
        k = config.encoding_dim
        enc_sizes = [OBS_DIM, *config.encoder_hidden, k]
        encoder = DenseNet.glorot(enc_sizes, ["tanh"] * (len(enc_sizes) - 1), personal_rng)
        trunk_sizes = [WEATHER_FEATURES + k, *config.trunk_hidden]
        trunk = DenseNet.glorot(trunk_sizes, ["tanh"] * (len(trunk_sizes) - 1), shared_rng)
        proc_sizes = [OBS_DIM - WEATHER_FEATURES, *config.processor_hidden]
        processor = DenseNet.glorot(proc_sizes, ["tanh"] * (len(proc_sizes) - 1), shared_rng)
        head_sizes = [trunk_sizes[-1] + proc_sizes[-1], *config.head_hidden, 2]
        head = DenseNet.glorot(head_sizes,
                               ["tanh"] * (len(head_sizes) - 2) + ["identity"], shared_rng)
        return cls(encoder, trunk, processor, head, config.init_log_std, config, personalized)

    def clone(self) -> "PersonalizedActorCritic":
        return copy.deepcopy(self)

    # -- parameters -----------------------------------------------------

    def _build_layout(self) -> ParamLayout:
        enc_part = Partition.PERSONAL if self.personalized else Partition.SHARED
        tail = ParamLayout([Segment("log_std", 0, 1, Partition.SHARED)])
        return ParamLayout.concat([
            self.encoder.layout("personal_encoder.", enc_part),
            self.trunk.layout("shared_trunk."),
            self.processor.layout("feature_processor."),
            self.head.layout("head."),
            tail,
        ])

    def _value_indices(self) -> np.ndarray:
        """Flat indices of the head's value output row (weights and bias)"""
        last = len(self.head.layers) - 1
        width = self.head.layers[last].in_dim
        w = self.layout.segment(f"head.layer{last}.weight")
        b = self.layout.segment(f"head.layer{last}.bias")
        return np.concatenate([np.arange(w.offset + width, w.offset + 2 * width),
                               [b.offset + 1]]).astype(np.int64)

    @property
    def value_indices(self) -> np.ndarray:
        return self._value_idx.copy()

    @property
    def param_count(self) -> int:
        return self.layout.size

    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.encoder.get_flat(), self.trunk.get_flat(),
                               self.processor.get_flat(), self.head.get_flat(),
                               [self.log_std]])

    def set_flat(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 1 or values.size != self.layout.size:
            raise ContractViolation(
                f"Model has {self.layout.size} parameters, got {values.size}")
        offset = 0
        for net in (self.encoder, self.trunk, self.processor, self.head):
            net.set_flat(values[offset:offset + net.param_count])
            offset += net.param_count
        self.log_std = float(values[offset])

    def get_params(self) -> ParamVector:
        return ParamVector(self.get_flat(), self.layout)

    def set_params(self, params: ParamVector) -> None:
        if params.layout != self.layout:
            raise ContractViolation("Parameter layout does not match this model")
        self.set_flat(params.values)

    def shared_values(self) -> np.ndarray:
        return self.get_params().restrict(Partition.SHARED)

    def load_shared(self, shared: np.ndarray) -> None:
        """Overwrite Shared coordinates, keep Personal ones"""
        self.set_flat(self.get_params().with_partition(Partition.SHARED, shared).values)

    # -- forward --------------------------------------------------------

    @property
    def std(self) -> float:
        return float(np.clip(np.exp(self.log_std), self.config.sigma_min, self.config.sigma_max))

    def _std_slope(self) -> float:
        """d std / d log_std, zero where the clamp is active"""
        raw = math.exp(self.log_std)
        if self.config.sigma_min < raw < self.config.sigma_max:
            return raw
        return 0.0

    @staticmethod
    def _as_batch(observations: np.ndarray) -> Tuple[np.ndarray, bool]:
        obs = np.asarray(observations, dtype=np.float64)
        single = obs.ndim == 1
        if single:
            obs = obs[None, :]
        if obs.ndim != 2 or obs.shape[1] != OBS_DIM:
            raise ContractViolation(f"Observations must have {OBS_DIM} features, got {obs.shape}")
        return obs, single

    def _run(self, obs: np.ndarray) -> _Pass:
        x = normalize(obs)
        encoding, c_enc = self.encoder.forward_cached(x)
        trunk_in = np.concatenate([x[:, :WEATHER_FEATURES], encoding], axis=1)
        trunk_out, c_trunk = self.trunk.forward_cached(trunk_in)
        proc_out, c_proc = self.processor.forward_cached(x[:, WEATHER_FEATURES:])
        head_out, c_head = self.head.forward_cached(np.concatenate([trunk_out, proc_out], axis=1))
        return _Pass(enc=c_enc, trunk=c_trunk, proc=c_proc, head=c_head,
                     mean=np.tanh(head_out[:, 0]), value=head_out[:, 1].copy(),
                     encoding=encoding)

    def _backprop(self, run: _Pass, d_head: np.ndarray, d_log_std: float) -> np.ndarray:
        g_head, d_head_in = self.head.backward_cached(run.head, d_head)
        split = self.trunk.out_dim
        g_proc, _ = self.processor.backward_cached(run.proc, d_head_in[:, split:])
        g_trunk, d_trunk_in = self.trunk.backward_cached(run.trunk, d_head_in[:, :split])
        g_enc, _ = self.encoder.backward_cached(run.enc, d_trunk_in[:, WEATHER_FEATURES:])
        return np.concatenate([g_enc, g_trunk, g_proc, g_head, [d_log_std]])

    def encode_personal(self, observations: np.ndarray) -> np.ndarray:
        obs, single = self._as_batch(observations)
        encoding = self.encoder.forward(normalize(obs))
        return encoding[0] if single else encoding

    def policy_and_value(self, observations: np.ndarray) -> Tuple[PolicyDistribution, np.ndarray]:
        obs, single = self._as_batch(observations)
        run = self._run(obs)
        if single:
            return PolicyDistribution(float(run.mean[0]), self.std), float(run.value[0])
        return PolicyDistribution(run.mean, self.std), run.value

    def distribution(self, observations: np.ndarray) -> PolicyDistribution:
        return self.policy_and_value(observations)[0]

    def values(self, observations: np.ndarray) -> np.ndarray:
        return self.policy_and_value(observations)[1]

    # -- gradients ------------------------------------------------------

    def gradient(self, observations: np.ndarray, d_mean: np.ndarray,
                 d_std: float = 0.0, d_value: Optional[np.ndarray] = None) -> np.ndarray:
        """Flat gradient given upstream grads w.r.t. the tanh mean, std and value"""
        obs, _ = self._as_batch(observations)
        run = self._run(obs)
        n = obs.shape[0]
        d_head = np.zeros((n, 2))
        d_head[:, 0] = np.broadcast_to(d_mean, (n,)) * (1.0 - run.mean ** 2)
        if d_value is not None:
            d_head[:, 1] = np.broadcast_to(d_value, (n,))
        return self._backprop(run, d_head, float(np.sum(d_std)) * self._std_slope())

    def policy_grad(self, observations: np.ndarray, d_mean: np.ndarray, d_std) -> np.ndarray:
        return self.gradient(observations, d_mean, d_std)

    def value_loss_and_grad(self, observations: np.ndarray,
                            returns: np.ndarray) -> Tuple[float, np.ndarray]:
        """MSE of the value output; gradient restricted to the value output row"""
        obs, _ = self._as_batch(observations)
        run = self._run(obs)
        residual = run.value - np.asarray(returns, dtype=np.float64)
        loss = float(np.mean(residual ** 2))
        d_head = np.zeros((obs.shape[0], 2))
        d_head[:, 1] = 2.0 * residual / obs.shape[0]
        full = self._backprop(run, d_head, 0.0)
        grad = np.zeros_like(full)
        grad[self._value_idx] = full[self._value_idx]
        return loss, grad

    # -- acting ---------------------------------------------------------

    def act(self, observation: np.ndarray, rng: Optional[np.random.Generator],
            deterministic: bool = False) -> Tuple[float, float, float]:
        """(raw action, log-prob of raw action, value) for one observation"""
        dist, value = self.policy_and_value(observation)
        if deterministic or rng is None:
            return float(dist.mean), float(dist.log_prob(dist.mean)), float(value)
        drawn = sample_action(dist, rng)
        return drawn.raw_action, drawn.log_prob, float(value)
