"""
TRPO Optimizer - KL-constrained policy step plus value regression

One update:
    g  = grad of the importance-weighted surrogate at theta_k
    x  = CG solve of F x = g with F the damped Fisher (mean-KL Hessian)
    beta = sqrt(2 * kl_bound / x^T F x)
    try theta_k + beta * backtrack_coeff^j * x for j = 0..max_backtracks,
    accept the first candidate that improves the surrogate within the KL bound,
    otherwise restore theta_k exactly.
The value output row is then fitted to the GAE returns by plain gradient descent.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Protocol, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

from gridfed.core.errors import ContractViolation, NumericalFailure
from gridfed.nn.params import ParamVector
from gridfed.policy.distribution import PolicyDistribution, gaussian_kl, gaussian_kl_grads
from gridfed.trpo.batch import AdvantageSet, EpisodeBatch
from gridfed.trpo.cg import conjugate_gradient
from gridfed.trpo.gae import compute_gae

logger = logging.getLogger(__name__)

FVP_BASE_EPS = 1e-5


class TrpoConfig(BaseModel):
    """Trust-region and value-fit hyperparameters"""
    kl_bound: float = Field(0.01, gt=0.0)
    cg_iters: int = Field(10, gt=0)
    cg_damping: float = Field(0.1, gt=0.0)
    backtrack_coeff: float = Field(0.8, gt=0.0, lt=1.0)
    max_backtracks: int = Field(10, gt=0)
    value_epochs: int = Field(5, ge=0)
    value_lr: float = Field(1e-3, gt=0.0)
    gamma: float = Field(0.99, ge=0.0, le=1.0)
    gae_lambda: float = Field(0.95, ge=0.0, le=1.0)
    episodes_per_update: int = Field(16, gt=0)

    @model_validator(mode="after")
    def _check(self) -> "TrpoConfig":
        if self.value_epochs > 0 and self.value_lr <= 0:
            raise ValueError("value_lr must be positive when fitting values")
        return self


class TrpoPolicy(Protocol):
    """What the optimizer needs from a model"""

    def get_flat(self) -> np.ndarray: ...

    def set_flat(self, values: np.ndarray) -> None: ...

    def distribution(self, observations: np.ndarray) -> PolicyDistribution: ...

    def policy_grad(self, observations: np.ndarray, d_mean: np.ndarray, d_std) -> np.ndarray: ...

    def value_loss_and_grad(self, observations: np.ndarray,
                            returns: np.ndarray) -> Tuple[float, np.ndarray]: ...


@dataclass(frozen=True)
class UpdateReport:
    accepted: bool
    kl: float
    surrogate_gain: float
    backtracks: int
    value_loss_before: float
    value_loss_after: float
    cg_residual: float = 0.0


def _reference_log_probs(model: TrpoPolicy, old_params: Optional[ParamVector],
                         batch: EpisodeBatch) -> np.ndarray:
    if old_params is None:
        return batch.log_probs_old
    current = model.get_flat()
    try:
        model.set_flat(old_params.values)
        return np.asarray(model.distribution(batch.observations).log_prob(batch.actions))
    finally:
        model.set_flat(current)


def _surrogate_value(model: TrpoPolicy, batch: EpisodeBatch, adv: AdvantageSet,
                     log_probs_old: np.ndarray) -> Tuple[float, np.ndarray, PolicyDistribution]:
    dist = model.distribution(batch.observations)
    ratio = np.exp(dist.log_prob(batch.actions) - log_probs_old)
    if not np.all(np.isfinite(ratio)):
        raise NumericalFailure("Non-finite importance ratio in surrogate")
    return float(np.mean(ratio * adv.advantages)), ratio, dist


def surrogate_loss(model: TrpoPolicy, old_params: Optional[ParamVector], batch: EpisodeBatch,
                   adv: AdvantageSet) -> Tuple[float, np.ndarray]:
    """Surrogate mean(pi/pi_old * A) and its gradient w.r.t. the model's flat parameters

    Reference log-probs come from ``old_params`` when given, else from the batch.
    """
    log_probs_old = _reference_log_probs(model, old_params, batch)
    value, ratio, dist = _surrogate_value(model, batch, adv, log_probs_old)
    coef = ratio * adv.advantages / batch.size
    d_mean, d_std = dist.log_prob_grads(batch.actions)
    grad = model.policy_grad(batch.observations, coef * d_mean, float(np.sum(coef * d_std)))
    return value, grad


def mean_kl(model: TrpoPolicy, old_dist: PolicyDistribution, observations: np.ndarray) -> float:
    return float(np.mean(gaussian_kl(old_dist, model.distribution(observations))))


def _kl_grad(model: TrpoPolicy, old_dist: PolicyDistribution, observations: np.ndarray) -> np.ndarray:
    new = model.distribution(observations)
    n = len(observations)
    d_mean, d_std = gaussian_kl_grads(old_dist, new)
    d_mean = np.broadcast_to(d_mean, (n,)) / n
    return model.policy_grad(observations, d_mean, float(np.sum(np.broadcast_to(d_std, (n,)))) / n)


def fisher_vector_product(model: TrpoPolicy, batch: EpisodeBatch, v: np.ndarray, damping: float,
                          old_dist: Optional[PolicyDistribution] = None) -> np.ndarray:
    """(Hessian of mean KL at the current parameters) @ v + damping * v, by central differences"""
    theta = model.get_flat()
    v = np.asarray(v, dtype=np.float64)
    if v.shape != theta.shape:
        raise ContractViolation(f"Direction has {v.size} entries, model has {theta.size}")
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        return np.zeros_like(v)
    if old_dist is None:
        old_dist = model.distribution(batch.observations)

    eps = FVP_BASE_EPS / norm
    try:
        model.set_flat(theta + eps * v)
        g_plus = _kl_grad(model, old_dist, batch.observations)
        model.set_flat(theta - eps * v)
        g_minus = _kl_grad(model, old_dist, batch.observations)
    finally:
        model.set_flat(theta)

    product = (g_plus - g_minus) / (2.0 * eps) + damping * v
    if not np.all(np.isfinite(product)):
        raise NumericalFailure("Non-finite Fisher-vector product")
    return product


def fit_value(model: TrpoPolicy, observations: np.ndarray, returns: np.ndarray,
              epochs: int, lr: float) -> Tuple[float, float]:
    """Full-batch gradient descent on the value MSE; returns (loss before, loss after)"""
    loss_before, grad = model.value_loss_and_grad(observations, returns)
    loss = loss_before
    for _ in range(epochs):
        model.set_flat(model.get_flat() - lr * grad)
        loss, grad = model.value_loss_and_grad(observations, returns)
    return loss_before, loss


def trpo_update(model: TrpoPolicy, batch: EpisodeBatch, config: TrpoConfig) -> UpdateReport:
    """One trust-region policy step followed by value regression"""
    obs = batch.observations
    theta_k = model.get_flat()
    old_dist = model.distribution(obs)
    adv = compute_gae(batch)

    accepted, kl, gain, backtracks, residual = False, 0.0, 0.0, 0, 0.0
    try:
        base, grad = surrogate_loss(model, None, batch, adv)
        if not np.all(np.isfinite(grad)):
            raise NumericalFailure("Non-finite surrogate gradient")

        if np.any(grad != 0.0):
            fvp = lambda v: fisher_vector_product(model, batch, v, config.cg_damping, old_dist)
            solution = conjugate_gradient(fvp, grad, config.cg_iters,
                                          tol=1e-6 * float(np.linalg.norm(grad)))
            residual = solution.residual
            direction = solution.x
            curvature = float(direction @ fvp(direction))
            if not np.isfinite(curvature) or curvature <= 0.0:
                raise NumericalFailure(f"Step curvature is {curvature}")
            step_size = np.sqrt(2.0 * config.kl_bound / curvature)

            for j in range(config.max_backtracks + 1):
                model.set_flat(theta_k + step_size * config.backtrack_coeff ** j * direction)
                value, _, _ = _surrogate_value(model, batch, adv, batch.log_probs_old)
                candidate_kl = mean_kl(model, old_dist, obs)
                improvement = value - base
                if (np.isfinite(candidate_kl) and np.isfinite(improvement)
                        and improvement > 0.0 and candidate_kl <= config.kl_bound):
                    accepted, kl, gain, backtracks = True, candidate_kl, improvement, j
                    break
            else:
                backtracks = config.max_backtracks
    except NumericalFailure as e:
        logger.error(f"TRPO step failed, restoring parameters: {str(e)}")
        accepted = False

    if not accepted:
        model.set_flat(theta_k)
        kl, gain = 0.0, 0.0
        logger.warning(f"⚠️ Policy step rejected after {backtracks} backtracks")

    loss_before, loss_after = fit_value(model, obs, adv.returns,
                                        config.value_epochs, config.value_lr)
    return UpdateReport(accepted=accepted, kl=kl, surrogate_gain=gain, backtracks=backtracks,
                        value_loss_before=loss_before, value_loss_after=loss_after,
                        cg_residual=residual)
