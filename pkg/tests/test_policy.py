"""
Unit tests for the Gaussian policy and the personalized actor-critic
"""

import math

import numpy as np
import pytest

from gridfed.nn.params import Partition
from gridfed.policy.actor_critic import ModelConfig, PersonalizedActorCritic
from gridfed.policy.distribution import (PolicyDistribution, gaussian_kl, gaussian_kl_grads,
                                         sample_action)
from gridfed.policy.normalization import denormalize, normalize
from test_nn import relative_error


def random_observations(rng, n):
    return np.column_stack([
        rng.uniform(10, 35, n),       # temperature
        rng.uniform(0.2, 0.9, n),     # humidity
        rng.uniform(0, 1, n),         # soc
        rng.uniform(0, 5, n),         # net consumption
        rng.choice([0.1, 0.2, 0.4], n),
        rng.integers(0, 24, n).astype(float),
    ])


class TestDistribution:
    """Test suite for the Gaussian action distribution"""

    def test_log_prob_at_mode(self):
        """Test log_prob(mean) = -log(std) - log(2 pi)/2"""
        dist = PolicyDistribution(0.2, 0.7)
        assert dist.log_prob(0.2) == pytest.approx(-math.log(0.7) - 0.5 * math.log(2 * math.pi))

    def test_narrow_sample_concentrates(self):
        """Test samples with std at sigma_min stay within 5 std of the mean"""
        rng = np.random.default_rng(0)
        dist = PolicyDistribution(0.3, 0.05)
        for _ in range(100):
            assert abs(sample_action(dist, rng).action - 0.3) <= 5 * 0.05

    def test_sample_mean(self):
        """Test the empirical mean of 1e5 samples is within 3 standard errors"""
        rng = np.random.default_rng(1)
        dist = PolicyDistribution(0.1, 0.4)
        raw = np.array([sample_action(dist, rng).raw_action for _ in range(100_000)])
        assert abs(raw.mean() - 0.1) <= 3 * 0.4 / math.sqrt(raw.size)

    def test_sample_clamps_but_scores_raw(self):
        """Test the env action is clamped while log_prob is taken at the raw draw"""
        rng = np.random.default_rng(2)
        dist = PolicyDistribution(0.95, 1.0)
        for _ in range(200):
            s = sample_action(dist, rng)
            assert -1.0 <= s.action <= 1.0
            assert s.log_prob == pytest.approx(float(dist.log_prob(s.raw_action)))

    def test_kl_identity(self):
        """Test KL of a distribution with itself is zero"""
        d = PolicyDistribution(0.4, 0.3)
        assert gaussian_kl(d, d) == pytest.approx(0.0, abs=1e-15)

    def test_kl_mean_shift(self):
        """Test unit mean shift at unit std gives 0.5"""
        assert gaussian_kl(PolicyDistribution(0.0, 1.0),
                           PolicyDistribution(1.0, 1.0)) == pytest.approx(0.5)

    def test_kl_std_change(self):
        """Test std 1 to 2 gives ln 2 + 1/8 - 1/2"""
        value = gaussian_kl(PolicyDistribution(0.0, 1.0), PolicyDistribution(0.0, 2.0))
        assert value == pytest.approx(math.log(2) + 0.125 - 0.5, abs=1e-6)
        assert value == pytest.approx(0.318147, abs=1e-6)

    def test_kl_grads_match_finite_differences(self):
        """Test KL gradients w.r.t. the new mean and std"""
        rng = np.random.default_rng(3)
        eps = 1e-6
        for _ in range(100):
            old = PolicyDistribution(rng.uniform(-1, 1), rng.uniform(0.1, 1.0))
            m, s = rng.uniform(-1, 1), rng.uniform(0.1, 1.0)
            d_mean, d_std = gaussian_kl_grads(old, PolicyDistribution(m, s))
            num_mean = (gaussian_kl(old, PolicyDistribution(m + eps, s))
                        - gaussian_kl(old, PolicyDistribution(m - eps, s))) / (2 * eps)
            num_std = (gaussian_kl(old, PolicyDistribution(m, s + eps))
                       - gaussian_kl(old, PolicyDistribution(m, s - eps))) / (2 * eps)
            assert relative_error(np.array([d_mean, d_std]),
                                  np.array([num_mean, num_std])) <= 1e-4

    def test_normalization_round_trip(self):
        """Test normalize and denormalize are inverse"""
        obs = random_observations(np.random.default_rng(4), 10)
        assert np.allclose(denormalize(normalize(obs)), obs)


class TestActorCritic:
    """Test suite for PersonalizedActorCritic"""

    @pytest.fixture
    def rng(self):
        return np.random.default_rng(99)

    def test_default_encoding_dimension(self, rng):
        """Test the default encoding has 8 features"""
        model = PersonalizedActorCritic.build(ModelConfig(), rng, rng)
        assert model.encode_personal(random_observations(rng, 1)[0]).shape == (8,)

    def test_zero_encoder_gives_zero_encoding(self, small_model, rng):
        """Test a zero-initialized encoder outputs zeros"""
        small_model.encoder.set_flat(np.zeros(small_model.encoder.param_count))
        assert not small_model.encode_personal(random_observations(rng, 4)).any()

    def test_zero_parameters(self, small_model, rng):
        """Test all-zero parameters give mean 0, value 0, std 1"""
        small_model.set_flat(np.zeros(small_model.param_count))
        dist, value = small_model.policy_and_value(random_observations(rng, 1)[0])
        assert dist.mean == 0.0
        assert value == 0.0
        assert dist.std == 1.0

    def test_mean_inside_unit_interval(self, small_model, rng):
        """Test tanh keeps the mean strictly inside (-1, 1)"""
        for _ in range(200):
            small_model.set_flat(rng.normal(0, 1.0, small_model.param_count))
            dist = small_model.distribution(random_observations(rng, 50))
            assert np.all(np.abs(dist.mean) < 1.0)

    def test_std_is_clamped(self, small_model):
        """Test std stays within [sigma_min, sigma_max]"""
        small_model.log_std = 5.0
        assert small_model.std == small_model.config.sigma_max
        small_model.log_std = -10.0
        assert small_model.std == small_model.config.sigma_min

    def test_log_prob_plus_value_gradient(self, small_model, rng):
        """Test d(log_prob + value)/d(theta) against central differences"""
        eps = 1e-6
        for _ in range(100):
            small_model.set_flat(rng.normal(0, 0.5, small_model.param_count))
            small_model.log_std = float(rng.uniform(np.log(0.1), np.log(0.9)))
            obs = random_observations(rng, 3)
            actions = rng.normal(0, 0.5, 3)

            def objective():
                dist, value = small_model.policy_and_value(obs)
                return float(np.sum(dist.log_prob(actions)) + np.sum(value))

            dist = small_model.distribution(obs)
            d_mean, d_std = dist.log_prob_grads(actions)
            analytic = small_model.gradient(obs, d_mean, float(np.sum(d_std)), np.ones(3))

            theta = small_model.get_flat()
            numeric = np.zeros_like(theta)
            for i in range(theta.size):
                bump = np.zeros_like(theta)
                bump[i] = eps
                small_model.set_flat(theta + bump)
                plus = objective()
                small_model.set_flat(theta - bump)
                minus = objective()
                numeric[i] = (plus - minus) / (2 * eps)
            small_model.set_flat(theta)
            assert relative_error(analytic, numeric) <= 1e-4

    def test_value_gradient_only_touches_value_row(self, small_model, rng):
        """Test value-loss gradient is zero outside the value output row"""
        obs = random_observations(rng, 8)
        _, grad = small_model.value_loss_and_grad(obs, rng.normal(size=8))
        mask = np.ones(small_model.param_count, dtype=bool)
        mask[small_model.value_indices] = False
        assert not grad[mask].any()
        assert grad[small_model.value_indices].any()

    def test_value_update_keeps_policy(self, small_model, rng):
        """Test moving along the value gradient leaves the policy mean unchanged"""
        obs = random_observations(rng, 8)
        before = small_model.distribution(obs).mean
        _, grad = small_model.value_loss_and_grad(obs, rng.normal(size=8))
        small_model.set_flat(small_model.get_flat() - 0.1 * grad)
        assert np.array_equal(before, small_model.distribution(obs).mean)

    def test_partition_counts(self, small_model_config, rng):
        """Test Personal covers the encoder only, and FL models have none"""
        personal = PersonalizedActorCritic.build(small_model_config, rng, rng, personalized=True)
        shared_only = PersonalizedActorCritic.build(small_model_config, rng, rng,
                                                    personalized=False)
        assert personal.layout.count(Partition.PERSONAL) == personal.encoder.param_count
        assert (personal.layout.count(Partition.PERSONAL)
                + personal.layout.count(Partition.SHARED)) == personal.param_count
        assert shared_only.layout.count(Partition.PERSONAL) == 0

    def test_swapping_personal_parts(self, small_model_config):
        """Test identical Shared parts with swapped Personal parts behave like the donor"""
        a = PersonalizedActorCritic.build(small_model_config, np.random.default_rng(0),
                                          np.random.default_rng(10))
        b = PersonalizedActorCritic.build(small_model_config, np.random.default_rng(0),
                                          np.random.default_rng(11))
        obs = random_observations(np.random.default_rng(5), 6)
        assert np.array_equal(a.shared_values(), b.shared_values())
        assert not np.allclose(a.encode_personal(obs), b.encode_personal(obs))

        personal_b = b.get_params().restrict(Partition.PERSONAL)
        a.set_params(a.get_params().with_partition(Partition.PERSONAL, personal_b))
        assert np.array_equal(a.encode_personal(obs), b.encode_personal(obs))
        dist_a, value_a = a.policy_and_value(obs)
        dist_b, value_b = b.policy_and_value(obs)
        assert np.array_equal(dist_a.mean, dist_b.mean)
        assert np.array_equal(value_a, value_b)

    def test_deterministic_act_uses_mean(self, small_model, rng):
        """Test deterministic acting returns the policy mean"""
        obs = random_observations(rng, 1)[0]
        raw, _, _ = small_model.act(obs, rng, deterministic=True)
        assert raw == small_model.distribution(obs).mean
