"""
Unit tests for local privacy mechanisms
"""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from backend.app.exceptions import CapabilityError, DomainError
from backend.app.services.bandit_core import Environment, RewardDistribution
from backend.app.services.mechanisms import (
    Mechanism,
    MechanismKind,
    corrupt_distribution,
    corrupt_environment,
    flip_probability,
    keep_probability,
    laplace_perturb,
    mechanism_channel,
    pushforward,
    randomized_response,
    rr_debias,
)

LN3 = math.log(3.0)


class TestRandomizedResponse:
    """Test cases for binary randomized response"""

    def test_keep_probability_at_ln3(self):
        """Test that e^eps / (1 + e^eps) is 3/4 at eps = ln 3"""
        assert keep_probability(LN3) == pytest.approx(0.75)
        assert flip_probability(LN3) == pytest.approx(0.25)

    def test_infinite_epsilon_keeps_the_bit(self):
        """Test that eps = inf is the identity"""
        rng = np.random.default_rng(0)
        assert all(randomized_response(1, math.inf, rng) == 1 for _ in range(20))

    def test_rejects_non_binary_input(self):
        """Test that rewards other than 0 and 1 raise DomainError"""
        with pytest.raises(DomainError):
            randomized_response(0.5, 1.0, np.random.default_rng(0))

    def test_rejects_nonpositive_epsilon(self):
        """Test that eps <= 0 raises DomainError"""
        with pytest.raises(DomainError):
            randomized_response(1, 0.0, np.random.default_rng(0))

    def test_empirical_keep_rate(self):
        """Test that the seeded keep rate is close to e^eps / (1 + e^eps)"""
        rng = np.random.default_rng(11)
        kept = sum(randomized_response(1, 1.0, rng) for _ in range(20_000)) / 20_000
        assert kept == pytest.approx(keep_probability(1.0), abs=0.02)

    def test_corrupted_means(self):
        """Test the pushforward of Bernoulli means through randomized response"""
        assert corrupt_distribution(RewardDistribution.bernoulli(0.9), LN3).mean == pytest.approx(0.7)
        assert corrupt_distribution(RewardDistribution.bernoulli(1.0), LN3).mean == pytest.approx(0.75)

    def test_debias_inverts_corruption(self):
        """Test that debiasing recovers the raw mean"""
        assert rr_debias(0.7, LN3) == pytest.approx(0.9)
        assert rr_debias(0.7, math.inf) == 0.7

    def test_corrupt_distribution_needs_binary_support(self):
        """Test that non-binary supports are rejected"""
        with pytest.raises(DomainError):
            corrupt_distribution(RewardDistribution((0.0, 0.5), (0.5, 0.5)), 1.0)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(min_value=0.01, max_value=5.0))
    def test_channel_log_ratio_is_epsilon(self, epsilon):
        """Test that every output's probability ratio across inputs stays within e^eps"""
        _, matrix = mechanism_channel(Mechanism.randomized_response(epsilon))
        ratios = np.abs(np.log(matrix[0] / matrix[1]))
        assert ratios.max() == pytest.approx(epsilon, rel=1e-9)
        np.testing.assert_allclose(matrix.sum(axis=1), 1.0)


class TestMechanism:
    """Test cases for the Mechanism value type"""

    def test_aliases(self):
        """Test that alternative kind names resolve"""
        assert Mechanism("randomized-response", 1.0).kind is MechanismKind.RANDOMIZED_RESPONSE
        assert Mechanism("none").kind is MechanismKind.IDENTITY

    def test_identity_has_infinite_epsilon(self):
        """Test that the identity channel reports eps = inf"""
        assert math.isinf(Mechanism.identity().epsilon)

    def test_dict_round_trip(self):
        """Test that a mechanism survives its JSON form"""
        mechanism = Mechanism.laplace(0.5, sensitivity=2.0)
        assert Mechanism.from_dict(mechanism.to_dict()) == mechanism

    def test_debias_scale(self):
        """Test the confidence-width inflation of each channel"""
        assert Mechanism.randomized_response(1.0).debias_scale == pytest.approx(1.0 / math.tanh(0.5))
        assert Mechanism.laplace(2.0).debias_scale == pytest.approx(2.0)
        assert Mechanism.identity().debias_scale == 1.0

    def test_laplace_has_no_finite_channel(self):
        """Test that Laplace cannot be enumerated"""
        mechanism = Mechanism.laplace(1.0)
        assert not mechanism.is_finite
        with pytest.raises(CapabilityError):
            mechanism.output_distribution(1.0)
        with pytest.raises(CapabilityError):
            corrupt_environment(Environment.from_bernoulli([0.5, 0.5]), mechanism)

    def test_laplace_is_sampled_only(self):
        """Test that the Laplace pushforward keeps only the source mean"""
        corrupted = pushforward(RewardDistribution.bernoulli(0.3), Mechanism.laplace(1.0))
        assert corrupted.sampled_only
        assert corrupted.mean == pytest.approx(0.3)

    def test_laplace_noise_is_centred(self):
        """Test that seeded Laplace noise averages to the input"""
        noisy = laplace_perturb(0.5, 1.0, 1.0, np.random.default_rng(3), size=50_000)
        assert noisy.mean() == pytest.approx(0.5, abs=0.03)
        assert laplace_perturb(0.5, 1.0, math.inf, np.random.default_rng(3)) == 0.5

    def test_laplace_variance(self):
        """Test that unit sensitivity at eps=1 gives variance 2"""
        noisy = laplace_perturb(0.0, 1.0, 1.0, np.random.default_rng(8), size=100_000)
        assert noisy.var() == pytest.approx(2.0, abs=0.1)

    def test_laplace_spread_halves_when_epsilon_doubles(self):
        """Test that the inter-quartile range scales as 1/eps"""
        rng = np.random.default_rng(9)
        wide = laplace_perturb(0.0, 1.0, 1.0, rng, size=100_000)
        narrow = laplace_perturb(0.0, 1.0, 2.0, rng, size=100_000)
        ratio = np.subtract(*np.percentile(narrow, [75, 25])) / np.subtract(*np.percentile(wide, [75, 25]))
        assert ratio == pytest.approx(0.5, rel=0.05)

    def test_nonpositive_sensitivity(self):
        """Test that the Laplace scale needs a positive sensitivity"""
        with pytest.raises(DomainError):
            Mechanism.laplace(1.0, sensitivity=0.0)

    def test_corrupt_environment(self):
        """Test that each arm is pushed through the channel"""
        env = corrupt_environment(Environment.from_bernoulli([0.9, 1.0]), Mechanism.randomized_response(LN3))
        np.testing.assert_allclose(env.means, [0.7, 0.75])
