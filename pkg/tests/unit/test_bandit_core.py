"""
Unit tests for the canonical bandit model
"""
import math

import numpy as np
import pytest

from backend.app.exceptions import DimensionError, EnumerationBudgetError
from backend.app.services.bandit_core import (
    Environment,
    GeneratedOutcomes,
    History,
    RewardDistribution,
    Step,
    check_enumeration_budget,
    enumerate_histories,
    expected_pull_counts,
    expected_regret,
    history_likelihood,
    history_probability,
    run_episode,
    sample_reward,
    walk_history_tree,
)
from backend.app.services.experiments import replication_seeds, run_replications
from backend.app.services.policies import NoisyUCBPolicy, SoftmaxPolicy, UCB1Policy, UniformPolicy


class TestRewardDistribution:
    """Test cases for finite reward distributions"""

    def test_bernoulli_mean(self):
        """Test that a Bernoulli distribution has mean p"""
        dist = RewardDistribution.bernoulli(0.3)
        assert dist.mean == pytest.approx(0.3)
        assert dist.is_binary
        assert dist.bernoulli_parameter == pytest.approx(0.3)

    def test_probabilities_must_sum_to_one(self):
        """Test that a non-normalized vector is rejected"""
        with pytest.raises(ValueError):
            RewardDistribution((0.0, 1.0), (0.5, 0.6))

    def test_support_must_lie_in_unit_interval(self):
        """Test that rewards outside [0, 1] are rejected"""
        with pytest.raises(ValueError):
            RewardDistribution((0.0, 2.0), (0.5, 0.5))

    def test_probability_outside_support_is_none(self):
        """Test that values off the support have no mass entry"""
        dist = RewardDistribution((0.0, 0.5, 1.0), (0.2, 0.3, 0.5))
        assert dist.probability(0.5) == pytest.approx(0.3)
        assert dist.probability(0.25) is None
        assert not dist.is_binary


class TestEnvironment:
    """Test cases for Environment"""

    def test_gaps_and_optimal_arm(self):
        """Test gaps relative to the best mean"""
        env = Environment.from_bernoulli([0.9, 0.5])
        np.testing.assert_allclose(env.gaps, [0.0, 0.4])
        assert env.optimal_arm == 0
        assert env.n_arms == 2

    def test_needs_two_arms(self):
        """Test that a one-armed environment is rejected"""
        with pytest.raises(ValueError):
            Environment.from_bernoulli([0.5])

    def test_dict_round_trip(self):
        """Test that an environment survives its JSON form"""
        env = Environment.from_bernoulli([0.25, 0.75])
        assert Environment.from_dict(env.to_dict()) == env

    def test_validate_history_rejects_unknown_arm(self):
        """Test that arm indices outside [0, K) raise IndexError"""
        env = Environment.from_bernoulli([0.5, 0.5])
        with pytest.raises(IndexError):
            env.validate_history(History.from_pairs([[2, 1.0]]))


class TestRegret:
    """Test cases for expected regret accounting"""

    def test_two_arm_regret(self):
        """Test regret of counts [80, 20] with gap 0.4"""
        env = Environment.from_bernoulli([0.9, 0.5])
        assert expected_regret(env, [80, 20]) == pytest.approx(8.0)

    def test_three_arm_regret(self):
        """Test regret when only the worst arm is pulled"""
        env = Environment.from_bernoulli([0.9, 0.5, 0.1])
        assert expected_regret(env, [0, 0, 10]) == pytest.approx(8.0)

    def test_optimal_pulls_have_zero_regret(self):
        """Test that pulling only the best arm costs nothing"""
        env = Environment.from_bernoulli([0.9, 0.5])
        assert expected_regret(env, [100, 0]) == 0.0

    def test_count_length_mismatch(self):
        """Test that a wrong number of counts raises DimensionError"""
        env = Environment.from_bernoulli([0.9, 0.5])
        with pytest.raises(DimensionError):
            expected_regret(env, [1, 2, 3])


class TestHistories:
    """Test cases for history probabilities and enumeration"""

    def test_enumeration_counts(self):
        """Test that there are (K * |alphabet|)^T histories"""
        assert len(list(enumerate_histories(2, (0.0, 1.0), 1))) == 4
        assert len(list(enumerate_histories(2, (0.0, 1.0), 3))) == 64
        assert len(list(enumerate_histories(3, (0.0, 1.0), 2))) == 36

    def test_uniform_history_probability(self):
        """Test P(H) = 1/K * f(r) for a single step"""
        env = Environment.from_bernoulli([0.5, 0.5])
        history = History.from_pairs([[0, 1.0]])
        assert history_probability(UniformPolicy(2), env, history) == pytest.approx(0.25)

    def test_history_probabilities_sum_to_one(self):
        """Test that history probabilities form a distribution"""
        env = Environment.from_bernoulli([0.25, 0.75])
        policy = SoftmaxPolicy(2, beta=3.0)
        total = math.fsum(history_probability(policy, env, h) for h in enumerate_histories(2, (0.0, 1.0), 3))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_reward_outside_support_is_flagged(self):
        """Test that an impossible reward gives zero likelihood with a flag"""
        env = Environment.from_bernoulli([0.5, 0.5])
        likelihood = history_likelihood(UniformPolicy(2), env, History.from_pairs([[0, 0.5]]))
        assert likelihood.value == 0.0
        assert likelihood.outside_support

    def test_enumeration_budget(self):
        """Test that oversized enumerations are refused"""
        with pytest.raises(EnumerationBudgetError) as excinfo:
            list(enumerate_histories(2, (0.0, 1.0), 10, cap=1000))
        assert excinfo.value.cap == 1000
        check_enumeration_budget(1000, cap=1000)

    def test_tree_walk_matches_enumeration(self):
        """Test that leaf probabilities of the tree walk agree with direct evaluation"""
        env = Environment.from_bernoulli([0.25, 0.75])
        policy = SoftmaxPolicy(2, beta=2.0)
        leaves = {
            node.steps: node.probabilities[0]
            for node in walk_history_tree(policy, [env], 2)
            if node.depth == 2
        }
        for history in enumerate_histories(2, (0.0, 1.0), 2):
            assert leaves.get(history.steps, 0.0) == pytest.approx(history_probability(policy, env, history))

    def test_expected_pulls_sum_to_horizon(self):
        """Test that expected pull counts add up to T"""
        env = Environment.from_bernoulli([0.25, 0.75])
        counts = expected_pull_counts(SoftmaxPolicy(2, beta=1.0), env, 3)
        assert counts.sum() == pytest.approx(3.0)

    def test_history_helpers(self):
        """Test prefix, extend and pull counts of a history"""
        history = History.from_pairs([[0, 1.0], [1, 0.0], [1, 1.0]])
        assert history.prefix(2).actions == (0, 1)
        assert history.extend(Step(0, 0.0)).horizon == 4
        np.testing.assert_array_equal(history.pull_counts(2), [1, 2])
        assert history.to_pairs() == [[0, 1.0], [1, 0.0], [1, 1.0]]


class TestEpisodes:
    """Test cases for simulated episodes"""

    def test_same_seed_same_history(self):
        """Test that an episode is a function of its seed"""
        env = Environment.from_bernoulli([0.4, 0.6])
        first = run_episode(UCB1Policy(2), env, 50, np.random.default_rng(7))
        second = run_episode(UCB1Policy(2), env, 50, np.random.default_rng(7))
        assert first == second

    def test_ucb_round_robin_start(self):
        """Test that UCB1 pulls every arm once before indexing"""
        env = Environment.from_bernoulli([0.1, 0.2, 0.3])
        history = run_episode(UCB1Policy(3), env, 3, np.random.default_rng(0))
        assert history.actions == (0, 1, 2)

    def test_noisy_ucb_ledger(self):
        """Test that the per-step budget is recorded and composes additively"""
        env = Environment.from_bernoulli([0.4, 0.6])
        history = run_episode(NoisyUCBPolicy(2, 0.5), env, 20, np.random.default_rng(1))
        assert history.ledger == (0.5,) * 20
        assert history.composed_budget == pytest.approx(10.0)

    def test_softmax_favours_the_paying_arm(self):
        """Test N_0 > N_1 on a degenerate instance in nearly every seeded episode"""
        env = Environment((RewardDistribution((1.0,), (1.0,)), RewardDistribution((0.0,), (1.0,))))
        _, pulls = run_replications(SoftmaxPolicy(2, beta=10.0), env, 100, replication_seeds(0, 1000), workers=1)
        assert np.mean(pulls[:, 0] > pulls[:, 1]) > 0.99

    def test_uniform_pull_counts_converge(self):
        """Test that uniform pull fractions approach 1/K"""
        env = Environment.from_bernoulli([0.2, 0.5, 0.8])
        history = run_episode(UniformPolicy(3), env, 20_000, np.random.default_rng(4))
        np.testing.assert_allclose(history.pull_counts(3) / 20_000, [1 / 3] * 3, atol=0.02)

    def test_policy_arm_count_must_match(self):
        """Test that a policy for K arms cannot play a different environment"""
        env = Environment.from_bernoulli([0.4, 0.6, 0.5])
        with pytest.raises(DimensionError):
            run_episode(UniformPolicy(2), env, 5, np.random.default_rng(0))

    def test_sample_reward_arm_range(self):
        """Test that sampling an unknown arm raises IndexError"""
        env = Environment.from_bernoulli([0.4, 0.6])
        with pytest.raises(IndexError):
            sample_reward(env, 5, np.random.default_rng(0))

    def test_generated_outcomes_realized_rewards(self):
        """Test that realized rewards read the chosen arm's row"""
        outcomes = GeneratedOutcomes(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert outcomes.realized_rewards([1, 0]) == (1.0, 1.0)
        with pytest.raises(DimensionError):
            outcomes.validate(Environment.from_bernoulli([0.5, 0.5, 0.5]))
