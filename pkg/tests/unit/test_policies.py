"""
Unit tests for bandit policies
"""
import math

import numpy as np
import pytest

from backend.app.exceptions import CapabilityError, ConfigError, ContractError, DomainError
from backend.app.services.bandit_core import Environment, History, Step, run_episode
from backend.app.services.experiments import replication_seeds, run_replications
from backend.app.services.mechanisms import Mechanism
from backend.app.services.policies import (
    LocalPrivatePolicy,
    NoisyUCBPolicy,
    PrivacyLedger,
    SoftmaxPolicy,
    UCB1Policy,
    UniformPolicy,
    idp_noisy_ucb,
    ldp_pipeline,
    policy_from_config,
)


class TestUniformPolicy:
    """Test cases for the uniform policy"""

    def test_distribution(self):
        """Test that every arm has probability 1/K"""
        np.testing.assert_allclose(UniformPolicy(4).action_distribution(History()), [0.25] * 4)

    def test_action_sequence_probability(self):
        """Test that any action sequence has probability K^-T"""
        assert UniformPolicy(2).action_sequence_probability([0, 1, 1], [1.0, 0.0, 1.0]) == pytest.approx(0.125)


class TestSoftmaxPolicy:
    """Test cases for softmax over empirical means"""

    def test_distribution_after_one_pull(self):
        """Test softmax with means (1, 0) at beta = 1"""
        policy = SoftmaxPolicy(2, beta=1.0, prior_mean=0.0)
        history = History.from_pairs([[0, 1.0]])
        np.testing.assert_allclose(policy.action_distribution(history), [0.7311, 0.2689], atol=1e-4)

    def test_prior_mean_for_unpulled_arms(self):
        """Test that unpulled arms start at the prior mean"""
        policy = SoftmaxPolicy(3, beta=5.0)
        np.testing.assert_allclose(policy.action_distribution(History()), [1 / 3] * 3)

    def test_beta_zero_is_uniform(self):
        """Test that inverse temperature 0 ignores rewards"""
        policy = SoftmaxPolicy(2, beta=0.0)
        history = History.from_pairs([[0, 1.0], [1, 0.0]])
        np.testing.assert_allclose(policy.action_distribution(history), [0.5, 0.5])

    def test_sampled_choices_follow_distribution(self):
        """Test select_action frequencies at beta = 10 with means (1, 0)"""
        policy = SoftmaxPolicy(2, beta=10.0)
        history = History.from_pairs([[0, 1.0], [1, 0.0]])
        rng = np.random.default_rng(2)
        draws = np.array([policy.select_action(history, rng) for _ in range(10_000)])
        expected = math.exp(10.0) / (math.exp(10.0) + 1.0)
        assert np.mean(draws == 0) == pytest.approx(expected, abs=0.02)
        assert policy.action_distribution(history)[0] == pytest.approx(expected)

    def test_negative_beta_rejected(self):
        """Test that a negative inverse temperature raises ValueError"""
        with pytest.raises(ValueError):
            SoftmaxPolicy(2, beta=-1.0)


class TestUCB1Policy:
    """Test cases for UCB1"""

    def test_not_auditable(self):
        """Test that UCB1 has no closed-form distribution"""
        with pytest.raises(CapabilityError):
            UCB1Policy(2).action_distribution(History())

    def test_prefers_better_arm(self):
        """Test that the higher empirical mean wins with equal counts"""
        policy = UCB1Policy(2)
        history = History.from_pairs([[0, 0.0], [1, 1.0], [0, 0.0], [1, 1.0]])
        assert policy.select_action(history, np.random.default_rng(0)) == 1

    def test_lowest_index_tie_break(self):
        """Test that equal indices pick the lowest arm"""
        policy = UCB1Policy(2)
        history = History.from_pairs([[0, 1.0], [1, 1.0]])
        assert policy.select_action(history, np.random.default_rng(0)) == 0


class TestNoisyUCBPolicy:
    """Test cases for the instantaneously private noisy UCB"""

    def test_schedule_forms(self):
        """Test scalar, list and callable privacy schedules"""
        assert NoisyUCBPolicy(2, 0.5).epsilon_at(10) == 0.5
        assert NoisyUCBPolicy(2, [1.0, 2.0]).epsilon_at(5) == 2.0
        assert NoisyUCBPolicy(2, lambda t: 1.0 / (t + 1)).epsilon_at(1) == 0.5

    def test_nonpositive_schedule(self):
        """Test that a nonpositive budget raises DomainError"""
        with pytest.raises(DomainError):
            NoisyUCBPolicy(2, 0.0)

    def test_infinite_budget_matches_ucb1(self):
        """Test that without noise the policy makes the same choices as UCB1"""
        env = Environment.from_bernoulli([0.6, 0.4, 0.5])
        plain = run_episode(UCB1Policy(3), env, 300, np.random.default_rng(5))
        noiseless = run_episode(NoisyUCBPolicy(3, math.inf), env, 300, np.random.default_rng(5))
        assert noiseless.actions == plain.actions

    def test_tighter_budget_costs_regret(self):
        """Test that eps=0.1 accumulates more regret than eps=10"""
        env = Environment.from_bernoulli([0.9, 0.5])
        seeds = replication_seeds(1, 20)
        loose, _ = run_replications(NoisyUCBPolicy(2, 10.0), env, 1_000, seeds, workers=1)
        tight, _ = run_replications(NoisyUCBPolicy(2, 0.1), env, 1_000, seeds, workers=1)
        assert tight[:, -1].mean() > loose[:, -1].mean()

    def test_factory(self):
        """Test the keyword factory"""
        policy = idp_noisy_ucb(1.0, n_arms=3, exploration=1.0)
        assert policy.n_arms == 3
        assert policy.describe()["epsilon"] == 1.0


class TestLocalPrivatePolicy:
    """Test cases for policies behind a local mechanism"""

    def test_kind_names(self):
        """Test the kind names of wrapped policies"""
        mechanism = Mechanism.randomized_response(1.0)
        assert ldp_pipeline(SoftmaxPolicy(2), mechanism).kind == "ldp-softmax"
        assert ldp_pipeline(UCB1Policy(2), mechanism).kind == "ldp-ucb"
        assert ldp_pipeline(UniformPolicy(2), mechanism).kind == "ldp-uniform"

    def test_ucb_base_is_debiased(self):
        """Test that a UCB base debiases and widens its confidence term"""
        mechanism = Mechanism.randomized_response(1.0)
        policy = ldp_pipeline(UCB1Policy(2), mechanism)
        assert policy.base.width_scale == pytest.approx(mechanism.debias_scale)
        assert policy.base.mean_map is not None

    def test_identity_mechanism_matches_base_choices(self):
        """Test that an identity channel leaves every choice of the base policy unchanged"""
        env = Environment.from_bernoulli([0.7, 0.4])
        for base in (SoftmaxPolicy(2, beta=3.0), UCB1Policy(2)):
            wrapped = ldp_pipeline(base, Mechanism.identity())
            plain = run_episode(base, env, 200, np.random.default_rng(11))
            private = run_episode(wrapped, env, 200, np.random.default_rng(11))
            assert private.actions == plain.actions

    def test_identity_mechanism_matches_base_distribution(self):
        """Test distribution-level equality on small histories"""
        base = SoftmaxPolicy(2, beta=2.0)
        wrapped = ldp_pipeline(base, Mechanism.identity())
        for pairs in ([], [[0, 1.0, 1.0]], [[0, 1.0, 1.0], [1, 0.0, 0.0]], [[1, 1.0, 1.0], [1, 0.0, 0.0]]):
            history = History.from_pairs(pairs)
            np.testing.assert_allclose(wrapped.action_distribution(history), base.action_distribution(history))

    def test_strong_privacy_costs_regret(self):
        """Test that ldp-ucb at eps=0.01 has far more regret than UCB1"""
        env = Environment.from_bernoulli([0.9, 0.5])
        seeds = replication_seeds(0, 4)
        plain, _ = run_replications(UCB1Policy(2), env, 2_000, seeds, workers=1)
        private, _ = run_replications(
            ldp_pipeline(UCB1Policy(2), Mechanism.randomized_response(0.01)), env, 2_000, seeds, workers=1
        )
        assert private[:, -1].mean() > 5 * plain[:, -1].mean()

    def test_missing_privatized_reward(self):
        """Test that an LDP policy refuses raw rewards"""
        policy = ldp_pipeline(SoftmaxPolicy(2), Mechanism.randomized_response(1.0))
        with pytest.raises(ContractError):
            policy.observe(policy.new_statistics(), Step(0, 1.0))

    def test_learns_from_privatized_reward(self):
        """Test that observations use the privatized value"""
        policy = ldp_pipeline(SoftmaxPolicy(2, beta=1.0, prior_mean=0.0), Mechanism.randomized_response(1.0))
        stats = policy.new_statistics()
        policy.observe(stats, Step(0, 0.0, 1.0))
        assert stats.sums[0] == 1.0

    def test_marginal_probability_mixes_channel(self):
        """Test P(a1, a2 | r1) averages over the mechanism's output"""
        epsilon = 1.0
        mechanism = Mechanism.randomized_response(epsilon)
        base = SoftmaxPolicy(2, beta=2.0, prior_mean=0.0)
        policy = LocalPrivatePolicy(base, mechanism)
        keep = math.exp(epsilon) / (1 + math.exp(epsilon))

        def second(z):
            return base.action_distribution(History.from_pairs([[0, z]]))[0]

        expected = 0.5 * (keep * second(1.0) + (1 - keep) * second(0.0))
        assert policy.action_sequence_probability([0, 0], [1.0, 0.0]) == pytest.approx(expected)

    def test_laplace_wrapper_not_auditable(self):
        """Test that a Laplace channel makes the wrapped policy simulation-only"""
        policy = ldp_pipeline(SoftmaxPolicy(2), Mechanism.laplace(1.0))
        assert not policy.auditable
        with pytest.raises(CapabilityError):
            policy.action_sequence_probability([0], [1.0])


class TestPolicyFromConfig:
    """Test cases for building policies from JSON configs"""

    def test_softmax_alias(self):
        """Test both softmax spellings"""
        assert isinstance(policy_from_config({"kind": "softmax", "beta": 2.0}, 2), SoftmaxPolicy)
        assert policy_from_config({"kind": "softmax-empirical-mean"}, 2).beta == 1.0

    def test_ldp_config(self):
        """Test an LDP softmax config with its mechanism"""
        policy = policy_from_config({"kind": "ldp-softmax", "beta": 2.0, "mechanism": {"kind": "rr", "epsilon": 1.0}}, 2)
        assert isinstance(policy, LocalPrivatePolicy)
        assert policy.describe()["mechanism"] == {"kind": "rr", "epsilon": 1.0}

    def test_ldp_without_mechanism(self):
        """Test that the error names the missing mechanism field"""
        with pytest.raises(ConfigError) as excinfo:
            policy_from_config({"kind": "ldp-ucb"}, 2)
        assert excinfo.value.field == "policy.mechanism"

    def test_bad_mechanism_epsilon(self):
        """Test that an invalid mechanism becomes a config error"""
        with pytest.raises(ConfigError):
            policy_from_config({"kind": "ldp-ucb", "mechanism": {"kind": "rr", "epsilon": -1.0}}, 2)

    def test_unknown_kind(self):
        """Test that an unknown kind raises ConfigError on policy.kind"""
        with pytest.raises(ConfigError) as excinfo:
            policy_from_config({"kind": "thompson"}, 2)
        assert excinfo.value.field == "policy.kind"


class TestPrivacyLedger:
    """Test cases for the privacy ledger"""

    def test_total_and_copy(self):
        """Test sequential composition and independent copies"""
        ledger = PrivacyLedger()
        ledger.spend(0.5)
        ledger.spend(0.25)
        clone = ledger.copy()
        clone.spend(1.0)
        assert ledger.total == pytest.approx(0.75)
        assert ledger.per_step == (0.5, 0.25)
        assert clone.total == pytest.approx(1.75)
