"""Canonical stochastic bandit model.

Environments over finite reward alphabets, observed histories, the product
measure over histories and regret accounting. Everything here is immutable
once constructed; per-episode mutable state lives in the policy's
``ArmStatistics`` accumulator.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Iterator, Optional, Sequence

import numpy as np

from ..config import get_settings
from ..exceptions import DimensionError, EnumerationBudgetError

if TYPE_CHECKING:
    from .policies import Policy

logger = logging.getLogger(__name__)

PROB_TOL = 1e-12


@dataclass(frozen=True)
class RewardDistribution:
    """Finite reward distribution with support in [0, 1]."""

    support: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        support = tuple(float(v) for v in self.support)
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)

        if not support or len(support) != len(probs):
            raise ValueError("support and probs must be non-empty and of equal length")
        if len(set(support)) != len(support):
            raise ValueError("support values must be distinct")
        if any(v < 0.0 or v > 1.0 for v in support):
            raise ValueError("support values must lie in [0, 1]")
        if any(p < 0.0 for p in probs):
            raise ValueError("probabilities must be nonnegative")
        if abs(math.fsum(probs) - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities sum to {math.fsum(probs)!r}, not 1")

    @classmethod
    def bernoulli(cls, p: float) -> "RewardDistribution":
        if not 0.0 <= p <= 1.0:
            raise ValueError("Bernoulli parameter must lie in [0, 1]")
        return cls(support=(0.0, 1.0), probs=(1.0 - p, p))

    @cached_property
    def _lookup(self) -> dict[float, float]:
        return dict(zip(self.support, self.probs))

    @property
    def mean(self) -> float:
        return math.fsum(v * p for v, p in zip(self.support, self.probs))

    @property
    def is_binary(self) -> bool:
        return set(self.support) <= {0.0, 1.0}

    @property
    def bernoulli_parameter(self) -> float:
        return self._lookup.get(1.0, 0.0)

    def probability(self, value: float) -> Optional[float]:
        """Mass of ``value``, or None when it is outside the support."""
        return self._lookup.get(float(value))

    def to_dict(self) -> dict:
        return {"support": list(self.support), "probs": list(self.probs)}


@dataclass(frozen=True)
class Environment:
    arms: tuple[RewardDistribution, ...]

    def __post_init__(self):
        arms = tuple(self.arms)
        object.__setattr__(self, "arms", arms)
        if len(arms) < 2:
            raise ValueError("an environment needs at least two arms")

    @classmethod
    def from_bernoulli(cls, means: Sequence[float]) -> "Environment":
        return cls(tuple(RewardDistribution.bernoulli(p) for p in means))

    @classmethod
    def from_dict(cls, payload: dict) -> "Environment":
        return cls(tuple(RewardDistribution(arm["support"], arm["probs"]) for arm in payload["arms"]))

    def to_dict(self) -> dict:
        return {"arms": [arm.to_dict() for arm in self.arms]}

    @property
    def n_arms(self) -> int:
        return len(self.arms)

    # Derived quantities are recomputed on access.
    @property
    def means(self) -> np.ndarray:
        return np.array([arm.mean for arm in self.arms])

    @property
    def optimal_mean(self) -> float:
        return float(self.means.max())

    @property
    def gaps(self) -> np.ndarray:
        means = self.means
        return means.max() - means

    @property
    def optimal_arms(self) -> tuple[int, ...]:
        gaps = self.gaps
        return tuple(int(a) for a in np.flatnonzero(gaps <= PROB_TOL))

    @property
    def optimal_arm(self) -> int:
        return self.optimal_arms[0]

    @property
    def alphabet(self) -> tuple[float, ...]:
        return tuple(sorted({v for arm in self.arms for v in arm.support}))

    def validate_history(self, history: "History") -> None:
        for t, step in enumerate(history.steps):
            if not 0 <= step.action < self.n_arms:
                raise IndexError(f"step {t}: arm {step.action} out of range for K={self.n_arms}")
            if self.arms[step.action].probability(step.reward) is None:
                raise ValueError(f"step {t}: reward {step.reward} outside the support of arm {step.action}")


@dataclass(frozen=True)
class Step:
    action: int
    reward: float
    privatized_reward: Optional[float] = None


@dataclass(frozen=True)
class History:
    steps: tuple[Step, ...] = ()
    ledger: tuple[float, ...] = ()

    @classmethod
    def from_pairs(cls, pairs: Sequence[Sequence[float]]) -> "History":
        steps = []
        for pair in pairs:
            privatized = float(pair[2]) if len(pair) > 2 and pair[2] is not None else None
            steps.append(Step(int(pair[0]), float(pair[1]), privatized))
        return cls(tuple(steps))

    def to_pairs(self) -> list[list[float]]:
        return [[step.action, step.reward] for step in self.steps]

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def horizon(self) -> int:
        return len(self.steps)

    @property
    def actions(self) -> tuple[int, ...]:
        return tuple(step.action for step in self.steps)

    @property
    def rewards(self) -> tuple[float, ...]:
        return tuple(step.reward for step in self.steps)

    @property
    def composed_budget(self) -> float:
        """Privacy budget spent over the episode under sequential composition."""
        return math.fsum(self.ledger)

    def pull_counts(self, n_arms: int) -> np.ndarray:
        actions = np.asarray(self.actions, dtype=np.int64)
        if actions.size and (actions.min() < 0 or actions.max() >= n_arms):
            raise IndexError("history contains an arm outside [0, K)")
        return np.bincount(actions, minlength=n_arms)

    def prefix(self, t: int) -> "History":
        return History(self.steps[:t], self.ledger[:t])

    def extend(self, step: Step) -> "History":
        return History(self.steps + (step,), self.ledger)


@dataclass(frozen=True, eq=False)
class GeneratedOutcomes:
    """K x T matrix of generated outcomes; row a holds what arm a would pay at each step."""

    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=float)
        if matrix.ndim != 2:
            raise DimensionError("outcomes must be a K x T matrix")
        matrix.flags.writeable = False
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def generate(cls, env: Environment, horizon: int, rng: np.random.Generator) -> "GeneratedOutcomes":
        rows = [sample_rewards(env, arm, horizon, rng) for arm in range(env.n_arms)]
        return cls(np.vstack(rows) if rows else np.zeros((0, horizon)))

    @property
    def n_arms(self) -> int:
        return self.matrix.shape[0]

    @property
    def horizon(self) -> int:
        return self.matrix.shape[1]

    def realized_rewards(self, actions: Sequence[int]) -> tuple[float, ...]:
        return tuple(float(self.matrix[a, t]) for t, a in enumerate(actions))

    def validate(self, env: Environment) -> None:
        if self.n_arms != env.n_arms:
            raise DimensionError(f"outcomes have {self.n_arms} rows, environment has {env.n_arms} arms")
        for a, arm in enumerate(env.arms):
            if any(arm.probability(v) is None for v in self.matrix[a]):
                raise ValueError(f"row {a} contains values outside the support of arm {a}")


@dataclass(frozen=True)
class Likelihood:
    value: float
    outside_support: bool = False


@dataclass(eq=False)
class HistoryNode:
    depth: int
    steps: tuple[Step, ...]
    probabilities: np.ndarray
    action_probs: Optional[np.ndarray] = field(default=None)


def check_enumeration_budget(size: float, cap: Optional[int] = None) -> None:
    cap = get_settings().enumeration_cap if cap is None else cap
    if size > cap:
        raise EnumerationBudgetError(size, cap)


def sample_reward(env: Environment, arm: int, rng: np.random.Generator) -> float:
    if not 0 <= arm < env.n_arms:
        raise IndexError(f"arm {arm} out of range for K={env.n_arms}")
    dist = env.arms[arm]
    return dist.support[int(rng.choice(len(dist.support), p=dist.probs))]


def sample_rewards(env: Environment, arm: int, size: int, rng: np.random.Generator) -> np.ndarray:
    if not 0 <= arm < env.n_arms:
        raise IndexError(f"arm {arm} out of range for K={env.n_arms}")
    dist = env.arms[arm]
    return np.asarray(dist.support)[rng.choice(len(dist.support), size=size, p=dist.probs)]


def run_episode(policy: "Policy", env: Environment, horizon: int, rng: np.random.Generator) -> History:
    """Play ``policy`` against ``env`` for ``horizon`` steps.

    Rewards, privatization noise and policy randomness use independent child
    streams of ``rng`` so that two policies sharing a seed see the same outcomes.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if policy.n_arms != env.n_arms:
        raise DimensionError(f"policy has {policy.n_arms} arms, environment has {env.n_arms}")

    reward_rng, privacy_rng, policy_rng = rng.spawn(3)
    outcomes = GeneratedOutcomes.generate(env, horizon, reward_rng).matrix
    stats = policy.new_statistics()
    steps = []
    for t in range(horizon):
        arm = policy.choose(stats, policy_rng)
        reward = float(outcomes[arm, t])
        step = Step(arm, reward, policy.privatize(reward, privacy_rng))
        policy.observe(stats, step)
        steps.append(step)
    return History(tuple(steps), stats.ledger.per_step)


def expected_regret(env: Environment, pull_counts: Sequence[float]) -> float:
    counts = np.asarray(pull_counts, dtype=float)
    if counts.shape != (env.n_arms,):
        raise DimensionError(f"expected {env.n_arms} pull counts, got shape {counts.shape}")
    if (counts < 0).any():
        raise ValueError("pull counts must be nonnegative")
    return float(np.dot(counts, env.gaps))


def history_likelihood(policy: "Policy", env: Environment, history: History) -> Likelihood:
    stats = policy.new_statistics()
    value = 1.0
    for step in history.steps:
        if not 0 <= step.action < env.n_arms:
            raise IndexError(f"arm {step.action} out of range for K={env.n_arms}")
        reward_prob = env.arms[step.action].probability(step.reward)
        if reward_prob is None:
            return Likelihood(0.0, outside_support=True)
        value *= policy.distribution(stats)[step.action] * reward_prob
        policy.observe(stats, step)
    return Likelihood(value)


def history_probability(policy: "Policy", env: Environment, history: History) -> float:
    return history_likelihood(policy, env, history).value


def enumerate_histories(
    n_arms: int, alphabet: Sequence[float], horizon: int, cap: Optional[int] = None
) -> Iterator[History]:
    """Yield every history of length ``horizon``, lexicographic in (action, reward index)."""
    check_enumeration_budget((n_arms * len(alphabet)) ** horizon, cap)
    cells = [(a, float(r)) for a in range(n_arms) for r in alphabet]
    for combo in itertools.product(cells, repeat=horizon):
        yield History(tuple(Step(a, r) for a, r in combo))


def walk_history_tree(
    policy: "Policy",
    environments: Sequence[Environment],
    horizon: int,
    cap: Optional[int] = None,
) -> Iterator[HistoryNode]:
    """Depth-first walk over observed histories up to ``horizon``.

    Each node carries its probability under every environment and, below the
    horizon, the policy's action distribution at that node. Subtrees with zero
    probability under all environments are pruned.
    """
    n_arms = environments[0].n_arms
    if any(env.n_arms != n_arms for env in environments):
        raise DimensionError("environments disagree on the number of arms")
    alphabet = tuple(sorted({v for env in environments for v in env.alphabet}))
    check_enumeration_budget((n_arms * len(alphabet)) ** horizon, cap)

    reward_probs = np.array(
        [[[env.arms[a].probability(r) or 0.0 for r in alphabet] for a in range(n_arms)] for env in environments]
    )

    def visit(steps, stats, probs):
        if len(steps) == horizon:
            yield HistoryNode(len(steps), steps, probs)
            return
        dist = policy.distribution(stats)
        yield HistoryNode(len(steps), steps, probs, dist)
        for a in range(n_arms):
            if dist[a] == 0.0:
                continue
            for j, r in enumerate(alphabet):
                child = probs * dist[a] * reward_probs[:, a, j]
                if not child.any():
                    continue
                step = Step(a, r)
                child_stats = stats.copy()
                policy.observe(child_stats, step)
                yield from visit(steps + (step,), child_stats, child)

    yield from visit((), policy.new_statistics(), np.ones(len(environments)))


def expected_pull_counts(policy: "Policy", env: Environment, horizon: int, cap: Optional[int] = None) -> np.ndarray:
    """E[N_a(T)] as the sum over steps of the probability of choosing each arm."""
    counts = np.zeros(env.n_arms)
    for node in walk_history_tree(policy, [env], horizon, cap):
        if node.action_probs is not None:
            counts += node.probabilities[0] * node.action_probs
    return counts
