"""Bandit decision rules.

Auditable policies expose a closed-form action distribution for every
history; the UCB family is simulation-only. Policies themselves hold no
per-episode state: counts, sums and the privacy ledger live in an
``ArmStatistics`` accumulator created by ``new_statistics``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, ClassVar, Optional, Sequence, Union

import numpy as np
from scipy.special import softmax

from ..exceptions import CapabilityError, ConfigError, ContractError, DomainError
from .bandit_core import History, Step
from .mechanisms import Mechanism

Schedule = Union[float, Sequence[float], Callable[[int], float]]


@dataclass
class PrivacyLedger:
    spent: list[float] = field(default_factory=list)

    def spend(self, epsilon: float) -> None:
        self.spent.append(float(epsilon))

    @property
    def per_step(self) -> tuple[float, ...]:
        return tuple(self.spent)

    @property
    def total(self) -> float:
        return math.fsum(self.spent)

    def copy(self) -> "PrivacyLedger":
        return PrivacyLedger(list(self.spent))


@dataclass
class ArmStatistics:
    counts: np.ndarray
    sums: np.ndarray
    t: int = 0
    ledger: PrivacyLedger = field(default_factory=PrivacyLedger)

    @classmethod
    def empty(cls, n_arms: int) -> "ArmStatistics":
        return cls(np.zeros(n_arms, dtype=np.int64), np.zeros(n_arms))

    def update(self, arm: int, value: float) -> None:
        self.counts[arm] += 1
        self.sums[arm] += value
        self.t += 1

    def copy(self) -> "ArmStatistics":
        return ArmStatistics(self.counts.copy(), self.sums.copy(), self.t, self.ledger.copy())

    def means(self, prior_mean: float) -> np.ndarray:
        pulled = self.counts > 0
        means = np.full(self.counts.shape, float(prior_mean))
        means[pulled] = self.sums[pulled] / self.counts[pulled]
        return means


class Policy:
    """Base decision rule. Subclasses override ``distribution`` or ``choose``."""

    kind: ClassVar[str] = "policy"

    def __init__(self, n_arms: int):
        if n_arms < 1:
            raise ValueError("a policy needs at least one arm")
        self.n_arms = int(n_arms)

    @property
    def auditable(self) -> bool:
        return False

    def new_statistics(self) -> ArmStatistics:
        return ArmStatistics.empty(self.n_arms)

    def observed_value(self, step: Step) -> float:
        return step.reward

    def observe(self, stats: ArmStatistics, step: Step) -> None:
        stats.update(step.action, self.observed_value(step))

    def privatize(self, reward: float, rng: np.random.Generator) -> Optional[float]:
        return None

    def statistics(self, history: History) -> ArmStatistics:
        stats = self.new_statistics()
        for step in history.steps:
            self.observe(stats, step)
        return stats

    def distribution(self, stats: ArmStatistics) -> np.ndarray:
        raise CapabilityError(f"{self.kind} has no closed-form action distribution")

    def choose(self, stats: ArmStatistics, rng: np.random.Generator) -> int:
        return int(rng.choice(self.n_arms, p=self.distribution(stats)))

    def action_distribution(self, history: History) -> np.ndarray:
        if not self.auditable:
            raise CapabilityError(f"{self.kind} is not auditable")
        return self.distribution(self.statistics(history))

    def select_action(self, history: History, rng: np.random.Generator) -> int:
        return self.choose(self.statistics(history), rng)

    def action_sequence_probability(self, actions: Sequence[int], rewards: Sequence[float]) -> float:
        """P(a^T | realized rewards), where ``rewards[t]`` is what arm ``actions[t]`` paid at step t."""
        if not self.auditable:
            raise CapabilityError(f"{self.kind} is not auditable")
        stats = self.new_statistics()
        prob = 1.0
        for a, r in zip(actions, rewards):
            prob *= self.distribution(stats)[a]
            if prob == 0.0:
                return 0.0
            self.observe(stats, Step(a, r))
        return prob

    def describe(self) -> dict:
        return {"kind": self.kind}

    def __repr__(self) -> str:
        params = ", ".join(f"{k}={v!r}" for k, v in self.describe().items() if k != "kind")
        return f"{type(self).__name__}(n_arms={self.n_arms}{', ' + params if params else ''})"


class UniformPolicy(Policy):
    kind = "uniform"

    @property
    def auditable(self) -> bool:
        return True

    def distribution(self, stats: ArmStatistics) -> np.ndarray:
        return np.full(self.n_arms, 1.0 / self.n_arms)


class SoftmaxPolicy(Policy):
    """Softmax over empirical means; unpulled arms use ``prior_mean``."""

    kind = "softmax-empirical-mean"

    def __init__(self, n_arms: int, beta: float = 1.0, prior_mean: float = 0.5):
        super().__init__(n_arms)
        if beta < 0:
            raise ValueError("inverse temperature must be nonnegative")
        self.beta = float(beta)
        self.prior_mean = float(prior_mean)

    @property
    def auditable(self) -> bool:
        return True

    def distribution(self, stats: ArmStatistics) -> np.ndarray:
        return softmax(self.beta * stats.means(self.prior_mean))

    def describe(self) -> dict:
        return {"kind": self.kind, "beta": self.beta, "prior_mean": self.prior_mean}


class UCB1Policy(Policy):
    """UCB1 with round-robin initialization and lowest-index tie-breaking.

    ``mean_map`` transforms empirical means before indexing (debiasing under a
    local mechanism) and ``width_scale`` widens the confidence term to match.
    """

    kind = "ucb1"

    def __init__(
        self,
        n_arms: int,
        exploration: float = 2.0,
        mean_map: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        width_scale: float = 1.0,
    ):
        super().__init__(n_arms)
        if exploration <= 0:
            raise ValueError("exploration constant must be positive")
        self.exploration = float(exploration)
        self.mean_map = mean_map
        self.width_scale = float(width_scale)

    def empirical_means(self, stats: ArmStatistics, rng: np.random.Generator) -> np.ndarray:
        return stats.sums / stats.counts

    def index(self, stats: ArmStatistics, means: np.ndarray) -> np.ndarray:
        if self.mean_map is not None:
            means = np.clip(self.mean_map(means), 0.0, 1.0)
        t = max(stats.t, 1)
        return means + self.width_scale * np.sqrt(self.exploration * math.log(t) / stats.counts)

    def choose(self, stats: ArmStatistics, rng: np.random.Generator) -> int:
        unpulled = np.flatnonzero(stats.counts == 0)
        if unpulled.size:
            return int(unpulled[0])
        return int(np.argmax(self.index(stats, self.empirical_means(stats, rng))))

    def describe(self) -> dict:
        return {"kind": self.kind, "exploration": self.exploration}


class NoisyUCBPolicy(UCB1Policy):
    """UCB1 on Laplace-perturbed arm sums, fresh noise at every decision.

    Each decision spends the scheduled budget in the accumulator's ledger.
    """

    kind = "idp-noisy-ucb"

    def __init__(self, n_arms: int, schedule: Schedule, exploration: float = 2.0, sensitivity: float = 1.0):
        super().__init__(n_arms, exploration)
        if not callable(schedule):
            values = [float(schedule)] if np.isscalar(schedule) else [float(v) for v in schedule]
            if not values or any(not v > 0 for v in values):
                raise DomainError("privacy schedule must be positive")
        if sensitivity <= 0:
            raise DomainError("sensitivity must be positive")
        self.schedule = schedule
        self.sensitivity = float(sensitivity)

    def epsilon_at(self, t: int) -> float:
        if callable(self.schedule):
            epsilon = float(self.schedule(t))
        elif np.isscalar(self.schedule):
            epsilon = float(self.schedule)
        else:
            epsilon = float(self.schedule[min(t, len(self.schedule) - 1)])
        if not epsilon > 0:
            raise DomainError(f"privacy schedule returned {epsilon} at step {t}")
        return epsilon

    def choose(self, stats: ArmStatistics, rng: np.random.Generator) -> int:
        stats.ledger.spend(self.epsilon_at(stats.t))
        return super().choose(stats, rng)

    def empirical_means(self, stats: ArmStatistics, rng: np.random.Generator) -> np.ndarray:
        epsilon = stats.ledger.spent[-1]
        if math.isinf(epsilon):
            return stats.sums / stats.counts
        noise = rng.laplace(scale=self.sensitivity / epsilon, size=self.n_arms)
        return (stats.sums + noise) / stats.counts

    def describe(self) -> dict:
        schedule = self.schedule
        if callable(schedule):
            schedule = getattr(schedule, "__name__", "callable")
        elif not np.isscalar(schedule):
            schedule = list(schedule)
        return {
            "kind": self.kind,
            "epsilon": schedule,
            "exploration": self.exploration,
            "sensitivity": self.sensitivity,
        }


_LDP_KINDS = {
    UniformPolicy.kind: "ldp-uniform",
    SoftmaxPolicy.kind: "ldp-softmax",
    UCB1Policy.kind: "ldp-ucb",
}


class LocalPrivatePolicy(Policy):
    """A base policy that only ever sees privatized rewards."""

    def __init__(self, base: Policy, mechanism: Mechanism):
        super().__init__(base.n_arms)
        self.base = base
        self.mechanism = mechanism
        self.kind = _LDP_KINDS.get(base.kind, f"ldp-{base.kind}")

    @property
    def auditable(self) -> bool:
        return self.base.auditable and self.mechanism.is_finite

    def new_statistics(self) -> ArmStatistics:
        return self.base.new_statistics()

    def observed_value(self, step: Step) -> float:
        if step.privatized_reward is None:
            raise ContractError(f"{self.kind} needs the privatized reward at every step")
        return step.privatized_reward

    def observe(self, stats: ArmStatistics, step: Step) -> None:
        self.base.observe(stats, Step(step.action, self.observed_value(step)))

    def privatize(self, reward: float, rng: np.random.Generator) -> float:
        return self.mechanism.privatize(reward, rng)

    def distribution(self, stats: ArmStatistics) -> np.ndarray:
        return self.base.distribution(stats)

    def choose(self, stats: ArmStatistics, rng: np.random.Generator) -> int:
        return self.base.choose(stats, rng)

    def action_sequence_probability(self, actions: Sequence[int], rewards: Sequence[float]) -> float:
        """Marginalizes the mechanism's randomness out of the action-sequence probability."""
        if not self.auditable:
            raise CapabilityError(f"{self.kind} is not auditable")
        actions = list(actions)
        rewards = list(rewards)

        def walk(t: int, stats: ArmStatistics) -> float:
            if t == len(actions):
                return 1.0
            p_action = self.distribution(stats)[actions[t]]
            if p_action == 0.0:
                return 0.0
            total = 0.0
            for z, p_z in self.mechanism.output_distribution(rewards[t]).items():
                if p_z == 0.0:
                    continue
                child = stats.copy()
                self.observe(child, Step(actions[t], rewards[t], z))
                total += p_z * walk(t + 1, child)
            return p_action * total

        return walk(0, self.new_statistics())

    def describe(self) -> dict:
        payload = {k: v for k, v in self.base.describe().items() if k != "kind"}
        return {"kind": self.kind, **payload, "mechanism": self.mechanism.to_dict()}


def ldp_pipeline(base: Policy, mechanism: Mechanism) -> LocalPrivatePolicy:
    """Wrap ``base`` so it learns from privatized rewards; UCB bases debias before indexing."""
    if type(base) is UCB1Policy:
        base = UCB1Policy(
            base.n_arms,
            base.exploration,
            mean_map=mechanism.debias_mean,
            width_scale=mechanism.debias_scale,
        )
    return LocalPrivatePolicy(base, mechanism)


def idp_noisy_ucb(schedule: Schedule, n_arms: int = 2, **kwargs) -> NoisyUCBPolicy:
    return NoisyUCBPolicy(n_arms, schedule, **kwargs)


def policy_from_config(config: dict, n_arms: int) -> Policy:
    """Build a policy from its JSON form, e.g. ``{"kind": "ldp-softmax", "beta": 2.0, "mechanism": {...}}``."""
    kind = config.get("kind")
    try:
        if kind == UniformPolicy.kind:
            return UniformPolicy(n_arms)
        if kind in (SoftmaxPolicy.kind, "softmax"):
            return SoftmaxPolicy(n_arms, config.get("beta", 1.0), config.get("prior_mean", 0.5))
        if kind == UCB1Policy.kind:
            return UCB1Policy(n_arms, config.get("exploration", 2.0))
        if kind == NoisyUCBPolicy.kind:
            return NoisyUCBPolicy(
                n_arms,
                config.get("epsilon", math.inf),
                config.get("exploration", 2.0),
                config.get("sensitivity", 1.0),
            )
        if kind in ("ldp-softmax", "ldp-ucb", "ldp-uniform"):
            if "mechanism" not in config:
                raise ConfigError("policy.mechanism", f"{kind} needs a mechanism")
            mechanism = Mechanism.from_dict(config["mechanism"])
            base_kind = {"ldp-softmax": SoftmaxPolicy.kind, "ldp-ucb": UCB1Policy.kind, "ldp-uniform": "uniform"}[kind]
            base = policy_from_config({**config, "kind": base_kind}, n_arms)
            return ldp_pipeline(base, mechanism)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        field_path = "policy.mechanism" if "mechanism" in config else "policy"
        raise ConfigError(field_path, f"invalid {kind} config: {exc}") from exc
    raise ConfigError("policy.kind", f"unknown policy kind {kind!r}")
