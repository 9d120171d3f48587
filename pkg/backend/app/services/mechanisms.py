"""Local reward randomizers and the corrupted reward distributions they induce."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import expit

from ..exceptions import CapabilityError, DomainError
from .bandit_core import Environment, RewardDistribution

BINARY_ALPHABET = (0.0, 1.0)


class MechanismKind(str, Enum):
    RANDOMIZED_RESPONSE = "rr"
    LAPLACE = "laplace"
    IDENTITY = "identity"


_KIND_ALIASES = {
    "randomized-response": MechanismKind.RANDOMIZED_RESPONSE,
    "randomized_response": MechanismKind.RANDOMIZED_RESPONSE,
    "none": MechanismKind.IDENTITY,
}


def keep_probability(epsilon: float) -> float:
    """Probability e^eps / (1 + e^eps) that randomized response keeps its input."""
    if math.isinf(epsilon):
        return 1.0
    return float(expit(epsilon))


def flip_probability(epsilon: float) -> float:
    if math.isinf(epsilon):
        return 0.0
    return float(expit(-epsilon))


def _check_epsilon(epsilon: float) -> None:
    if not epsilon > 0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")


def _check_bit(bit: float) -> None:
    if bit not in (0, 1):
        raise DomainError(f"randomized response takes a bit, got {bit!r}")


def randomized_response(bit: Union[int, float], epsilon: float, rng: np.random.Generator) -> Union[int, float]:
    _check_epsilon(epsilon)
    _check_bit(bit)
    if math.isinf(epsilon):
        return bit
    return bit if rng.random() < keep_probability(epsilon) else 1 - bit


def rr_debias(observed_mean, epsilon: float):
    """Unbiased estimate of the raw mean from the mean of randomized-response outputs.

    Not clamped: the estimate may leave [0, 1].
    """
    _check_epsilon(epsilon)
    if math.isinf(epsilon):
        return observed_mean
    e = math.exp(epsilon)
    return (observed_mean * (e + 1.0) - 1.0) / (e - 1.0)


def laplace_perturb(
    value,
    sensitivity: float,
    epsilon: float,
    rng: np.random.Generator,
    size: Optional[int] = None,
):
    if not sensitivity > 0:
        raise DomainError(f"sensitivity must be positive, got {sensitivity}")
    _check_epsilon(epsilon)
    if math.isinf(epsilon):
        return value if size is None else np.full(size, value, dtype=float)
    noisy = rng.laplace(loc=value, scale=sensitivity / epsilon, size=size)
    return float(noisy) if size is None else noisy


@dataclass(frozen=True)
class Mechanism:
    kind: MechanismKind
    epsilon: float = math.inf
    sensitivity: float = 1.0

    def __post_init__(self):
        kind = _KIND_ALIASES.get(self.kind, self.kind) if isinstance(self.kind, str) else self.kind
        kind = MechanismKind(kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "epsilon", float(self.epsilon))
        if kind is MechanismKind.IDENTITY:
            object.__setattr__(self, "epsilon", math.inf)
            return
        _check_epsilon(self.epsilon)
        if kind is MechanismKind.LAPLACE and not self.sensitivity > 0:
            raise DomainError(f"sensitivity must be positive, got {self.sensitivity}")

    @classmethod
    def randomized_response(cls, epsilon: float) -> "Mechanism":
        return cls(MechanismKind.RANDOMIZED_RESPONSE, epsilon)

    @classmethod
    def laplace(cls, epsilon: float, sensitivity: float = 1.0) -> "Mechanism":
        return cls(MechanismKind.LAPLACE, epsilon, sensitivity)

    @classmethod
    def identity(cls) -> "Mechanism":
        return cls(MechanismKind.IDENTITY)

    @classmethod
    def from_dict(cls, payload: dict) -> "Mechanism":
        return cls(
            payload["kind"],
            payload.get("epsilon", math.inf),
            payload.get("sensitivity", 1.0),
        )

    def to_dict(self) -> dict:
        payload = {"kind": self.kind.value, "epsilon": self.epsilon}
        if self.kind is MechanismKind.LAPLACE:
            payload["sensitivity"] = self.sensitivity
        return payload

    @property
    def is_finite(self) -> bool:
        """True when the channel is an explicit finite stochastic matrix."""
        return self.kind is not MechanismKind.LAPLACE

    @property
    def debias_scale(self) -> float:
        """Width by which a [0, 1] confidence interval grows after debiasing."""
        if math.isinf(self.epsilon):
            return 1.0
        if self.kind is MechanismKind.RANDOMIZED_RESPONSE:
            return 1.0 / math.tanh(self.epsilon / 2.0)
        if self.kind is MechanismKind.LAPLACE:
            return 1.0 + 2.0 * self.sensitivity / self.epsilon
        return 1.0

    def privatize(self, value: float, rng: np.random.Generator) -> float:
        if self.kind is MechanismKind.RANDOMIZED_RESPONSE:
            return float(randomized_response(value, self.epsilon, rng))
        if self.kind is MechanismKind.LAPLACE:
            return laplace_perturb(value, self.sensitivity, self.epsilon, rng)
        return value

    def debias_mean(self, observed_mean):
        if self.kind is MechanismKind.RANDOMIZED_RESPONSE:
            return rr_debias(observed_mean, self.epsilon)
        return observed_mean

    def output_distribution(self, value: float) -> dict[float, float]:
        if self.kind is MechanismKind.LAPLACE:
            raise CapabilityError("the Laplace channel has no finite output distribution")
        value = float(value)
        if self.kind is MechanismKind.IDENTITY or math.isinf(self.epsilon):
            if self.kind is MechanismKind.RANDOMIZED_RESPONSE:
                _check_bit(value)
            return {value: 1.0}
        _check_bit(value)
        return {value: keep_probability(self.epsilon), 1.0 - value: flip_probability(self.epsilon)}

    def channel(self, alphabet: Sequence[float] = BINARY_ALPHABET) -> tuple[tuple[float, ...], np.ndarray]:
        """Stochastic matrix of the mechanism; rows are inputs, columns outputs."""
        rows = [self.output_distribution(x) for x in alphabet]
        outputs = tuple(sorted({z for row in rows for z in row}))
        matrix = np.array([[row.get(z, 0.0) for z in outputs] for row in rows])
        return outputs, matrix


@dataclass(frozen=True)
class CorruptedDistribution:
    source: RewardDistribution
    mechanism: Mechanism
    distribution: Optional[RewardDistribution]

    @property
    def sampled_only(self) -> bool:
        return self.distribution is None

    @property
    def mean(self) -> float:
        # Laplace noise is zero-mean, so the sampled-only case keeps the source mean.
        if self.distribution is None:
            return self.source.mean
        return self.distribution.mean


def corrupt_distribution(f: RewardDistribution, epsilon: float) -> CorruptedDistribution:
    """Push a {0,1}-valued distribution through randomized response."""
    if not f.is_binary:
        raise DomainError("randomized response needs a reward distribution over {0, 1}")
    mechanism = Mechanism.randomized_response(epsilon)
    p = f.bernoulli_parameter
    q = p * keep_probability(epsilon) + (1.0 - p) * flip_probability(epsilon)
    return CorruptedDistribution(f, mechanism, RewardDistribution.bernoulli(min(max(q, 0.0), 1.0)))


def pushforward(f: RewardDistribution, mechanism: Mechanism) -> CorruptedDistribution:
    if mechanism.kind is MechanismKind.RANDOMIZED_RESPONSE:
        return corrupt_distribution(f, mechanism.epsilon)
    if mechanism.kind is MechanismKind.IDENTITY:
        return CorruptedDistribution(f, mechanism, f)
    return CorruptedDistribution(f, mechanism, None)


def mechanism_channel(
    mechanism: Mechanism, alphabet: Sequence[float] = BINARY_ALPHABET
) -> tuple[tuple[float, ...], np.ndarray]:
    return mechanism.channel(alphabet)


def corrupt_environment(env: Environment, mechanism: Mechanism) -> Environment:
    """Environment whose arms pay the privatized rewards."""
    arms = []
    for arm in env.arms:
        corrupted = pushforward(arm, mechanism)
        if corrupted.sampled_only:
            raise CapabilityError("only finite mechanisms induce an enumerable environment")
        arms.append(corrupted.distribution)
    return Environment(tuple(arms))
