"""KL divergences, the classical inequalities built on them, and exact checks
of the history-level KL decompositions by enumeration."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import rel_entr

from ..exceptions import CapabilityError, DimensionError, DomainError
from ..schemas import DecompositionReport, Verdict
from .bandit_core import (
    Environment,
    RewardDistribution,
    enumerate_histories,
    expected_pull_counts,
    history_likelihood,
    walk_history_tree,
)
from .mechanisms import MechanismKind, Mechanism, corrupt_environment
from .policies import LocalPrivatePolicy, Policy

logger = logging.getLogger(__name__)

EQUALITY_TOL = 1e-9
INEQUALITY_TOL = 1e-9


@dataclass(frozen=True)
class FiniteDistribution:
    support: tuple
    probs: tuple[float, ...]

    def __post_init__(self):
        support = tuple(self.support)
        probs = tuple(float(p) for p in self.probs)
        if len(support) != len(probs) or not support:
            raise DimensionError("support and probs must be non-empty and of equal length")
        if any(p < 0 for p in probs) or abs(math.fsum(probs) - 1.0) > 1e-9:
            raise DomainError("probabilities must form a simplex vector")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_array(cls, probs: Sequence[float]) -> "FiniteDistribution":
        return cls(tuple(range(len(probs))), tuple(probs))

    @classmethod
    def from_reward(cls, dist: RewardDistribution) -> "FiniteDistribution":
        return cls(dist.support, dist.probs)

    def mass(self, label) -> float:
        return dict(zip(self.support, self.probs)).get(label, 0.0)


Distribution = Union[FiniteDistribution, RewardDistribution, Sequence[float], np.ndarray]


def _aligned(p: Distribution, q: Distribution) -> tuple[np.ndarray, np.ndarray]:
    """Probability vectors of ``p`` and ``q`` over the union of their supports."""
    if isinstance(p, RewardDistribution):
        p = FiniteDistribution.from_reward(p)
    if isinstance(q, RewardDistribution):
        q = FiniteDistribution.from_reward(q)
    if isinstance(p, FiniteDistribution) and isinstance(q, FiniteDistribution):
        labels = sorted(set(p.support) | set(q.support))
        return np.array([p.mass(x) for x in labels]), np.array([q.mass(x) for x in labels])
    pa, qa = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    if pa.shape != qa.shape:
        raise DimensionError(f"distributions of shapes {pa.shape} and {qa.shape} share no support")
    return pa, qa


def kl(p: Distribution, q: Distribution) -> float:
    """KL(p || q) in nats; +inf when p puts mass where q does not."""
    pa, qa = _aligned(p, q)
    return max(float(np.sum(rel_entr(pa, qa))), 0.0)


def kl_bernoulli(p: float, q: float) -> float:
    return kl(RewardDistribution.bernoulli(p), RewardDistribution.bernoulli(q))


def tv_l1(p: Distribution, q: Distribution) -> float:
    pa, qa = _aligned(p, q)
    return float(np.abs(pa - qa).sum())


def pinsker_check(p: Distribution, q: Distribution) -> bool:
    return tv_l1(p, q) ** 2 <= 2.0 * kl(p, q) + 1e-12


def bretagnolle_huber(p_event: float, q_event_complement: float, kl_pq: float, strict: bool = False) -> bool:
    """P(E) + Q(E^c) >= 1/2 exp(-KL(P||Q)); ``strict`` drops the 1/2."""
    for value in (p_event, q_event_complement):
        if not 0.0 <= value <= 1.0:
            raise DomainError(f"event probability {value} outside [0, 1]")
    if math.isinf(kl_pq):
        return True
    bound = (1.0 if strict else 0.5) * math.exp(-kl_pq)
    return p_event + q_event_complement >= bound - 1e-12


def observed_system(policy: Policy, environments: Sequence[Environment]) -> tuple[Policy, list[Environment]]:
    """An LDP policy's observed history is its base policy run on the corrupted environments."""
    if not policy.auditable:
        raise CapabilityError(f"{policy.kind} is not auditable")
    if isinstance(policy, LocalPrivatePolicy):
        return policy.base, [corrupt_environment(env, policy.mechanism) for env in environments]
    return policy, list(environments)


def _joint_alphabet(*environments: Environment) -> tuple[float, ...]:
    return tuple(sorted({v for env in environments for v in env.alphabet}))


def kl_history(policy: Policy, env1: Environment, env2: Environment, horizon: int, cap: Optional[int] = None) -> float:
    """Exact KL between the two history distributions of length ``horizon``."""
    policy, (env1, env2) = observed_system(policy, (env1, env2))
    if env1.n_arms != env2.n_arms:
        raise DimensionError("environments disagree on the number of arms")
    terms = []
    for history in enumerate_histories(env1.n_arms, _joint_alphabet(env1, env2), horizon, cap):
        p = history_likelihood(policy, env1, history).value
        if p == 0.0:
            continue
        q = history_likelihood(policy, env2, history).value
        if q == 0.0:
            return math.inf
        terms.append(p * math.log(p / q))
    return max(math.fsum(terms), 0.0)


def history_divergence_profile(
    policy: Policy, env1: Environment, env2: Environment, horizon: int, cap: Optional[int] = None
) -> list[float]:
    """KL between the history distributions at every depth 0..horizon."""
    policy, envs = observed_system(policy, (env1, env2))
    profile = np.zeros(horizon + 1)
    for node in walk_history_tree(policy, envs, horizon, cap):
        p, q = node.probabilities
        profile[node.depth] += rel_entr(p, q)
    return [max(float(v), 0.0) for v in profile]


def _per_arm_terms(counts: np.ndarray, env1: Environment, env2: Environment) -> list[float]:
    # An arm that is never pulled contributes nothing, even when its KL is infinite.
    return [
        0.0 if counts[a] == 0.0 else float(counts[a]) * kl(env1.arms[a], env2.arms[a])
        for a in range(env1.n_arms)
    ]


def _slack(lhs: float, rhs: float) -> float:
    if math.isinf(lhs) and math.isinf(rhs):
        return 0.0
    return rhs - lhs


def verify_lemma3(
    policy: Policy,
    env1: Environment,
    env2: Environment,
    horizon: int,
    cap: Optional[int] = None,
    tol: float = EQUALITY_TOL,
) -> DecompositionReport:
    """History KL against the chain-rule sum of expected pulls times per-arm KL."""
    base, (obs1, obs2) = observed_system(policy, (env1, env2))
    lhs = kl_history(base, obs1, obs2, horizon, cap)
    counts = expected_pull_counts(base, obs1, horizon, cap)
    per_arm = _per_arm_terms(counts, obs1, obs2)
    policy_term = 0.0
    rhs = policy_term + math.fsum(per_arm)
    slack = _slack(lhs, rhs)
    verdict = Verdict.PASS if abs(slack) <= tol else Verdict.FAIL
    logger.debug("KL decomposition T=%d lhs=%.12g rhs=%.12g %s", horizon, lhs, rhs, verdict.value)
    return DecompositionReport(
        lemma="3",
        relation="equality",
        lhs=lhs,
        rhs=rhs,
        per_arm_terms=per_arm,
        policy_term=policy_term,
        slack=slack,
        verdict=verdict,
        horizon=horizon,
        details={"expected_pulls": counts.tolist(), "min_expected_pulls": float(counts.min())},
    )


def local_contraction_factor(epsilon: float) -> float:
    """2 min{4, e^{2 eps}} (e^eps - 1)^2."""
    return 2.0 * min(4.0, math.exp(2.0 * epsilon)) * math.expm1(epsilon) ** 2


def verify_lemma4(
    mechanism: Mechanism,
    base_policy: Policy,
    env1: Environment,
    env2: Environment,
    horizon: int,
    cap: Optional[int] = None,
    tol: float = INEQUALITY_TOL,
) -> DecompositionReport:
    """Privatized-history KL against the contracted per-arm KL of the raw rewards."""
    if mechanism.kind is not MechanismKind.RANDOMIZED_RESPONSE:
        raise DomainError("the local decomposition is checked for randomized response only")
    if isinstance(base_policy, LocalPrivatePolicy):
        base_policy = base_policy.base
    obs1, obs2 = corrupt_environment(env1, mechanism), corrupt_environment(env2, mechanism)
    lhs = kl_history(base_policy, obs1, obs2, horizon, cap)
    counts = expected_pull_counts(base_policy, obs1, horizon, cap)
    per_arm = _per_arm_terms(counts, env1, env2)
    factor = local_contraction_factor(mechanism.epsilon)
    total = math.fsum(per_arm)
    rhs = 0.0 if total == 0.0 else factor * total
    slack = _slack(lhs, rhs)
    verdict = Verdict.PASS if slack >= -tol else Verdict.FAIL
    return DecompositionReport(
        lemma="4",
        relation="inequality",
        lhs=lhs,
        rhs=rhs,
        per_arm_terms=per_arm,
        slack=slack,
        verdict=verdict,
        horizon=horizon,
        epsilon=mechanism.epsilon,
        details={"contraction_factor": factor, "expected_pulls": counts.tolist()},
    )


def random_bounded_ratio_pair(
    n: int, ratio_bound: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Two distributions on n points whose mass ratio across neighbours stays within e^bound.

    Neighbours are a random pairing of the points (an involution); with odd n
    one point is its own neighbour.
    """
    if n < 1:
        raise DomainError("need at least one point")
    order = rng.permutation(n)
    neighbour = np.arange(n)
    for i in range(0, n - 1, 2):
        a, b = order[i], order[i + 1]
        neighbour[a], neighbour[b] = b, a

    def draw() -> np.ndarray:
        weights = rng.uniform(0.1, 1.0, size=n)
        log_ratio = rng.uniform(-ratio_bound, ratio_bound, size=n)
        for i in range(0, n - 1, 2):
            a, b = order[i], order[i + 1]
            weights[b] = weights[a] * math.exp(log_ratio[a])
        return weights / weights.sum()

    return draw(), draw(), neighbour


def verify_lemma6(
    ratio_bound: float,
    p1: Sequence[float],
    p2: Sequence[float],
    neighbour: Optional[Sequence[int]] = None,
    tol: float = INEQUALITY_TOL,
) -> DecompositionReport:
    """KL(P1||P2) <= 2b + e^{2b} KL(P1 o s || P2 o s) for a neighbour map s with bounded ratios."""
    p1, p2 = np.asarray(p1, dtype=float), np.asarray(p2, dtype=float)
    if p1.shape != p2.shape:
        raise DimensionError("distributions must share the history space")
    sigma = np.arange(p1.size) if neighbour is None else np.asarray(neighbour, dtype=np.int64)
    if sorted(sigma.tolist()) != list(range(p1.size)):
        raise DomainError("neighbour map must be a bijection of the history space")

    b = float(ratio_bound)
    limit = math.exp(b) * (1.0 + 1e-12)
    precondition = bool(np.all(p1 <= limit * p1[sigma] + 1e-300) and np.all(p2 <= limit * p2[sigma] + 1e-300))

    lhs = kl(p1, p2)
    kl_neighbour = kl(p1[sigma], p2[sigma])
    rhs = 2.0 * b + math.exp(2.0 * b) * kl_neighbour
    appendix_rhs = math.exp(b) * (2.0 * b + kl_neighbour)
    slack = _slack(lhs, rhs)
    if not precondition:
        verdict = Verdict.PRECONDITION_FAIL
    else:
        verdict = Verdict.PASS if slack >= -tol else Verdict.FAIL
    return DecompositionReport(
        lemma="6",
        relation="inequality",
        lhs=lhs,
        rhs=rhs,
        slack=slack,
        verdict=verdict,
        epsilon=b,
        details={
            "kl_neighbour": kl_neighbour,
            "alternative_rhs": appendix_rhs,
            "alternative_holds": bool(lhs <= appendix_rhs + tol),
        },
    )


def lemma5_bound(epsilon: float, horizon: int, l_T: float, per_arm_terms: Sequence[float]) -> float:
    """Instantaneous-DP decomposition bound:
    2 eps (e^{2 eps} - 1) (1 - 2e^{-T/l}) / (1 - e^{-T/l}) + sum of per-arm terms.
    """
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    if horizon < 1:
        raise DomainError(f"horizon must be at least 1, got {horizon}")
    if l_T < 0:
        raise DomainError("l(T) must be nonnegative")
    decay = 0.0 if l_T == 0 else math.exp(-horizon / l_T)
    policy_part = 2.0 * epsilon * math.expm1(2.0 * epsilon) * (1.0 - 2.0 * decay) / (1.0 - decay)
    return policy_part + math.fsum(per_arm_terms)


def lemma5_report(
    policy: Policy,
    env1: Environment,
    env2: Environment,
    horizon: int,
    epsilon: float,
    l_T: Optional[float] = None,
    cap: Optional[int] = None,
) -> DecompositionReport:
    """Evaluates the instantaneous bound next to the exact history KL; no verdict is drawn."""
    decomposition = verify_lemma3(policy, env1, env2, horizon, cap)
    if l_T is None:
        l_T = decomposition.details["min_expected_pulls"]
    rhs = lemma5_bound(epsilon, horizon, l_T, decomposition.per_arm_terms)
    return DecompositionReport(
        lemma="5",
        relation="calculator",
        lhs=decomposition.lhs,
        rhs=rhs,
        per_arm_terms=decomposition.per_arm_terms,
        policy_term=rhs - math.fsum(decomposition.per_arm_terms),
        slack=_slack(decomposition.lhs, rhs),
        verdict=None,
        horizon=horizon,
        epsilon=epsilon,
        details={"l_T": l_T},
    )
