"""Exact privacy auditing by enumeration.

Every audit measures the largest absolute log-ratio of a policy's (or a
channel's) output probabilities across neighbouring inputs, and reports the
neighbouring pair that attains it. A ratio p/0 with p > 0 is infinite; 0/0
is skipped.
"""
from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from typing import Optional, Sequence

import numpy as np

from ..config import get_settings
from ..exceptions import CapabilityError, DimensionError, DomainError, UndefinedRatioError
from ..schemas import AuditReport, CheckReport, Verdict
from .bandit_core import Environment, History, check_enumeration_budget, enumerate_histories, history_likelihood
from .divergence import observed_system
from .mechanisms import Mechanism
from .policies import Policy

logger = logging.getLogger(__name__)

EQUIVALENCE_TOL = 1e-9
COMPOSITION_TOL = 1e-9


def log_ratio(p: float, q: float) -> Optional[float]:
    """|ln p - ln q|, infinity when exactly one is zero, None when both are."""
    if p == 0.0 and q == 0.0:
        return None
    if p == 0.0 or q == 0.0:
        return math.inf
    return abs(math.log(p) - math.log(q))


def _require_auditable(policy: Policy, n_arms: int) -> None:
    if not policy.auditable:
        raise CapabilityError(f"{policy.kind} is not auditable")
    if policy.n_arms != n_arms:
        raise DimensionError(f"policy has {policy.n_arms} arms, audit asked for K={n_arms}")


class _Best:
    """Running maximum with a lexicographically smallest witness key on ties."""

    def __init__(self):
        self.value = 0.0
        self.key: Optional[tuple] = None
        self.witness: Optional[dict] = None

    def offer(self, value: float, key: tuple, witness) -> None:
        if self.key is None or value > self.value or (value == self.value and key < self.key):
            self.value, self.key = value, key
            self.witness = witness() if callable(witness) else witness

    def merge(self, other: "_Best") -> None:
        if other.key is not None:
            self.offer(other.value, other.key, other.witness)


# Pan-privacy over generated outcome matrices

def _realized(cells: tuple[int, ...], actions: Sequence[int], horizon: int, alphabet: Sequence[float]) -> list[float]:
    return [alphabet[cells[a * horizon + t]] for t, a in enumerate(actions)]


def _as_matrix(cells: tuple[int, ...], n_arms: int, horizon: int, alphabet: Sequence[float]) -> list[list[float]]:
    return [[alphabet[cells[a * horizon + t]] for t in range(horizon)] for a in range(n_arms)]


def _pan_chunk(policy: Policy, n_arms: int, alphabet: tuple[float, ...], horizon: int, prefix: tuple[int, ...]) -> _Best:
    """Audit every outcome matrix whose leading cells equal ``prefix`` against its larger neighbours."""
    n_values = len(alphabet)
    n_cells = n_arms * horizon
    sequences = list(itertools.product(range(n_arms), repeat=horizon))
    cache: dict[tuple[int, ...], list[float]] = {}

    def probabilities(cells):
        if cells not in cache:
            cache[cells] = [
                policy.action_sequence_probability(actions, _realized(cells, actions, horizon, alphabet))
                for actions in sequences
            ]
        return cache[cells]

    best = _Best()
    for tail in itertools.product(range(n_values), repeat=n_cells - len(prefix)):
        cells = prefix + tail
        base = probabilities(cells)
        for c in range(n_cells):
            for v in range(cells[c] + 1, n_values):
                neighbour = cells[:c] + (v,) + cells[c + 1 :]
                other = probabilities(neighbour)
                for s, actions in enumerate(sequences):
                    value = log_ratio(base[s], other[s])
                    if value is None:
                        continue
                    best.offer(
                        value,
                        (cells, neighbour, s),
                        lambda: {
                            "outcomes": _as_matrix(cells, n_arms, horizon, alphabet),
                            "neighbour": _as_matrix(neighbour, n_arms, horizon, alphabet),
                            "actions": list(actions),
                            "cell": [c // horizon, c % horizon],
                        },
                    )
        if len(cache) > 4096:
            cache.clear()
    return best


def _prefixes(n_values: int, n_cells: int, workers: int) -> list[tuple[int, ...]]:
    depth = 0
    while n_values**depth < 4 * workers and depth < n_cells:
        depth += 1
    return list(itertools.product(range(n_values), repeat=depth))


def audit_pan_dp(
    policy: Policy,
    n_arms: int,
    alphabet: Sequence[float] = (0.0, 1.0),
    horizon: int = 2,
    epsilon_claimed: Optional[float] = None,
    cap: Optional[int] = None,
    workers: Optional[int] = None,
) -> AuditReport:
    """Largest log-ratio of P(a^T | x^T) over outcome matrices differing in one cell."""
    _require_auditable(policy, n_arms)
    alphabet = tuple(float(v) for v in alphabet)
    n_cells = n_arms * horizon
    check_enumeration_budget(float(len(alphabet)) ** n_cells * n_arms**horizon, cap)
    workers = get_settings().workers if workers is None else workers

    prefixes = _prefixes(len(alphabet), n_cells, workers)
    best = _Best()
    if workers > 1 and len(prefixes) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_pan_chunk, policy, n_arms, alphabet, horizon, p) for p in prefixes]
            for future in futures:
                best.merge(future.result())
    else:
        for prefix in prefixes:
            best.merge(_pan_chunk(policy, n_arms, alphabet, horizon, prefix))

    logger.info("pan-DP audit of %s: K=%d T=%d epsilon=%.6g", policy.kind, n_arms, horizon, best.value)
    return AuditReport(
        definition="pan-DP",
        epsilon_claimed=epsilon_claimed,
        epsilon_measured=best.value,
        witness=best.witness,
        horizon=horizon,
        alphabet=list(alphabet),
        policy=policy.describe(),
    )


def audit_reward_dp(
    policy: Policy,
    n_arms: int,
    alphabet: Sequence[float] = (0.0, 1.0),
    horizon: int = 2,
    epsilon_claimed: Optional[float] = None,
    cap: Optional[int] = None,
) -> AuditReport:
    """Same measurement with neighbours defined on the realized reward sequence only."""
    _require_auditable(policy, n_arms)
    alphabet = tuple(float(v) for v in alphabet)
    n_values = len(alphabet)
    check_enumeration_budget(float(n_values) ** horizon * n_arms**horizon, cap)

    best = _Best()
    for actions in itertools.product(range(n_arms), repeat=horizon):
        for rewards in itertools.product(range(n_values), repeat=horizon):
            p = policy.action_sequence_probability(actions, [alphabet[i] for i in rewards])
            for s in range(horizon):
                for v in range(rewards[s] + 1, n_values):
                    changed = rewards[:s] + (v,) + rewards[s + 1 :]
                    q = policy.action_sequence_probability(actions, [alphabet[i] for i in changed])
                    value = log_ratio(p, q)
                    if value is None:
                        continue
                    best.offer(
                        value,
                        (actions, rewards, changed),
                        lambda: {
                            "actions": list(actions),
                            "rewards": [alphabet[i] for i in rewards],
                            "neighbour_rewards": [alphabet[i] for i in changed],
                        },
                    )
    return AuditReport(
        definition="reward-DP",
        epsilon_claimed=epsilon_claimed,
        epsilon_measured=best.value,
        witness=best.witness,
        horizon=horizon,
        alphabet=list(alphabet),
        policy=policy.describe(),
    )


def conditional_action_probability(policy: Policy, actions: Sequence[int], rewards: Sequence[float]) -> Optional[float]:
    """pi(a_t | a^{t-1}, r^{t-1}) for ``actions`` of length t and ``rewards`` of length t-1."""
    previous = policy.action_sequence_probability(actions[:-1], rewards)
    if previous == 0.0:
        return None
    # The reward paid at the final step is never observed before the final action.
    padded = list(rewards) + [rewards[-1] if rewards else 0.0]
    return policy.action_sequence_probability(actions, padded) / previous


def audit_instantaneous_dp(
    policy: Policy,
    n_arms: int,
    alphabet: Sequence[float] = (0.0, 1.0),
    horizon: int = 2,
    epsilon_claimed: Optional[float] = None,
    cap: Optional[int] = None,
) -> AuditReport:
    """Largest log-ratio of a single action's conditional probability under one reward substitution."""
    _require_auditable(policy, n_arms)
    alphabet = tuple(float(v) for v in alphabet)
    n_values = len(alphabet)
    check_enumeration_budget(float(n_values * n_arms) ** horizon, cap)

    best = _Best()
    for t in range(2, horizon + 1):
        for actions in itertools.product(range(n_arms), repeat=t):
            for rewards in itertools.product(range(n_values), repeat=t - 1):
                p = conditional_action_probability(policy, actions, [alphabet[i] for i in rewards])
                for s in range(t - 1):
                    for v in range(rewards[s] + 1, n_values):
                        changed = rewards[:s] + (v,) + rewards[s + 1 :]
                        q = conditional_action_probability(policy, actions, [alphabet[i] for i in changed])
                        if p is None or q is None:
                            continue
                        value = log_ratio(p, q)
                        if value is None:
                            continue
                        best.offer(
                            value,
                            (t, actions, rewards, changed),
                            lambda: {
                                "step": t,
                                "actions": list(actions),
                                "rewards": [alphabet[i] for i in rewards],
                                "neighbour_rewards": [alphabet[i] for i in changed],
                            },
                        )
    return AuditReport(
        definition="instantaneous-DP",
        epsilon_claimed=epsilon_claimed,
        epsilon_measured=best.value,
        witness=best.witness,
        horizon=horizon,
        alphabet=list(alphabet),
        policy=policy.describe(),
    )


# Channels

def _channel_audit(outputs: Sequence[float], matrix: np.ndarray, alphabet: Sequence[float]) -> _Best:
    best = _Best()
    for i, j in itertools.combinations(range(len(alphabet)), 2):
        for k, z in enumerate(outputs):
            value = log_ratio(float(matrix[i, k]), float(matrix[j, k]))
            if value is None:
                continue
            best.offer(value, (i, j, k), {"inputs": [alphabet[i], alphabet[j]], "output": z})
    return best


def audit_local_mechanism(mechanism: Mechanism, alphabet: Sequence[float] = (0.0, 1.0)) -> AuditReport:
    if not mechanism.is_finite:
        raise CapabilityError(f"the {mechanism.kind.value} channel cannot be enumerated")
    alphabet = tuple(float(v) for v in alphabet)
    outputs, matrix = mechanism.channel(alphabet)
    best = _channel_audit(outputs, matrix, alphabet)
    return AuditReport(
        definition="local-mechanism",
        epsilon_claimed=mechanism.epsilon,
        epsilon_measured=best.value,
        witness=best.witness,
        alphabet=list(alphabet),
        flags=["rows-stochastic"] if np.allclose(matrix.sum(axis=1), 1.0, atol=1e-12) else [],
    )


def audit_postprocessing(
    mechanism: Mechanism, post_map: Sequence, alphabet: Sequence[float] = (0.0, 1.0)
) -> AuditReport:
    """Audit ``post_map`` applied to the mechanism's outputs; ``post_map[k]`` labels output k."""
    if not mechanism.is_finite:
        raise CapabilityError(f"the {mechanism.kind.value} channel cannot be enumerated")
    alphabet = tuple(float(v) for v in alphabet)
    outputs, matrix = mechanism.channel(alphabet)
    if len(post_map) != len(outputs):
        raise DimensionError(f"post-map covers {len(post_map)} outputs, channel has {len(outputs)}")
    labels = sorted(set(post_map), key=repr)
    relabel = np.zeros((len(outputs), len(labels)))
    for k, label in enumerate(post_map):
        relabel[k, labels.index(label)] = 1.0
    best = _channel_audit(labels, matrix @ relabel, alphabet)
    return AuditReport(
        definition="post-processing",
        epsilon_claimed=audit_local_mechanism(mechanism, alphabet).epsilon_measured,
        epsilon_measured=best.value,
        witness=best.witness,
        alphabet=list(alphabet),
        flags=[f"post-map={list(post_map)}"],
    )


# Definitional checks

def verify_equivalence(
    policy: Policy, n_arms: int, alphabet: Sequence[float] = (0.0, 1.0), horizon: int = 2, cap: Optional[int] = None
) -> CheckReport:
    """Outcome-matrix neighbours and reward-sequence neighbours give the same epsilon."""
    outcome = audit_pan_dp(policy, n_arms, alphabet, horizon, cap=cap)
    reward = audit_reward_dp(policy, n_arms, alphabet, horizon, cap=cap)
    same = outcome.epsilon_measured == reward.epsilon_measured or (
        abs(outcome.epsilon_measured - reward.epsilon_measured) <= EQUIVALENCE_TOL
    )
    return CheckReport(
        name="equivalence",
        verdict=Verdict.PASS if same else Verdict.FAIL,
        values={"outcome_epsilon": outcome.epsilon_measured, "reward_epsilon": reward.epsilon_measured},
        audits=[outcome, reward],
    )


def verify_composition(
    policy: Policy, n_arms: int, alphabet: Sequence[float] = (0.0, 1.0), horizon: int = 2, cap: Optional[int] = None
) -> CheckReport:
    """Instantaneous epsilon is at most twice pan epsilon; pan epsilon is at most T times instantaneous."""
    pan = audit_pan_dp(policy, n_arms, alphabet, horizon, cap=cap)
    inst = audit_instantaneous_dp(policy, n_arms, alphabet, horizon, cap=cap)
    e_pan, e_inst = pan.epsilon_measured, inst.epsilon_measured
    holds = e_inst <= 2.0 * e_pan + COMPOSITION_TOL and e_pan <= horizon * e_inst + COMPOSITION_TOL
    return CheckReport(
        name="composition",
        verdict=Verdict.PASS if holds else Verdict.FAIL,
        values={"pan_epsilon": e_pan, "instantaneous_epsilon": e_inst, "horizon": float(horizon)},
        audits=[pan, inst],
    )


def mean_distance(env1: Environment, env2: Environment) -> float:
    """L-infinity distance between mean vectors."""
    return float(np.max(np.abs(env1.means - env2.means)))


def audit_environment_privacy(
    policy: Policy,
    env1: Environment,
    env2: Environment,
    horizon: int,
    rho: Optional[float] = None,
    epsilon_claimed: Optional[float] = None,
    cap: Optional[int] = None,
) -> AuditReport:
    """Largest |ln P_1(H) - ln P_2(H)| over histories, divided by the environment distance rho."""
    observer, (obs1, obs2) = observed_system(policy, (env1, env2))
    if obs1.n_arms != obs2.n_arms:
        raise DimensionError("environments disagree on the number of arms")
    rho = mean_distance(env1, env2) if rho is None else float(rho)
    if rho < 0:
        raise DomainError("rho must be nonnegative")
    alphabet = tuple(sorted(set(obs1.alphabet) | set(obs2.alphabet)))
    report = dict(
        definition="environment",
        epsilon_claimed=epsilon_claimed,
        horizon=horizon,
        alphabet=list(alphabet),
        policy=policy.describe(),
    )
    if env1 == env2:
        return AuditReport(epsilon_measured=0.0, flags=["identical-environments"], **report)

    best = _Best()
    for index, history in enumerate(enumerate_histories(obs1.n_arms, alphabet, horizon, cap)):
        p = history_likelihood(observer, obs1, history).value
        q = history_likelihood(observer, obs2, history).value
        value = log_ratio(p, q)
        if value is None:
            continue
        best.offer(value, (index,), lambda: {"history": history.to_pairs()})

    if rho == 0.0:
        if best.value == 0.0:
            return AuditReport(epsilon_measured=0.0, flags=["identical-history-distributions"], **report)
        raise UndefinedRatioError("rho is zero but the history distributions differ")
    flags = [] if rho == mean_distance(env1, env2) else [f"rho={rho}"]
    return AuditReport(
        epsilon_measured=best.value / rho,
        witness={**(best.witness or {}), "log_ratio": best.value, "rho": rho},
        flags=flags,
        **report,
    )


def replay_witness(
    report: AuditReport,
    policy: Optional[Policy] = None,
    mechanism: Optional[Mechanism] = None,
    environments: Optional[Sequence[Environment]] = None,
) -> float:
    """Recompute the log-ratio a report's witness claims, from the witness alone."""
    witness = report.witness or {}
    if not witness:
        return 0.0
    if report.definition == "pan-DP":
        actions = witness["actions"]
        p = policy.action_sequence_probability(actions, [witness["outcomes"][a][t] for t, a in enumerate(actions)])
        q = policy.action_sequence_probability(actions, [witness["neighbour"][a][t] for t, a in enumerate(actions)])
        return log_ratio(p, q) or 0.0
    if report.definition == "reward-DP":
        p = policy.action_sequence_probability(witness["actions"], witness["rewards"])
        q = policy.action_sequence_probability(witness["actions"], witness["neighbour_rewards"])
        return log_ratio(p, q) or 0.0
    if report.definition == "instantaneous-DP":
        p = conditional_action_probability(policy, witness["actions"], witness["rewards"])
        q = conditional_action_probability(policy, witness["actions"], witness["neighbour_rewards"])
        return log_ratio(p, q) or 0.0
    if report.definition == "local-mechanism":
        x, x_prime = witness["inputs"]
        z = witness["output"]
        return log_ratio(mechanism.output_distribution(x).get(z, 0.0), mechanism.output_distribution(x_prime).get(z, 0.0)) or 0.0
    if report.definition == "environment":
        observer, (obs1, obs2) = observed_system(policy, environments)
        history = History.from_pairs(witness["history"])
        p = history_likelihood(observer, obs1, history).value
        q = history_likelihood(observer, obs2, history).value
        return (log_ratio(p, q) or 0.0) / witness["rho"]
    raise DomainError(f"cannot replay a {report.definition} witness")
