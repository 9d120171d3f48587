"""Closed-form regret lower bounds under each privacy regime, the horizon
thresholds that make them valid, and the two-environment hard instances
their proofs are built on."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

from ..exceptions import DegenerateInstanceError, DomainError, InfeasibleHorizonError
from ..schemas import BoundSpec
from .bandit_core import PROB_TOL, Environment
from .divergence import kl

logger = logging.getLogger(__name__)

LOCAL_PROOF_CONSTANT = 1.0 / (4.0 * math.exp(4.0))
DP_PROOF_CONSTANT = 1.0 / 8.0
DEFAULT_ADVISORY_A = 2.0

CONSTANT_MODES = ("proof-constant", "rate-only", "custom")
INSTANTANEOUS_VARIANTS = ("theorem", "appendix-derivation")
DP_VARIANTS = ("appendix-derivation", "theorem-text", "table-b0")


def _check_epsilon(epsilon: float) -> None:
    if not epsilon > 0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")


def _check_arms_horizon(K: int, T: int) -> None:
    if K < 2:
        raise DomainError("bounds need at least two arms")
    if T < 0:
        raise DomainError("horizon must be nonnegative")


def _constant(mode: str, proof_value: float, custom: Optional[float]) -> float:
    if mode == "rate-only":
        return 1.0
    if mode == "proof-constant":
        return proof_value
    if mode == "custom":
        if custom is None or custom < 0:
            raise DomainError("custom constant mode needs a nonnegative value")
        return float(custom)
    raise DomainError(f"unknown constant mode {mode!r}; expected one of {CONSTANT_MODES}")


# Privacy degradation factors relative to the non-private sqrt((K-1)T) rate.

def local_factor(epsilon: float) -> float:
    if math.isinf(epsilon):
        return 0.0
    return 1.0 / (min(2.0, math.exp(epsilon)) * math.expm1(epsilon))


def instantaneous_factor(epsilon: float) -> float:
    if math.isinf(epsilon):
        return 0.0
    return 1.0 / math.sqrt(2.0 * epsilon * math.expm1(2.0 * epsilon))


def local_kl_factor(epsilon: float) -> float:
    """2 min{4, e^{2 eps}} (e^eps - 1)^2, the per-arm KL inflation under a local mechanism."""
    if math.isinf(epsilon):
        return math.inf
    return 2.0 * min(4.0, math.exp(2.0 * epsilon)) * math.expm1(epsilon) ** 2


def dp_factor(epsilon: float, c: float = 0.0, variant: str = "appendix-derivation") -> float:
    if math.isinf(epsilon):
        return 0.0
    damping = math.exp(-3.0 * (epsilon + c))
    if variant == "appendix-derivation":
        return damping * math.sqrt(math.log1p(epsilon**2) / epsilon) * (1.0 + epsilon**2) ** (-1.0 / (2.0 * epsilon))
    if variant == "theorem-text":
        denominator = epsilon ** (1.0 + 1.0 / epsilon) * (1.0 + epsilon**2) ** (1.0 / epsilon)
        return damping * math.sqrt(math.log1p(epsilon) / denominator)
    if variant == "table-b0":
        # The table's epsilon + B term with the undefined B set to zero.
        denominator = epsilon ** (1.0 + 1.0 / epsilon) * epsilon ** (1.0 / epsilon)
        return damping * math.sqrt(math.log1p(epsilon**2) / denominator)
    raise DomainError(f"unknown dp variant {variant!r}; expected one of {DP_VARIANTS}")


def privacy_factors(epsilon: float, c: float = 0.0) -> dict[str, float]:
    _check_epsilon(epsilon)
    problem_dep = local_kl_factor(epsilon)
    return {
        "local": local_factor(epsilon),
        "instantaneous": instantaneous_factor(epsilon),
        "dp": dp_factor(epsilon, c),
        "local_problem_dep": 0.0 if math.isinf(problem_dep) else 1.0 / problem_dep,
    }


def local_over_instantaneous(epsilon: float) -> float:
    """Local bound divided by the instantaneous bound at the same K and T."""
    _check_epsilon(epsilon)
    return local_factor(epsilon) / instantaneous_factor(epsilon)


# Thresholds

def thresholds(K: int, epsilon: float, regime: str = "local", c: float = 0.0, C: float = 1.0) -> float:
    """Smallest horizon at which the regime's proof applies: g for local, h for dp."""
    _check_epsilon(epsilon)
    if math.isinf(epsilon):
        return 0.0
    if regime == "local":
        return (K - 1) / (min(4.0, math.exp(2.0 * epsilon)) * math.expm1(epsilon) ** 2)
    if regime == "dp":
        return (K - 1) * math.log1p(epsilon**2) / (epsilon * math.exp(2.0 * (epsilon + c)))
    if regime == "instantaneous":
        return 2.0 * (K - 1) * C / (4.0 * epsilon * math.expm1(2.0 * epsilon))
    raise DomainError(f"no threshold for regime {regime!r}")


def _threshold_fields(K: int, T: int, epsilon: float, regime: str, c: float = 0.0) -> dict:
    threshold = thresholds(K, epsilon, regime, c)
    below = T < threshold
    warnings = []
    if below:
        warnings.append(f"T={T} is below the {regime} threshold {threshold:.6g}")
        logger.warning("horizon %d below %s threshold %.6g", T, regime, threshold)
    return {"threshold": threshold, "below_threshold": below, "warnings": warnings}


# Minimax bounds

def minimax_lb_local(
    K: int, T: int, epsilon: float, constant_mode: str = "proof-constant", custom_constant: Optional[float] = None
) -> BoundSpec:
    _check_arms_horizon(K, T)
    _check_epsilon(epsilon)
    constant = _constant(constant_mode, LOCAL_PROOF_CONSTANT, custom_constant)
    value = constant * math.sqrt((K - 1) * T) * local_factor(epsilon)
    return BoundSpec(
        regime="local",
        K=K,
        T=T,
        epsilon=epsilon,
        constant_mode=constant_mode,
        constant=constant,
        value=value,
        **_threshold_fields(K, T, epsilon, "local"),
    )


def minimax_lb_instantaneous(
    K: int,
    T: int,
    epsilon: float,
    constant_mode: str = "rate-only",
    custom_constant: Optional[float] = None,
    variant: str = "theorem",
    delta: float = 0.0,
    a: float = DEFAULT_ADVISORY_A,
) -> BoundSpec:
    """Instantaneous-DP minimax bound.

    The proof constant e^delta / (4 sqrt 2) is only pinned down up to
    ``delta``, so rate-only is the default. ``a`` is the privacy range the
    proof assumes; exceeding a/2 is flagged, not rejected.
    """
    _check_arms_horizon(K, T)
    _check_epsilon(epsilon)
    constant = _constant(constant_mode, math.exp(delta) / (4.0 * math.sqrt(2.0)), custom_constant)
    if math.isinf(epsilon):
        rate = 0.0
    elif variant == "theorem":
        rate = math.sqrt((K - 1) * T) * instantaneous_factor(epsilon)
    elif variant == "appendix-derivation":
        rate = math.sqrt((K - 1) * T / (min(2.0, math.exp(epsilon)) * math.expm1(2.0 * epsilon)))
    else:
        raise DomainError(f"unknown instantaneous variant {variant!r}; expected one of {INSTANTANEOUS_VARIANTS}")

    warnings = []
    if epsilon > a / 2.0:
        warnings.append(f"epsilon={epsilon} exceeds a/2={a / 2.0}; the bound is advisory")
        logger.warning("instantaneous bound evaluated outside epsilon <= a/2 (a=%s)", a)
    return BoundSpec(
        regime="instantaneous",
        K=K,
        T=T,
        epsilon=epsilon,
        constant_mode=constant_mode,
        variant=variant,
        constant=constant,
        value=constant * rate,
        threshold=thresholds(K, epsilon, "instantaneous"),
        below_threshold=T < thresholds(K, epsilon, "instantaneous"),
        warnings=warnings,
    )


def minimax_lb_dp(
    K: int,
    T: int,
    epsilon: float,
    c: float = 0.0,
    variant: str = "appendix-derivation",
    constant_mode: str = "proof-constant",
    custom_constant: Optional[float] = None,
) -> BoundSpec:
    _check_arms_horizon(K, T)
    _check_epsilon(epsilon)
    if c < 0:
        raise DomainError("the Lipschitz budget c must be nonnegative")
    constant = _constant(constant_mode, DP_PROOF_CONSTANT, custom_constant)
    value = constant * math.sqrt((K - 1) * T) * dp_factor(epsilon, c, variant)
    return BoundSpec(
        regime="dp",
        K=K,
        T=T,
        epsilon=epsilon,
        c=c,
        constant_mode=constant_mode,
        variant=variant,
        constant=constant,
        value=value,
        **_threshold_fields(K, T, epsilon, "dp", c),
    )


def minimax_lb_nonprivate(
    K: int, T: int, constant_mode: str = "rate-only", custom_constant: Optional[float] = None
) -> BoundSpec:
    _check_arms_horizon(K, T)
    constant = _constant(constant_mode, LOCAL_PROOF_CONSTANT, custom_constant)
    return BoundSpec(
        regime="nonprivate-minimax",
        K=K,
        T=T,
        constant_mode=constant_mode,
        constant=constant,
        value=constant * math.sqrt((K - 1) * T),
    )


# Bayesian minimax bounds coincide with the minimax ones for finitely supported priors.

def _bayesian(spec: BoundSpec) -> BoundSpec:
    return spec.model_copy(update={"tag": "bayesian", "warnings": spec.warnings + ["bounded rewards assumed"]})


def bayesian_lb_local(*args, **kwargs) -> BoundSpec:
    return _bayesian(minimax_lb_local(*args, **kwargs))


def bayesian_lb_instantaneous(*args, **kwargs) -> BoundSpec:
    return _bayesian(minimax_lb_instantaneous(*args, **kwargs))


def bayesian_lb_dp(*args, **kwargs) -> BoundSpec:
    return _bayesian(minimax_lb_dp(*args, **kwargs))


def bayesian_aliases(K: int, T: int, epsilon: float, c: float = 0.0) -> dict[str, BoundSpec]:
    return {
        "local": bayesian_lb_local(K, T, epsilon),
        "instantaneous": bayesian_lb_instantaneous(K, T, epsilon),
        "dp": bayesian_lb_dp(K, T, epsilon, c),
    }


# Problem-dependent bounds

def _suboptimal_terms(env: Environment) -> list[tuple[int, float, float]]:
    """(arm, gap, KL(f_a || f*)) for every arm that differs from the optimal distribution."""
    optimal = env.optimal_arms
    best = env.arms[optimal[0]]
    if any(env.arms[a] != best for a in optimal[1:]):
        raise DegenerateInstanceError(f"optimal arms {optimal} have different reward distributions")
    gaps = env.gaps
    return [
        (a, float(gaps[a]), kl(env.arms[a], best))
        for a in range(env.n_arms)
        if gaps[a] > PROB_TOL
    ]


def _coefficient(env: Environment, inflation: float, warnings: list[str]) -> float:
    total = []
    for arm, gap, divergence in _suboptimal_terms(env):
        if math.isinf(divergence):
            warnings.append(f"arm {arm}: KL to the optimal arm is infinite; term dropped")
            logger.warning("dropping arm %d from the problem-dependent bound: infinite KL", arm)
            continue
        total.append(gap / (inflation * divergence))
    return math.fsum(total)


def lai_robbins_coefficient(env: Environment) -> float:
    return _coefficient(env, 1.0, [])


def _per_log_horizon(coefficient: float, T: int) -> float:
    return coefficient * math.log(T) if T >= 1 else coefficient


def problem_dependent_lb_local(env: Environment, epsilon: float, T: int = 0) -> BoundSpec:
    """Coefficient of log T in the regret of any consistent epsilon-locally private policy.

    With ``T`` given, ``value`` is the coefficient times ln T; otherwise it is
    the coefficient itself.
    """
    _check_epsilon(epsilon)
    if T < 0:
        raise DomainError("horizon must be nonnegative")
    warnings: list[str] = []
    inflation = local_kl_factor(epsilon)
    coefficient = 0.0 if math.isinf(inflation) else _coefficient(env, inflation, warnings)
    return BoundSpec(
        regime="local-problem-dep",
        K=env.n_arms,
        T=T,
        epsilon=epsilon,
        value=_per_log_horizon(coefficient, T),
        coefficient=coefficient,
        threshold=thresholds(env.n_arms, epsilon, "local"),
        below_threshold=0 < T < thresholds(env.n_arms, epsilon, "local"),
        tag="problem-dependent",
        warnings=warnings,
    )


def problem_dependent_lb_nonprivate(env: Environment, T: int = 0) -> BoundSpec:
    if T < 0:
        raise DomainError("horizon must be nonnegative")
    warnings: list[str] = []
    coefficient = _coefficient(env, 1.0, warnings)
    return BoundSpec(
        regime="nonprivate-problem-dep",
        K=env.n_arms,
        T=T,
        value=_per_log_horizon(coefficient, T),
        coefficient=coefficient,
        tag="problem-dependent",
        warnings=warnings,
    )


# Hard instances

@dataclass(frozen=True)
class HardInstancePair:
    env1: Environment
    env2: Environment
    gap: float
    target_arm: int
    regime: str

    def to_dict(self) -> dict:
        return {
            "env1": self.env1.to_dict(),
            "env2": self.env2.to_dict(),
            "gap": self.gap,
            "target_arm": self.target_arm,
            "regime": self.regime,
        }


def hard_instance_gap(K: int, T: int, epsilon: float, regime: str = "local", c: float = 0.0, C: float = 1.0) -> float:
    _check_epsilon(epsilon)
    if T < 1:
        raise InfeasibleHorizonError("hard instances need T >= 1")
    if math.isinf(epsilon):
        raise DomainError("hard instances are built for finite epsilon")
    if regime == "local":
        return math.sqrt((K - 1) / (min(4.0, math.exp(2.0 * epsilon)) * math.expm1(epsilon) ** 2 * T))
    if regime == "dp":
        return math.sqrt((K - 1) * math.log1p(epsilon**2) / (4.0 * T * epsilon * math.exp(2.0 * (epsilon + c))))
    if regime == "instantaneous":
        return math.sqrt((K - 1) * C / (4.0 * epsilon * math.expm1(2.0 * epsilon) * T))
    raise DomainError(f"no hard instance for regime {regime!r}")


def hard_instance_pair(
    K: int, T: int, epsilon: float, regime: str = "local", c: float = 0.0, C: float = 1.0
) -> HardInstancePair:
    """Bernoulli pair with means {1/2+D, 1/2, ..., 1/2} and {1/2+D, 1/2, ..., 1/2+2D}."""
    if K < 2:
        raise DomainError("hard instances need at least two arms")
    gap = hard_instance_gap(K, T, epsilon, regime, c, C)
    if gap > 0.5:
        raise InfeasibleHorizonError(f"gap {gap:.4g} exceeds 1/2; T={T} is too short for K={K}, epsilon={epsilon}")
    # The shifted pair puts arm K-1 at 1/2 + 2 gap, which must stay a probability.
    if gap > 0.25:
        raise InfeasibleHorizonError(f"gap {gap:.4g} pushes the shifted mean 1/2 + 2 gap above 1; increase T={T}")
    means1 = [0.5 + gap] + [0.5] * (K - 1)
    means2 = list(means1)
    means2[K - 1] = 0.5 + 2.0 * gap
    return HardInstancePair(
        Environment.from_bernoulli(means1),
        Environment.from_bernoulli(means2),
        gap,
        K - 1,
        regime,
    )


def two_environment_regret_floor(kl_value: float, T: int, gap: float) -> float:
    """(T gap / 4) exp(-KL): the floor on max{Reg(env1), Reg(env2)}."""
    if math.isinf(kl_value):
        return 0.0
    return T * gap / 4.0 * math.exp(-kl_value)


DEFAULT_CONSTANT_MODES = {
    "local": "proof-constant",
    "instantaneous": "rate-only",
    "dp": "proof-constant",
    "nonprivate-minimax": "rate-only",
}
PROBLEM_DEPENDENT_REGIMES = ("local-problem-dep", "nonprivate-problem-dep")
REGIMES = tuple(DEFAULT_CONSTANT_MODES) + PROBLEM_DEPENDENT_REGIMES


def _bernoulli_instance(K: int, means: Optional[Sequence[float]]) -> Environment:
    if not means:
        raise DomainError("problem-dependent bounds need the arm means")
    if len(means) != K:
        raise DomainError(f"got {len(means)} arm means for K={K}")
    if not all(0.0 <= p <= 1.0 for p in means):
        raise DomainError(f"arm means must lie in [0, 1], got {list(means)}")
    return Environment.from_bernoulli(list(means))


def evaluate_bound(
    regime: str,
    K: int,
    T: int,
    epsilon: Optional[float] = None,
    c: float = 0.0,
    constant_mode: Optional[str] = None,
    variant: Optional[str] = None,
    custom_constant: Optional[float] = None,
    means: Optional[Sequence[float]] = None,
) -> BoundSpec:
    """Dispatch a bound request by regime name.

    ``constant_mode=None`` picks the regime's default: rate-only where the
    proof leaves the constant open, the proof constant elsewhere.
    """
    if constant_mode is None:
        constant_mode = DEFAULT_CONSTANT_MODES.get(regime, "rate-only")
    if regime == "nonprivate-minimax":
        return minimax_lb_nonprivate(K, T, constant_mode, custom_constant)
    if regime == "nonprivate-problem-dep":
        return problem_dependent_lb_nonprivate(_bernoulli_instance(K, means), T)
    if epsilon is None:
        raise DomainError(f"regime {regime!r} needs epsilon")
    if regime == "local":
        return minimax_lb_local(K, T, epsilon, constant_mode, custom_constant)
    if regime == "instantaneous":
        return minimax_lb_instantaneous(K, T, epsilon, constant_mode, custom_constant, variant or "theorem")
    if regime == "dp":
        return minimax_lb_dp(K, T, epsilon, c, variant or "appendix-derivation", constant_mode, custom_constant)
    if regime == "local-problem-dep":
        return problem_dependent_lb_local(_bernoulli_instance(K, means), epsilon, T)
    raise DomainError(f"unknown regime {regime!r}")
