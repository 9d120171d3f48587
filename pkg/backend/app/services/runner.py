"""Request-level entry points shared by the HTTP routes and the CLI."""
from __future__ import annotations

import logging
from typing import Optional, Union

from ..exceptions import ConfigError
from ..schemas import AuditReport, AuditRequest, CheckReport, MechanismSpec, PolicySpec, SweepSummary, VerifyRequest
from .auditor import (
    audit_environment_privacy,
    audit_instantaneous_dp,
    audit_local_mechanism,
    audit_pan_dp,
    verify_composition,
    verify_equivalence,
)
from .experiments import environment_from_spec
from .mechanisms import Mechanism
from .policies import Policy, policy_from_config
from .sweeps import (
    sweep_bretagnolle_huber,
    sweep_composition,
    sweep_equivalence,
    sweep_lemma3,
    sweep_lemma4,
    sweep_lemma6,
    sweep_pinsker,
)

logger = logging.getLogger(__name__)

LEMMA_IDS = ("3", "4", "6", "equivalence", "composition", "pinsker", "bretagnolle-huber")


def mechanism_from_spec(spec: MechanismSpec) -> Mechanism:
    try:
        return Mechanism(spec.kind, spec.epsilon, spec.sensitivity)
    except ValueError as exc:
        raise ConfigError("mechanism", str(exc)) from exc


def _policy(request: AuditRequest) -> Policy:
    if request.policy is None:
        raise ConfigError("policy", f"the {request.definition} audit needs a policy")
    return policy_from_config(request.policy.to_config(), request.K)


def _claimed_epsilon(spec: Optional[PolicySpec]) -> Optional[float]:
    if spec is None or spec.mechanism is None:
        return None
    return spec.mechanism.epsilon


def run_audit(request: AuditRequest, cap: Optional[int] = None) -> Union[AuditReport, CheckReport]:
    definition = request.definition
    if definition == "local-mechanism":
        spec = request.mechanism or (request.policy.mechanism if request.policy else None)
        if spec is None:
            raise ConfigError("mechanism", "the local-mechanism audit needs a mechanism")
        return audit_local_mechanism(mechanism_from_spec(spec), request.alphabet)

    policy = _policy(request)
    if definition == "pan-dp":
        return audit_pan_dp(policy, request.K, request.alphabet, request.T, _claimed_epsilon(request.policy), cap)
    if definition == "instantaneous-dp":
        return audit_instantaneous_dp(
            policy, request.K, request.alphabet, request.T, _claimed_epsilon(request.policy), cap
        )
    if definition == "equivalence":
        return verify_equivalence(policy, request.K, request.alphabet, request.T, cap)
    if definition == "composition":
        return verify_composition(policy, request.K, request.alphabet, request.T, cap)

    if not request.environments or len(request.environments) != 2:
        raise ConfigError("environments", "the environment audit needs exactly two environments")
    env1, env2 = (environment_from_spec(spec) for spec in request.environments)
    return audit_environment_privacy(policy, env1, env2, request.T, request.rho, cap=cap)


def run_verification(lemma: str, request: VerifyRequest, workers: Optional[int] = None) -> SweepSummary:
    """Run one verification suite sized by the request."""
    horizons = range(1, request.T + 1)
    if lemma == "3":
        return sweep_lemma3((request.K,), horizons, request.betas, request.grid, workers)
    if lemma == "4":
        return sweep_lemma4((request.K,), horizons, request.betas, request.epsilons, request.grid, workers)
    if lemma == "6":
        return sweep_lemma6(samples=request.samples, seed=request.seed)
    if lemma == "equivalence":
        return sweep_equivalence(request.policies, request.seed, workers)
    if lemma == "composition":
        return sweep_composition(horizons, workers)
    if lemma == "pinsker":
        return sweep_pinsker(request.samples, seed=request.seed)
    if lemma == "bretagnolle-huber":
        return sweep_bretagnolle_huber(request.samples, seed=request.seed)
    raise ConfigError("lemma", f"unknown lemma id {lemma!r}; expected one of {', '.join(LEMMA_IDS)}")
