"""Grid and randomized suites that check every decomposition, inequality,
audit and bound property over many instances, each summarized as PASS/FAIL."""
from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from ..config import get_settings
from ..schemas import DecompositionReport, ExperimentConfig, SweepSummary, Verdict
from .auditor import audit_local_mechanism, audit_postprocessing, verify_composition, verify_equivalence
from .bandit_core import Environment
from .divergence import (
    bretagnolle_huber,
    kl,
    pinsker_check,
    random_bounded_ratio_pair,
    tv_l1,
    verify_lemma3,
    verify_lemma4,
    verify_lemma6,
)
from .experiments import run_experiment
from .lower_bounds import (
    hard_instance_pair,
    minimax_lb_dp,
    minimax_lb_instantaneous,
    minimax_lb_local,
)
from .mechanisms import Mechanism
from .policies import SoftmaxPolicy, UniformPolicy, ldp_pipeline, policy_from_config

logger = logging.getLogger(__name__)

MAX_REPORTED_FAILURES = 10


def _map(fn: Callable, cells: Sequence, workers: Optional[int]) -> list:
    workers = get_settings().workers if workers is None else workers
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, cells, chunksize=max(1, len(cells) // (4 * workers))))
    return [fn(cell) for cell in cells]


def summarize_reports(name: str, cells: Sequence, reports: Sequence[DecompositionReport]) -> SweepSummary:
    summary = SweepSummary(name=name, cells=len(reports))
    slacks = []
    for cell, report in zip(cells, reports):
        logger.debug("%s %s -> %s slack=%.3g", name, cell, report.verdict, report.slack)
        if report.verdict is Verdict.PRECONDITION_FAIL:
            summary.precondition_failed += 1
            continue
        slacks.append(report.slack)
        if report.verdict is Verdict.FAIL:
            summary.failed += 1
            if len(summary.failures) < MAX_REPORTED_FAILURES:
                summary.failures.append({"cell": repr(cell), "lhs": report.lhs, "rhs": report.rhs})
    if slacks:
        summary.min_slack = min(slacks)
        summary.max_abs_slack = max(abs(s) for s in slacks)
    _log_summary(summary)
    return summary


def _log_summary(summary: SweepSummary) -> None:
    logger.info("%s: %d cells, %d failed -> %s", summary.name, summary.cells, summary.failed, summary.verdict.value)


def bernoulli_grid(step: float) -> list[float]:
    n = int(round(1.0 / step))
    return [round(i * step, 12) for i in range(n + 1)]


def environment_pairs(n_arms: int, step: float, full_pairs_up_to: int = 2) -> list[tuple[tuple[float, ...], tuple[float, ...]]]:
    """All pairs of grid environments for small K; for larger K, pairs differing in the last arm."""
    grid = bernoulli_grid(step)
    envs = list(itertools.product(grid, repeat=n_arms))
    if n_arms <= full_pairs_up_to:
        return list(itertools.product(envs, envs))
    return [
        (means, means[:-1] + (v,))
        for means in envs
        for v in grid
    ]


# Decompositions

def _lemma3_cell(cell) -> DecompositionReport:
    beta, horizon, means1, means2 = cell
    policy = SoftmaxPolicy(len(means1), beta)
    return verify_lemma3(policy, Environment.from_bernoulli(means1), Environment.from_bernoulli(means2), horizon)


def sweep_lemma3(
    arms: Iterable[int] = (2, 3),
    horizons: Iterable[int] = (1, 2, 3),
    betas: Iterable[float] = (0.0, 1.0, 5.0),
    step: float = 0.25,
    workers: Optional[int] = None,
) -> SweepSummary:
    cells = [
        (beta, horizon, m1, m2)
        for n_arms in arms
        for m1, m2 in environment_pairs(n_arms, step)
        for beta in betas
        for horizon in horizons
    ]
    return summarize_reports("kl-decomposition", cells, _map(_lemma3_cell, cells, workers))


def _lemma4_cell(cell) -> DecompositionReport:
    epsilon, beta, horizon, means1, means2 = cell
    return verify_lemma4(
        Mechanism.randomized_response(epsilon),
        SoftmaxPolicy(len(means1), beta),
        Environment.from_bernoulli(means1),
        Environment.from_bernoulli(means2),
        horizon,
    )


def sweep_lemma4(
    arms: Iterable[int] = (2, 3),
    horizons: Iterable[int] = (1, 2, 3),
    betas: Iterable[float] = (0.0, 1.0, 5.0),
    epsilons: Iterable[float] = (0.1, 0.5, 1.0, 2.0),
    step: float = 0.25,
    workers: Optional[int] = None,
) -> SweepSummary:
    cells = [
        (epsilon, beta, horizon, m1, m2)
        for n_arms in arms
        for m1, m2 in environment_pairs(n_arms, step)
        for epsilon in epsilons
        for beta in betas
        for horizon in horizons
    ]
    reports = _map(_lemma4_cell, cells, workers)
    summary = summarize_reports("local-kl-decomposition", cells, reports)
    distinct = [r.slack for cell, r in zip(cells, reports) if cell[3] != cell[4] and math.isfinite(r.rhs)]
    if distinct:
        summary.extras["min_slack_distinct_environments"] = min(distinct)
    return summary


def sweep_lemma6(
    ratio_bounds: Iterable[float] = (0.1, 0.5, 1.0),
    samples: int = 1000,
    n_points: int = 8,
    seed: int = 0,
) -> SweepSummary:
    rng = np.random.default_rng(seed)
    cells, reports = [], []
    alternative_holds = 0
    for bound in ratio_bounds:
        for i in range(samples):
            p1, p2, neighbour = random_bounded_ratio_pair(n_points, bound, rng)
            report = verify_lemma6(bound, p1, p2, neighbour)
            alternative_holds += bool(report.details["alternative_holds"])
            cells.append((bound, i))
            reports.append(report)
    summary = summarize_reports("bounded-ratio-decomposition", cells, reports)
    summary.extras["alternative_form_holds"] = alternative_holds
    return summary


# Inequalities

def _random_simplex(dim: int, rng: np.random.Generator) -> np.ndarray:
    return rng.dirichlet(np.ones(dim))


def sweep_pinsker(samples: int = 1000, max_dim: int = 6, seed: int = 0) -> SweepSummary:
    rng = np.random.default_rng(seed)
    summary = SweepSummary(name="pinsker", cells=samples)
    slacks = []
    for i in range(samples):
        dim = int(rng.integers(2, max_dim + 1))
        p, q = _random_simplex(dim, rng), _random_simplex(dim, rng)
        slacks.append(2.0 * kl(p, q) - tv_l1(p, q) ** 2)
        if not pinsker_check(p, q):
            summary.failed += 1
            summary.failures.append({"cell": i, "p": p.tolist(), "q": q.tolist()})
    summary.min_slack = min(slacks)
    _log_summary(summary)
    return summary


def sweep_bretagnolle_huber(samples: int = 1000, n_points: int = 8, seed: int = 0) -> SweepSummary:
    """Checks the 1/2 exp(-KL) form; counts how often the form without 1/2 also holds."""
    rng = np.random.default_rng(seed)
    summary = SweepSummary(name="bretagnolle-huber", cells=samples)
    strict_holds = 0
    for i in range(samples):
        p, q = _random_simplex(n_points, rng), _random_simplex(n_points, rng)
        event = rng.random(n_points) < 0.5
        p_event = float(min(p[event].sum(), 1.0))
        q_complement = float(min(q[~event].sum(), 1.0))
        divergence = kl(p, q)
        strict_holds += bretagnolle_huber(p_event, q_complement, divergence, strict=True)
        if not bretagnolle_huber(p_event, q_complement, divergence):
            summary.failed += 1
            summary.failures.append({"cell": i, "p_event": p_event, "q_complement": q_complement})
    summary.extras["strict_form_holds"] = strict_holds
    _log_summary(summary)
    return summary


# Audits

def sweep_channel_dp(epsilons: Iterable[float] = (0.1, 0.5, 1.0, math.log(3.0), 2.0), tol: float = 1e-12) -> SweepSummary:
    summary = SweepSummary(name="channel-dp")
    for epsilon in epsilons:
        measured = audit_local_mechanism(Mechanism.randomized_response(epsilon)).epsilon_measured
        summary.cells += 1
        if abs(measured - epsilon) > tol:
            summary.failed += 1
            summary.failures.append({"epsilon": epsilon, "measured": measured})
    uniform = verify_composition(UniformPolicy(2), 2, horizon=2)
    summary.cells += 1
    if uniform.values["pan_epsilon"] != 0.0:
        summary.failed += 1
        summary.failures.append({"policy": "uniform", "measured": uniform.values["pan_epsilon"]})
    _log_summary(summary)
    return summary


def random_auditable_configs(count: int, seed: int = 0) -> list[dict]:
    rng = np.random.default_rng(seed)
    configs = []
    for i in range(count):
        beta = float(rng.uniform(0.0, 5.0))
        prior = float(rng.uniform(0.0, 1.0))
        if i % 2:
            mechanism = {"kind": "rr", "epsilon": float(rng.uniform(0.1, 2.0))}
            configs.append({"kind": "ldp-softmax", "beta": beta, "prior_mean": prior, "mechanism": mechanism})
        else:
            configs.append({"kind": "softmax-empirical-mean", "beta": beta, "prior_mean": prior})
    return configs


def _equivalence_cell(config: dict):
    return verify_equivalence(policy_from_config(config, 2), 2, horizon=2)


def sweep_equivalence(count: int = 20, seed: int = 0, workers: Optional[int] = None) -> SweepSummary:
    configs = random_auditable_configs(count, seed)
    reports = _map(_equivalence_cell, configs, workers)
    summary = SweepSummary(name="equivalence", cells=len(reports))
    for config, report in zip(configs, reports):
        if report.verdict is Verdict.FAIL:
            summary.failed += 1
            summary.failures.append({"policy": config, **report.values})
    _log_summary(summary)
    return summary


def composition_policies() -> list[dict]:
    policies = [{"kind": "uniform"}]
    policies += [{"kind": "softmax-empirical-mean", "beta": beta} for beta in (0.0, 1.0, 5.0)]
    policies += [
        {"kind": "ldp-softmax", "beta": 2.0, "mechanism": {"kind": "rr", "epsilon": epsilon}}
        for epsilon in (0.5, 1.0)
    ]
    return policies


def _composition_cell(cell):
    config, horizon = cell
    return verify_composition(policy_from_config(config, 2), 2, horizon=horizon)


def sweep_composition(horizons: Iterable[int] = (1, 2, 3), workers: Optional[int] = None) -> SweepSummary:
    cells = [(config, horizon) for config in composition_policies() for horizon in horizons]
    reports = _map(_composition_cell, cells, workers)
    summary = SweepSummary(name="composition", cells=len(reports))
    for cell, report in zip(cells, reports):
        if report.verdict is Verdict.FAIL:
            summary.failed += 1
            summary.failures.append({"policy": cell[0], "horizon": cell[1], **report.values})
    _log_summary(summary)
    return summary


def sweep_postprocessing(count: int = 50, seed: int = 0, tol: float = 1e-12) -> SweepSummary:
    rng = np.random.default_rng(seed)
    summary = SweepSummary(name="post-processing", cells=count)
    for _ in range(count):
        epsilon = float(rng.uniform(0.05, 3.0))
        post_map = [int(v) for v in rng.integers(0, 3, size=2)]
        report = audit_postprocessing(Mechanism.randomized_response(epsilon), post_map)
        if report.epsilon_measured > report.epsilon_claimed + tol:
            summary.failed += 1
            summary.failures.append({"epsilon": epsilon, "post_map": post_map, "measured": report.epsilon_measured})
    ldp = ldp_pipeline(SoftmaxPolicy(2, 5.0), Mechanism.randomized_response(math.log(3.0)))
    summary.cells += 1
    pan = verify_composition(ldp, 2, horizon=2).values["pan_epsilon"]
    if pan > math.log(3.0) + tol:
        summary.failed += 1
        summary.failures.append({"policy": ldp.describe(), "measured": pan})
    _log_summary(summary)
    return summary


# Bounds

def epsilon_grid(step: float = 0.1, upper: float = 4.0) -> list[float]:
    return [round(step * i, 10) for i in range(1, int(round(upper / step)) + 1)]


def sweep_bound_monotonicity(K: int = 2, T: int = 10_000, tol: float = 1e-9) -> SweepSummary:
    """Each regime's bound strictly decreases in epsilon and grows as sqrt(T)."""
    grid = epsilon_grid()
    evaluators = {
        "local": lambda eps, horizon: minimax_lb_local(K, horizon, eps, "rate-only").value,
        "instantaneous": lambda eps, horizon: minimax_lb_instantaneous(K, horizon, eps, "rate-only", a=2 * max(grid)).value,
        "dp": lambda eps, horizon: minimax_lb_dp(K, horizon, eps, constant_mode="rate-only").value,
    }
    summary = SweepSummary(name="bound-monotonicity")
    for regime, evaluate in evaluators.items():
        values = [evaluate(eps, T) for eps in grid]
        for eps, before, after in zip(grid[1:], values, values[1:]):
            summary.cells += 1
            if not after < before:
                summary.failed += 1
                summary.failures.append({"regime": regime, "epsilon": eps, "value": after, "previous": before})
        for eps in grid:
            summary.cells += 1
            ratio = evaluate(eps, 4 * T) / evaluate(eps, T)
            if abs(ratio - 2.0) > tol * 2.0:
                summary.failed += 1
                summary.failures.append({"regime": regime, "epsilon": eps, "sqrt_ratio": ratio})
    _log_summary(summary)
    return summary


def sweep_lower_bound_consistency(
    horizon: int = 20_000,
    replications: int = 200,
    epsilon: float = 1.0,
    seed: int = 0,
    workers: Optional[int] = None,
) -> SweepSummary:
    """Max-over-pair regret of each private policy on the local hard instance clears the proof-constant bound."""
    bound = minimax_lb_local(2, horizon, epsilon, "proof-constant").value
    mechanism = {"kind": "rr", "epsilon": epsilon}
    policies = [
        {"kind": "ucb1"},
        {"kind": "ldp-ucb", "mechanism": mechanism},
        {"kind": "ldp-softmax", "beta": 5.0, "mechanism": mechanism},
    ]
    summary = SweepSummary(name="lower-bound-consistency", extras={"bound": bound})
    for policy in policies:
        config = ExperimentConfig(
            policy=policy,
            hard_instance={"K": 2, "epsilon": epsilon, "regime": "local"},
            horizon=horizon,
            replications=replications,
            seed=seed,
            grid_points=10,
        )
        regret = run_experiment(config, workers).final_regret
        summary.cells += 1
        summary.extras[policy["kind"]] = regret
        if regret < bound:
            summary.failed += 1
            summary.failures.append({"policy": policy, "regret": regret})
    _log_summary(summary)
    return summary


def sweep_hard_instances(arms: Iterable[int] = (2, 3, 5), epsilons: Iterable[float] = (0.5, 1.0, 2.0)) -> SweepSummary:
    """Hard-instance pairs differ in one arm and swap the optimal arm."""
    summary = SweepSummary(name="hard-instances")
    for K, epsilon, T in itertools.product(arms, epsilons, (100, 10_000)):
        for regime in ("local", "dp", "instantaneous"):
            pair = hard_instance_pair(K, T, epsilon, regime)
            summary.cells += 1
            differing = [a for a in range(K) if pair.env1.arms[a] != pair.env2.arms[a]]
            if differing != [K - 1] or pair.env1.optimal_arm != 0 or pair.env2.optimal_arm != K - 1:
                summary.failed += 1
                summary.failures.append({"K": K, "epsilon": epsilon, "T": T, "regime": regime})
    _log_summary(summary)
    return summary


SUITES: dict[str, Callable[..., SweepSummary]] = {
    "kl-decomposition": sweep_lemma3,
    "local-kl-decomposition": sweep_lemma4,
    "bounded-ratio-decomposition": sweep_lemma6,
    "pinsker": sweep_pinsker,
    "bretagnolle-huber": sweep_bretagnolle_huber,
    "channel-dp": sweep_channel_dp,
    "equivalence": sweep_equivalence,
    "composition": sweep_composition,
    "post-processing": sweep_postprocessing,
    "bound-monotonicity": sweep_bound_monotonicity,
    "hard-instances": sweep_hard_instances,
    "lower-bound-consistency": sweep_lower_bound_consistency,
}

QUICK_OVERRIDES: dict[str, dict] = {
    "kl-decomposition": {"arms": (2,), "horizons": (1, 2), "step": 0.5},
    "local-kl-decomposition": {"arms": (2,), "horizons": (1, 2), "step": 0.5, "epsilons": (0.5, 1.0)},
    "bounded-ratio-decomposition": {"samples": 100},
    "pinsker": {"samples": 100},
    "bretagnolle-huber": {"samples": 100},
    "equivalence": {"count": 4},
    "composition": {"horizons": (1, 2)},
    "post-processing": {"count": 10},
    "lower-bound-consistency": {"horizon": 2_000, "replications": 10},
}


def run_all(names: Optional[Iterable[str]] = None, quick: bool = False) -> list[SweepSummary]:
    selected = list(SUITES) if names is None else list(names)
    summaries = []
    for name in selected:
        kwargs = QUICK_OVERRIDES.get(name, {}) if quick else {}
        summaries.append(SUITES[name](**kwargs))
    return summaries
