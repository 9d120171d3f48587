"""Seeded regret experiments: replications, regret curves and their CSV/JSON output."""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from ..config import get_settings
from ..exceptions import ConfigError
from ..schemas import BoundSpec, EnvironmentCurve, EnvironmentSpec, ExperimentConfig, RegretCurve
from .bandit_core import Environment, RewardDistribution, run_episode
from .divergence import kl
from .lower_bounds import evaluate_bound, hard_instance_pair, two_environment_regret_floor
from .mechanisms import corrupt_environment
from .policies import LocalPrivatePolicy, Policy, policy_from_config

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["t", "mean_regret", "stderr", "env_index"]
MAX_OVER_PAIR_INDEX = -1


def _field_path(error: dict) -> str:
    return ".".join(str(part) for part in error["loc"])


def parse_config(payload: Union[dict, str]) -> ExperimentConfig:
    """Validate an experiment config; failures name the offending field (or JSON line)."""
    if isinstance(payload, str):
        try:
            payload = json.loads(payload)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno}", exc.msg) from exc
    try:
        return ExperimentConfig.model_validate(payload)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigError(_field_path(first), first["msg"]) from exc


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from exc
    return parse_config(text)


def environment_from_spec(spec: EnvironmentSpec) -> Environment:
    try:
        if spec.bernoulli is not None:
            return Environment.from_bernoulli(spec.bernoulli)
        return Environment(tuple(RewardDistribution(arm.support, arm.probs) for arm in spec.arms))
    except ValueError as exc:
        raise ConfigError("environment", str(exc)) from exc


def experiment_environments(config: ExperimentConfig) -> tuple[list[Environment], Optional[float]]:
    """Environments to simulate and, for a hard-instance pair, its gap."""
    if config.environment is not None:
        return [environment_from_spec(config.environment)], None
    request = config.hard_instance
    pair = hard_instance_pair(request.K, config.horizon, request.epsilon, request.regime, request.c, request.C)
    return [pair.env1, pair.env2], pair.gap


def replication_seeds(master_seed: int, replications: int) -> list[np.random.SeedSequence]:
    """Child seed r depends only on the master seed and r."""
    return np.random.SeedSequence(master_seed).spawn(replications)


def simulate_replication(
    policy: Policy, env: Environment, horizon: int, seed: np.random.SeedSequence
) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative pseudo-regret at every step and the final pull counts of one episode."""
    # spawning mutates a SeedSequence; a fresh copy keeps reruns identical
    fresh = np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key, pool_size=seed.pool_size)
    history = run_episode(policy, env, horizon, np.random.default_rng(fresh))
    actions = np.asarray(history.actions, dtype=np.int64)
    return np.cumsum(env.gaps[actions]), history.pull_counts(env.n_arms)


def _simulate(args) -> tuple[np.ndarray, np.ndarray]:
    return simulate_replication(*args)


def run_replications(
    policy: Policy,
    env: Environment,
    horizon: int,
    seeds: Sequence[np.random.SeedSequence],
    workers: Optional[int] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """R x T regret matrix and R x K pull counts, rows in seed order."""
    workers = get_settings().workers if workers is None else workers
    jobs = [(policy, env, horizon, seed) for seed in seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_simulate, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_simulate(job) for job in jobs]
    regrets = np.vstack([r for r, _ in results])
    pulls = np.vstack([p for _, p in results])
    return regrets, pulls


def time_grid(horizon: int, points: int) -> np.ndarray:
    return np.unique(np.linspace(1, horizon, num=min(points, horizon)).round().astype(np.int64))


def summarize(regrets: np.ndarray, grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error of cumulative regret at the (1-based) grid steps."""
    at_grid = regrets[:, grid - 1]
    mean = at_grid.mean(axis=0)
    if at_grid.shape[0] < 2:
        return mean, np.zeros_like(mean)
    return mean, at_grid.std(axis=0, ddof=1) / math.sqrt(at_grid.shape[0])


def _bound_epsilon(config: ExperimentConfig, request_epsilon: Optional[float]) -> Optional[float]:
    if request_epsilon is not None:
        return request_epsilon
    if config.hard_instance is not None:
        return config.hard_instance.epsilon
    if config.policy.mechanism is not None:
        return config.policy.mechanism.epsilon
    return None


def overlay_bounds(config: ExperimentConfig, n_arms: int) -> list[BoundSpec]:
    return [
        evaluate_bound(
            request.regime,
            n_arms,
            config.horizon,
            _bound_epsilon(config, request.epsilon),
            request.c,
            request.constant_mode,
            request.variant,
            request.custom_constant,
        )
        for request in config.bounds
    ]


def empirical_history_kl(policy: Policy, env1: Environment, env2: Environment, mean_pulls: np.ndarray) -> float:
    """History KL from the chain-rule decomposition with simulated pull counts."""
    if isinstance(policy, LocalPrivatePolicy) and policy.mechanism.is_finite:
        env1, env2 = corrupt_environment(env1, policy.mechanism), corrupt_environment(env2, policy.mechanism)
    terms = [
        0.0 if mean_pulls[a] == 0 else mean_pulls[a] * kl(env1.arms[a], env2.arms[a])
        for a in range(env1.n_arms)
    ]
    return math.fsum(terms)


def run_experiment(config: ExperimentConfig, workers: Optional[int] = None) -> RegretCurve:
    environments, gap = experiment_environments(config)
    n_arms = environments[0].n_arms
    policy = policy_from_config(config.policy.to_config(), n_arms)
    seeds = replication_seeds(config.seed, config.replications)
    grid = time_grid(config.horizon, config.grid_points)
    logger.info(
        "simulating %s on %d environment(s): T=%d R=%d seed=%d",
        policy.kind,
        len(environments),
        config.horizon,
        config.replications,
        config.seed,
    )

    curves = []
    pulls_by_env = []
    for index, env in enumerate(environments):
        regrets, pulls = run_replications(policy, env, config.horizon, seeds, workers)
        mean, stderr = summarize(regrets, grid)
        mean_pulls = pulls.mean(axis=0)
        pulls_by_env.append(mean_pulls)
        curves.append(
            EnvironmentCurve(
                env_index=index,
                means=env.means.tolist(),
                mean_regret=mean.tolist(),
                stderr=stderr.tolist(),
                min_expected_pulls=float(mean_pulls.min()),
            )
        )

    max_over_pair = None
    regret_floor = None
    if len(curves) == 2:
        max_over_pair = np.maximum(curves[0].mean_regret, curves[1].mean_regret).tolist()
        divergence = empirical_history_kl(policy, environments[0], environments[1], pulls_by_env[0])
        regret_floor = two_environment_regret_floor(divergence, config.horizon, gap)

    curve = RegretCurve(
        t=grid.tolist(),
        curves=curves,
        max_over_pair=max_over_pair,
        bounds=overlay_bounds(config, n_arms),
        regret_floor=regret_floor,
        policy=policy.describe(),
        horizon=config.horizon,
        replications=config.replications,
        seed=config.seed,
    )
    if config.output:
        write_outputs(curve, config.output, gnuplot=config.gnuplot)
    logger.info("final regret %.6g", curve.final_regret)
    return curve


def curve_frame(curve: RegretCurve) -> pd.DataFrame:
    """Long-format table with one row per (environment, grid step); the max-over-pair rows use env_index -1."""
    frames = [
        pd.DataFrame({"t": curve.t, "mean_regret": c.mean_regret, "stderr": c.stderr, "env_index": c.env_index})
        for c in curve.curves
    ]
    if curve.max_over_pair is not None:
        first, second = curve.curves
        stderr = np.where(np.asarray(first.mean_regret) >= np.asarray(second.mean_regret), first.stderr, second.stderr)
        frames.append(
            pd.DataFrame(
                {"t": curve.t, "mean_regret": curve.max_over_pair, "stderr": stderr, "env_index": MAX_OVER_PAIR_INDEX}
            )
        )
    return pd.concat(frames, ignore_index=True)[CSV_COLUMNS]


def gnuplot_frame(curve: RegretCurve) -> pd.DataFrame:
    """Wide layout, one column pair per environment, for plotting tools that read columns."""
    frame = pd.DataFrame({"t": curve.t})
    for c in curve.curves:
        frame[f"mean_regret_{c.env_index}"] = c.mean_regret
        frame[f"stderr_{c.env_index}"] = c.stderr
    if curve.max_over_pair is not None:
        frame["max_over_pair"] = curve.max_over_pair
    for spec in curve.bounds:
        frame[f"bound_{spec.regime}"] = spec.value
    return frame


def write_outputs(curve: RegretCurve, output: Union[str, Path], gnuplot: bool = False) -> list[Path]:
    path = Path(output)
    if path.suffix != ".csv":
        path = path / "regret.csv"
    written = [path, path.with_suffix(".json")]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        curve_frame(curve).to_csv(path, index=False, float_format="%.10g")
        path.with_suffix(".json").write_text(curve.model_dump_json(indent=2))
        if gnuplot:
            dat = path.with_suffix(".dat")
            with dat.open("w") as handle:
                handle.write("# ")
                gnuplot_frame(curve).to_csv(handle, sep=" ", index=False, float_format="%.10g")
            written.append(dat)
    except OSError as exc:
        raise ConfigError("output", f"cannot write {path}: {exc.strerror}") from exc
    logger.info("wrote %s", ", ".join(str(p) for p in written))
    return written
