"""Command-line front end: ``python -m backend.app.cli <command>``.

Exit codes: 0 when every verdict passes, 1 on any FAIL verdict, 2 on usage or
configuration errors.
"""
import functools
import json
import logging
from pathlib import Path
from typing import Optional

import click
import pandas as pd
from pydantic import BaseModel, ValidationError

from .config import get_settings
from .exceptions import ConfigError, PrivateBanditsError
from .schemas import AuditRequest, EnvironmentSpec, MechanismSpec, PolicySpec, Verdict, VerifyRequest

logger = logging.getLogger("backend.app.cli")

BOUND_COLUMNS = ["regime", "K", "T", "epsilon", "c", "variant", "value", "coefficient", "threshold"]
SLACK_TOL = 1e-9


def _floats(raw: Optional[str]) -> Optional[list[float]]:
    if raw is None:
        return None
    try:
        return [float(v) for v in raw.split(",") if v.strip()]
    except ValueError as exc:
        raise click.BadParameter(f"expected comma-separated numbers, got {raw!r}") from exc


def _translate_errors(command):
    """Library errors become usage errors (exit code 2)."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except ConfigError as exc:
            raise click.UsageError(f"invalid config at {exc}") from exc
        except ValidationError as exc:
            first = exc.errors()[0]
            field = ".".join(str(part) for part in first["loc"])
            raise click.UsageError(f"invalid config at {field}: {first['msg']}") from exc
        except PrivateBanditsError as exc:
            raise click.UsageError(f"{type(exc).__name__}: {exc}") from exc

    return wrapper


def _record(kind: str, label: str, payload, verdict: Optional[Verdict] = None) -> None:
    from . import crud, models  # noqa: F401  (models registers the table)
    from .services.database import Base, engine, sessionlocal

    Base.metadata.create_all(bind=engine)
    db = sessionlocal()
    try:
        run = crud.save_run(db, kind, label, payload, verdict.value if verdict is not None else None)
        logger.info("recorded %s run %d", kind, run.id)
    finally:
        db.close()


def _emit_json(payload) -> None:
    if isinstance(payload, BaseModel):
        click.echo(payload.model_dump_json(indent=2))
    else:
        click.echo(json.dumps(payload, indent=2, default=str))


def _finish(verdicts) -> None:
    if any(v is Verdict.FAIL for v in verdicts):
        click.get_current_context().exit(1)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--log-level", default=None, help="Overrides LOG_LEVEL.")
def cli(log_level: Optional[str]):
    """Privacy-preserving multi-armed bandits: simulations, bounds, audits and verification sweeps."""
    logging.basicConfig(
        level=(log_level or get_settings().log_level).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


@cli.command()
@click.argument("config_path", type=click.Path(dir_okay=False))
@click.option("--output", default=None, help="CSV path or directory; defaults to PRIVATE_BANDITS_OUTPUT_DIR.")
@click.option("--workers", type=int, default=None)
@click.option("--gnuplot", is_flag=True, help="Also write a column-layout .dat file.")
@click.option("--record", is_flag=True, help="Persist the run to the database.")
@_translate_errors
def simulate(config_path: str, output: Optional[str], workers: Optional[int], gnuplot: bool, record: bool):
    """Run the seeded regret experiment described by CONFIG_PATH (JSON)."""
    from .services.experiments import load_config, run_experiment

    config = load_config(config_path)
    update = {"output": output or config.output or get_settings().output_dir}
    if gnuplot:
        update["gnuplot"] = True
    config = config.model_copy(update=update)
    curve = run_experiment(config, workers)
    click.echo(f"final regret {curve.final_regret:.6g}")
    if curve.regret_floor is not None:
        click.echo(f"two-environment regret floor {curve.regret_floor:.6g}")
    for spec in curve.bounds:
        click.echo(f"bound {spec.regime} ({spec.constant_mode}) {spec.value:.6g}")
    click.echo(f"wrote {config.output}")
    if record:
        _record("simulate", Path(config_path).name, curve)


@cli.command()
@click.option(
    "--regime",
    "regimes",
    multiple=True,
    type=click.Choice(["local", "instantaneous", "dp", "nonprivate-minimax", "local-problem-dep", "nonprivate-problem-dep"]),
    default=("local",),
    show_default=True,
)
@click.option("--K", "K", type=int, default=None, help="Number of arms; defaults to the length of --means, else 2.")
@click.option("--T", "T", type=int, required=True)
@click.option("--epsilon", "epsilons", type=float, multiple=True)
@click.option("--c", "c", type=float, default=0.0, show_default=True)
@click.option(
    "--constant",
    type=click.Choice(["proof-constant", "rate-only", "custom"]),
    default=None,
    help="Defaults to rate-only for instantaneous and nonprivate-minimax, proof-constant otherwise.",
)
@click.option("--custom-constant", type=float, default=None)
@click.option("--variant", default=None)
@click.option("--means", default=None, help="Bernoulli arm means for the problem-dependent regimes, e.g. 0.75,0.5.")
@click.option("--record", is_flag=True)
@_translate_errors
def bounds(regimes, K, T, epsilons, c, constant, custom_constant, variant, means, record):
    """Print lower-bound values as CSV: regime,K,T,epsilon,c,variant,value,coefficient,threshold.

    For the problem-dependent regimes ``coefficient`` multiplies ln T and
    ``value`` is their product.
    """
    from .services.lower_bounds import evaluate_bound

    arm_means = _floats(means)
    if K is None:
        K = len(arm_means) if arm_means else 2
    specs = [
        evaluate_bound(regime, K, T, epsilon, c, constant, variant, custom_constant, arm_means)
        for regime in regimes
        for epsilon in (epsilons or (None,))
    ]
    for spec in specs:
        for warning in spec.warnings:
            logger.warning("%s: %s", spec.regime, warning)
    frame = pd.DataFrame([spec.model_dump() for spec in specs])[BOUND_COLUMNS]
    click.echo(frame.to_csv(index=False, float_format="%.6g"), nl=False)
    if record:
        _record("bounds", ",".join(regimes), specs)


@cli.command()
@click.option(
    "--definition",
    type=click.Choice(["pan-dp", "instantaneous-dp", "local-mechanism", "environment", "equivalence", "composition"]),
    default=None,
)
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None, help="Audit request as JSON.")
@click.option("--policy", "policy_kind", default=None, help="Policy kind, e.g. softmax-empirical-mean or ldp-softmax.")
@click.option("--beta", type=float, default=None)
@click.option("--mechanism", "mechanism_kind", type=click.Choice(["rr", "laplace", "identity"]), default=None)
@click.option("--epsilon", type=float, default=None)
@click.option("--K", "K", type=int, default=2, show_default=True)
@click.option("--T", "T", type=int, default=2, show_default=True)
@click.option("--alphabet", default="0,1", show_default=True)
@click.option("--env", "envs", multiple=True, help="Bernoulli means of one environment, e.g. 0.5,0.75.")
@click.option("--rho", type=float, default=None)
@click.option("--record", is_flag=True)
@_translate_errors
def audit(definition, config_path, policy_kind, beta, mechanism_kind, epsilon, K, T, alphabet, envs, rho, record):
    """Exact privacy audit by enumeration; prints the JSON report."""
    from .services.runner import run_audit

    if config_path is not None:
        try:
            request = AuditRequest.model_validate_json(Path(config_path).read_text())
        except OSError as exc:
            raise ConfigError("config", f"cannot read {config_path}: {exc.strerror}") from exc
    else:
        if definition is None:
            raise click.UsageError("give --definition or --config")
        mechanism = None
        if mechanism_kind is not None:
            mechanism = MechanismSpec(kind=mechanism_kind, **({"epsilon": epsilon} if epsilon is not None else {}))
        policy = None
        if policy_kind is not None:
            policy = PolicySpec(
                kind=policy_kind,
                beta=beta,
                epsilon=epsilon if policy_kind == "idp-noisy-ucb" else None,
                mechanism=mechanism if policy_kind.startswith("ldp-") else None,
            )
        request = AuditRequest(
            definition=definition,
            policy=policy,
            mechanism=mechanism,
            K=K,
            T=T,
            alphabet=_floats(alphabet),
            environments=[EnvironmentSpec(bernoulli=_floats(env)) for env in envs] or None,
            rho=rho,
        )
    report = run_audit(request)
    _emit_json(report)
    if record:
        _record("audit", request.definition, report, report.verdict)
    _finish([report.verdict])


@cli.command("verify-lemma")
@click.argument("lemma", type=click.Choice(["3", "4", "6", "equivalence", "composition", "pinsker", "bretagnolle-huber"]))
@click.option("--K", "K", type=int, default=2, show_default=True)
@click.option("--T", "T", type=int, default=2, show_default=True)
@click.option("--grid", type=float, default=0.25, show_default=True, help="Bernoulli mean grid step.")
@click.option("--beta", "betas", type=float, multiple=True)
@click.option("--epsilon", "epsilons", type=float, multiple=True)
@click.option("--samples", type=int, default=1000, show_default=True)
@click.option("--policies", type=int, default=20, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--workers", type=int, default=None)
@click.option("--json", "as_json", is_flag=True, help="Print the full summary as JSON.")
@click.option("--record", is_flag=True)
@_translate_errors
def verify_lemma(lemma, K, T, grid, betas, epsilons, samples, policies, seed, workers, as_json, record):
    """Verify one decomposition, inequality or definitional check over a grid.

    With --K 3 or more the two environments of each pair differ only in
    their last arm.
    """
    from .services.runner import run_verification

    fields = dict(K=K, T=T, grid=grid, samples=samples, policies=policies, seed=seed)
    if betas:
        fields["betas"] = list(betas)
    if epsilons:
        fields["epsilons"] = list(epsilons)
    summary = run_verification(lemma, VerifyRequest(**fields), workers)
    if as_json:
        _emit_json(summary)
    else:
        click.echo(_summary_line(summary))
    if record:
        _record("verify", lemma, summary, summary.verdict)
    _finish([summary.verdict])


def _compact(value: float) -> str:
    """{:g} without the padded exponent: 1e-9 rather than 1e-09."""
    return format(value, "g").replace("e-0", "e-").replace("e+0", "e+")


def _summary_line(summary) -> str:
    parts = [summary.verdict.value]
    if summary.max_abs_slack is not None and summary.max_abs_slack < SLACK_TOL:
        parts.append(f"max |slack| < {_compact(SLACK_TOL)}")
    elif summary.min_slack is not None:
        parts.append(f"min slack {summary.min_slack:.6g}")
    parts.append(f"{summary.cells} cells")
    if summary.failed:
        parts.append(f"{summary.failed} failed")
    if summary.precondition_failed:
        parts.append(f"{summary.precondition_failed} precondition failures")
    return ", ".join(parts)


@cli.command()
@click.option("--suite", "suites", multiple=True, help="Run only these suites (repeatable).")
@click.option("--quick", is_flag=True, help="Smaller grids and horizons.")
@click.option("--output", default=None, help="Write every summary to this JSON file.")
@click.option("--record", is_flag=True)
@_translate_errors
def sweep(suites, quick, output, record):
    """Run the full verification suites and print a pass/fail summary."""
    from .services.sweeps import SUITES, run_all

    unknown = [name for name in suites if name not in SUITES]
    if unknown:
        raise click.UsageError(f"unknown suite(s) {', '.join(unknown)}; known: {', '.join(SUITES)}")
    summaries = run_all(suites or None, quick=quick)
    for summary in summaries:
        click.echo(f"{summary.name:<28} {_summary_line(summary)}")
    if output:
        try:
            Path(output).write_text(json.dumps([s.model_dump(mode="json") for s in summaries], indent=2))
        except OSError as exc:
            raise ConfigError("output", f"cannot write {output}: {exc.strerror}") from exc
    if record:
        failed = any(s.verdict is Verdict.FAIL for s in summaries)
        _record("sweep", ",".join(s.name for s in summaries), summaries, Verdict.FAIL if failed else Verdict.PASS)
    _finish([s.verdict for s in summaries])


def main():
    cli(prog_name="private-bandits")


if __name__ == "__main__":
    main()
