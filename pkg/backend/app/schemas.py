from datetime import datetime
from enum import Enum
from typing import Any, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator


class Verdict(str, Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    PRECONDITION_FAIL = "PRECONDITION-FAIL"


class ReportModel(BaseModel):
    # Infinite divergences and the identity channel's epsilon serialize as Infinity.
    model_config = ConfigDict(ser_json_inf_nan="constants")


# Requests and configuration

class MechanismSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["rr", "randomized-response", "laplace", "identity", "none"] = "rr"
    epsilon: float = Field(default=float("inf"), gt=0)
    sensitivity: float = Field(default=1.0, gt=0)


class PolicySpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal[
        "uniform",
        "softmax-empirical-mean",
        "softmax",
        "ucb1",
        "ldp-softmax",
        "ldp-ucb",
        "ldp-uniform",
        "idp-noisy-ucb",
    ]
    beta: Optional[float] = Field(default=None, ge=0)
    prior_mean: Optional[float] = None
    exploration: Optional[float] = Field(default=None, gt=0)
    epsilon: Optional[Union[float, list[float]]] = None
    sensitivity: Optional[float] = Field(default=None, gt=0)
    mechanism: Optional[MechanismSpec] = None

    @model_validator(mode="after")
    def check_mechanism(self):
        if self.kind.startswith("ldp-") and self.mechanism is None:
            raise ValueError(f"{self.kind} needs a mechanism")
        return self

    def to_config(self) -> dict:
        return self.model_dump(exclude_none=True)


class ArmSpec(BaseModel):
    support: list[float]
    probs: list[float]


class EnvironmentSpec(BaseModel):
    """Either explicit arms or a list of Bernoulli means."""

    model_config = ConfigDict(extra="forbid")

    arms: Optional[list[ArmSpec]] = None
    bernoulli: Optional[list[float]] = None

    @model_validator(mode="after")
    def check_one_form(self):
        if (self.arms is None) == (self.bernoulli is None):
            raise ValueError("give exactly one of 'arms' or 'bernoulli'")
        return self


Regime = Literal["local", "instantaneous", "dp"]


class HardInstanceRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    K: int = Field(ge=2)
    epsilon: float = Field(gt=0)
    regime: Regime = "local"
    c: float = Field(default=0.0, ge=0)
    C: float = Field(default=1.0, gt=0)


class BoundRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    regime: Literal["local", "instantaneous", "dp", "nonprivate-minimax"] = "local"
    constant_mode: Optional[Literal["proof-constant", "rate-only", "custom"]] = None
    custom_constant: Optional[float] = None
    variant: Optional[str] = None
    epsilon: Optional[float] = Field(default=None, gt=0)
    c: float = Field(default=0.0, ge=0)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    policy: PolicySpec
    environment: Optional[EnvironmentSpec] = None
    hard_instance: Optional[HardInstanceRequest] = None
    horizon: int = Field(ge=1)
    replications: int = Field(default=1, ge=1)
    seed: int = Field(default=0, ge=0)
    output: Optional[str] = None
    bounds: list[BoundRequest] = Field(default_factory=list)
    grid_points: int = Field(default=100, ge=1)
    gnuplot: bool = False

    @model_validator(mode="after")
    def check_environment(self):
        if (self.environment is None) == (self.hard_instance is None):
            raise ValueError("give exactly one of 'environment' or 'hard_instance'")
        return self


class AuditRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    definition: Literal["pan-dp", "instantaneous-dp", "local-mechanism", "environment", "equivalence", "composition"]
    policy: Optional[PolicySpec] = None
    mechanism: Optional[MechanismSpec] = None
    K: int = Field(default=2, ge=1)
    T: int = Field(default=2, ge=1)
    alphabet: list[float] = Field(default_factory=lambda: [0.0, 1.0])
    environments: Optional[list[EnvironmentSpec]] = None
    rho: Optional[float] = Field(default=None, gt=0)


class VerifyRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    K: int = Field(default=2, ge=2)
    T: int = Field(default=2, ge=1)
    grid: float = Field(default=0.25, gt=0, le=1)
    betas: list[float] = Field(default_factory=lambda: [0.0, 1.0, 5.0])
    epsilons: list[float] = Field(default_factory=lambda: [0.1, 0.5, 1.0, 2.0])
    samples: int = Field(default=1000, ge=1)
    policies: int = Field(default=20, ge=1)
    seed: int = 0

    @field_validator("epsilons")
    @classmethod
    def positive_epsilons(cls, value):
        if any(e <= 0 for e in value):
            raise ValueError("epsilons must be positive")
        return value


# Reports

class BoundSpec(ReportModel):
    regime: str
    K: int
    T: int
    epsilon: Optional[float] = None
    c: float = 0.0
    constant_mode: str = "rate-only"
    variant: Optional[str] = None
    constant: float = 1.0
    value: float
    coefficient: Optional[float] = None
    threshold: Optional[float] = None
    below_threshold: bool = False
    tag: str = "minimax"
    warnings: list[str] = Field(default_factory=list)


class DecompositionReport(ReportModel):
    lemma: str
    relation: Literal["equality", "inequality", "calculator"]
    lhs: float
    rhs: float
    per_arm_terms: list[float] = Field(default_factory=list)
    policy_term: float = 0.0
    slack: float
    verdict: Optional[Verdict]
    horizon: Optional[int] = None
    epsilon: Optional[float] = None
    details: dict[str, Any] = Field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict is not Verdict.FAIL


class AuditReport(ReportModel):
    definition: str
    epsilon_claimed: Optional[float] = None
    epsilon_measured: float
    witness: Optional[dict[str, Any]] = None
    horizon: Optional[int] = None
    alphabet: list[float] = Field(default_factory=list)
    policy: Optional[dict[str, Any]] = None
    flags: list[str] = Field(default_factory=list)

    @computed_field
    @property
    def verdict(self) -> Verdict:
        if self.epsilon_claimed is None or self.epsilon_measured <= self.epsilon_claimed + 1e-9:
            return Verdict.PASS
        return Verdict.FAIL


class CheckReport(ReportModel):
    """Outcome of a definitional check that compares several audits."""

    name: str
    verdict: Verdict
    values: dict[str, float] = Field(default_factory=dict)
    audits: list[AuditReport] = Field(default_factory=list)


class SweepSummary(ReportModel):
    name: str
    cells: int = 0
    failed: int = 0
    precondition_failed: int = 0
    min_slack: Optional[float] = None
    max_abs_slack: Optional[float] = None
    extras: dict[str, Any] = Field(default_factory=dict)
    failures: list[dict[str, Any]] = Field(default_factory=list)

    @computed_field
    @property
    def verdict(self) -> Verdict:
        return Verdict.PASS if self.failed == 0 else Verdict.FAIL


class EnvironmentCurve(ReportModel):
    env_index: int
    means: list[float]
    mean_regret: list[float]
    stderr: list[float]
    min_expected_pulls: float


class RegretCurve(ReportModel):
    t: list[int]
    curves: list[EnvironmentCurve]
    max_over_pair: Optional[list[float]] = None
    bounds: list[BoundSpec] = Field(default_factory=list)
    regret_floor: Optional[float] = None
    policy: dict[str, Any] = Field(default_factory=dict)
    horizon: int
    replications: int
    seed: int

    @property
    def final_regret(self) -> float:
        if self.max_over_pair is not None:
            return self.max_over_pair[-1]
        return self.curves[0].mean_regret[-1]


class RunRecord(BaseModel):
    id: int
    kind: str
    label: str
    verdict: Optional[str]
    payload: str
    created_at: datetime

    model_config = ConfigDict(from_attributes=True)
