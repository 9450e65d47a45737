"""Run configuration: a YAML or JSON document validated before any computation.

Unknown keys are rejected at every level. The JSON schema of the document
is written to ``docs/config.schema.json`` by :func:`write_schema`.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .learners import LEARNER_KINDS, LearnerSpec
from .optimizer import LinearConstraint, NormBall, Program, SolverOptions
from .risk import BasisSpec
from .simulation import SIMULATION_LEARNER

__all__ = ["RunConfig", "ConfigError", "load_config", "write_schema"]


class ConfigError(ValueError):
    """The configuration document is unreadable or fails validation."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SchemaConfig(_Strict):
    y: str = "y"
    a: str = "a"
    x: Optional[list[str]] = Field(None, description="confounder columns; default: all others")


class DataConfig(_Strict):
    columns: SchemaConfig = SchemaConfig()
    v_columns: Optional[list[str]] = Field(None, description="prediction covariates; default: all of x")


class LearnerConfig(_Strict):
    kind: Literal[LEARNER_KINDS] = SIMULATION_LEARNER.kind
    regularization: float = Field(SIMULATION_LEARNER.regularization, ge=0)
    rounds: int = Field(100, ge=1)
    learning_rate: float = Field(0.1, gt=0, le=1)
    max_depth: int = Field(1, ge=1)

    def spec(self):
        return LearnerSpec(**self.model_dump())


class LearnersConfig(_Strict):
    propensity: LearnerConfig = LearnerConfig()
    outcome: LearnerConfig = LearnerConfig()


class BasisConfig(_Strict):
    kind: Literal["raw", "quadratic", "custom"] = "quadratic"
    include_intercept: bool = False
    terms: list[list[int]] = []

    def spec(self):
        return BasisSpec(self.kind, self.include_intercept, tuple(tuple(t) for t in self.terms))


Bound = Union[float, list[float], None]


class BoxConfig(_Strict):
    lower: Bound = -1.0
    upper: Bound = 1.0


class LinearConfig(_Strict):
    coef: list[float]
    rhs: float = 0.0
    name: Optional[str] = None


class NormBallConfig(_Strict):
    radius: float = Field(gt=0)
    center: Optional[list[float]] = None
    name: Optional[str] = None


class ConstraintsConfig(_Strict):
    box: BoxConfig = BoxConfig()
    linear: list[LinearConfig] = []
    norm_ball: list[NormBallConfig] = []

    def program(self, dim):
        cons = []
        for i, c in enumerate(self.linear):
            if len(c.coef) != dim:
                raise ConfigError(f"linear constraint {i} has {len(c.coef)} coefficients, basis has {dim}")
            cons.append(LinearConstraint(c.coef, c.rhs, c.name or f"linear[{i}]"))
        for i, c in enumerate(self.norm_ball):
            if c.center is not None and len(c.center) != dim:
                raise ConfigError(f"norm ball {i} center has {len(c.center)} entries, basis has {dim}")
            cons.append(NormBall(c.radius, c.center, c.name or f"norm_ball[{i}]"))
        for side in ("lower", "upper"):
            b = getattr(self.box, side)
            if isinstance(b, list) and len(b) != dim:
                raise ConfigError(f"box.{side} has {len(b)} entries, basis has {dim}")
        try:
            return Program(dim, cons, self.box.lower, self.box.upper)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


class SolverConfig(_Strict):
    starts: int = Field(8, ge=1)
    max_iter: int = Field(2000, ge=1)
    max_outer: int = Field(40, ge=1)
    kkt_tol: float = Field(1e-6, gt=0)
    feas_tol: float = Field(1e-8, gt=0)
    act_tol: float = Field(1e-7, gt=0)
    seed: int = 0
    start_radius: float = Field(10.0, gt=0)
    polish: bool = True

    def options(self):
        return SolverOptions(**self.model_dump())


class InferenceConfig(_Strict):
    enabled: bool = True
    level: float = Field(0.95, gt=0, lt=1)
    sc_tol: float = Field(1e-6, ge=0)


class SimulationConfig(_Strict):
    sizes: list[int] = [1000, 2500, 5000, 10000]
    reps: int = Field(50, ge=1)
    methods: list[Literal["dr", "plugin"]] = ["dr", "plugin"]
    x_modes: list[Literal["correct", "distorted"]] = ["correct", "distorted"]
    oracle_n: int = Field(1_000_000, ge=1000)
    oracle_seed: Optional[int] = None
    n_jobs: int = 1

    @field_validator("sizes")
    @classmethod
    def _sizes(cls, v):
        if not v:
            raise ValueError("sizes must not be empty")
        if any(s < 10 for s in v):
            raise ValueError("every size must be at least 10")
        return v

    @field_validator("methods", "x_modes")
    @classmethod
    def _nonempty(cls, v):
        if not v:
            raise ValueError("must not be empty")
        return v


class RunConfig(_Strict):
    """Top-level configuration document."""

    data: DataConfig = DataConfig()
    target_a: Literal[0, 1] = 1
    method: Literal["dr", "plugin"] = "dr"
    folds: int = Field(2, ge=1)
    seed: int = 0
    epsilon: float = Field(0.01, gt=0, lt=0.5)
    learners: LearnersConfig = LearnersConfig()
    basis: BasisConfig = BasisConfig()
    constraints: ConstraintsConfig = ConstraintsConfig()
    solver: SolverConfig = SolverConfig()
    inference: InferenceConfig = InferenceConfig()
    simulation: SimulationConfig = SimulationConfig()

    @model_validator(mode="after")
    def _custom_terms(self):
        if self.basis.kind == "custom" and not self.basis.terms:
            raise ValueError("basis.kind 'custom' needs basis.terms")
        return self


def load_config(path=None):
    """Read and validate a config file; ``None`` gives all defaults.

    Raises
    ------
    ConfigError
        Unreadable file, malformed YAML/JSON, unknown keys or invalid values.
    """
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        # YAML is a superset of JSON, so one parser covers both
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: malformed document: {exc}") from None
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    try:
        return RunConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(f"{path}: invalid config:\n{exc}") from None


def schema_json():
    return json.dumps(RunConfig.model_json_schema(), indent=2, sort_keys=True) + "\n"


def write_schema(path):
    from .data import atomic_write_text

    atomic_write_text(path, schema_json())
