"""Experiment configuration: schema, loading and conversion to model objects."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigurationError
from .limit import EnsembleSpec, LimitVariant, TimeChangeLaw

SCHEMA_VERSION = 1

COMMANDS = ("pickands", "tail", "order-stats", "sojourn", "limit-law", "validate-sampler")

# Ten (s, t) index pairs on the default 256-point fBm grid over [0, 1].
DEFAULT_FBM_PAIRS = [
    (1, 1), (10, 20), (25, 50), (51, 102), (64, 192),
    (100, 100), (128, 255), (150, 200), (200, 210), (255, 255),
]
DEFAULT_LAGS = [1, 2, 5, 10, 20, 50, 100, 200, 300, 511]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ThetaConfig(_Strict):
    kind: Literal["discrete", "uniform"]
    atoms: Optional[list[tuple[float, float]]] = None
    lo: Optional[float] = None
    hi: Optional[float] = None

    def build(self) -> TimeChangeLaw:
        if self.kind == "discrete":
            if self.atoms is None or self.lo is not None or self.hi is not None:
                raise ConfigurationError("a discrete time change takes 'atoms' only")
            return TimeChangeLaw.discrete(self.atoms)
        if self.atoms is not None or self.lo is None or self.hi is None:
            raise ConfigurationError("a uniform time change takes 'lo' and 'hi' only")
        return TimeChangeLaw.uniform(self.lo, self.hi)


class EnsembleConfig(_Strict):
    family: Literal["powered_exponential", "generalized_cauchy"] = "powered_exponential"
    alpha: list[float] = Field(min_length=1, max_length=64)
    C: Optional[list[float]] = None
    b: Optional[list[float]] = None
    gamma: float = Field(1.0, gt=0)
    theta: Optional[list[Optional[ThetaConfig]]] = None

    @model_validator(mode="after")
    def _consistent(self):
        self.build()
        return self

    def build(self) -> EnsembleSpec:
        theta = None if self.theta is None else [None if t is None else t.build() for t in self.theta]
        return EnsembleSpec.build(self.alpha, self.C, self.b, theta, self.family, self.gamma)


class VariantConfig(_Strict):
    tag: Literal["standard", "order_stat", "time_changed", "nonstandard"] = "standard"
    j: Optional[int] = Field(None, ge=1)

    def build(self) -> LimitVariant:
        return LimitVariant(self.tag, self.j)


class ConstantValue(_Strict):
    value: float = Field(gt=0)
    stderr: float = Field(0.0, ge=0)


class PickandsConfig(_Strict):
    a: list[float] = Field(default_factory=lambda: [0.2, 0.1, 0.05], min_length=1)
    S: float = Field(20.0, gt=0)
    replicas: int = Field(10**6, ge=1)
    epsilon: Optional[float] = Field(1e-6, gt=0)
    certify: Literal["raise", "report"] = "report"
    power: Optional[float] = Field(None, gt=0)
    lower_bound: bool = True
    classical_replicas: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _positive(self):
        if any(a <= 0 for a in self.a):
            raise ConfigurationError("pitches a must be positive")
        return self


class TailConfig(_Strict):
    T: float = Field(1.0, gt=0)
    u: list[float] = Field(min_length=1)
    a: float = Field(0.25, gt=0)
    replicas: Union[int, list[int]] = 10**5
    max_halvings: int = Field(4, ge=0, le=8)
    H: Optional[Union[float, ConstantValue]] = None
    H_file: Optional[str] = None

    @model_validator(mode="after")
    def _check(self):
        if any(u <= 0 for u in self.u):
            raise ConfigurationError("tail levels u must be positive")
        reps = self.replicas if isinstance(self.replicas, list) else [self.replicas]
        if isinstance(self.replicas, list) and len(reps) != len(self.u):
            raise ConfigurationError("a replica list must have one entry per u")
        if any(r < 1 for r in reps):
            raise ConfigurationError("replicas must be >= 1")
        if self.H is not None and self.H_file is not None:
            raise ConfigurationError("give either H or H_file, not both")
        return self

    def replicas_for(self, index: int) -> int:
        return self.replicas[index] if isinstance(self.replicas, list) else self.replicas


class OrderStatsConfig(_Strict):
    T: float = Field(1.0, gt=0)
    u: float = Field(2.0, gt=0)
    a: float = Field(0.25, gt=0)
    replicas: int = Field(10**5, ge=1)
    halvings: int = Field(2, ge=0, le=8)


class SojournConfig(_Strict):
    t: float = Field(1.0, gt=0)
    u: list[float] = Field(min_length=1)
    x: list[float] = Field(default_factory=lambda: [0.5, 1.0])
    a: float = Field(0.05, gt=0)
    K: Optional[int] = Field(None, ge=1)
    sojourn_replicas: Union[int, list[int]] = 10**6
    B_replicas: int = Field(10**5, ge=1)
    epsilon: Optional[float] = Field(1e-2, gt=0)
    sensitivity_t: Optional[float] = Field(0.5, gt=0)

    @model_validator(mode="after")
    def _check(self):
        if any(x < 0 for x in self.x):
            raise ConfigurationError("x-grid values must be non-negative")
        if any(u <= 0 for u in self.u):
            raise ConfigurationError("sojourn levels must be positive for the Berman comparison")
        if isinstance(self.sojourn_replicas, list) and len(self.sojourn_replicas) != len(self.u):
            raise ConfigurationError("a replica list must have one entry per u")
        return self

    def budgets(self) -> dict:
        reps = self.sojourn_replicas
        return {u: (reps[i] if isinstance(reps, list) else reps) for i, u in enumerate(self.u)}


class LimitLawConfig(_Strict):
    u: list[float] = Field(min_length=1)
    times: list[float] = Field(default_factory=lambda: [0.0, 1.0], min_length=1)
    accepted: int = Field(1000, ge=1000)
    limit_replicas: int = Field(10**5, ge=2)
    max_draws: int = Field(10**9, ge=1)

    @model_validator(mode="after")
    def _check(self):
        if any(u <= 0 for u in self.u) or any(t < 0 for t in self.times):
            raise ConfigurationError("levels must be positive and times non-negative")
        return self


class ValidateSamplerConfig(_Strict):
    kind: Literal["fbm", "stationary"] = "fbm"
    alpha: list[float] = Field(default_factory=lambda: [0.5, 1.0, 1.5, 2.0])
    m: Optional[int] = Field(None, ge=2)
    t_max: float = Field(1.0, gt=0)
    replicas: int = Field(10**4, ge=2)
    pairs: list[tuple[int, int]] = Field(default_factory=lambda: list(DEFAULT_FBM_PAIRS))
    lags: list[int] = Field(default_factory=lambda: list(DEFAULT_LAGS))
    sigmas: float = Field(4.0, gt=0)

    @property
    def points(self) -> int:
        """Grid size: 256 for fBm and 512 for stationary runs unless set."""
        if self.m is not None:
            return self.m
        return 256 if self.kind == "fbm" else 512

    @model_validator(mode="after")
    def _check(self):
        m = self.points
        if self.kind == "fbm":
            if any(not 0 < a <= 2 for a in self.alpha):
                raise ConfigurationError("fBm alpha must lie in (0,2]")
            if any(not (0 <= s < m and 0 <= t < m) for s, t in self.pairs):
                raise ConfigurationError("covariance pairs must index the grid")
        elif any(not 0 < k < m for k in self.lags):
            raise ConfigurationError("lags must lie in 1..m-1")
        return self


class ExperimentConfig(_Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    seed: Optional[int] = Field(None, ge=0, lt=2**64)
    ensemble: Optional[EnsembleConfig] = None
    variant: VariantConfig = VariantConfig()
    pickands: Optional[PickandsConfig] = None
    tail: Optional[TailConfig] = None
    order_stats: Optional[OrderStatsConfig] = Field(None, alias="order-stats")
    sojourn: Optional[SojournConfig] = None
    limit_law: Optional[LimitLawConfig] = Field(None, alias="limit-law")
    validate_sampler: Optional[ValidateSamplerConfig] = Field(None, alias="validate-sampler")

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    def block(self, command: str):
        if command not in COMMANDS:
            raise ConfigurationError(f"unknown command {command!r}")
        blk = getattr(self, command.replace("-", "_"))
        if blk is None:
            raise ConfigurationError(f"config has no '{command}' block")
        if command != "validate-sampler" and self.ensemble is None:
            raise ConfigurationError(f"'{command}' needs an 'ensemble' block")
        if command == "validate-sampler" and blk.kind == "stationary" and self.ensemble is None:
            raise ConfigurationError("stationary sampler validation takes its models from 'ensemble'")
        if self.ensemble is not None:
            self.variant.build().validate(self.ensemble.build())
        return blk

    def spec(self) -> EnsembleSpec:
        return self.ensemble.build()

    def to_dict(self) -> dict:
        # explicit nulls matter (e.g. ``epsilon: null`` disables certification)
        return self.model_dump(mode="json", by_alias=True)


def _format_validation_error(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        msg = err["msg"]
        ctx = err.get("ctx", {}).get("error")
        if ctx is not None:
            msg = str(ctx)
        parts.append(f"{loc}: {msg}")
    return "; ".join(parts)


def parse_config(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigurationError("a configuration must be a mapping")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigurationError(_format_validation_error(exc)) from None


def load_config(path: str | Path) -> ExperimentConfig:
    """Read a YAML or JSON experiment file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigurationError(f"cannot parse config {path}: {exc}") from None
    return parse_config(data)
