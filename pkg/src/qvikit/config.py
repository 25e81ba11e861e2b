"""Experiment configuration: a strict JSON schema validated with pydantic.

Unknown keys are rejected everywhere, and every numeric invariant of the
library types is re-checked at load time by constructing them.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
import pydantic
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator

from .elliptic import OperatorSpec, validate_spec
from .errors import QVIError
from .grid import GridSpec
from .obstacles import CoupledObstacleSpec, ImpulseObstacleSpec

SCHEMA_VERSIONS = (1,)


class ParseError(QVIError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line, self.field = line, field
        where = [f"line {line}"] if line is not None else []
        where += [f"field {field}"] if field else []
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class ConfigValidationError(QVIError, ValueError):
    """Every violated invariant, one (field, message) pair each."""

    def __init__(self, problems: list[tuple[str, str]]):
        self.problems = problems
        super().__init__("; ".join(f"{f}: {m}" for f, m in problems))


def _raise_all(problems: list[str]) -> None:
    if problems:
        raise ValueError("; ".join(problems))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridConfig(_Strict):
    dim: Literal[1, 2] = 1
    extent: list[float] = [1.0]
    nodes_per_axis: int = 66
    boundary: Literal["dirichlet_zero", "neumann"] = "dirichlet_zero"

    def build(self) -> GridSpec:
        return GridSpec(self.dim, tuple(self.extent), self.nodes_per_axis, self.boundary)

    @model_validator(mode="after")
    def _check(self):
        self.build()
        return self


class OperatorConfig(_Strict):
    a_diff: float = 1.0
    a_react: float = 0.0
    nonlinearity: Literal["none", "plus_max"] = "none"
    ellipticity_floor: float = 1e-8

    def build(self) -> OperatorSpec:
        return OperatorSpec(self.a_diff, self.a_react, self.nonlinearity, self.ellipticity_floor)


class ImpulseConfig(_Strict):
    kind: Literal["impulse"]
    k: float = 1.0
    c0_alpha: float = 1.0
    c0_gamma: float = 0.5

    def build(self) -> ImpulseObstacleSpec:
        return ImpulseObstacleSpec(self.k, self.c0_alpha, self.c0_gamma)

    @model_validator(mode="after")
    def _check(self):
        self.build()
        return self


class CoupledConfig(_Strict):
    kind: Literal["coupled"]
    b_operator: OperatorConfig = OperatorConfig(a_react=1.0)
    g_variant: Literal["pos_part_gap", "thermoforming_g", "flipped_pos_part_gap"] = "pos_part_gap"
    k_field: float = 0.5
    nu_offset: float = 0.1
    nu: float = 0.1
    g_rhs: float = 1.0
    inner_solver: Literal["fixed_point", "newton"] = "fixed_point"

    def build(self) -> CoupledObstacleSpec:
        return CoupledObstacleSpec(self.b_operator.build(), self.g_variant, self.k_field,
                                   self.nu_offset, self.nu, self.g_rhs,
                                   inner_solver=self.inner_solver)

    @model_validator(mode="after")
    def _check(self):
        self.build()
        return self


ObstacleConfig = Annotated[Union[ImpulseConfig, CoupledConfig], Field(discriminator="kind")]


class ConstantForcing(_Strict):
    kind: Literal["constant"]
    value: float


class PatchForcing(_Strict):
    kind: Literal["per_patch"]
    values: list[float]
    labels: Optional[list[int]] = None  # default: equal contiguous patches


class FileForcing(_Strict):
    kind: Literal["file"]
    path: str


ForcingConfig = Annotated[Union[ConstantForcing, PatchForcing, FileForcing],
                          Field(discriminator="kind")]


def patch_labels(n: int, M: int, labels=None) -> np.ndarray:
    if labels is not None:
        lab = np.asarray(labels, dtype=np.int64)
        if lab.size != n:
            raise ValueError(f"patch labels need {n} entries")
        return lab
    return (np.arange(n) * M) // n


class Tolerances(_Strict):
    outer: float = Field(1e-10, gt=0)
    residual: float = Field(1e-8, gt=0)


class SolveExperiment(_Strict):
    kind: Literal["solve"]
    multistart: int = Field(0, ge=0)


class StabilityExperiment(_Strict):
    kind: Literal["stability", "envelope"]
    rule: Literal["decreasing", "increasing", "oscillating"] = "decreasing"
    n_max: int = 20
    n_start: int = 1
    delta_scale: float = 1.0
    nu: float = 0.1
    F_cap_factor: float = 10.0

    @field_validator("nu")
    @classmethod
    def _nu(cls, v):
        if not v > 0:
            raise ValueError("perturbation plan violates 0 < ν")
        return v

    @model_validator(mode="after")
    def _rule(self):
        if self.kind == "envelope" and self.rule != "oscillating":
            raise ValueError("envelope experiment needs the oscillating rule")
        if self.kind == "stability" and self.rule == "oscillating":
            raise ValueError("stability experiment needs a decreasing or increasing rule")
        if not 1 <= self.n_start < self.n_max:
            raise ValueError("need 1 <= n_start < n_max")
        return self


class CounterexampleExperiment(_Strict):
    kind: Literal["counterexample"]
    a: float = 0.25
    b: float = 0.75
    n_list: list[int] = [10, 100, 1000]

    @model_validator(mode="after")
    def _ab(self):
        problems = []
        if not 0 < self.a < self.b < 1:
            problems.append("counterexample needs 0 < a < b < 1")
        for n in self.n_list:
            if not (1.0 / n < self.a and self.b < 1.0 - 1.0 / n):
                problems.append(f"n={n} violates 1/n < a and b < 1 - 1/n")
        _raise_all(problems)
        return self


class CoordinateDescentConfig(_Strict):
    max_rounds: int = Field(20, ge=1)
    xtol_rel: float = Field(1e-4, gt=0)
    tol_J: float = Field(1e-12, ge=0)


class SearchConfig(_Strict):
    grid_points: int = Field(11, ge=2)
    coordinate_descent: Optional[CoordinateDescentConfig] = CoordinateDescentConfig()
    refinement_levels: list[int] = []


class ControlExperiment(_Strict):
    kind: Literal["control"]
    patches: int = Field(2, ge=1, le=3)
    labels: Optional[list[int]] = None
    nu: list[float]
    F: list[float]
    objective: Literal["singleton_gap_tracking", "value_tracking"] = "singleton_gap_tracking"
    target: float = 0.0
    lam: float = 1e-3
    search: SearchConfig = SearchConfig()

    @model_validator(mode="after")
    def _bounds(self):
        problems = []
        if len(self.nu) != self.patches or len(self.F) != self.patches:
            problems.append(f"nu and F need {self.patches} entries")
        if not all(v > 0 for v in self.nu):
            problems.append("control bounds violate 0 < ν")
        if any(f < v for v, f in zip(self.nu, self.F)):
            problems.append("control bounds violate ν ≤ F")
        if not self.lam > 0:
            problems.append("control cost needs λ > 0")
        _raise_all(problems)
        return self


ExperimentConfigT = Annotated[
    Union[SolveExperiment, StabilityExperiment, CounterexampleExperiment, ControlExperiment],
    Field(discriminator="kind")]


class ExperimentConfig(_Strict):
    schema_version: int
    seed: int = 0
    grid: Optional[GridConfig] = None
    operator: OperatorConfig = OperatorConfig()
    obstacle: Optional[ObstacleConfig] = None
    forcing: Optional[ForcingConfig] = None
    forcing_cap: Optional[ForcingConfig] = None
    tolerances: Tolerances = Tolerances()
    experiment: ExperimentConfigT
    _base_dir: str = PrivateAttr(".")

    @field_validator("schema_version")
    @classmethod
    def _version(cls, v):
        if v not in SCHEMA_VERSIONS:
            raise ValueError(f"unsupported schema_version {v}; supported {SCHEMA_VERSIONS}")
        return v

    @model_validator(mode="after")
    def _needs(self):
        if self.experiment.kind == "counterexample":
            return self
        missing = [k for k in ("grid", "obstacle") if getattr(self, k) is None]
        if self.experiment.kind != "control" and self.forcing is None:
            missing.append("forcing")
        if missing:
            raise ValueError(f"{self.experiment.kind} experiment needs {', '.join(missing)}")
        validate_spec(self.operator.build(), self.grid.build())
        return self

    @property
    def kind(self) -> str:
        return self.experiment.kind


def _line_of(text: str, loc: tuple) -> int | None:
    """Best-effort line of the innermost named key of an error location."""
    keys = [k for k in loc if isinstance(k, str)]
    for key in reversed(keys):
        for i, line in enumerate(text.splitlines(), 1):
            if f'"{key}"' in line:
                return i
    return None


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{source}: {exc.msg}", line=exc.lineno) from exc
    if not isinstance(data, dict):
        raise ParseError(f"{source}: top level must be an object", line=1)
    try:
        return ExperimentConfig.model_validate(data)
    except pydantic.ValidationError as exc:
        problems = []
        for err in exc.errors():
            field = ".".join(str(p) for p in err["loc"]) or "<root>"
            line = _line_of(text, err["loc"])
            msg = err["msg"].removeprefix("Value error, ")
            problems.append((field if line is None else f"{field} (line {line})", msg))
        raise ConfigValidationError(problems) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    cfg = parse_config(path.read_text(), str(path))
    forcings = [cfg.forcing, cfg.forcing_cap]
    for fc in forcings:
        if isinstance(fc, FileForcing):
            ref = (path.parent / fc.path)
            if not ref.is_file():
                raise ConfigValidationError([("forcing.path", f"file {fc.path} does not exist")])
    cfg._base_dir = str(path.parent)
    return cfg
