"""Request/response models of the HTTP service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from ..scenario import Scenario


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class OptimizeRequest(_Model):
    scenario: Scenario
    seed: Optional[int] = Field(default=None, ge=0, lt=2**64)
    method: Optional[Literal["sa", "saa-mc", "saa-gl"]] = None


class OptimizeResponse(_Model):
    summary: dict
    history_csv: str
    device_map_csv: str
    feasible: bool
    exit_code: int
    wall_time_s: float


class EvaluateRequest(_Model):
    scenario: Scenario
    damping_ns_m: list[float]
    stiffness_n_m: list[float]
    n_check: Optional[int] = Field(default=None, ge=1)


class EvaluateResponse(_Model):
    report: dict


class GridSearchRequest(_Model):
    scenario: Scenario
    c_min: float = Field(gt=0)
    c_max: float = Field(gt=0)
    s_min: float
    s_max: float
    resolution: int = Field(default=200, ge=2)
    n_check: Optional[int] = Field(default=None, ge=1)


class GridSearchResponse(_Model):
    grid_csv: str
    best: Optional[dict]
    summary: dict


class ConvergenceStudyRequest(_Model):
    scenario: Scenario
    method: Literal["saa-mc", "saa-gl"] = "saa-mc"
    n_values: list[int] = Field(default=[4, 8, 16, 32, 64, 128], min_length=2)
    n_seeds: int = Field(default=10, ge=1)
    n_ref: int = Field(default=64, ge=2)
    mu_scale: float = Field(default=100.0, ge=0)
    tau_in: float = Field(default=1e-6, gt=0)
    unconstrained: bool = False


class ConvergenceStudyResponse(_Model):
    study_csv: str
    summary: dict


class HealthResponse(_Model):
    status: str
    version: str
