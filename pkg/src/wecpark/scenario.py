"""Scenario schema, parsing and assembly into optimization instances.

A scenario file is the YAML or JSON serialization of the Scenario model; the
same model rides inside the service request bodies. Unknown keys are rejected.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .dynamics import ArrayProblem, ControlVector
from .errors import ScenarioError
from .hydro import (
    DeviceGeometry,
    SurrogateParams,
    hydrostatic_stiffness,
    load_hydro_db,
    synthetic_hydro,
)
from .optimizer import (
    GAUSS_LEGENDRE,
    MONTE_CARLO,
    ArmijoParams,
    PenaltyConfig,
    SAAConfig,
    SAConfig,
)
from .waves import SpectrumParams, SpreadingParams, WaveClimate, build_spectral_grid

SPEC_VERSION = 1

METHOD_SA = "sa"
METHOD_SAA_MC = "saa-mc"
METHOD_SAA_GL = "saa-gl"


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SpectrumSpec(_Model):
    hs_m: float = Field(gt=0, description="significant wave height")
    tp_s: float = Field(gt=0, description="peak period")


class SpreadingSpec(_Model):
    theta0_rad: float = 0.0
    beta: float = Field(default=5.0, gt=0)


class ClimateComponentSpec(_Model):
    spectrum: SpectrumSpec
    spreading: SpreadingSpec = SpreadingSpec()


class ClimateSpec(_Model):
    components: list[ClimateComponentSpec] = Field(min_length=1)
    depth_m: float = Field(gt=0)
    gravity_m_s2: float = Field(default=9.81, gt=0)
    density_kg_m3: float = Field(default=1025.0, gt=0)


class DeviceSpec(_Model):
    x_m: float = 0.0
    y_m: float = 0.0
    radius_m: float = Field(gt=0)
    draft_m: float = Field(gt=0)
    generator_mass_kg: float = Field(ge=0)
    generator_stiffness_n_m: float = Field(default=0.0, ge=0)


class SurrogateHydroSpec(_Model):
    kind: Literal["surrogate"] = "surrogate"
    added_mass_kg: Optional[float] = Field(default=None, gt=0)
    damping_peak_kg_s: Optional[float] = Field(default=None, gt=0)
    peak_omega_rad_s: Optional[float] = Field(default=None, gt=0)
    excitation_scale: float = Field(default=1.0, gt=0)


class FileHydroSpec(_Model):
    kind: Literal["file"]
    path: str
    excitation_table: Optional[str] = None


class ConstraintSpec(_Model):
    alpha: float = Field(default=0.5, gt=0)
    positive_stiffness: bool = False
    damping_floor_ns_m: float = Field(default=1.0, gt=0)


class DiscretizationSpec(_Model):
    n_bins: int = Field(default=30, ge=1)
    coverage: float = Field(default=0.999, gt=0, lt=1)


class PenaltySpec(_Model):
    mu0: Optional[float] = Field(default=None, gt=0)
    mu_growth: float = Field(default=10.0, gt=1)
    tau_out: float = Field(default=1e-3, gt=0, lt=1)
    tau_in0: Optional[float] = Field(default=None, gt=0)
    tau_in_decay: float = Field(default=0.5, gt=0, lt=1)
    max_outer: int = Field(default=12, ge=1)
    n_check: Optional[int] = Field(default=None, ge=1)
    check_tail: float = Field(default=1e-3, gt=0, lt=0.5)


class SASpec(_Model):
    initial_step: Optional[float] = Field(default=None, gt=0)
    window: int = Field(default=60, ge=1)
    max_iters: int = Field(default=4000, ge=1)


class SAASpec(_Model):
    n_nodes: int = Field(default=16, ge=1)
    tail: float = Field(default=1e-3, gt=0, lt=0.5)
    max_iters: int = Field(default=400, ge=1)
    armijo_decrease: float = Field(default=1e-4, gt=0, lt=1)
    armijo_backtrack: float = Field(default=0.5, gt=0, lt=1)
    armijo_max_backtracks: int = Field(default=40, ge=1)


class OptimizerSpec(_Model):
    method: Literal["sa", "saa-mc", "saa-gl"] = METHOD_SAA_GL
    seed: int = Field(default=0, ge=0, lt=2**64)
    penalty: PenaltySpec = PenaltySpec()
    sa: SASpec = SASpec()
    saa: SAASpec = SAASpec()


class InitialGuessSpec(_Model):
    mode: Literal["explicit", "isolated-optimum"] = "isolated-optimum"
    damping_ns_m: Optional[list[float]] = None
    stiffness_n_m: Optional[list[float]] = None

    @model_validator(mode="after")
    def _explicit_needs_values(self):
        if self.mode == "explicit":
            if self.damping_ns_m is None or self.stiffness_n_m is None:
                raise ValueError(
                    "explicit initial guess requires damping_ns_m and "
                    "stiffness_n_m")
        return self


class Scenario(_Model):
    name: str = "scenario"
    climate: ClimateSpec
    devices: list[DeviceSpec] = Field(min_length=1)
    hydro: Union[SurrogateHydroSpec, FileHydroSpec] = Field(
        default=SurrogateHydroSpec(), discriminator="kind")
    constraint: ConstraintSpec = ConstraintSpec()
    discretization: DiscretizationSpec = DiscretizationSpec()
    optimizer: OptimizerSpec = OptimizerSpec()
    initial_guess: InitialGuessSpec = InitialGuessSpec()
    include_hydrostatic_stiffness: bool = True

    @model_validator(mode="after")
    def _devices_disjoint(self):
        for i in range(len(self.devices)):
            for j in range(i + 1, len(self.devices)):
                a, b = self.devices[i], self.devices[j]
                dist = math.hypot(a.x_m - b.x_m, a.y_m - b.y_m)
                if dist <= a.radius_m + b.radius_m:
                    raise ValueError(
                        f"devices[{i}] and devices[{j}] overlap: distance "
                        f"{dist:.4g} m <= radii sum "
                        f"{a.radius_m + b.radius_m:.4g} m")
        return self

    @model_validator(mode="after")
    def _explicit_guess_matches_devices(self):
        ig = self.initial_guess
        if ig.mode == "explicit":
            n = len(self.devices)
            if len(ig.damping_ns_m) != n or len(ig.stiffness_n_m) != n:
                raise ValueError(
                    f"explicit initial guess needs {n} damping and stiffness "
                    f"values (one per device)")
        return self


def parse_scenario(path) -> Scenario:
    """Load and validate a scenario file (.yaml/.yml/.json)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc}") from exc
    return parse_scenario_text(text, source=str(path))


def parse_scenario_text(text: str, source: str = "<string>") -> Scenario:
    try:
        data = yaml.safe_load(text)  # YAML is a JSON superset
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{source}: not valid YAML/JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioError(f"{source}: scenario must be a mapping")
    return validate_scenario(data, source=source)


def validate_scenario(data: dict, source: str = "<dict>") -> Scenario:
    try:
        return Scenario.model_validate(data)
    except ValidationError as exc:
        issues = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}"
            for err in exc.errors())
        raise ScenarioError(f"{source}: {issues}") from exc


def serialize_scenario(scenario: Scenario) -> str:
    """Canonical JSON form; parse(serialize(s)) == s."""
    return json.dumps(scenario.model_dump(mode="json"), indent=2,
                      sort_keys=False) + "\n"


def build_climate(scenario: Scenario) -> WaveClimate:
    comps = tuple(
        (SpectrumParams(hs=c.spectrum.hs_m, fp=1.0 / c.spectrum.tp_s),
         SpreadingParams(theta0=c.spreading.theta0_rad, beta=c.spreading.beta))
        for c in scenario.climate.components)
    return WaveClimate(components=comps, depth=scenario.climate.depth_m,
                       gravity=scenario.climate.gravity_m_s2,
                       density=scenario.climate.density_kg_m3)


def build_devices(scenario: Scenario) -> tuple[DeviceGeometry, ...]:
    rho = scenario.climate.density_kg_m3
    g = scenario.climate.gravity_m_s2
    out = []
    for d in scenario.devices:
        mass = rho * math.pi * d.radius_m**2 * d.draft_m + d.generator_mass_kg
        k = d.generator_stiffness_n_m
        if scenario.include_hydrostatic_stiffness:
            k += hydrostatic_stiffness(d.radius_m, rho, g)
        out.append(DeviceGeometry(x=d.x_m, y=d.y_m, radius=d.radius_m,
                                  draft=d.draft_m, mass=mass, stiffness=k))
    return tuple(out)


def build_problem(scenario: Scenario) -> ArrayProblem:
    climate = build_climate(scenario)
    grid = build_spectral_grid(climate, n_bins=scenario.discretization.n_bins,
                               coverage=scenario.discretization.coverage)
    devices = build_devices(scenario)
    if isinstance(scenario.hydro, SurrogateHydroSpec):
        db = synthetic_hydro(devices, grid, SurrogateParams(
            added_mass_scale=scenario.hydro.added_mass_kg,
            damping_scale=scenario.hydro.damping_peak_kg_s,
            peak_omega=scenario.hydro.peak_omega_rad_s,
            excitation_scale=scenario.hydro.excitation_scale))
    else:
        db = load_hydro_db(scenario.hydro.path, grid, len(devices),
                           excitation_table_path=scenario.hydro.excitation_table)
    return ArrayProblem(climate=climate, grid=grid, db=db, devices=devices,
                        alpha=scenario.constraint.alpha,
                        damping_floor=scenario.constraint.damping_floor_ns_m,
                        positive_stiffness=scenario.constraint.positive_stiffness)


def penalty_config(scenario: Scenario) -> PenaltyConfig:
    p = scenario.optimizer.penalty
    n_check = p.n_check
    if n_check is None:
        # tensorized rules grow as n^components: keep the default bounded
        n_check = 64 if len(scenario.climate.components) == 1 else 16
    return PenaltyConfig(mu0=p.mu0, mu_growth=p.mu_growth, tau_out=p.tau_out,
                         tau_in0=p.tau_in0, tau_in_decay=p.tau_in_decay,
                         max_outer=p.max_outer, n_check=n_check,
                         check_tail=p.check_tail)


def inner_config(scenario: Scenario, method: Optional[str] = None):
    method = method or scenario.optimizer.method
    if method == METHOD_SA:
        sa = scenario.optimizer.sa
        return SAConfig(initial_step=sa.initial_step, window=sa.window,
                        max_iters=sa.max_iters)
    if method in (METHOD_SAA_MC, METHOD_SAA_GL):
        saa = scenario.optimizer.saa
        return SAAConfig(
            kind=MONTE_CARLO if method == METHOD_SAA_MC else GAUSS_LEGENDRE,
            n_nodes=saa.n_nodes, tail=saa.tail, max_iters=saa.max_iters,
            armijo=ArmijoParams(sufficient_decrease=saa.armijo_decrease,
                                backtrack=saa.armijo_backtrack,
                                max_backtracks=saa.armijo_max_backtracks))
    raise ScenarioError(f"unknown optimization method {method!r}")


def explicit_initial_controls(scenario: Scenario) -> Optional[ControlVector]:
    ig = scenario.initial_guess
    if ig.mode != "explicit":
        return None
    return ControlVector(damping=np.asarray(ig.damping_ns_m, dtype=float),
                         stiffness=np.asarray(ig.stiffness_n_m, dtype=float))
