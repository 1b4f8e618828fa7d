"""Scenario configuration: TOML files validated into pydantic models.

Field names carry their unit (``horizon_s``, ``amplitude_m``). Model paths
are resolved relative to the config file, then against the bundled models.
"""

import copy
import math
from pathlib import Path
from typing import Literal, Optional, Union

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

DATA = Path(__file__).parent / "data"
BUNDLED_MODELS = DATA / "models"
BUNDLED_SCENARIOS = DATA / "scenarios"

Verdict = Literal["Converged", "Bounded", "Diverged"]
Gain = Union[float, list[float]]


class ConfigError(ValueError):
    pass


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ActuationSection(_Section):
    plant: Literal["rigid", "elastic", "rigid_limit"] = "elastic"
    # joints driven through SEAs on an elastic plant ("all" or joint names)
    elastic_joints: Union[Literal["all"], list[str]] = "all"


class SeaSection(_Section):
    K_S_nm_per_rad: Gain = 350.0
    K_D_nms_per_rad: Gain = 0.25
    gamma: Gain = 0.01
    I_m_kgm2: Gain = 1e-5
    tau_m_max_nm: Gain = math.inf


class ControllerSection(_Section):
    kind: Literal["rigid", "elastic", "motor_pd", "zero"] = "elastic"
    K_p: Gain = 20.0
    K_i: Gain = 100.0
    K_pj: Gain = 100.0
    K_dj: Gain = 20.0
    K_m_per_s: Gain = 100.0
    # controller-side SEA estimates as multiples of the plant values
    K_S_scale: float = Field(1.0, gt=0)
    K_D_scale: float = Field(1.0, gt=0)
    injection: Literal["motor", "joint"] = "motor"
    ideal_velocity: bool = False
    # motor-side PD (kind = "motor_pd"), link-side units
    pd_kp_nm_per_rad: float = 200.0
    pd_kd_nms_per_rad: float = 20.0
    # injected null-space contact wrench (6 per contact); bypasses the QP
    f0: Optional[list[float]] = None


class ReferenceSection(_Section):
    com_axis: Literal["x", "y", "z"] = "y"
    amplitude_m: float = 0.0
    frequency_hz: float = Field(0.0, ge=0)
    step_rad: float = 0.0
    step_joints: list[str] = []
    # initial posture (joint name -> rad); unnamed joints start at 0
    posture_rad: dict[str, float] = {}
    # joint-space directions searched to put the CoM over the support
    balance: list[dict[str, float]] = []


class IntegratorSection(_Section):
    method: Literal["rk4", "rk45"] = "rk4"
    dt_s: float = Field(1e-3, gt=0)
    rtol: float = Field(1e-6, gt=0)
    atol: float = Field(1e-8, gt=0)
    lambda_q_per_s: float = Field(10.0, ge=0)
    baumgarte_kp: float = 100.0
    baumgarte_kd: float = 20.0
    horizon_s: float = Field(5.0, gt=0)
    control_period_s: float = Field(1e-3, gt=0)
    # "zoh" holds each command for a control period; "continuous" re-evaluates
    # the controller at every integrator stage
    control_hold: Literal["zoh", "continuous"] = "zoh"
    output_rate_hz: float = Field(100.0, gt=0)
    fall_guard: bool = True
    fall_guard_time_s: float = Field(0.05, gt=0)


class ContactSection(_Section):
    mu: float = Field(0.5, gt=0)
    n_edges: int = Field(4, ge=4)
    f_min_n: float = Field(1.0, ge=0)


class MetricsSection(_Section):
    tail_s: float = Field(0.5, gt=0)
    com_tol_m: float = Field(5e-3, gt=0)
    joint_tol_rad: Optional[float] = None
    growth_factor: float = Field(1.5, ge=1)
    # tail errors below this are not tested for growth (periodic noise floor)
    growth_floor_m: float = Field(1e-4, ge=0)
    settle_tol_rad_s: float = Field(15.0, gt=0)


class SweepAxis(_Section):
    param: str
    values: list[Union[float, str, bool]]


class SweepSection(_Section):
    mode: Literal["grid", "list"] = "grid"
    axes: list[SweepAxis] = []
    # overrides defining a reference run; each cell reports its distance to it
    reference: dict[str, Union[float, str, bool]] = {}


class ScenarioConfig(_Section):
    name: str
    description: str = ""
    model: str
    expected_verdict: Optional[Verdict] = None
    actuation: ActuationSection = ActuationSection()
    sea: SeaSection = SeaSection()
    controller: ControllerSection = ControllerSection()
    references: ReferenceSection = ReferenceSection()
    integrator: IntegratorSection = IntegratorSection()
    contact: ContactSection = ContactSection()
    metrics: MetricsSection = MetricsSection()
    sweep: Optional[SweepSection] = None
    base_dir: Optional[str] = Field(None, exclude=True)

    @field_validator("name")
    @classmethod
    def _name(cls, v):
        if not v or any(c in v for c in "/\\"):
            raise ValueError("name must be a non-empty plain identifier")
        return v

    @model_validator(mode="after")
    def _consistency(self):
        if self.controller.kind == "elastic" and self.actuation.plant != "elastic":
            raise ValueError("the elastic controller needs an elastic plant")
        if self.controller.kind == "motor_pd" and self.actuation.plant == "rigid":
            raise ValueError("motor_pd drives motors: use an elastic or rigid_limit plant")
        return self

    def model_path(self):
        return resolve_model(self.model, self.base_dir)

    def with_overrides(self, overrides):
        """Copy with dotted-path overrides, e.g. {"controller.K_D_scale": 1.6}."""
        data = self.model_dump()
        data["base_dir"] = self.base_dir
        for path, value in overrides.items():
            set_path(data, path, value)
        return ScenarioConfig.model_validate(data)


def resolve_model(name, base_dir=None):
    cands = []
    if base_dir is not None:
        cands.append(Path(base_dir) / name)
    cands += [Path(name), BUNDLED_MODELS / name, BUNDLED_MODELS / f"{name}.model"]
    for p in cands:
        if p.is_file():
            return p
    raise ConfigError(f"model file {name!r} not found")


def set_path(data, path, value):
    keys = path.split(".")
    node = data
    for k in keys[:-1]:
        if not isinstance(node, dict) or k not in node:
            raise ConfigError(f"unknown parameter path {path!r}")
        node = node[k]
        if node is None:
            raise ConfigError(f"unknown parameter path {path!r}")
    if not isinstance(node, dict) or keys[-1] not in node:
        raise ConfigError(f"unknown parameter path {path!r}")
    node[keys[-1]] = copy.deepcopy(value)


def parse_config(data, base_dir=None):
    try:
        cfg = ScenarioConfig.model_validate({**data, "base_dir": None if base_dir is None else str(base_dir)})
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.model_path()
    if cfg.sweep is not None:
        for ax in cfg.sweep.axes:
            set_path(cfg.model_dump(), ax.param, None)
        for path in cfg.sweep.reference:
            set_path(cfg.model_dump(), path, None)
    return cfg


def load_config(path):
    path = Path(path)
    if not path.is_file():
        cand = BUNDLED_SCENARIOS / (path.name if path.suffix else f"{path.name}.toml")
        if not cand.is_file():
            raise ConfigError(f"config file {str(path)!r} not found")
        path = cand
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data, path.parent)


def bundled_scenarios():
    return sorted(p.stem for p in BUNDLED_SCENARIOS.glob("*.toml"))
