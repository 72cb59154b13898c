"""Sizing and validation math for a quasi-direct-drive (QDD) wrist actuator.

Covers gear output torque, reflected inertia, Lewis tooth bending stress,
rise-time bandwidth, backdrive torque, a saturated PD step simulation and a
requirements-table evaluator. Units are SI internally; gear geometry is given
in millimetres and stresses are reported in MPa.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
import json
import math
from pathlib import Path

import numpy as np

from . import _backend
from .errors import NonPositiveInput, ParseError, UnstableSimulation

QDD_THRESHOLD = 1e-5
BACKDRIVE_BUDGET_NM = 0.4
MARGINAL_BAND = 0.10

_DATA = Path(__file__).parent / "data"


@dataclass(frozen=True)
class MotorSpec:
    name: str
    rated_torque: float  # Nm
    rated_speed_rpm: float
    rotor_inertia: float  # kg m^2

    def __post_init__(self):
        if not (self.rated_torque > 0 and self.rated_speed_rpm > 0 and self.rotor_inertia >= 0):
            raise NonPositiveInput(f"motor {self.name!r} needs positive ratings")


@dataclass(frozen=True)
class GearboxSpec:
    ratio: float
    module_mm: float = 1.0
    face_width_mm: float = 10.0
    form_factor: float = 0.32  # Lewis Y
    dynamic_factor: float = 1.5  # K_d
    allowable_stress_mpa: float = 310.0
    pitch_radius_mm: float = 20.0

    def __post_init__(self):
        if not self.ratio >= 1:
            raise NonPositiveInput("gear ratio must be at least 1")
        geo = (self.module_mm, self.face_width_mm, self.form_factor, self.allowable_stress_mpa,
               self.pitch_radius_mm)
        if min(geo) <= 0:
            raise NonPositiveInput("gear geometry must be positive")
        if self.dynamic_factor < 1:
            raise NonPositiveInput("dynamic factor must be >= 1")


def output_torque(motor: MotorSpec, gear: GearboxSpec, efficiency: float = 1.0) -> float:
    if not 0 < efficiency <= 1:
        raise NonPositiveInput("efficiency must be in (0, 1]")
    return motor.rated_torque * gear.ratio * efficiency


@dataclass(frozen=True)
class ReflectedInertia:
    reflected: float  # kg m^2 at the output
    load: float
    ratio: float
    qdd: bool


def reflected_inertia_ratio(motor: MotorSpec, gear: GearboxSpec, load_inertia: float) -> ReflectedInertia:
    """Rotor inertia referred to the output (``J_rotor * N**2``) over the load inertia.

    The QDD flag requires the ratio to be strictly below ``QDD_THRESHOLD``.
    """
    if not load_inertia > 0:
        raise NonPositiveInput("load inertia must be positive")
    reflected = motor.rotor_inertia * gear.ratio**2
    ratio = reflected / load_inertia
    return ReflectedInertia(reflected, load_inertia, ratio, ratio < QDD_THRESHOLD)


@dataclass(frozen=True)
class LewisResult:
    tangential_force_n: float
    bending_stress_mpa: float
    factor_of_safety: float

    def to_json(self) -> dict:
        fos = self.factor_of_safety
        return {
            "tangential_force_n": self.tangential_force_n,
            "bending_stress_mpa": self.bending_stress_mpa,
            "factor_of_safety": None if math.isinf(fos) else fos,
        }


def lewis_stress_mpa(force_n: float, face_width_mm: float, module_mm: float,
                     form_factor: float, dynamic_factor: float) -> float:
    # N / (m * m) = Pa; report MPa
    sigma = dynamic_factor * force_n / (face_width_mm * 1e-3 * module_mm * 1e-3 * form_factor)
    return sigma * 1e-6


def lewis_bending_check(gear: GearboxSpec, torque: float) -> LewisResult:
    if torque < 0:
        raise NonPositiveInput("transmitted torque must be non-negative")
    ft = torque / (gear.pitch_radius_mm * 1e-3)
    sigma = lewis_stress_mpa(ft, gear.face_width_mm, gear.module_mm, gear.form_factor,
                             gear.dynamic_factor)
    fos = math.inf if sigma == 0 else gear.allowable_stress_mpa / sigma
    return LewisResult(ft, sigma, fos)


def _sig15(x: float) -> float:
    # drop the last-ulp noise of the division so 0.35 / 0.035 is exactly 10.0
    return float(f"{x:.15g}")


def bandwidth_from_rise_time(rise_time: float) -> float:
    """First-order rule of thumb ``B = 0.35 / t_r`` (Hz from seconds)."""
    if not rise_time > 0:
        raise NonPositiveInput("rise time must be positive")
    return _sig15(0.35 / rise_time)


def rise_time_from_bandwidth(bandwidth_hz: float) -> float:
    if not bandwidth_hz > 0:
        raise NonPositiveInput("bandwidth must be positive")
    return _sig15(0.35 / bandwidth_hz)


def torque_from_force(force: float, lever: float) -> float:
    if not lever > 0:
        raise NonPositiveInput("lever arm must be positive")
    return force * lever


@dataclass(frozen=True)
class BackdriveCheck:
    force_n: float
    lever_m: float
    torque_nm: float
    budget_nm: float
    within_budget: bool


def backdrive_check(force: float, lever: float, budget: float = BACKDRIVE_BUDGET_NM) -> BackdriveCheck:
    tau = torque_from_force(force, lever)
    return BackdriveCheck(force, lever, tau, budget, tau <= budget)


# --- PD step response ----------------------------------------------------------------


@dataclass(frozen=True)
class PDPlant:
    """Representative, calibrated wrist-axis plant and PD gains.

    Chosen so the simulated step has a 10-90% rise time near 34.5 ms, with
    the commanded torque saturating at the 3.75 Nm test level.
    """

    inertia: float = 0.005
    damping: float = 0.01
    kp: float = 45.0
    kd: float = 0.95
    torque_limit: float = 3.75
    amplitude: float = 0.2
    dt: float = 0.001
    duration: float = 0.5
    torque_lag: float = 0.001

    def __post_init__(self):
        if not (self.inertia > 0 and self.dt > 0 and self.duration > 0 and self.torque_limit > 0):
            raise NonPositiveInput("plant inertia, dt, duration and torque limit must be positive")
        if min(self.damping, self.kp, self.kd, self.torque_lag) < 0:
            raise NonPositiveInput("damping, gains and lag must be non-negative")


@dataclass(frozen=True)
class StepResponse:
    t: np.ndarray = field(repr=False)
    position: np.ndarray = field(repr=False)
    torque: np.ndarray = field(repr=False)
    rise_time: float | None
    bandwidth_hz: float | None
    torque_rise_time: float | None
    torque_bandwidth_hz: float | None

    def to_json(self) -> dict:
        return {
            "rise_time_s": self.rise_time,
            "bandwidth_hz": self.bandwidth_hz,
            "torque_rise_time_s": self.torque_rise_time,
            "torque_bandwidth_hz": self.torque_bandwidth_hz,
            "peak_torque_nm": float(np.max(np.abs(self.torque))) if self.torque.size else 0.0,
            "final_position_rad": float(self.position[-1]),
        }


def _crossing(t: np.ndarray, y: np.ndarray, level: float) -> float | None:
    idx = np.flatnonzero(y >= level)
    if idx.size == 0:
        return None
    i = int(idx[0])
    if i == 0:
        return float(t[0])
    y0, y1 = y[i - 1], y[i]
    return float(t[i - 1] + (level - y0) / (y1 - y0) * (t[i] - t[i - 1]))


def rise_time_10_90(t, y, final: float) -> float | None:
    """Interpolated time from the first 10% to the first 90% crossing of ``final``."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if final == 0:
        return None
    if final < 0:
        y, final = -y, -final
    t10 = _crossing(t, y, 0.1 * final)
    t90 = _crossing(t, y, 0.9 * final)
    if t10 is None or t90 is None or t90 <= t10:
        return None
    return t90 - t10


def simulate_pd_step(plant: PDPlant | None = None, **overrides) -> StepResponse:
    """Saturated PD position step on a rigid inertia with viscous damping.

    Rise time is taken on the position trace relative to the commanded step,
    and separately on the applied-torque trace relative to its peak. Either
    is ``None`` when the trace never crosses 90%.
    """
    plant = plant or PDPlant()
    if overrides:
        plant = PDPlant(**{**plant.__dict__, **overrides})
    steps = int(round(plant.duration / plant.dt))
    pos, _vel, tau, ok = _backend.kernels.simulate_pd(
        plant.inertia, plant.damping, plant.kp, plant.kd, plant.torque_limit, plant.amplitude,
        plant.dt, steps, plant.torque_lag,
    )
    if not ok:
        raise UnstableSimulation(f"state diverged after {len(pos) - 1} steps")
    t = np.arange(pos.size) * plant.dt
    tr = rise_time_10_90(t, pos, plant.amplitude)
    peak = float(tau[np.argmax(np.abs(tau))]) if tau.size else 0.0
    ttr = rise_time_10_90(t, tau, peak)
    return StepResponse(
        t=t,
        position=pos,
        torque=tau,
        rise_time=tr,
        bandwidth_hz=None if tr is None else bandwidth_from_rise_time(tr),
        torque_rise_time=ttr,
        torque_bandwidth_hz=None if ttr is None else bandwidth_from_rise_time(ttr),
    )


# --- requirements table -----------------------------------------------------------------


PASS, MARGINAL, FAIL = "pass", "marginal", "fail"


@dataclass(frozen=True)
class RequirementRow:
    name: str
    desired: float
    minimum: float
    maximum: float
    achieved: float
    uncertainty: float = 0.0

    def __post_init__(self):
        if self.minimum > self.maximum:
            raise ValueError(f"{self.name}: range minimum exceeds maximum")

    def state(self, band: float = MARGINAL_BAND) -> str:
        """pass inside [min, max]; marginal when outside by at most ``band``
        of the nearer bound; fail otherwise."""
        x = self.achieved
        if self.minimum <= x <= self.maximum:
            return PASS
        bound = self.minimum if x < self.minimum else self.maximum
        excess = abs(x - bound)
        return MARGINAL if excess <= band * abs(bound) * (1 + 1e-12) else FAIL

    def to_json(self) -> dict:
        def num(v):
            return None if math.isinf(v) else v

        return {
            "name": self.name,
            "desired": self.desired,
            "min": num(self.minimum),
            "max": num(self.maximum),
            "achieved": self.achieved,
            "uncertainty": self.uncertainty,
            "state": self.state(),
        }


@dataclass(frozen=True)
class RequirementReport:
    rows: tuple[RequirementRow, ...]

    @property
    def states(self) -> list[str]:
        return [r.state() for r in self.rows]

    def summary(self) -> dict[str, int]:
        s = self.states
        return {k: s.count(k) for k in (PASS, MARGINAL, FAIL)}

    def to_json(self) -> dict:
        return {"rows": [r.to_json() for r in self.rows], "summary": self.summary()}


def evaluate_requirements(rows) -> RequirementReport:
    return RequirementReport(tuple(rows))


REQUIREMENT_COLUMNS = ("name", "desired", "min", "max", "achieved", "uncertainty")


def _num(text: str, line: int, col: str) -> float:
    text = text.strip()
    if text == "":
        return math.inf if col == "max" else (-math.inf if col == "min" else 0.0)
    try:
        return float(text)
    except ValueError as exc:
        raise ParseError(f"column {col!r}: not a number: {text!r}", line) from exc


def load_requirements_csv(path) -> list[RequirementRow]:
    """Read ``name,desired,min,max,achieved,uncertainty``; a blank or ``inf``
    bound is open."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        header = [h.strip() for h in header]
        missing = [c for c in REQUIREMENT_COLUMNS if c not in header]
        if missing:
            raise ParseError(f"missing columns {missing}", 1)
        pos = {c: header.index(c) for c in REQUIREMENT_COLUMNS}
        rows = []
        for line, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) < len(header):
                raise ParseError("too few fields", line)
            vals = {c: _num(rec[pos[c]], line, c) for c in REQUIREMENT_COLUMNS[1:]}
            try:
                rows.append(RequirementRow(rec[pos["name"]].strip(), vals["desired"], vals["min"],
                                           vals["max"], vals["achieved"], vals["uncertainty"]))
            except ValueError as exc:
                raise ParseError(str(exc), line) from exc
    return rows


def bundled_requirements_path() -> Path:
    return _DATA / "table1_requirements.csv"


def load_bundled_requirements() -> list[RequirementRow]:
    return load_requirements_csv(bundled_requirements_path())


# --- actuator spec files ------------------------------------------------------------------


@dataclass(frozen=True)
class ActuatorSpec:
    motor: MotorSpec
    gear: GearboxSpec
    efficiency: float = 1.0
    load_inertia: float = 0.1
    test_torque: float = 3.75
    target_torque: float = 3.0
    min_factor_of_safety: float = 3.0
    backdrive_force: float = 5.0
    backdrive_lever: float = 0.07
    plant: PDPlant = field(default_factory=PDPlant)


def actuator_from_dict(d: dict) -> ActuatorSpec:
    m = d["motor"]
    motor = MotorSpec(m.get("name", "motor"), m["rated_torque_nm"], m["rated_speed_rpm"],
                      m["rotor_inertia_kgm2"])
    gear = GearboxSpec(**d["gearbox"])
    checks = d.get("checks", {})
    return ActuatorSpec(
        motor=motor,
        gear=gear,
        efficiency=d.get("efficiency", 1.0),
        load_inertia=d.get("load_inertia_kgm2", 0.1),
        test_torque=checks.get("test_torque_nm", 3.75),
        target_torque=checks.get("target_torque_nm", 3.0),
        min_factor_of_safety=checks.get("min_factor_of_safety", 3.0),
        backdrive_force=checks.get("backdrive_force_n", 5.0),
        backdrive_lever=checks.get("backdrive_lever_m", 0.07),
        plant=PDPlant(**d.get("pd_plant", {})),
    )


def load_actuator(path=None) -> ActuatorSpec:
    p = Path(path) if path is not None else _DATA / "dexwrist_actuator.json"
    with open(p) as fh:
        return actuator_from_dict(json.load(fh))


def actuator_report(spec: ActuatorSpec) -> dict:
    """All actuator checks for one spec, as a JSON-ready dict."""
    tau = output_torque(spec.motor, spec.gear, spec.efficiency)
    ri = reflected_inertia_ratio(spec.motor, spec.gear, spec.load_inertia)
    lew = lewis_bending_check(spec.gear, spec.test_torque)
    bd = backdrive_check(spec.backdrive_force, spec.backdrive_lever)
    step = simulate_pd_step(spec.plant)
    return {
        "motor": spec.motor.name,
        "output_torque": {"value_nm": tau, "target_nm": spec.target_torque,
                          "meets_target": tau >= spec.target_torque},
        "reflected_inertia": {"reflected_kgm2": ri.reflected, "load_kgm2": ri.load,
                              "ratio": ri.ratio, "qdd": ri.qdd, "threshold": QDD_THRESHOLD},
        "lewis": {**lew.to_json(), "torque_nm": spec.test_torque,
                  "min_factor_of_safety": spec.min_factor_of_safety,
                  "passes": lew.factor_of_safety >= spec.min_factor_of_safety},
        "backdrive": {"force_n": bd.force_n, "lever_m": bd.lever_m, "torque_nm": bd.torque_nm,
                      "budget_nm": bd.budget_nm, "within_budget": bd.within_budget},
        "step_response": step.to_json(),
        "parameters_note": "rotor inertia, gear geometry and plant parameters are representative, calibrated values",
    }
