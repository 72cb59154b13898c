"""Robot models, forward kinematics, Jacobians and static loads.

A robot is a serial base chain followed by a wrist. The wrist is either the
decoupled 2-(R,RR) parallel wrist (:class:`DexWristModel`) or a conventional
serial wrist (:class:`SerialWrist`). For kinematics the parallel wrist behaves
like two revolute joints sharing one pivot point: flexion/extension first,
then radial/ulnar deviation, each driven 1:1 by its own motor.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
import json
import math
from pathlib import Path

import numpy as np

from . import _backend
from .errors import ClosureFailure, DegenerateInput, DimensionMismatch, NonUnitAxis, NotParallelWrist
from .geom import Pose, Wrench, compose, pose_from_json, rotation_from_axis_angle

GRAVITY = 9.81

_DEG = math.pi / 180.0


def _unit(v, what="axis") -> np.ndarray:
    v = np.array(v, dtype=float).reshape(3)
    if abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise NonUnitAxis(f"{what} {v.tolist()} is not unit length")
    v.setflags(write=False)
    return v


@dataclass(frozen=True)
class JointSpec:
    name: str
    axis: np.ndarray
    origin: Pose = field(default_factory=Pose)
    lower: float = -math.pi
    upper: float = math.pi
    velocity_limit: float = math.pi

    def __post_init__(self):
        object.__setattr__(self, "axis", _unit(self.axis, f"joint {self.name} axis"))
        if not self.lower < self.upper:
            raise DegenerateInput(f"joint {self.name}: lower limit must be below upper")
        if not self.velocity_limit > 0:
            raise DegenerateInput(f"joint {self.name}: velocity limit must be positive")


@dataclass(frozen=True)
class DexWristModel:
    """Decoupled two-DOF spherical wrist.

    ``axis_fe`` and ``axis_ru`` are expressed in the pivot frame and must be
    orthogonal; they intersect at the pivot origin by construction. The RR leg
    (proximal arc, distal arc) closes the loop from a base-fixed axis to the
    platform normal and only matters for visualization and self-collision.
    """

    pivot: Pose = field(default_factory=Pose)
    axis_fe: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    axis_ru: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    rom_fe: tuple[float, float] = (-40 * _DEG, 40 * _DEG)
    rom_ru: tuple[float, float] = (-40 * _DEG, 40 * _DEG)
    velocity_limit: float = 96.6 * 2 * math.pi / 60  # rad/s
    transmission: np.ndarray = field(default_factory=lambda: np.eye(2))
    r_leg_arc: float = 90 * _DEG
    rr_leg_arcs: tuple[float, float] = (90 * _DEG, 90 * _DEG)
    linkage_radius: float = 0.03
    leg_radius: float = 0.004

    def __post_init__(self):
        fe = _unit(self.axis_fe, "F/E axis")
        ru = _unit(self.axis_ru, "R/U axis")
        if abs(fe @ ru) > 1e-9:
            raise DegenerateInput("F/E and R/U axes must be orthogonal")
        t = np.array(self.transmission, dtype=float)
        if t.shape != (2, 2) or not np.array_equal(t, np.eye(2)):
            raise DegenerateInput("decoupled wrist transmission must be the identity")
        t.setflags(write=False)
        object.__setattr__(self, "axis_fe", fe)
        object.__setattr__(self, "axis_ru", ru)
        object.__setattr__(self, "transmission", t)
        object.__setattr__(self, "rom_fe", (float(self.rom_fe[0]), float(self.rom_fe[1])))
        object.__setattr__(self, "rom_ru", (float(self.rom_ru[0]), float(self.rom_ru[1])))

    def joints(self) -> tuple[JointSpec, JointSpec]:
        fe = JointSpec("wrist_fe", self.axis_fe, self.pivot, *self.rom_fe, self.velocity_limit)
        ru = JointSpec("wrist_ru", self.axis_ru, Pose(), *self.rom_ru, self.velocity_limit)
        return fe, ru


@dataclass(frozen=True)
class SerialWrist:
    joints: tuple[JointSpec, ...]


@dataclass(frozen=True)
class Capsule:
    name: str
    link: str
    p0: np.ndarray
    p1: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "p0", np.array(self.p0, dtype=float).reshape(3))
        object.__setattr__(self, "p1", np.array(self.p1, dtype=float).reshape(3))
        if not self.radius > 0:
            raise DegenerateInput(f"capsule {self.name}: radius must be positive")


@dataclass(frozen=True)
class RobotModel:
    name: str
    base_joints: tuple[JointSpec, ...]
    wrist: DexWristModel | SerialWrist
    tool: Pose = field(default_factory=Pose)
    capsules: tuple[Capsule, ...] = ()
    base_pose: Pose = field(default_factory=Pose)
    collision_ignore: frozenset = frozenset()
    home: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "base_joints", tuple(self.base_joints))
        object.__setattr__(self, "capsules", tuple(self.capsules))
        object.__setattr__(
            self, "collision_ignore", frozenset(frozenset(p) for p in self.collision_ignore)
        )
        names = self.link_names
        for c in self.capsules:
            if c.link not in names:
                raise DegenerateInput(f"capsule {c.name} refers to unknown link {c.link!r}")
        if self.home is None:
            lo, hi = self.limits
            home = np.clip(np.zeros(self.dof), lo, hi)
        else:
            home = np.array(self.home, dtype=float)
            if home.shape != (self.dof,):
                raise DimensionMismatch(f"home has {home.size} entries, model has {self.dof} DOF")
        home.setflags(write=False)
        object.__setattr__(self, "home", home)

    @property
    def is_parallel_wrist(self) -> bool:
        return isinstance(self.wrist, DexWristModel)

    @cached_property
    def joints(self) -> tuple[JointSpec, ...]:
        wrist = self.wrist.joints() if self.is_parallel_wrist else self.wrist.joints
        return self.base_joints + tuple(wrist)

    @property
    def dof(self) -> int:
        return len(self.joints)

    @cached_property
    def wrist_slice(self) -> slice:
        return slice(len(self.base_joints), self.dof)

    @cached_property
    def link_names(self) -> tuple[str, ...]:
        """Names of the ``dof + 2`` frames returned by FK."""
        return ("base",) + tuple(j.name for j in self.joints) + ("tool",)

    @cached_property
    def limits(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([j.lower for j in self.joints])
        hi = np.array([j.upper for j in self.joints])
        return lo, hi

    @cached_property
    def velocity_limits(self) -> np.ndarray:
        return np.array([j.velocity_limit for j in self.joints])

    @cached_property
    def chain(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Kernel arrays ``(base, origins, axes, tool)``, C-contiguous float64."""
        base = np.ascontiguousarray(self.base_pose.as_matrix())
        origins = np.ascontiguousarray(np.array([j.origin.as_matrix() for j in self.joints]))
        axes = np.ascontiguousarray(np.array([j.axis for j in self.joints]))
        tool = np.ascontiguousarray(self.tool.as_matrix())
        return base, origins, axes, tool

    def check_q(self, q) -> np.ndarray:
        q = np.ascontiguousarray(q, dtype=float).reshape(-1)
        if q.shape[0] != self.dof:
            raise DimensionMismatch(f"expected {self.dof} joint values, got {q.shape[0]}")
        return q

    def within_limits(self, q) -> bool:
        lo, hi = self.limits
        q = self.check_q(q)
        return bool(np.all(q >= lo) and np.all(q <= hi))


@dataclass(frozen=True)
class FKResult:
    link_poses: list[Pose]
    ee: Pose
    frames: np.ndarray  # (dof + 2, 4, 4)


def link_frames(model: RobotModel, q) -> np.ndarray:
    q = model.check_q(q)
    return _backend.kernels.fk_frames(*model.chain, q)


def forward_kinematics(model: RobotModel, q) -> FKResult:
    frames = link_frames(model, q)
    poses = [Pose.from_matrix(f) for f in frames]
    return FKResult(poses, poses[-1], frames)


def ee_pose(model: RobotModel, q) -> Pose:
    return Pose.from_matrix(link_frames(model, q)[-1])


def geometric_jacobian(model: RobotModel, q) -> np.ndarray:
    """6 x n world-frame Jacobian at the end-effector point (linear rows first)."""
    q = model.check_q(q)
    return _backend.kernels.jacobian(*model.chain, q)


def wrist_transmission(model: RobotModel) -> np.ndarray:
    """Motor-rate to wrist-DOF-rate map of the parallel wrist."""
    if not model.is_parallel_wrist:
        raise NotParallelWrist(f"{model.name} has a serial wrist")
    return model.wrist.transmission.copy()


def motor_to_dof_rates(model: RobotModel, motor_rates) -> np.ndarray:
    return wrist_transmission(model) @ np.asarray(motor_rates, dtype=float)


def dof_to_motor_torques(model: RobotModel, dof_torques) -> np.ndarray:
    return wrist_transmission(model).T @ np.asarray(dof_torques, dtype=float)


def static_wrench_to_joint_torques(model: RobotModel, q, wrench: Wrench) -> np.ndarray:
    """Joint torques ``J^T w`` produced by a wrench applied at the end effector.

    ``wrench.frame`` is ``"ee"`` (components in the end-effector frame) or
    ``"world"``; the moment is taken about the end-effector point either way.
    """
    q = model.check_q(q)
    frames = link_frames(model, q)
    w = wrench.as_vector()
    if wrench.frame == "ee":
        r = frames[-1][:3, :3]
        w = np.concatenate([r @ w[:3], r @ w[3:]])
    elif wrench.frame != "world":
        raise DegenerateInput(f"unknown wrench frame {wrench.frame!r}")
    return geometric_jacobian(model, q).T @ w


def rom_check(wrist: DexWristModel, theta_fe: float, theta_ru: float) -> bool:
    return bool(
        wrist.rom_fe[0] <= theta_fe <= wrist.rom_fe[1]
        and wrist.rom_ru[0] <= theta_ru <= wrist.rom_ru[1]
    )


def wrist_orientation(wrist: DexWristModel, theta_fe: float, theta_ru: float) -> np.ndarray:
    """Platform rotation relative to the pivot frame."""
    return rotation_from_axis_angle(wrist.axis_fe, theta_fe) @ rotation_from_axis_angle(
        wrist.axis_ru, theta_ru
    )


@dataclass(frozen=True)
class PkmClosure:
    r_leg_angle: float
    rr_angles: tuple[float, float]
    residual: float
    platform_normal: np.ndarray
    # leg polylines on the linkage sphere, pivot frame, meters
    r_leg: np.ndarray
    rr_leg: np.ndarray


def _wrap(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi


def _arc_points(a, b, radius, pieces=4) -> np.ndarray:
    ang = math.atan2(np.linalg.norm(np.cross(a, b)), a @ b)
    if ang < 1e-12:
        return np.array([a, b]) * radius
    pts = []
    for k in range(pieces + 1):
        s = k / pieces
        p = (math.sin((1 - s) * ang) * a + math.sin(s * ang) * b) / math.sin(ang)
        pts.append(p)
    return np.array(pts) * radius


def pkm_closure(wrist: DexWristModel, theta_fe: float, theta_ru: float) -> PkmClosure:
    """Solve the passive RR-leg angles for a platform orientation.

    Local frame: x = F/E axis, y = R/U axis, z = x cross y (home platform
    normal). The RR leg starts on the base-fixed axis -y; its proximal arc
    rotates about that axis, its distal arc about the intermediate joint axis,
    and the distal end must coincide with the platform normal.
    """
    x = wrist.axis_fe
    y = wrist.axis_ru
    z = np.cross(x, y)
    frame = np.column_stack([x, y, z])
    q_local = frame.T @ wrist_orientation(wrist, theta_fe, theta_ru) @ frame
    n = q_local[:, 2]

    a1, a2 = wrist.rr_leg_arcs
    u = np.array([0.0, -1.0, 0.0])
    w0 = math.cos(a1) * u + math.sin(a1) * np.array([-1.0, 0.0, 0.0])
    e0 = math.cos(a2) * w0 + math.sin(a2) * np.array([0.0, 0.0, 1.0])

    uw = u @ w0
    un = u @ n
    big_a = w0 @ n - uw * un
    big_b = np.cross(u, w0) @ n
    rhs = math.cos(a2) - uw * un
    rad = math.hypot(big_a, big_b)
    if rad < 1e-12:
        if abs(rhs) > 1e-12:
            raise ClosureFailure("RR leg cannot reach the platform normal")
        phi1 = 0.0
    else:
        ratio = rhs / rad
        if abs(ratio) > 1.0 + 1e-12:
            raise ClosureFailure(
                f"RR leg arcs {math.degrees(a1):.1f}/{math.degrees(a2):.1f} deg cannot close at "
                f"({math.degrees(theta_fe):.1f}, {math.degrees(theta_ru):.1f}) deg"
            )
        base = math.atan2(big_b, big_a)
        delta = math.acos(max(-1.0, min(1.0, ratio)))
        cands = [_wrap(base + delta), _wrap(base - delta)]
        phi1 = min(cands, key=abs)
    r1 = rotation_from_axis_angle(u, phi1)
    w = r1 @ w0
    e1 = r1 @ e0
    pa = e1 - (w @ e1) * w
    pb = n - (w @ n) * w
    phi2 = math.atan2(w @ np.cross(pa, pb), pa @ pb)
    e = rotation_from_axis_angle(w / np.linalg.norm(w), phi2) @ e1
    residual = math.atan2(np.linalg.norm(np.cross(e, n)), e @ n)

    rho = wrist.linkage_radius
    yoke_end = q_local[:, 1]
    r_leg = _arc_points(np.array([1.0, 0.0, 0.0]), yoke_end, rho) @ frame.T
    rr_leg = np.vstack([_arc_points(u, w, rho), _arc_points(w, e, rho)[1:]]) @ frame.T
    return PkmClosure(
        r_leg_angle=float(theta_fe),
        rr_angles=(float(phi1), float(phi2)),
        residual=float(residual),
        platform_normal=frame @ n,
        r_leg=r_leg,
        rr_leg=rr_leg,
    )


def leg_clearance(wrist: DexWristModel, closure: PkmClosure) -> float:
    """Minimum surface clearance between the R-leg and RR-leg capsule chains."""
    seg = _backend.kernels.segment_segment_distance
    best = math.inf
    r = np.ascontiguousarray(closure.r_leg)
    rr = np.ascontiguousarray(closure.rr_leg)
    for i in range(len(r) - 1):
        for j in range(len(rr) - 1):
            best = min(best, seg(r[i], r[i + 1], rr[j], rr[j + 1]))
    return best - 2 * wrist.leg_radius


# --- robot description files -------------------------------------------------


def _origin_from_json(d: dict | None) -> Pose:
    if not d:
        return Pose()
    if "mdh" in d:
        # modified DH: Rx(alpha) Tx(a) Tz(d) Rz(theta_offset)
        alpha, a, dd, off = d["mdh"]
        rx = rotation_from_axis_angle([1.0, 0.0, 0.0], alpha * _DEG)
        rz = rotation_from_axis_angle([0.0, 0.0, 1.0], off * _DEG)
        return Pose(rx @ rz, rx @ np.array([a, 0.0, dd]))
    return pose_from_json(d)


def _joint_from_json(d: dict) -> JointSpec:
    lo, hi = d.get("limits_deg", [-180.0, 180.0])
    return JointSpec(
        name=d["name"],
        axis=d.get("axis", [0.0, 0.0, 1.0]),
        origin=_origin_from_json(d.get("origin")),
        lower=lo * _DEG,
        upper=hi * _DEG,
        velocity_limit=d.get("velocity_limit_deg_s", 180.0) * _DEG,
    )


def robot_from_dict(d: dict) -> RobotModel:
    """Build a model from a parsed robot description (angles in degrees).

    Joints with ``locked_deg`` are folded into the next origin; capsules on a
    locked link are re-expressed on the preceding movable link.
    """
    pending = Pose()
    link_alias: dict[str, tuple[str, Pose]] = {}
    last = "base"
    base_joints = []
    for jd in d.get("joints", []):
        j = _joint_from_json(jd)
        origin = compose(pending, j.origin)
        if "locked_deg" in jd:
            rot = Pose(rotation_from_axis_angle(j.axis, jd["locked_deg"] * _DEG))
            pending = compose(origin, rot)
            link_alias[j.name] = (last, pending)
            continue
        base_joints.append(JointSpec(j.name, j.axis, origin, j.lower, j.upper, j.velocity_limit))
        pending = Pose()
        last = j.name

    wd = d["wrist"]
    kind = wd.get("type", "dexwrist")
    if kind == "dexwrist":
        rom_fe = wd.get("rom_fe_deg", [-40.0, 40.0])
        rom_ru = wd.get("rom_ru_deg", [-40.0, 40.0])
        arcs = wd.get("rr_leg_arcs_deg", [90.0, 90.0])
        wrist = DexWristModel(
            pivot=compose(pending, _origin_from_json(wd.get("pivot"))),
            axis_fe=wd.get("axis_fe", [1.0, 0.0, 0.0]),
            axis_ru=wd.get("axis_ru", [0.0, 1.0, 0.0]),
            rom_fe=(rom_fe[0] * _DEG, rom_fe[1] * _DEG),
            rom_ru=(rom_ru[0] * _DEG, rom_ru[1] * _DEG),
            velocity_limit=wd.get("velocity_limit_deg_s", 579.6) * _DEG,
            transmission=wd.get("transmission", [[1.0, 0.0], [0.0, 1.0]]),
            r_leg_arc=wd.get("r_leg_arc_deg", 90.0) * _DEG,
            rr_leg_arcs=(arcs[0] * _DEG, arcs[1] * _DEG),
            linkage_radius=wd.get("linkage_radius", 0.03),
            leg_radius=wd.get("leg_radius", 0.004),
        )
    elif kind == "serial":
        joints = [_joint_from_json(jd) for jd in wd["joints"]]
        if joints:
            j0 = joints[0]
            joints[0] = JointSpec(j0.name, j0.axis, compose(pending, j0.origin), j0.lower, j0.upper,
                                  j0.velocity_limit)
        wrist = SerialWrist(tuple(joints))
    else:
        raise DegenerateInput(f"unknown wrist type {kind!r}")

    capsules = []
    for cd in d.get("capsules", []):
        link = cd["link"]
        p0, p1 = np.asarray(cd["p0"], float), np.asarray(cd["p1"], float)
        if link in link_alias:
            link, off = link_alias[link]
            p0, p1 = off.apply(p0), off.apply(p1)
        capsules.append(Capsule(cd["name"], link, p0, p1, cd["radius"]))

    home = d.get("home_deg")
    return RobotModel(
        name=d.get("name", "robot"),
        base_joints=tuple(base_joints),
        wrist=wrist,
        tool=_origin_from_json(d.get("tool")),
        capsules=tuple(capsules),
        base_pose=_origin_from_json(d.get("base_pose")),
        collision_ignore=frozenset(tuple(p) for p in d.get("collision_ignore", [])),
        home=None if home is None else np.asarray(home, float) * _DEG,
    )


BUNDLED_ROBOTS = ("agilex_dexwrist", "agilex_serial", "ur3e_dexwrist", "ur3e_serial")


def bundled_robot_path(name: str) -> Path:
    return Path(__file__).parent / "data" / "robots" / f"{name}.json"


def load_robot(path) -> RobotModel:
    """Load a robot JSON file; a bare bundled name such as ``"agilex_dexwrist"`` also works."""
    p = Path(path)
    if not p.exists() and str(path) in BUNDLED_ROBOTS:
        p = bundled_robot_path(str(path))
    with open(p) as fh:
        return robot_from_dict(json.load(fh))
