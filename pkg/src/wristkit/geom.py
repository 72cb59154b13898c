"""Rigid-body helpers shared by every other module.

Conventions: rotations act on column vectors, and ``compose(a, b)`` applies
``b`` first, then ``a`` (world-frame composition on the left). Angles are
radians everywhere except at file/CLI boundaries.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.spatial.transform import Rotation as _SciRot

from .errors import DegenerateInput, NonUnitAxis

ORTHO_TOL = 1e-9


def is_rotation(r, tol: float = ORTHO_TOL) -> bool:
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        return False
    return bool(np.abs(r.T @ r - np.eye(3)).max() < tol and abs(np.linalg.det(r) - 1.0) < tol)


def _as_rotation(r) -> np.ndarray:
    r = np.array(r, dtype=float)
    if not is_rotation(r):
        raise DegenerateInput("matrix is not a proper rotation")
    r.setflags(write=False)
    return r


@dataclass(frozen=True)
class Pose:
    """Rigid transform: ``x -> rotation @ x + translation`` (meters)."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", _as_rotation(self.rotation))
        t = np.array(self.translation, dtype=float).reshape(3)
        if not np.all(np.isfinite(t)):
            raise DegenerateInput("translation must be finite")
        t.setflags(write=False)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, m) -> "Pose":
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_translation(cls, xyz) -> "Pose":
        return cls(np.eye(3), xyz)

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def apply(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def __matmul__(self, other: "Pose") -> "Pose":
        return compose(self, other)


def compose(a: Pose, b: Pose) -> Pose:
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def rotation_to_rep6(r) -> np.ndarray:
    """First two columns of ``r``, flattened column by column."""
    r = np.asarray(r, dtype=float)
    return np.concatenate([r[:, 0], r[:, 1]])


def rep6_to_rotation(v) -> np.ndarray:
    """Gram-Schmidt decode of the continuous 6D rotation encoding."""
    v = np.asarray(v, dtype=float).reshape(6)
    a, b = v[:3], v[3:]
    na = np.linalg.norm(a)
    if na < 1e-9 or np.linalg.norm(b) < 1e-9:
        raise DegenerateInput("6D rotation column has near-zero norm")
    c1 = a / na
    b_perp = b - (c1 @ b) * c1
    nb = np.linalg.norm(b_perp)
    if nb < 1e-9 * np.linalg.norm(b):
        raise DegenerateInput("6D rotation columns are parallel")
    c2 = b_perp / nb
    c3 = np.cross(c1, c2)
    return np.column_stack([c1, c2, c3])


def skew(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotation_from_axis_angle(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit ``axis`` by ``angle`` radians."""
    axis = np.asarray(axis, dtype=float).reshape(3)
    if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
        raise NonUnitAxis(f"axis norm {np.linalg.norm(axis):.6g} is not 1")
    k = skew(axis)
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def rotation_log(r) -> np.ndarray:
    """Rotation vector (axis * angle, angle in [0, pi]) of ``r``."""
    r = np.asarray(r, dtype=float)
    w = 0.5 * np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    c = max(-1.0, min(1.0, 0.5 * (np.trace(r) - 1.0)))
    s = float(np.linalg.norm(w))
    angle = math.atan2(s, c)
    if s > 1e-6:
        return w * (angle / s)
    if c > 0.0:
        return w
    # near pi: recover the axis from the symmetric part
    k = int(np.argmax(np.diag(r)))
    axis = np.empty(3)
    axis[k] = math.sqrt(max(0.0, 0.5 * (r[k, k] + 1.0)))
    for j in range(3):
        if j != k:
            axis[j] = (r[k, j] + r[j, k]) / (4.0 * axis[k])
    axis /= np.linalg.norm(axis)
    return axis * angle


def rotation_from_rpy(rpy, degrees: bool = False) -> np.ndarray:
    """Fixed-axis roll, pitch, yaw (``Rz(yaw) @ Ry(pitch) @ Rx(roll)``)."""
    return _SciRot.from_euler("xyz", rpy, degrees=degrees).as_matrix()


def rotation_to_quat(r) -> np.ndarray:
    """Unit quaternion ``(w, x, y, z)`` with ``w >= 0``."""
    x, y, z, w = _SciRot.from_matrix(np.asarray(r, dtype=float)).as_quat(canonical=True)
    return np.array([w, x, y, z])


def quat_to_rotation(wxyz) -> np.ndarray:
    w, x, y, z = wxyz
    if math.sqrt(w * w + x * x + y * y + z * z) < 1e-12:
        raise DegenerateInput("zero quaternion")
    return _SciRot.from_quat([x, y, z, w]).as_matrix()


def pose_to_json(p: Pose) -> dict:
    return {
        "translation": [float(v) for v in p.translation],
        "quaternion_wxyz": [float(v) for v in rotation_to_quat(p.rotation)],
    }


def pose_from_json(d: dict) -> Pose:
    """Accepts ``translation``/``xyz`` plus ``quaternion_wxyz`` or ``rpy_deg``."""
    t = d.get("translation", d.get("xyz", [0.0, 0.0, 0.0]))
    if "quaternion_wxyz" in d:
        r = quat_to_rotation(d["quaternion_wxyz"])
    elif "rpy_deg" in d:
        r = rotation_from_rpy(d["rpy_deg"], degrees=True)
    else:
        r = np.eye(3)
    return Pose(r, t)


@dataclass(frozen=True)
class Wrench:
    force: np.ndarray
    moment: np.ndarray
    frame: str = "ee"

    def __post_init__(self):
        f = np.array(self.force, dtype=float).reshape(3)
        m = np.array(self.moment, dtype=float).reshape(3)
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(m))):
            raise DegenerateInput("wrench components must be finite")
        object.__setattr__(self, "force", f)
        object.__setattr__(self, "moment", m)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.moment])
