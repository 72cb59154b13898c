"""Capsule/box collision checks and gridded reachability maps.

A grid point is reachable when a position-only IK solve from one of a fixed
set of seeds converges to a configuration that is free of both scene and
self collisions. Only the final configuration is checked, not the approach.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _backend
from .diffik import DiffIKConfig, ik_attempt
from .errors import DegenerateInput, GridMismatch
from .geom import Pose, compose, pose_from_json, pose_to_json, rotation_from_axis_angle
from .kinematics import RobotModel, link_frames

REACHABLE = "reachable"
IK_FAILURE = "ik-failure"
COLLISION = "collision"
SELF_COLLISION = "self-collision"
STATUSES = (REACHABLE, IK_FAILURE, COLLISION, SELF_COLLISION)

DEFAULT_MARGIN = 0.005

# heatmap colors, one per status code
STATUS_RGB = {
    REACHABLE: (0, 255, 0),
    COLLISION: (255, 0, 0),
    SELF_COLLISION: (160, 0, 0),
    IK_FAILURE: (128, 128, 128),
}


@dataclass(frozen=True)
class Obstacle:
    name: str
    pose: Pose
    half_extents: np.ndarray

    def __post_init__(self):
        h = np.array(self.half_extents, dtype=float).reshape(3)
        if np.any(h <= 0) or not np.all(np.isfinite(h)):
            raise DegenerateInput(f"obstacle {self.name!r} needs positive half-extents")
        h.setflags(write=False)
        object.__setattr__(self, "half_extents", h)

    def inflated(self, margin: float) -> "Obstacle":
        return Obstacle(self.name, self.pose, self.half_extents + margin)

    def contains(self, points) -> np.ndarray:
        local = self.pose.inverse().apply(np.atleast_2d(points))
        return np.all(np.abs(local) <= self.half_extents, axis=1)

    def to_json(self) -> dict:
        return {"name": self.name, "pose": pose_to_json(self.pose),
                "half_extents": [float(v) for v in self.half_extents]}


@dataclass(frozen=True)
class Scene:
    name: str
    obstacles: tuple[Obstacle, ...]
    interior_lo: np.ndarray
    interior_hi: np.ndarray
    base_pose: Pose = field(default_factory=Pose)
    margin: float = DEFAULT_MARGIN

    def __post_init__(self):
        lo = np.array(self.interior_lo, dtype=float).reshape(3)
        hi = np.array(self.interior_hi, dtype=float).reshape(3)
        if np.any(hi <= lo):
            raise DegenerateInput("interior region must have positive extent on every axis")
        object.__setattr__(self, "interior_lo", lo)
        object.__setattr__(self, "interior_hi", hi)
        object.__setattr__(self, "obstacles", tuple(self.obstacles))

    def with_obstacles(self, obstacles: Sequence[Obstacle]) -> "Scene":
        return Scene(self.name, tuple(obstacles), self.interior_lo, self.interior_hi,
                     self.base_pose, self.margin)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "obstacles": [o.to_json() for o in self.obstacles],
            "interior_region": {"lo": self.interior_lo.tolist(), "hi": self.interior_hi.tolist()},
            "base_pose": pose_to_json(self.base_pose),
            "margin": self.margin,
        }


def empty_scene(lo=(-0.5, -0.5, 0.0), hi=(0.5, 0.5, 0.8)) -> Scene:
    return Scene("empty", (), lo, hi)


def scene_from_dict(d: dict) -> Scene:
    obstacles = []
    for od in d.get("obstacles", []):
        obstacles.append(Obstacle(od["name"], pose_from_json(od.get("pose", {})), od["half_extents"]))
    region = d["interior_region"]
    return Scene(
        name=d.get("name", "scene"),
        obstacles=tuple(obstacles),
        interior_lo=region["lo"],
        interior_hi=region["hi"],
        base_pose=pose_from_json(d.get("base_pose", {})),
        margin=float(d.get("margin", DEFAULT_MARGIN)),
    )


BUNDLED_SCENES = ("cabinet",)


def load_scene(path) -> Scene:
    """Load a scene JSON file; the bare name ``"cabinet"`` selects the bundled scene."""
    p = Path(path)
    if not p.exists() and str(path) in BUNDLED_SCENES:
        p = Path(__file__).parent / "data" / "scenes" / f"{path}.json"
    with open(p) as fh:
        return scene_from_dict(json.load(fh))


def cabinet_scene(
    front_x: float = 0.25,
    bottom_z: float = 0.55,
    width: float = 0.6,
    height: float = 0.4,
    depth: float = 0.5,
    top_angle_deg: float = 15.0,
    wall: float = 0.018,
    inset: float = 0.02,
) -> Scene:
    """Open-front cabinet facing -x whose top slopes down toward the back.

    The opening spans ``width`` x ``height`` at ``x = front_x``; the top panel
    drops by ``depth * tan(top_angle)`` over the cabinet depth. The target
    region is the interior inset by ``inset`` from every wall (it includes
    the wedge under the sloped top, which counts as occupied).
    """
    hw, hd = 0.5 * width, 0.5 * depth
    cx = front_x + hd
    top_z = bottom_z + height
    t = 0.5 * wall
    obs = [
        Obstacle("floor", Pose.from_translation([cx, 0.0, bottom_z - t]), [hd + wall, hw + wall, t]),
        Obstacle("back", Pose.from_translation([front_x + depth + t, 0.0, bottom_z + 0.5 * height]),
                 [t, hw + wall, 0.5 * height + wall]),
        Obstacle("left", Pose.from_translation([cx, hw + t, bottom_z + 0.5 * height]),
                 [hd + wall, t, 0.5 * height + wall]),
        Obstacle("right", Pose.from_translation([cx, -hw - t, bottom_z + 0.5 * height]),
                 [hd + wall, t, 0.5 * height + wall]),
    ]
    ang = math.radians(top_angle_deg)
    drop = depth * math.tan(ang)
    # sloped panel: inner face passes through the front-top edge and descends inward
    rot = rotation_from_axis_angle([0.0, 1.0, 0.0], ang)
    slab_half = 0.5 * depth / math.cos(ang)
    n = rot @ np.array([0.0, 0.0, 1.0])
    centre = np.array([cx, 0.0, top_z - 0.5 * drop]) + n * t
    obs.append(Obstacle("top", Pose(rot, centre), [slab_half + wall, hw + wall, t]))
    lo = [front_x + inset, -hw + inset, bottom_z + inset]
    hi = [front_x + depth - inset, hw - inset, top_z - inset]
    return Scene("cabinet", tuple(obs), lo, hi)


@dataclass(frozen=True)
class GridSpec:
    counts: tuple[int, int, int]
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if len(counts) != 3 or min(counts) < 2:
            raise DegenerateInput("grid needs at least 2 points per axis")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "lo", np.array(self.lo, dtype=float).reshape(3))
        object.__setattr__(self, "hi", np.array(self.hi, dtype=float).reshape(3))
        if np.any(self.hi <= self.lo):
            raise DegenerateInput("grid bounds must increase")

    @classmethod
    def over(cls, scene: Scene, n: int | Sequence[int] = 20) -> "GridSpec":
        counts = (n, n, n) if isinstance(n, int) else tuple(n)
        return cls(counts, scene.interior_lo, scene.interior_hi)

    @property
    def spacing(self) -> np.ndarray:
        return (self.hi - self.lo) / (np.array(self.counts) - 1)

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(self.lo[i], self.hi[i], self.counts[i]) for i in range(3)]

    def points(self) -> np.ndarray:
        """All points in canonical order: x varies fastest, then y, then z."""
        xs, ys, zs = self.axes()
        z, y, x = np.meshgrid(zs, ys, xs, indexing="ij")
        return np.column_stack([x.ravel(), y.ravel(), z.ravel()])

    def to_json(self) -> dict:
        return {"counts": list(self.counts), "lo": self.lo.tolist(), "hi": self.hi.tolist(),
                "spacing": self.spacing.tolist()}

    def same_as(self, other: "GridSpec") -> bool:
        return (self.counts == other.counts and np.array_equal(self.lo, other.lo)
                and np.array_equal(self.hi, other.hi))


# --- collision -------------------------------------------------------------------


def capsule_box_distance(p0, p1, radius: float, box: Obstacle) -> float:
    """Signed clearance between a capsule and an oriented box (negative = overlap)."""
    return float(_backend.kernels.capsule_box_distance(
        np.ascontiguousarray(p0, dtype=float), np.ascontiguousarray(p1, dtype=float), float(radius),
        np.ascontiguousarray(box.pose.as_matrix()), np.ascontiguousarray(box.half_extents),
    ))


def capsule_capsule_distance(a0, a1, ra: float, b0, b1, rb: float) -> float:
    d = _backend.kernels.segment_segment_distance(
        np.ascontiguousarray(a0, dtype=float), np.ascontiguousarray(a1, dtype=float),
        np.ascontiguousarray(b0, dtype=float), np.ascontiguousarray(b1, dtype=float),
    )
    return float(d) - ra - rb


@dataclass(frozen=True)
class CollisionReport:
    colliding: bool
    kind: str | None = None
    pair: tuple[str, str] | None = None
    clearance: float = math.inf


class CollisionChecker:
    """Precomputed capsule/obstacle tables for one robot in one scene.

    Obstacles are moved into the robot base frame and inflated by the scene
    margin once, so each query is a single FK plus primitive distances.
    """

    def __init__(self, model: RobotModel, scene: Scene | None = None):
        self.model = model
        names = model.link_names
        self._frame_of = [names.index(c.link) for c in model.capsules]
        self._caps = model.capsules
        inv = scene.base_pose.inverse() if scene is not None else None
        self._boxes = []
        if scene is not None:
            for ob in scene.obstacles:
                local = compose(inv, ob.pose)
                self._boxes.append((ob.name, np.ascontiguousarray(local.as_matrix()),
                                    np.ascontiguousarray(ob.half_extents + scene.margin)))
        ignore = {frozenset(p) for p in model.collision_ignore}
        self._self_pairs = []
        for i, ci in enumerate(self._caps):
            for j in range(i + 1, len(self._caps)):
                cj = self._caps[j]
                fi, fj = self._frame_of[i], self._frame_of[j]
                if abs(fi - fj) <= 1 or frozenset((ci.link, cj.link)) in ignore:
                    continue
                self._self_pairs.append((i, j))

    @property
    def self_pairs(self) -> list[tuple[str, str]]:
        return [(self._caps[i].name, self._caps[j].name) for i, j in self._self_pairs]

    def world_capsules(self, q) -> list[tuple[np.ndarray, np.ndarray]]:
        frames = link_frames(self.model, q)
        out = []
        for c, fi in zip(self._caps, self._frame_of):
            f = frames[fi]
            r, t = f[:3, :3], f[:3, 3]
            out.append((np.ascontiguousarray(r @ c.p0 + t), np.ascontiguousarray(r @ c.p1 + t)))
        return out

    def check(self, q) -> CollisionReport:
        k = _backend.kernels
        segs = self.world_capsules(q)
        for (p0, p1), cap in zip(segs, self._caps):
            for name, box, half in self._boxes:
                d = k.capsule_box_distance(p0, p1, cap.radius, box, half)
                if d <= 0.0:
                    return CollisionReport(True, COLLISION, (cap.name, name), d)
        for i, j in self._self_pairs:
            ci, cj = self._caps[i], self._caps[j]
            d = k.segment_segment_distance(segs[i][0], segs[i][1], segs[j][0], segs[j][1])
            d -= ci.radius + cj.radius
            if d <= 0.0:
                return CollisionReport(True, SELF_COLLISION, (ci.name, cj.name), d)
        return CollisionReport(False)


def configuration_in_collision(model: RobotModel, q, scene: Scene | None = None) -> CollisionReport:
    return CollisionChecker(model, scene).check(model.check_q(q))


# --- reachability ----------------------------------------------------------------


_SEED_FRACTIONS = ((0.0, 0.0), (0.5, 0.5), (-0.5, 0.5), (0.5, -0.5), (-0.5, -0.5),
                   (0.75, 0.0), (-0.75, 0.0), (0.0, 0.75))


def ik_seeds(model: RobotModel, seed: int = 0, dither_deg: float = 2.0) -> np.ndarray:
    """Eight deterministic IK seeds spread over the wrist range of motion.

    Base joints start at the model's home posture plus a small dither drawn
    once from ``seed``; the last two wrist joints take fixed fractions of
    their half-range. Returns an (8, dof) array.
    """
    lo, hi = model.limits
    home = model.home if model.home is not None else np.clip(np.zeros(model.dof), lo, hi)
    rng = np.random.default_rng(seed)
    dither = rng.uniform(-1.0, 1.0, size=(len(_SEED_FRACTIONS), model.dof)) * math.radians(dither_deg)
    w = model.wrist_slice
    widx = list(range(model.dof))[w][-2:]
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    seeds = np.tile(home, (len(_SEED_FRACTIONS), 1)) + dither
    for s, (fa, fb) in enumerate(_SEED_FRACTIONS):
        seeds[s, widx[0]] = mid[widx[0]] + fa * half[widx[0]]
        seeds[s, widx[1]] = mid[widx[1]] + fb * half[widx[1]]
    return np.clip(seeds, lo, hi)


def default_reach_config() -> DiffIKConfig:
    return DiffIKConfig.for_pose_ik(max_iterations=100, tol_position=1e-4).position_only()


def point_reachable(model: RobotModel, scene: Scene, target, ikcfg: DiffIKConfig | None = None,
                    seeds: np.ndarray | None = None, checker: CollisionChecker | None = None) -> str:
    """Classify one Cartesian target (world frame) as a status string."""
    target = np.asarray(target, dtype=float).reshape(3)
    if not np.all(np.isfinite(target)):
        return IK_FAILURE
    ikcfg = ikcfg or default_reach_config()
    if not ikcfg.is_position_only:
        ikcfg = ikcfg.position_only()
    seeds = ik_seeds(model) if seeds is None else seeds
    checker = checker or CollisionChecker(model, scene)
    local = scene.base_pose.inverse().apply(target)
    goal = Pose(np.eye(3), local)
    first_hit = None
    for s in seeds:
        res = ik_attempt(model, s, goal, ikcfg)
        if not res.converged:
            continue
        rep = checker.check(res.q)
        if not rep.colliding:
            return REACHABLE
        if first_hit is None:
            first_hit = rep.kind
    return first_hit or IK_FAILURE


@dataclass(frozen=True)
class ReachabilityResult:
    robot: str
    scene: str
    grid: GridSpec
    status: tuple[str, ...]

    def __post_init__(self):
        if len(self.status) != self.grid.size:
            raise GridMismatch("status count does not match the grid")

    @property
    def reachable_mask(self) -> np.ndarray:
        return np.array([s == REACHABLE for s in self.status], dtype=bool)

    @property
    def reachable_count(self) -> int:
        return int(self.reachable_mask.sum())

    def counts(self) -> dict[str, int]:
        return {s: sum(1 for v in self.status if v == s) for s in STATUSES}

    def status_grid(self) -> np.ndarray:
        """Status codes (index into ``STATUSES``) shaped (nz, ny, nx)."""
        nx, ny, nz = self.grid.counts
        codes = np.array([STATUSES.index(s) for s in self.status], dtype=np.uint8)
        return codes.reshape(nz, ny, nx)

    def to_json(self) -> dict:
        return {
            "robot": self.robot,
            "scene": self.scene,
            "grid": self.grid.to_json(),
            "total_points": self.grid.size,
            "reachable_count": self.reachable_count,
            "counts": self.counts(),
            "status": list(self.status),
        }

    @classmethod
    def from_json(cls, d: dict) -> "ReachabilityResult":
        g = d["grid"]
        return cls(d["robot"], d["scene"], GridSpec(tuple(g["counts"]), g["lo"], g["hi"]),
                   tuple(d["status"]))


# per-process state for pool workers
_WORKER: dict = {}


def _init_worker(model, scene, ikcfg, seeds):
    _WORKER["args"] = (model, scene, ikcfg, seeds, CollisionChecker(model, scene))


def _eval_chunk(points) -> list[str]:
    model, scene, ikcfg, seeds, checker = _WORKER["args"]
    return [point_reachable(model, scene, p, ikcfg, seeds, checker) for p in points]


def reachability_grid(model: RobotModel, scene: Scene, grid: GridSpec | None = None,
                      ikcfg: DiffIKConfig | None = None, seed: int = 0, workers: int = 1,
                      executor: str = "process") -> ReachabilityResult:
    """Evaluate every grid point; results are in canonical grid order.

    ``workers > 1`` spreads contiguous chunks over a process (or thread)
    pool. Each point is evaluated independently, so the result does not
    depend on the worker count or scheduling.
    """
    grid = grid or GridSpec.over(scene)
    ikcfg = ikcfg or default_reach_config()
    if not ikcfg.is_position_only:
        ikcfg = ikcfg.position_only()
    seeds = ik_seeds(model, seed)
    pts = grid.points()
    if workers <= 1:
        _init_worker(model, scene, ikcfg, seeds)
        status = _eval_chunk(pts)
    else:
        chunks = np.array_split(pts, workers * 4)
        pool_cls = ProcessPoolExecutor if executor == "process" else ThreadPoolExecutor
        with pool_cls(max_workers=workers, initializer=_init_worker,
                      initargs=(model, scene, ikcfg, seeds)) as pool:
            status = [s for part in pool.map(_eval_chunk, chunks) for s in part]
    return ReachabilityResult(model.name, scene.name, grid, tuple(status))


@dataclass(frozen=True)
class WorkspaceComparison:
    robot_a: str
    robot_b: str
    count_a: int
    count_b: int
    improvement_pct: float
    gained: np.ndarray
    lost: np.ndarray

    def to_json(self) -> dict:
        return {
            "robot_a": self.robot_a,
            "robot_b": self.robot_b,
            "reachable_a": self.count_a,
            "reachable_b": self.count_b,
            "improvement_pct": self.improvement_pct,
            "gained_points": int(self.gained.sum()),
            "lost_points": int(self.lost.sum()),
            "diff_mask": [int(g) - int(l) for g, l in zip(self.gained, self.lost)],
        }


def improvement_pct(count_a: int, count_b: int) -> float:
    if count_a == 0:
        return math.inf if count_b > 0 else 0.0
    return round((count_b - count_a) / count_a * 100.0, 10)


def compare_workspaces(a: ReachabilityResult, b: ReachabilityResult) -> WorkspaceComparison:
    """Relative improvement of ``b`` over ``a`` plus per-point gained/lost masks."""
    if not a.grid.same_as(b.grid) or a.scene != b.scene:
        raise GridMismatch("results were computed on different grids or scenes")
    ma, mb = a.reachable_mask, b.reachable_mask
    return WorkspaceComparison(a.robot, b.robot, a.reachable_count, b.reachable_count,
                               improvement_pct(a.reachable_count, b.reachable_count),
                               mb & ~ma, ma & ~mb)


def heatmap_ppm(result: ReachabilityResult) -> bytes:
    """Binary PPM (P6): one tile per z-slice, left to right with increasing z.

    Tiles are nx wide and ny tall, separated by a 1-pixel black column;
    image row 0 is the largest y, column 0 the smallest x.
    """
    grid = result.status_grid()
    nz, ny, nx = grid.shape
    palette = np.array([STATUS_RGB[s] for s in STATUSES], dtype=np.uint8)
    width = nz * nx + (nz - 1)
    img = np.zeros((ny, width, 3), dtype=np.uint8)
    for k in range(nz):
        x0 = k * (nx + 1)
        img[:, x0:x0 + nx] = palette[grid[k, ::-1, :]]
    return f"P6\n{width} {ny}\n255\n".encode("ascii") + img.tobytes()

