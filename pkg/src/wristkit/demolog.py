"""Demonstration-log ingestion and study metrics.

Logs are flat CSV files, one row per sample::

    episode_id,t,q0,q1,q2,q3,q4,q5,x,y,z,qw,qx,qy,qz,gripper,reset_count,success,task,robot

Units are seconds, radians and metres. Rows of one episode need not be
contiguous but their timestamps must strictly increase in file order.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptySelection, MonotonicityViolation, NonPositiveInput, ParseError

COLUMNS = ("episode_id", "t", "q0", "q1", "q2", "q3", "q4", "q5", "x", "y", "z",
           "qw", "qx", "qy", "qz", "gripper", "reset_count", "success", "task", "robot")
_FLOAT_COLS = ("t", "q0", "q1", "q2", "q3", "q4", "q5", "x", "y", "z", "qw", "qx", "qy", "qz", "gripper")
_TRUE = {"1", "true", "yes", "y", "t"}
_FALSE = {"0", "false", "no", "n", "f"}

_DATA = Path(__file__).parent / "data"


@dataclass(frozen=True)
class DemoEpisode:
    episode_id: str
    t: np.ndarray
    q: np.ndarray  # (n, 6)
    position: np.ndarray  # (n, 3)
    quaternion: np.ndarray  # (n, 4) w, x, y, z
    gripper: np.ndarray
    reset_count: int
    success: bool
    task: str
    robot: str

    def __post_init__(self):
        if self.t.size < 2:
            raise ParseError(f"episode {self.episode_id!r} needs at least 2 samples")
        if np.any(np.diff(self.t) <= 0):
            raise MonotonicityViolation(f"episode {self.episode_id!r} timestamps not increasing")

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])


@dataclass(frozen=True)
class TrajectoryMetrics:
    path_length: float
    joint_path_length: float
    duration: float

    def to_json(self) -> dict:
        return {"path_length_m": self.path_length, "joint_path_length_rad": self.joint_path_length,
                "duration_s": self.duration}


def trajectory_length(ep: DemoEpisode) -> TrajectoryMetrics:
    path = float(np.linalg.norm(np.diff(ep.position, axis=0), axis=1).sum())
    joint = float(np.linalg.norm(np.diff(ep.q, axis=0), axis=1).sum())
    return TrajectoryMetrics(path, joint, ep.duration)


def _parse_bool(text: str, line: int) -> bool:
    v = text.strip().lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise ParseError(f"success flag {text!r} is not a boolean", line)


def load_dataset(path) -> list[DemoEpisode]:
    """Parse an episode CSV. Episodes come back in order of first appearance.

    Raises :class:`ParseError` (with the 1-based file line) for malformed rows
    and :class:`MonotonicityViolation` at the first non-increasing timestamp.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        header = [h.strip() for h in header]
        missing = [c for c in COLUMNS if c not in header]
        if missing:
            raise ParseError(f"missing columns: {', '.join(missing)}", 1)
        col = {c: header.index(c) for c in COLUMNS}
        buckets: dict[str, dict] = {}
        for line, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(rec)}", line)
            try:
                vals = [float(rec[col[c]]) for c in _FLOAT_COLS]
                resets = int(rec[col["reset_count"]])
            except ValueError as exc:
                raise ParseError(f"bad number: {exc}", line) from exc
            if not all(math.isfinite(v) for v in vals):
                raise ParseError("non-finite value", line)
            if resets < 0:
                raise ParseError("reset_count must be non-negative", line)
            success = _parse_bool(rec[col["success"]], line)
            eid = rec[col["episode_id"]].strip()
            b = buckets.get(eid)
            if b is None:
                b = buckets[eid] = {"rows": [], "meta": (resets, success, rec[col["task"]].strip(),
                                                         rec[col["robot"]].strip())}
            elif vals[0] <= b["rows"][-1][0]:
                raise MonotonicityViolation(
                    f"episode {eid!r}: timestamp {vals[0]} not after {b['rows'][-1][0]}", line)
            b["rows"].append(vals)
    episodes = []
    for eid, b in buckets.items():
        arr = np.array(b["rows"], dtype=float)
        resets, success, task, robot = b["meta"]
        episodes.append(DemoEpisode(eid, arr[:, 0], arr[:, 1:7], arr[:, 7:10], arr[:, 10:14],
                                    arr[:, 14], resets, success, task, robot))
    return episodes


def write_dataset(path, episodes: Iterable[DemoEpisode]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for ep in episodes:
            for i in range(ep.t.size):
                w.writerow([ep.episode_id, repr(float(ep.t[i])), *map(repr, map(float, ep.q[i])),
                            *map(repr, map(float, ep.position[i])), *map(repr, map(float, ep.quaternion[i])),
                            repr(float(ep.gripper[i])), ep.reset_count, int(ep.success), ep.task, ep.robot])


def bundled_fixture_path() -> Path:
    return _DATA / "demo_fixture.csv"


@dataclass(frozen=True)
class OperatorStats:
    task: str
    robot: str
    episodes: int
    mean_operator_time: float
    mean_resets: float

    def to_json(self) -> dict:
        return {"task": self.task, "robot": self.robot, "episodes": self.episodes,
                "mean_operator_time_s": self.mean_operator_time, "mean_resets": self.mean_resets}


def select(dataset: Sequence[DemoEpisode], task: str | None = None, robot: str | None = None,
           successful_only: bool = False) -> list[DemoEpisode]:
    return [e for e in dataset
            if (task is None or e.task == task) and (robot is None or e.robot == robot)
            and (e.success or not successful_only)]


def operator_stats(dataset: Sequence[DemoEpisode], task: str, robot: str) -> OperatorStats:
    eps = select(dataset, task, robot)
    if not eps:
        raise EmptySelection(f"no episodes for task {task!r} on robot {robot!r}")
    return OperatorStats(task, robot, len(eps), float(np.mean([e.duration for e in eps])),
                         float(np.mean([e.reset_count for e in eps])))


@dataclass(frozen=True)
class SummaryStats:
    n: int
    mean: float
    stderr: float
    minimum: float
    maximum: float
    units: str = "s"
    label: str = ""

    def __post_init__(self):
        if self.n < 1:
            raise NonPositiveInput("summary needs at least one sample")
        if not self.minimum <= self.mean <= self.maximum:
            raise ValueError("summary requires min <= mean <= max")

    @classmethod
    def from_samples(cls, values, units: str = "s", label: str = "") -> "SummaryStats":
        x = np.asarray(values, dtype=float)
        if x.size == 0:
            raise EmptySelection("no samples")
        se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
        lo, hi = float(x.min()), float(x.max())
        # summation rounding can push the mean an ulp outside [min, max]
        mean = min(max(float(x.mean()), lo), hi)
        return cls(int(x.size), mean, se, lo, hi, units, label)

    def to_json(self) -> dict:
        return {"label": self.label, "n": self.n, "mean": self.mean, "stderr": self.stderr,
                "min": self.minimum, "max": self.maximum, "units": self.units}


@dataclass(frozen=True)
class SpeedupReport:
    ratio: float
    base: SummaryStats
    ours: SummaryStats
    text: str = field(default="")

    def to_json(self) -> dict:
        return {"ratio": self.ratio, "text": self.text, "base": self.base.to_json(),
                "ours": self.ours.to_json()}


def speedup_report(base: SummaryStats, ours: SummaryStats) -> SpeedupReport:
    """How many times faster ``ours`` is than ``base`` (ratio of means)."""
    if not (base.mean > 0 and ours.mean > 0):
        raise NonPositiveInput("means must be positive")
    ratio = base.mean / ours.mean
    text = (f"{ours.label or 'ours'}: {ours.mean:.1f} {ours.units} vs "
            f"{base.label or 'base'}: {base.mean:.1f} {base.units} -> {ratio:.2f}x faster")
    return SpeedupReport(ratio, base, ours, text)


def load_completion_times(path=None) -> dict[tuple[str, str], SummaryStats]:
    """Bundled policy completion-time summaries keyed by (robot, wrist)."""
    p = Path(path) if path is not None else _DATA / "policy_completion_times.json"
    with open(p) as fh:
        d = json.load(fh)
    out = {}
    for s in d["systems"]:
        out[(s["robot"], s["wrist"])] = SummaryStats(
            s["n"], s["mean"], s["stderr"], s["min"], s["max"], d.get("units", "s"),
            f"{s['robot']}+{s['wrist']}")
    return out


def dataset_report(dataset: Sequence[DemoEpisode]) -> dict:
    """Per-episode metrics plus per (task, robot) operator statistics."""
    groups = []
    seen = []
    for e in dataset:
        if (e.task, e.robot) not in seen:
            seen.append((e.task, e.robot))
    for task, robot in seen:
        st = operator_stats(dataset, task, robot)
        eps = select(dataset, task, robot)
        m = [trajectory_length(e) for e in eps]
        groups.append({
            **st.to_json(),
            "mean_path_length_m": float(np.mean([x.path_length for x in m])),
            "mean_joint_path_length_rad": float(np.mean([x.joint_path_length for x in m])),
            "success_rate": float(np.mean([e.success for e in eps])),
        })
    return {
        "episodes": [{"episode_id": e.episode_id, "task": e.task, "robot": e.robot,
                      "samples": int(e.t.size), "reset_count": e.reset_count, "success": e.success,
                      **trajectory_length(e).to_json()} for e in dataset],
        "groups": groups,
    }


GROUP_CSV_COLUMNS = ("task", "robot", "episodes", "mean_operator_time_s", "mean_resets",
                     "mean_path_length_m", "mean_joint_path_length_rad", "success_rate")


def groups_csv(report: dict) -> str:
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(GROUP_CSV_COLUMNS)
    for g in report["groups"]:
        w.writerow([g[c] for c in GROUP_CSV_COLUMNS])
    return buf.getvalue()
