"""Differential inverse kinematics as a small constrained QP.

Each control step solves::

    min_qd  0.5 qd' (J'WJ + lam I) qd - (J'W v_des)' qd
    s.t.    lo <= qd <= hi   (velocity limits and a joint-limit velocity damper)
            A qd <= b        (optional)

with ``v_des`` the weighted pose-error twist divided by the control period.
Velocities are Euler-integrated into joint position setpoints.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
import math
from typing import Iterator, Sequence

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import linprog

from . import _backend
from .errors import DimensionMismatch, Infeasible, MaxIterations, NotConverged, SolverError, Unbounded
from .geom import Pose, quat_to_rotation
from .kinematics import RobotModel, ee_pose, geometric_jacobian, link_frames


@dataclass(frozen=True)
class DiffIKConfig:
    dt: float = 0.001
    damping: float = 1e-3
    weights: tuple[float, ...] = (1.0, 1.0, 1.0, 0.5, 0.5, 0.5)
    eta: float = 0.9
    max_iterations: int = 200
    tol_position: float = 1e-5
    tol_orientation: float = 1e-4

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not (self.tol_position > 0 and self.tol_orientation > 0):
            raise ValueError("tolerances must be positive")
        if not 0 < self.eta <= 1:
            raise ValueError("eta must be in (0, 1]")
        if self.damping < 0:
            raise ValueError("damping must be non-negative")
        if len(self.weights) != 6:
            raise ValueError("weights must have 6 entries")
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))

    @classmethod
    def for_pose_ik(cls, **kw) -> "DiffIKConfig":
        """Defaults for iterative pose IK: a long virtual period so each
        iteration may take a full damped Newton step."""
        kw.setdefault("dt", 0.1)
        return cls(**kw)

    def position_only(self) -> "DiffIKConfig":
        return replace(self, weights=self.weights[:3] + (0.0, 0.0, 0.0))

    @property
    def is_position_only(self) -> bool:
        return all(w == 0.0 for w in self.weights[3:])


@dataclass(frozen=True)
class QPSpec:
    hessian: np.ndarray
    gradient: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    a_ineq: np.ndarray | None = None
    b_ineq: np.ndarray | None = None

    def __post_init__(self):
        h = np.array(self.hessian, dtype=float)
        g = np.array(self.gradient, dtype=float).reshape(-1)
        n = g.size
        lo = np.array(self.lower, dtype=float).reshape(-1)
        hi = np.array(self.upper, dtype=float).reshape(-1)
        if h.shape != (n, n) or lo.size != n or hi.size != n:
            raise DimensionMismatch("QP dimensions disagree")
        if np.abs(h - h.T).max(initial=0.0) > 1e-10:
            raise ValueError("Hessian must be symmetric")
        if n and np.linalg.eigvalsh(0.5 * (h + h.T)).min() < -1e-10:
            raise ValueError("Hessian must be positive semidefinite")
        if np.any(lo > hi):
            raise Infeasible("lower bound above upper bound")
        object.__setattr__(self, "hessian", h)
        object.__setattr__(self, "gradient", g)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if self.a_ineq is not None:
            a = np.atleast_2d(np.array(self.a_ineq, dtype=float))
            b = np.array(self.b_ineq, dtype=float).reshape(-1)
            if a.shape != (b.size, n):
                raise DimensionMismatch("inequality rows disagree with QP size")
            object.__setattr__(self, "a_ineq", a)
            object.__setattr__(self, "b_ineq", b)

    @property
    def n(self) -> int:
        return self.gradient.size

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.hessian @ x + self.gradient @ x)


@dataclass(frozen=True)
class KKTResidual:
    stationarity: float
    primal: float
    complementarity: float
    dual: float

    def max(self) -> float:
        return max(self.stationarity, self.primal, self.complementarity, self.dual)


@dataclass(frozen=True)
class QPSolution:
    x: np.ndarray
    mu_lower: np.ndarray
    mu_upper: np.ndarray
    mu_ineq: np.ndarray
    kkt: KKTResidual
    iterations: int
    objective: float


def kkt_residual(spec: QPSpec, x, mu_lower, mu_upper, mu_ineq) -> KKTResidual:
    x = np.asarray(x, dtype=float)
    grad = spec.hessian @ x + spec.gradient
    stat = grad - mu_lower + mu_upper
    prim = [np.maximum(spec.lower - x, 0.0), np.maximum(x - spec.upper, 0.0)]
    comp = [
        np.where(mu_lower > 0, mu_lower * np.abs(x - spec.lower), 0.0),
        np.where(mu_upper > 0, mu_upper * np.abs(spec.upper - x), 0.0),
    ]
    duals = [mu_lower, mu_upper]
    if spec.a_ineq is not None:
        slack = spec.a_ineq @ x - spec.b_ineq
        stat = stat + spec.a_ineq.T @ mu_ineq
        prim.append(np.maximum(slack, 0.0))
        comp.append(mu_ineq * np.abs(slack))
        duals.append(mu_ineq)

    def _mx(arrs):
        return float(max((np.max(a) if a.size else 0.0) for a in arrs))

    return KKTResidual(
        stationarity=float(np.max(np.abs(stat), initial=0.0)),
        primal=_mx(prim),
        complementarity=_mx(comp),
        dual=float(max(0.0, -min(float(np.min(d, initial=0.0)) for d in duals))),
    )


def _constraint_rows(spec: QPSpec):
    """Stack all constraints as ``C x <= d``; returns (C, d, kind, index)."""
    n = spec.n
    rows, rhs, kind, idx = [], [], [], []
    eye = np.eye(n)
    for i in range(n):
        if np.isfinite(spec.lower[i]):
            rows.append(-eye[i]); rhs.append(-spec.lower[i]); kind.append(0); idx.append(i)
        if np.isfinite(spec.upper[i]):
            rows.append(eye[i]); rhs.append(spec.upper[i]); kind.append(1); idx.append(i)
    if spec.a_ineq is not None:
        for k in range(spec.a_ineq.shape[0]):
            rows.append(spec.a_ineq[k]); rhs.append(spec.b_ineq[k]); kind.append(2); idx.append(k)
    c = np.array(rows).reshape(-1, n)
    return c, np.array(rhs), np.array(kind, dtype=int), np.array(idx, dtype=int)


def _feasible_start(spec: QPSpec, c, d, tol):
    x = np.clip(np.zeros(spec.n), spec.lower, spec.upper)
    if c.shape[0] == 0 or np.all(c @ x - d <= tol):
        return x
    bounds = [
        (lo if np.isfinite(lo) else None, hi if np.isfinite(hi) else None)
        for lo, hi in zip(spec.lower, spec.upper)
    ]
    res = linprog(np.zeros(spec.n), A_ub=spec.a_ineq, b_ub=spec.b_ineq, bounds=bounds, method="highs")
    if res.status != 0:
        raise Infeasible("inequality constraints admit no feasible point")
    return np.clip(res.x, spec.lower, spec.upper)


def solve_qp(spec: QPSpec, max_iterations: int | None = None) -> QPSolution:
    """Primal active-set solver for convex QPs with box and inequality rows.

    Handles singular (PSD) Hessians by following zero-curvature descent
    directions to the next blocking constraint. Deterministic: ties are broken
    by lowest constraint index.
    """
    n = spec.n
    h, g = spec.hessian, spec.gradient
    c, d, kind, idx = _constraint_rows(spec)
    m = c.shape[0]
    tol = 1e-12
    if max_iterations is None:
        max_iterations = 20 * (n + m) + 100
    x = _feasible_start(spec, c, d, 1e-9)

    work: list[int] = []
    for r in range(m):
        if abs(c[r] @ x - d[r]) <= tol * (1 + abs(d[r])):
            cand = work + [r]
            if np.linalg.matrix_rank(c[cand]) == len(cand):
                work = cand

    scale = 1.0 + (np.abs(h).max() if n else 0.0)
    at_min = False
    for it in range(max_iterations):
        grad = h @ x + g
        cw = c[work] if work else np.zeros((0, n))
        z = null_space(cw) if work else np.eye(n)
        if z.shape[1] == 0 or at_min:
            # a full unblocked step already reached the subspace minimizer
            p = np.zeros(n)
            ray = False
        else:
            hr = z.T @ h @ z
            gr = z.T @ grad
            w, v = np.linalg.eigh(0.5 * (hr + hr.T))
            is_flat = w <= 1e-10 * scale
            flat = v[:, is_flat]
            gf = flat.T @ gr
            # gradient along zero curvature: objective falls linearly
            ray = gf.size > 0 and np.abs(gf).max() > 1e-10 * (1.0 + np.abs(gr).max())
            if ray:
                p = z @ (-flat @ gf)
            else:
                curved = v[:, ~is_flat]
                p = z @ (curved @ (-(curved.T @ gr) / w[~is_flat]))
        if at_min or not ray and np.abs(p).max(initial=0.0) <= 1e-13 * (1.0 + np.abs(x).max(initial=0.0)):
            at_min = False
            if work:
                mu = np.linalg.lstsq(cw.T, -grad, rcond=None)[0]
                j = int(np.argmin(mu))
                if mu[j] < -1e-11 * (1.0 + np.abs(grad).max()):
                    work.pop(j)
                    continue
                full = np.zeros(m)
                full[work] = np.maximum(mu, 0.0)
            else:
                full = np.zeros(m)
            return _finish(spec, x, full, kind, idx, work, c, d, it)
        alpha = math.inf if ray else 1.0
        block = -1
        cp = c @ p
        for r in range(m):
            if r in work or cp[r] <= 1e-14 * (1.0 + np.abs(p).max()):
                continue
            a = (d[r] - c[r] @ x) / cp[r]
            if a < alpha:
                alpha = max(a, 0.0)
                block = r
        if block < 0 and ray:
            raise Unbounded("QP objective is unbounded below")
        x = x + alpha * p
        at_min = block < 0
        if block >= 0:
            work.append(block)
            if kind[block] == 0:
                x[idx[block]] = spec.lower[idx[block]]
            elif kind[block] == 1:
                x[idx[block]] = spec.upper[idx[block]]
    raise MaxIterations(f"active set did not terminate in {max_iterations} iterations")


def _finish(spec, x, mu, kind, idx, work, c, d, iterations) -> QPSolution:
    x = np.clip(x, spec.lower, spec.upper)
    n = spec.n
    mu_lo = np.zeros(n)
    mu_hi = np.zeros(n)
    n_ineq = 0 if spec.a_ineq is None else spec.a_ineq.shape[0]
    mu_in = np.zeros(n_ineq)
    for r, val in enumerate(mu):
        if kind[r] == 0:
            mu_lo[idx[r]] = val
        elif kind[r] == 1:
            mu_hi[idx[r]] = val
        else:
            mu_in[idx[r]] = val
    res = kkt_residual(spec, x, mu_lo, mu_hi, mu_in)
    return QPSolution(x, mu_lo, mu_hi, mu_in, res, iterations, spec.objective(x))


def pose_error(current: Pose, target: Pose) -> np.ndarray:
    """Stacked (position difference, rotation vector of R_target R_current^T)."""
    from .geom import rotation_log

    return np.concatenate(
        [target.translation - current.translation, rotation_log(target.rotation @ current.rotation.T)]
    )


def velocity_box(model: RobotModel, q, cfg: DiffIKConfig) -> tuple[np.ndarray, np.ndarray]:
    lo_q, hi_q = model.limits
    return _backend.kernels.velocity_bounds(
        np.ascontiguousarray(q, dtype=float), lo_q, hi_q, model.velocity_limits, cfg.dt, cfg.eta
    )


def build_diffik_qp(model: RobotModel, q, target: Pose, cfg: DiffIKConfig) -> QPSpec:
    q = model.check_q(q)
    jac = geometric_jacobian(model, q)
    w = np.asarray(cfg.weights)
    v_des = pose_error(ee_pose(model, q), target) / cfg.dt
    jw = jac.T * w
    h = jw @ jac + cfg.damping * np.eye(model.dof)
    h = 0.5 * (h + h.T)
    g = -jw @ v_des
    lo, hi = velocity_box(model, q, cfg)
    return QPSpec(h, g, lo, hi)


def integrate_step(model: RobotModel, q, qdot, dt: float) -> np.ndarray:
    q = model.check_q(q)
    qdot = np.asarray(qdot, dtype=float).reshape(-1)
    if qdot.shape != q.shape:
        raise DimensionMismatch("velocity and configuration lengths differ")
    lo, hi = model.limits
    return np.minimum(np.maximum(q + qdot * dt, lo), hi)


IK_STATUS = {0: "converged", 1: "max-iterations", 2: "stalled", 3: "qp-failure"}


@dataclass(frozen=True)
class IKResult:
    q: np.ndarray
    converged: bool
    iterations: int
    position_residual: float
    orientation_residual: float
    failure_reason: str | None = None
    trace: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    def to_json(self) -> dict:
        return {
            "q": [float(v) for v in self.q],
            "converged": self.converged,
            "iterations": self.iterations,
            "position_residual_m": self.position_residual,
            "orientation_residual_rad": self.orientation_residual,
            "failure_reason": self.failure_reason,
        }


def ik_attempt(model: RobotModel, seed, target: Pose, cfg: DiffIKConfig) -> IKResult:
    """One IK run from ``seed``; never raises on non-convergence."""
    seed = model.check_q(seed)
    lo, hi = model.limits
    k = _backend.kernels
    q, status, iters, rp, ro, trace = k.ik_solve(
        *model.chain, lo, hi, model.velocity_limits, np.clip(seed, lo, hi),
        np.ascontiguousarray(target.translation), np.ascontiguousarray(target.rotation),
        np.asarray(cfg.weights, dtype=float), cfg.damping, cfg.dt, cfg.eta,
        cfg.tol_position, cfg.tol_orientation, cfg.max_iterations,
    )
    converged = status == k.IK_CONVERGED
    return IKResult(
        q=q,
        converged=converged,
        iterations=int(iters),
        position_residual=float(rp),
        orientation_residual=float(ro),
        failure_reason=None if converged else IK_STATUS[int(status)],
        trace=trace,
    )


def restart_seeds(model: RobotModel, count: int, rng_seed: int = 0) -> np.ndarray:
    """``count`` fixed configurations spread uniformly over the joint box."""
    lo, hi = model.limits
    return np.random.default_rng(rng_seed).uniform(lo, hi, (count, model.dof))


def solve_pose_ik(model: RobotModel, seed, target: Pose, cfg: DiffIKConfig | None = None,
                  restarts: int = 0) -> IKResult:
    """Iterate build/solve/integrate from ``seed`` until within tolerance.

    With ``restarts > 0``, failed runs are retried from that many fixed
    seeds (see :func:`restart_seeds`); the first converged run wins.
    Raises :class:`NotConverged` carrying the best iterate otherwise.
    """
    cfg = cfg or DiffIKConfig.for_pose_ik()
    res = best = ik_attempt(model, seed, target, cfg)
    if not res.converged and restarts > 0:
        for s in restart_seeds(model, restarts):
            res = ik_attempt(model, s, target, cfg)
            if res.converged:
                break
            if res.position_residual < best.position_residual:
                best = res
    if not res.converged:
        res = best
        raise NotConverged(
            f"IK {res.failure_reason} after {res.iterations} iterations "
            f"(position residual {res.position_residual:.3g} m)",
            res,
        )
    return res


# --- setpoint streaming ---------------------------------------------------------


@dataclass(frozen=True)
class TargetTrajectory:
    """Timestamped pose targets; position interpolated linearly, orientation held."""

    times: np.ndarray
    positions: np.ndarray
    rotations: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size == 0 or np.any(np.diff(t) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    @classmethod
    def constant(cls, pose: Pose, duration: float) -> "TargetTrajectory":
        return cls(np.array([0.0, duration]), np.array([pose.translation] * 2),
                   np.array([pose.rotation] * 2))

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]]) -> "TargetTrajectory":
        """Rows of ``(t, x, y, z, qw, qx, qy, qz)``."""
        arr = np.asarray(rows, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 8:
            raise DimensionMismatch("trajectory rows need 8 columns: t,x,y,z,qw,qx,qy,qz")
        return cls(arr[:, 0], arr[:, 1:4], np.array([quat_to_rotation(r) for r in arr[:, 4:]]))

    @property
    def start(self) -> float:
        return float(self.times[0])

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def at(self, t: float) -> Pose:
        pos = np.array([np.interp(t, self.times, self.positions[:, i]) for i in range(3)])
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        k = min(max(k, 0), len(self.times) - 1)
        return Pose(self.rotations[k], pos)


def load_trajectory_csv(path) -> TargetTrajectory:
    import csv

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = []
        for line_no, row in enumerate(reader, start=1):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                if line_no == 1:
                    continue  # header
                raise
    return TargetTrajectory.from_rows(rows)


@dataclass(frozen=True)
class Setpoint:
    t: float
    q: np.ndarray
    qdot: np.ndarray


def setpoint_stream(model: RobotModel, q0, trajectory: TargetTrajectory,
                    cfg: DiffIKConfig | None = None) -> Iterator[Setpoint]:
    """Yield one joint setpoint per control period over the trajectory span.

    Step ``k`` (1-based) is stamped ``start + k * dt``; a 1 s trajectory at
    1 kHz gives exactly 1000 setpoints.
    """
    cfg = cfg or DiffIKConfig()
    q = model.check_q(q0).copy()
    steps = int(round(trajectory.duration / cfg.dt))
    for k in range(1, steps + 1):
        t = trajectory.start + k * cfg.dt
        spec = build_diffik_qp(model, q, trajectory.at(t), cfg)
        try:
            sol = _solve_stream_qp(spec)
        except Exception as exc:  # noqa: BLE001 - re-raised with the step index
            raise SolverError(f"QP failed at step {k}: {exc}", k) from exc
        q = integrate_step(model, q, sol, cfg.dt)
        yield Setpoint(t, q.copy(), sol)


def _solve_stream_qp(spec: QPSpec) -> np.ndarray:
    k = _backend.kernels
    x, status, _ = k.solve_box_qp(
        np.ascontiguousarray(spec.hessian), spec.gradient, spec.lower, spec.upper, 0
    )
    if status != k.QP_OK:
        x = solve_qp(spec).x
    return np.minimum(np.maximum(x, spec.lower), spec.upper)
