import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wristkit.diffik import (
    DiffIKConfig, QPSpec, TargetTrajectory, build_diffik_qp, ik_attempt, integrate_step, kkt_residual,
    load_trajectory_csv, pose_error, setpoint_stream, solve_pose_ik, solve_qp, velocity_box,
)
from wristkit.errors import Infeasible, NotConverged, Unbounded
from wristkit.geom import Pose, rotation_from_axis_angle
from wristkit.kinematics import ee_pose, geometric_jacobian, load_robot


def grid_oracle(spec, coarse=1001, rounds=6):
    """Minimize a 2-variable box QP by exhaustive gridding with zoom-in."""
    lo, hi = spec.lower.copy(), spec.upper.copy()
    best = None
    for _ in range(rounds):
        xs = np.linspace(lo[0], hi[0], coarse)
        ys = np.linspace(lo[1], hi[1], coarse)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        h, g = spec.hessian, spec.gradient
        f = 0.5 * (h[0, 0] * gx * gx + 2 * h[0, 1] * gx * gy + h[1, 1] * gy * gy) + g[0] * gx + g[1] * gy
        k = np.unravel_index(np.argmin(f), f.shape)
        best = np.array([gx[k], gy[k]])
        step = np.array([xs[1] - xs[0], ys[1] - ys[0]])
        lo = np.maximum(spec.lower, best - 3 * step)
        hi = np.minimum(spec.upper, best + 3 * step)
    return spec.objective(best)


def random_box_qp(rng, n, rank=None):
    rank = n if rank is None else rank
    a = rng.normal(size=(n, rank))
    lo = -rng.uniform(0, 2, n)
    hi = rng.uniform(0, 2, n)
    return QPSpec(a @ a.T, rng.normal(size=n) * 3, lo, hi)


def test_qp_unconstrained_interior():
    spec = QPSpec(np.diag([2.0, 4.0]), [-2.0, -4.0], [-5, -5], [5, 5])
    sol = solve_qp(spec)
    assert np.allclose(sol.x, [1, 1], atol=1e-12)
    assert sol.objective == pytest.approx(-3.0)


def test_qp_active_bound():
    spec = QPSpec(np.eye(2), [-3.0, 0.5], [-1, -1], [1, 1])
    sol = solve_qp(spec)
    assert np.allclose(sol.x, [1.0, -0.5], atol=1e-12)
    assert sol.mu_upper[0] == pytest.approx(2.0)
    assert sol.kkt.max() < 1e-12


def test_qp_zero_hessian_is_lp():
    sol = solve_qp(QPSpec(np.zeros((2, 2)), [1.0, -2.0], [-1, -1], [3, 4]))
    assert np.allclose(sol.x, [-1, 4])


def test_qp_errors():
    with pytest.raises(Infeasible):
        QPSpec(np.eye(1), [0.0], [1.0], [0.0])
    with pytest.raises(ValueError):
        QPSpec(np.array([[1.0, 0], [0, -1.0]]), [0, 0], [-1, -1], [1, 1])
    with pytest.raises(Unbounded):
        solve_qp(QPSpec(np.zeros((1, 1)), [1.0], [-np.inf], [np.inf]))


def test_qp_inequality_rows():
    # min |x - (2,2)|^2 with x0 + x1 <= 1 in a large box -> (0.5, 0.5)
    spec = QPSpec(2 * np.eye(2), [-4.0, -4.0], [-10, -10], [10, 10], [[1.0, 1.0]], [1.0])
    sol = solve_qp(spec)
    assert np.allclose(sol.x, [0.5, 0.5], atol=1e-10)
    assert sol.mu_ineq[0] == pytest.approx(3.0)
    assert sol.kkt.max() < 1e-9


def test_qp_kkt_on_random_instances():
    rng = np.random.default_rng(20)
    for _ in range(500):
        n = int(rng.integers(1, 9))
        spec = random_box_qp(rng, n, int(rng.integers(0, n + 1)))
        sol = solve_qp(spec)
        assert sol.kkt.max() < 1e-8
        assert np.all(sol.x >= spec.lower) and np.all(sol.x <= spec.upper)


def test_qp_matches_grid_oracle():
    rng = np.random.default_rng(21)
    for _ in range(25):
        spec = random_box_qp(rng, 2, int(rng.integers(0, 3)))
        assert abs(solve_qp(spec).objective - grid_oracle(spec)) < 1e-6


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_qp_optimality_against_perturbations(seed):
    rng = np.random.default_rng(seed)
    spec = random_box_qp(rng, int(rng.integers(1, 7)))
    sol = solve_qp(spec)
    for _ in range(20):
        y = np.clip(sol.x + rng.normal(scale=0.1, size=spec.n), spec.lower, spec.upper)
        assert spec.objective(y) >= sol.objective - 1e-10


def test_kkt_residual_flags_wrong_point():
    spec = QPSpec(np.eye(2), [-1.0, -1.0], [-2, -2], [2, 2])
    res = kkt_residual(spec, [0.0, 0.0], np.zeros(2), np.zeros(2), np.zeros(0))
    assert res.stationarity == pytest.approx(1.0)


def test_diffik_unconstrained_equals_inverse_jacobian():
    # square 6-DOF arm, no damping, wide box: qdot = J^-1 v
    m = load_robot("agilex_dexwrist")
    q = m.home + 0.1
    cfg = DiffIKConfig(damping=0.0, weights=(1, 1, 1, 1, 1, 1), dt=1.0, eta=1.0)
    cur = ee_pose(m, q)
    target = Pose(rotation_from_axis_angle([0, 0, 1], 1e-4) @ cur.rotation, cur.translation + [1e-4, 0, 0])
    spec = build_diffik_qp(m, q, target, cfg)
    sol = solve_qp(spec)
    v = pose_error(cur, target) / cfg.dt
    assert np.allclose(sol.x, np.linalg.solve(geometric_jacobian(m, q), v), atol=1e-10)


def test_velocity_damper_closes_at_limit():
    m = load_robot("agilex_dexwrist")
    lo, hi = m.limits
    q = m.home.copy()
    q[4] = hi[4]
    vlo, vhi = velocity_box(m, q, DiffIKConfig())
    assert vhi[4] == 0.0 and vlo[4] < 0.0
    assert np.all(vlo <= 0) and np.all(vhi >= 0)
    assert np.all(np.abs(vlo) <= m.velocity_limits) and np.all(vhi <= m.velocity_limits)


def test_stream_never_leaves_limits():
    # drive far past the wrist limit for 10^4 steps
    m = load_robot("agilex_dexwrist")
    lo, hi = m.limits
    q0 = m.home.copy()
    far = ee_pose(m, q0)
    target = Pose(rotation_from_axis_angle([1, 0, 0], 1.2) @ far.rotation, far.translation + [0.3, 0.3, 0.3])
    traj = TargetTrajectory.constant(target, 10.0)
    n = 0
    for sp in setpoint_stream(m, q0, traj):
        assert np.all(sp.q >= lo) and np.all(sp.q <= hi)
        n += 1
    assert n == 10_000


def test_stream_step_count_and_timestamps():
    m = load_robot("agilex_dexwrist")
    traj = TargetTrajectory.constant(ee_pose(m, m.home), 1.0)
    pts = list(setpoint_stream(m, m.home, traj))
    assert len(pts) == 1000
    assert pts[0].t == pytest.approx(0.001) and pts[-1].t == pytest.approx(1.0)


def test_stream_tracks_slow_ramp(tmp_path):
    m = load_robot("agilex_dexwrist")
    start = ee_pose(m, m.home)
    q = start.rotation
    from wristkit.geom import rotation_to_quat

    qw = rotation_to_quat(q)
    end = start.translation + [0.0, 0.05, -0.03]
    csv = tmp_path / "ramp.csv"
    csv.write_text("t,x,y,z,qw,qx,qy,qz\n" + "\n".join(
        ",".join(map(str, [t, *p, *qw])) for t, p in ((0.0, start.translation), (1.0, end), (1.5, end))))
    traj = load_trajectory_csv(csv)
    last = None
    for last in setpoint_stream(m, m.home, traj):
        pass
    assert np.linalg.norm(ee_pose(m, last.q).translation - end) < 1e-3


def test_integrate_step_clamps():
    m = load_robot("agilex_serial")
    lo, hi = m.limits
    q = integrate_step(m, m.home, np.full(m.dof, 1e3), 0.01)
    assert np.array_equal(q, hi)


def test_ik_round_trip_from_nearby_seed():
    m = load_robot("agilex_dexwrist")
    rng = np.random.default_rng(22)
    lo, hi = m.limits
    done = 0
    while done < 50:
        q = rng.uniform(lo, hi)
        # damped steps crawl along near-singular directions
        if np.linalg.svd(geometric_jacobian(m, q), compute_uv=False)[-1] < 1e-2:
            continue
        done += 1
        target = ee_pose(m, q)
        res = solve_pose_ik(m, np.clip(q + rng.normal(scale=0.05, size=6), lo, hi), target)
        got = ee_pose(m, res.q)
        assert np.linalg.norm(got.translation - target.translation) < 1e-5
        assert res.iterations <= res.trace.size - 1


def test_unreachable_target_raises_with_monotone_trace():
    m = load_robot("agilex_dexwrist")
    target = Pose(np.eye(3), [10.0, 0.0, 0.0])
    with pytest.raises(NotConverged) as info:
        solve_pose_ik(m, m.home, target, DiffIKConfig.for_pose_ik().position_only())
    res = info.value.result
    assert not res.converged and res.failure_reason in ("stalled", "max-iterations")
    assert np.all(np.diff(res.trace) <= 0)
    assert res.position_residual > 9.0


def test_ik_attempt_trace_monotone_random():
    m = load_robot("ur3e_dexwrist")
    rng = np.random.default_rng(23)
    lo, hi = m.limits
    for _ in range(50):
        r = ik_attempt(m, m.home, ee_pose(m, rng.uniform(lo, hi)), DiffIKConfig.for_pose_ik())
        assert np.all(np.diff(r.trace) <= 0)


def test_position_only_ignores_orientation():
    m = load_robot("agilex_dexwrist")
    home = ee_pose(m, m.home)
    target = Pose(rotation_from_axis_angle([0, 1, 0], math.pi / 2) @ home.rotation, home.translation + 0.02)
    res = solve_pose_ik(m, m.home, target, DiffIKConfig.for_pose_ik().position_only())
    assert res.position_residual < 1e-5 and res.orientation_residual > 0.1


def test_config_validation():
    with pytest.raises(ValueError):
        DiffIKConfig(dt=0)
    with pytest.raises(ValueError):
        DiffIKConfig(eta=1.5)
    assert DiffIKConfig.for_pose_ik().dt == 0.1
