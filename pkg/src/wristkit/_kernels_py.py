"""Pure-Python/numpy kernels.

Mirror of ``_kernels.pyx``; same signatures, same algorithms, used when the
compiled extension is unavailable and as the reference in parity tests.

Chain layout shared by both backends: ``base`` (4x4), ``origins`` (n,4,4)
fixed parent-to-joint transforms, ``axes`` (n,3) unit joint axes in the joint
frame, ``tool`` (4x4). ``fk_frames`` returns ``n + 2`` frames: base, one per
joint (after its rotation), then the end effector.
"""
from __future__ import annotations

import math

import numpy as np

NAME = "python"

QP_OK = 0
QP_MAXITER = 1
QP_SINGULAR = 2

IK_CONVERGED = 0
IK_MAXITER = 1
IK_STALLED = 2
IK_QP_FAILED = 3


def rodrigues(a, angle):
    c = math.cos(angle)
    s = math.sin(angle)
    v = 1.0 - c
    x, y, z = a
    return np.array(
        [
            [c + x * x * v, x * y * v - z * s, x * z * v + y * s],
            [y * x * v + z * s, c + y * y * v, y * z * v - x * s],
            [z * x * v - y * s, z * y * v + x * s, c + z * z * v],
        ]
    )


def fk_frames(base, origins, axes, tool, q):
    n = len(q)
    frames = np.empty((n + 2, 4, 4))
    t = np.array(base, dtype=float)
    frames[0] = t
    for i in range(n):
        t = t @ origins[i]
        rot = np.eye(4)
        rot[:3, :3] = rodrigues(axes[i], q[i])
        t = t @ rot
        frames[i + 1] = t
    frames[n + 1] = t @ tool
    return frames


def _jacobian_from_frames(frames, axes, n):
    jac = np.zeros((6, n))
    pe = frames[n + 1][:3, 3]
    for i in range(n):
        f = frames[i + 1]
        z = f[:3, :3] @ axes[i]
        jac[:3, i] = np.cross(z, pe - f[:3, 3])
        jac[3:, i] = z
    return jac


def jacobian(base, origins, axes, tool, q):
    frames = fk_frames(base, origins, axes, tool, q)
    return _jacobian_from_frames(frames, axes, len(q))


def rotation_log(r):
    w = 0.5 * np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    c = 0.5 * (r[0, 0] + r[1, 1] + r[2, 2] - 1.0)
    c = max(-1.0, min(1.0, c))
    s = math.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    angle = math.atan2(s, c)
    if s > 1e-6:
        return w * (angle / s)
    if c > 0.0:
        return w
    k = int(np.argmax(np.diag(r)))
    axis = np.empty(3)
    axis[k] = math.sqrt(max(0.0, 0.5 * (r[k, k] + 1.0)))
    for j in range(3):
        if j != k:
            axis[j] = (r[k, j] + r[j, k]) / (4.0 * axis[k])
    axis /= math.sqrt(axis @ axis)
    return axis * angle


def pose_error(ee, tpos, trot):
    """6-vector (position error, rotation vector of trot @ R^T), world frame."""
    err = np.empty(6)
    err[:3] = tpos - ee[:3, 3]
    err[3:] = rotation_log(trot @ ee[:3, :3].T)
    return err


def solve_box_qp(h, g, lo, hi, max_iter=0):
    """Primal active-set for ``min 0.5 x'Hx + g'x`` s.t. ``lo <= x <= hi``.

    Requires H positive definite on every free subspace; returns
    ``(x, status, iterations)`` with status ``QP_SINGULAR`` otherwise.
    """
    n = len(g)
    if max_iter <= 0:
        max_iter = 10 * n + 50
    x = np.minimum(np.maximum(0.0, lo), hi)
    state = np.zeros(n, dtype=np.int64)  # 0 free, -1 at lo, +1 at hi, 2 pinned
    for i in range(n):
        if lo[i] == hi[i]:
            state[i] = 2
        elif x[i] == lo[i]:
            state[i] = -1
        elif x[i] == hi[i]:
            state[i] = 1
    scale = 1.0 + float(np.max(np.abs(np.diag(h)))) if n else 1.0
    at_min = False
    for it in range(max_iter):
        grad = h @ x + g
        free = np.flatnonzero(state == 0)
        p = np.zeros(n)
        # a full unblocked step already reached the subspace minimizer
        if len(free) and not at_min:
            hff = h[np.ix_(free, free)]
            try:
                chol = np.linalg.cholesky(hff)
            except np.linalg.LinAlgError:
                return x, QP_SINGULAR, it
            if np.min(np.diag(chol)) ** 2 <= 1e-14 * scale:
                return x, QP_SINGULAR, it
            y = np.linalg.solve(chol, -grad[free])
            p[free] = np.linalg.solve(chol.T, y)
        pnorm = float(np.max(np.abs(p))) if n else 0.0
        if at_min or pnorm <= 1e-15 * (1.0 + float(np.max(np.abs(x))) if n else 1.0):
            at_min = False
            worst = -1
            worst_mu = -1e-12 * (1.0 + float(np.max(np.abs(grad))))
            for i in range(n):
                if state[i] == -1:
                    mu = grad[i]
                elif state[i] == 1:
                    mu = -grad[i]
                else:
                    continue
                if mu < worst_mu:
                    worst_mu = mu
                    worst = i
            if worst < 0:
                return x, QP_OK, it
            state[worst] = 0
            continue
        alpha = 1.0
        block = -1
        for i in free:
            if p[i] < 0.0:
                a = (lo[i] - x[i]) / p[i]
            elif p[i] > 0.0:
                a = (hi[i] - x[i]) / p[i]
            else:
                continue
            if a < alpha:
                alpha = a
                block = i
        x = x + alpha * p
        at_min = block < 0
        if block >= 0:
            if p[block] < 0.0:
                x[block] = lo[block]
                state[block] = -1
            else:
                x[block] = hi[block]
                state[block] = 1
    return x, QP_MAXITER, max_iter


def velocity_bounds(q, qlo, qhi, vmax, dt, eta):
    lo = np.maximum(-vmax, -eta * (q - qlo) / dt)
    hi = np.minimum(vmax, eta * (qhi - q) / dt)
    # q outside limits by rounding must not invert the box
    lo = np.minimum(lo, 0.0)
    hi = np.maximum(hi, 0.0)
    return lo, hi


def _cost(err, weights):
    return math.sqrt(float(np.sum(weights * err * err)))


def ik_solve(base, origins, axes, tool, qlo, qhi, vmax, q0, tpos, trot, weights,
             damping, dt, eta, tol_p, tol_o, max_iter):
    """Damped, box-constrained differential IK iterated to a pose target.

    Returns ``(q, status, iterations, res_pos, res_rot, trace)``; ``trace`` is
    the weighted error norm after each accepted step and never increases.
    """
    n = len(q0)
    q = np.array(q0, dtype=float)
    position_only = bool(np.all(weights[3:] == 0.0))
    frames = fk_frames(base, origins, axes, tool, q)
    err = pose_error(frames[n + 1], tpos, trot)
    cost = _cost(err, weights)
    trace = [cost]
    status = IK_MAXITER
    iters = 0
    slow = 0
    for _ in range(max_iter):
        rp = math.sqrt(float(err[:3] @ err[:3]))
        ro = math.sqrt(float(err[3:] @ err[3:]))
        if rp < tol_p and (position_only or ro < tol_o):
            status = IK_CONVERGED
            break
        jac = _jacobian_from_frames(frames, axes, n)
        jw = jac.T * weights
        h = jw @ jac + damping * np.eye(n)
        g = -(jw @ err) / dt
        lo, hi = velocity_bounds(q, qlo, qhi, vmax, dt, eta)
        qd, qs, _ = solve_box_qp(h, g, lo, hi, 0)
        if qs != QP_OK:
            status = IK_QP_FAILED
            break
        accepted = False
        alpha = 1.0
        for _ls in range(8):
            qn = np.minimum(np.maximum(q + (alpha * dt) * qd, qlo), qhi)
            fn = fk_frames(base, origins, axes, tool, qn)
            en = pose_error(fn[n + 1], tpos, trot)
            cn = _cost(en, weights)
            if cn <= cost:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            status = IK_STALLED
            break
        if cost - cn <= 1e-9 * cost:
            slow += 1
        else:
            slow = 0
        q, frames, err, cost = qn, fn, en, cn
        trace.append(cost)
        iters += 1
        if slow >= 5:
            status = IK_STALLED
            break
    else:
        rp = math.sqrt(float(err[:3] @ err[:3]))
        ro = math.sqrt(float(err[3:] @ err[3:]))
        if rp < tol_p and (position_only or ro < tol_o):
            status = IK_CONVERGED
    rp = math.sqrt(float(err[:3] @ err[:3]))
    ro = math.sqrt(float(err[3:] @ err[3:]))
    return q, status, iters, rp, ro, np.array(trace)


def segment_segment_distance(p0, p1, q0, q1):
    """Closest distance between segments p0-p1 and q0-q1."""
    d1 = p1 - p0
    d2 = q1 - q0
    r = p0 - q0
    a = float(d1 @ d1)
    e = float(d2 @ d2)
    f = float(d2 @ r)
    eps = 1e-18
    if a <= eps and e <= eps:
        return math.sqrt(float(r @ r))
    if a <= eps:
        s = 0.0
        t = min(max(f / e, 0.0), 1.0)
    else:
        c = float(d1 @ r)
        if e <= eps:
            t = 0.0
            s = min(max(-c / a, 0.0), 1.0)
        else:
            b = float(d1 @ d2)
            denom = a * e - b * b
            s = min(max((b * f - c * e) / denom, 0.0), 1.0) if denom > eps * a * e else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = min(max(-c / a, 0.0), 1.0)
            elif t > 1.0:
                t = 1.0
                s = min(max((b - c) / a, 0.0), 1.0)
    diff = (p0 + d1 * s) - (q0 + d2 * t)
    return math.sqrt(float(diff @ diff))


def _box_sd(p, half):
    """Signed distance from point ``p`` (box frame) to an axis-aligned box."""
    d = np.abs(p) - half
    outside = np.maximum(d, 0.0)
    return math.sqrt(float(outside @ outside)) + min(float(np.max(d)), 0.0)


def segment_box_signed_distance(a, b, half):
    """Exact min over the segment a-b of the box signed distance (box frame)."""
    d = b - a
    cands = [0.0, 1.0]
    for i in range(3):
        if d[i] != 0.0:
            cands.append(-a[i] / d[i])
            for sgn in (-1.0, 1.0):
                cands.append((sgn * half[i] - a[i]) / d[i])
    # kinks of max_i(|p_i| - h_i): |p_i| - h_i == |p_j| - h_j
    for i in range(3):
        for j in range(i + 1, 3):
            for si in (-1.0, 1.0):
                for sj in (-1.0, 1.0):
                    den = si * d[i] - sj * d[j]
                    if den != 0.0:
                        cands.append((half[i] - half[j] - si * a[i] + sj * a[j]) / den)
    best = math.inf
    for t in cands:
        if 0.0 <= t <= 1.0:
            best = min(best, _box_sd(a + t * d, half))
    if best < 0.0:
        return best
    # outside: squared distance is piecewise quadratic in t between breakpoints
    bps = sorted({0.0, 1.0, *[t for t in cands if 0.0 < t < 1.0]})
    for t0, t1 in zip(bps[:-1], bps[1:]):
        tm = 0.5 * (t0 + t1)
        pm = a + tm * d
        # per-axis active piece on this interval: clamp target fixed
        target = np.clip(pm, -half, half)
        mask = np.abs(pm) > half
        dd = float(d[mask] @ d[mask])
        if dd > 0.0:
            t = -float((a[mask] - target[mask]) @ d[mask]) / dd
            t = min(max(t, t0), t1)
            best = min(best, _box_sd(a + t * d, half))
    return best


def capsule_box_distance(p0, p1, radius, box, half):
    """Signed clearance between a capsule and an oriented box (4x4 pose)."""
    rot = box[:3, :3]
    c = box[:3, 3]
    a = rot.T @ (p0 - c)
    b = rot.T @ (p1 - c)
    return segment_box_signed_distance(a, b, half) - radius


def simulate_pd(inertia, damping, kp, kd, torque_limit, amplitude, dt, steps, torque_lag=0.0):
    """Explicit-Euler PD position step; returns (position, velocity, torque, ok).

    The applied torque follows the saturated command through a first-order
    lag with time constant ``torque_lag`` (0 = instantaneous).
    """
    pos = np.zeros(steps + 1)
    vel = np.zeros(steps + 1)
    tau = np.zeros(steps + 1)
    blend = 1.0 if torque_lag <= 0.0 else 1.0 - math.exp(-dt / torque_lag)
    x = 0.0
    v = 0.0
    a = 0.0
    for k in range(steps):
        u = kp * (amplitude - x) - kd * v
        if u > torque_limit:
            u = torque_limit
        elif u < -torque_limit:
            u = -torque_limit
        a = a + blend * (u - a)
        tau[k] = a
        acc = (a - damping * v) / inertia
        x = x + dt * v
        v = v + dt * acc
        pos[k + 1] = x
        vel[k + 1] = v
        if not (abs(x) <= 1e6 and abs(v) <= 1e6):
            return pos[: k + 2], vel[: k + 2], tau[: k + 2], False
    u = min(max(kp * (amplitude - x) - kd * v, -torque_limit), torque_limit)
    tau[steps] = a + blend * (u - a)
    return pos, vel, tau, True
