# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: FK, Jacobian, box QP, iterative IK, capsule distances,
PD step simulation. Same signatures and semantics as ``_kernels_py``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, sin, cos, atan2, fabs, INFINITY, exp

cnp.import_array()

NAME = "cython"

cdef enum:
    MAXN = 16
    C_QP_OK = 0
    C_QP_MAXITER = 1
    C_QP_SINGULAR = 2
    C_IK_CONVERGED = 0
    C_IK_MAXITER = 1
    C_IK_STALLED = 2
    C_IK_QP_FAILED = 3

QP_OK = C_QP_OK
QP_MAXITER = C_QP_MAXITER
QP_SINGULAR = C_QP_SINGULAR
IK_CONVERGED = C_IK_CONVERGED
IK_MAXITER = C_IK_MAXITER
IK_STALLED = C_IK_STALLED
IK_QP_FAILED = C_IK_QP_FAILED


cdef inline void _rodrigues(const double* a, double ang, double* r) noexcept nogil:
    cdef double c = cos(ang), s = sin(ang)
    cdef double v = 1.0 - c
    cdef double x = a[0], y = a[1], z = a[2]
    r[0] = c + x * x * v
    r[1] = x * y * v - z * s
    r[2] = x * z * v + y * s
    r[3] = y * x * v + z * s
    r[4] = c + y * y * v
    r[5] = y * z * v - x * s
    r[6] = z * x * v - y * s
    r[7] = z * y * v + x * s
    r[8] = c + z * z * v


cdef inline void _mul44(const double* a, const double* b, double* out) noexcept nogil:
    cdef int i, j
    for i in range(4):
        for j in range(4):
            out[4 * i + j] = (a[4 * i] * b[j] + a[4 * i + 1] * b[4 + j]
                              + a[4 * i + 2] * b[8 + j] + a[4 * i + 3] * b[12 + j])


cdef void _fk(const double* base, const double* origins, const double* axes,
              const double* tool, const double* q, int n, double* frames) noexcept nogil:
    cdef double t1[16]
    cdef double rot[16]
    cdef double r[9]
    cdef int i, k
    for k in range(16):
        frames[k] = base[k]
        rot[k] = 0.0
    rot[15] = 1.0
    for i in range(n):
        _mul44(&frames[16 * i], &origins[16 * i], t1)
        _rodrigues(&axes[3 * i], q[i], r)
        rot[0] = r[0]; rot[1] = r[1]; rot[2] = r[2]
        rot[4] = r[3]; rot[5] = r[4]; rot[6] = r[5]
        rot[8] = r[6]; rot[9] = r[7]; rot[10] = r[8]
        _mul44(t1, rot, &frames[16 * (i + 1)])
    _mul44(&frames[16 * n], tool, &frames[16 * (n + 1)])


cdef void _jac(const double* frames, const double* axes, int n, double* jac) noexcept nogil:
    # jac is 6 x n row-major
    cdef const double* pe = &frames[16 * (n + 1)]
    cdef const double* f
    cdef double z0, z1, z2, d0, d1, d2
    cdef int i
    for i in range(n):
        f = &frames[16 * (i + 1)]
        z0 = f[0] * axes[3 * i] + f[1] * axes[3 * i + 1] + f[2] * axes[3 * i + 2]
        z1 = f[4] * axes[3 * i] + f[5] * axes[3 * i + 1] + f[6] * axes[3 * i + 2]
        z2 = f[8] * axes[3 * i] + f[9] * axes[3 * i + 1] + f[10] * axes[3 * i + 2]
        d0 = pe[3] - f[3]
        d1 = pe[7] - f[7]
        d2 = pe[11] - f[11]
        jac[0 * n + i] = z1 * d2 - z2 * d1
        jac[1 * n + i] = z2 * d0 - z0 * d2
        jac[2 * n + i] = z0 * d1 - z1 * d0
        jac[3 * n + i] = z0
        jac[4 * n + i] = z1
        jac[5 * n + i] = z2


cdef void _rotation_log(const double* r, double* out) noexcept nogil:
    cdef double w0 = 0.5 * (r[7] - r[5])
    cdef double w1 = 0.5 * (r[2] - r[6])
    cdef double w2 = 0.5 * (r[3] - r[1])
    cdef double c = 0.5 * (r[0] + r[4] + r[8] - 1.0)
    cdef double s, angle, nrm
    cdef double ax[3]
    cdef int k, j
    if c > 1.0:
        c = 1.0
    elif c < -1.0:
        c = -1.0
    s = sqrt(w0 * w0 + w1 * w1 + w2 * w2)
    angle = atan2(s, c)
    if s > 1e-6:
        out[0] = w0 * (angle / s)
        out[1] = w1 * (angle / s)
        out[2] = w2 * (angle / s)
        return
    if c > 0.0:
        out[0] = w0
        out[1] = w1
        out[2] = w2
        return
    k = 0
    if r[4] > r[0]:
        k = 1
    if r[8] > r[4 * k]:
        k = 2
    ax[k] = 0.5 * (r[4 * k] + 1.0)
    ax[k] = sqrt(ax[k]) if ax[k] > 0.0 else 0.0
    for j in range(3):
        if j != k:
            ax[j] = (r[3 * k + j] + r[3 * j + k]) / (4.0 * ax[k])
    nrm = sqrt(ax[0] * ax[0] + ax[1] * ax[1] + ax[2] * ax[2])
    for j in range(3):
        out[j] = ax[j] / nrm * angle


cdef void _pose_error(const double* ee, const double* tpos, const double* trot,
                      double* err) noexcept nogil:
    cdef double m[9]
    cdef int i, j
    err[0] = tpos[0] - ee[3]
    err[1] = tpos[1] - ee[7]
    err[2] = tpos[2] - ee[11]
    # m = trot @ R^T
    for i in range(3):
        for j in range(3):
            m[3 * i + j] = (trot[3 * i] * ee[4 * j] + trot[3 * i + 1] * ee[4 * j + 1]
                            + trot[3 * i + 2] * ee[4 * j + 2])
    _rotation_log(m, &err[3])


cdef int _cholesky(double* a, int m) noexcept nogil:
    # in-place lower Cholesky of an m x m row-major (stride MAXN) matrix
    cdef int i, j, k
    cdef double s
    for j in range(m):
        s = a[MAXN * j + j]
        for k in range(j):
            s -= a[MAXN * j + k] * a[MAXN * j + k]
        if not (s > 0.0):
            return -1
        a[MAXN * j + j] = sqrt(s)
        for i in range(j + 1, m):
            s = a[MAXN * i + j]
            for k in range(j):
                s -= a[MAXN * i + k] * a[MAXN * j + k]
            a[MAXN * i + j] = s / a[MAXN * j + j]
    return 0


cdef int _box_qp(const double* h, const double* g, const double* lo, const double* hi,
                 int n, int max_iter, double* x, int* iters) noexcept nogil:
    cdef int state[MAXN]
    cdef int free_idx[MAXN]
    cdef double grad[MAXN]
    cdef double p[MAXN]
    cdef double y[MAXN]
    cdef double l[MAXN * MAXN]
    cdef int i, j, k, m, it, worst, block
    cdef int at_min = 0
    cdef double scale, s, pnorm, xmax, gmax, mu, worst_mu, alpha, a, dmin, v
    if max_iter <= 0:
        max_iter = 10 * n + 50
    scale = 0.0
    for i in range(n):
        v = lo[i] if lo[i] > 0.0 else 0.0
        x[i] = hi[i] if v > hi[i] else v
        if lo[i] == hi[i]:
            state[i] = 2
        elif x[i] == lo[i]:
            state[i] = -1
        elif x[i] == hi[i]:
            state[i] = 1
        else:
            state[i] = 0
        if fabs(h[n * i + i]) > scale:
            scale = fabs(h[n * i + i])
    scale += 1.0
    for it in range(max_iter):
        for i in range(n):
            s = g[i]
            for j in range(n):
                s += h[n * i + j] * x[j]
            grad[i] = s
            p[i] = 0.0
        m = 0
        for i in range(n):
            if state[i] == 0:
                free_idx[m] = i
                m += 1
        # a full unblocked step already reached the subspace minimizer
        if m > 0 and not at_min:
            for i in range(m):
                for j in range(m):
                    l[MAXN * i + j] = h[n * free_idx[i] + free_idx[j]]
            if _cholesky(l, m) != 0:
                iters[0] = it
                return C_QP_SINGULAR
            dmin = INFINITY
            for i in range(m):
                if l[MAXN * i + i] < dmin:
                    dmin = l[MAXN * i + i]
            if dmin * dmin <= 1e-14 * scale:
                iters[0] = it
                return C_QP_SINGULAR
            # forward: L y = -grad_F
            for i in range(m):
                s = -grad[free_idx[i]]
                for k in range(i):
                    s -= l[MAXN * i + k] * y[k]
                y[i] = s / l[MAXN * i + i]
            # backward: L^T p = y
            for i in range(m - 1, -1, -1):
                s = y[i]
                for k in range(i + 1, m):
                    s -= l[MAXN * k + i] * p[free_idx[k]]
                p[free_idx[i]] = s / l[MAXN * i + i]
        pnorm = 0.0
        xmax = 0.0
        gmax = 0.0
        for i in range(n):
            if fabs(p[i]) > pnorm:
                pnorm = fabs(p[i])
            if fabs(x[i]) > xmax:
                xmax = fabs(x[i])
            if fabs(grad[i]) > gmax:
                gmax = fabs(grad[i])
        if at_min or pnorm <= 1e-15 * (1.0 + xmax):
            at_min = 0
            worst = -1
            worst_mu = -1e-12 * (1.0 + gmax)
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
                iters[0] = it
                return C_QP_OK
            state[worst] = 0
            continue
        alpha = 1.0
        block = -1
        for k in range(m):
            i = free_idx[k]
            if p[i] < 0.0:
                a = (lo[i] - x[i]) / p[i]
            elif p[i] > 0.0:
                a = (hi[i] - x[i]) / p[i]
            else:
                continue
            if a < alpha:
                alpha = a
                block = i
        for i in range(n):
            x[i] = x[i] + alpha * p[i]
        at_min = block < 0
        if block >= 0:
            if p[block] < 0.0:
                x[block] = lo[block]
                state[block] = -1
            else:
                x[block] = hi[block]
                state[block] = 1
    iters[0] = max_iter
    return C_QP_MAXITER


def fk_frames(const double[:, ::1] base, const double[:, :, ::1] origins, const double[:, ::1] axes,
              const double[:, ::1] tool, const double[::1] q):
    cdef int n = q.shape[0]
    out = np.empty((n + 2, 4, 4))
    cdef double[:, :, ::1] fr = out
    _fk(&base[0, 0], &origins[0, 0, 0] if n else NULL, &axes[0, 0] if n else NULL,
        &tool[0, 0], &q[0] if n else NULL, n, &fr[0, 0, 0])
    return out


def jacobian(const double[:, ::1] base, const double[:, :, ::1] origins, const double[:, ::1] axes,
             const double[:, ::1] tool, const double[::1] q):
    cdef int n = q.shape[0]
    frames = np.empty((n + 2, 4, 4))
    cdef double[:, :, ::1] fr = frames
    out = np.zeros((6, n))
    cdef double[:, ::1] jv = out
    if n == 0:
        return out
    _fk(&base[0, 0], &origins[0, 0, 0], &axes[0, 0], &tool[0, 0], &q[0], n, &fr[0, 0, 0])
    _jac(&fr[0, 0, 0], &axes[0, 0], n, &jv[0, 0])
    return out


def rotation_log(const double[:, ::1] r):
    out = np.empty(3)
    cdef double[::1] o = out
    cdef double buf[9]
    cdef int i, j
    for i in range(3):
        for j in range(3):
            buf[3 * i + j] = r[i, j]
    _rotation_log(buf, &o[0])
    return out


def solve_box_qp(const double[:, ::1] h, const double[::1] g, const double[::1] lo, const double[::1] hi, int max_iter=0):
    cdef int n = g.shape[0]
    cdef int iters = 0
    cdef int status
    if n > MAXN:
        raise ValueError(f"box QP kernel supports at most {MAXN} variables")
    out = np.zeros(n)
    cdef double[::1] xv = out
    if n == 0:
        return out, C_QP_OK, 0
    with nogil:
        status = _box_qp(&h[0, 0], &g[0], &lo[0], &hi[0], n, max_iter, &xv[0], &iters)
    return out, status, iters


cdef inline double _cost(const double* err, const double* w) noexcept nogil:
    cdef double s = 0.0
    cdef int i
    for i in range(6):
        s += w[i] * err[i] * err[i]
    return sqrt(s)


def velocity_bounds(const double[::1] q, const double[::1] qlo, const double[::1] qhi, const double[::1] vmax,
                    double dt, double eta):
    cdef int n = q.shape[0], i
    lo = np.empty(n)
    hi = np.empty(n)
    cdef double[::1] lv = lo, hv = hi
    for i in range(n):
        _bounds_one(q[i], qlo[i], qhi[i], vmax[i], dt, eta, &lv[i], &hv[i])
    return lo, hi


cdef inline void _bounds_one(double q, double qlo, double qhi, double vmax, double dt,
                             double eta, double* lo, double* hi) noexcept nogil:
    cdef double a = -eta * (q - qlo) / dt
    cdef double b = eta * (qhi - q) / dt
    lo[0] = a if a > -vmax else -vmax
    hi[0] = b if b < vmax else vmax
    if lo[0] > 0.0:
        lo[0] = 0.0
    if hi[0] < 0.0:
        hi[0] = 0.0


def ik_solve(const double[:, ::1] base, const double[:, :, ::1] origins, const double[:, ::1] axes,
             const double[:, ::1] tool, const double[::1] qlo, const double[::1] qhi, const double[::1] vmax,
             const double[::1] q0, const double[::1] tpos, const double[:, ::1] trot, const double[::1] weights,
             double damping, double dt, double eta, double tol_p, double tol_o, int max_iter):
    cdef int n = q0.shape[0]
    if n > MAXN or n == 0:
        raise ValueError(f"IK kernel supports 1..{MAXN} joints")
    cdef double frames[(MAXN + 2) * 16]
    cdef double fn[(MAXN + 2) * 16]
    cdef double jac[6 * MAXN]
    cdef double h[MAXN * MAXN]
    cdef double g[MAXN]
    cdef double lo[MAXN]
    cdef double hi[MAXN]
    cdef double qd[MAXN]
    cdef double qn[MAXN]
    cdef double err[6]
    cdef double en[6]
    cdef double trot_c[9]
    cdef double w[6]
    cdef double cost, cn, rp, ro, alpha, s, v
    cdef int i, j, k, ls, it, status, iters, slow, qiters, qs, accepted, position_only
    q_out = np.array(q0, dtype=float)
    cdef double[::1] q = q_out
    trace_buf = np.empty(max_iter + 1)
    cdef double[::1] tr = trace_buf
    for i in range(3):
        for j in range(3):
            trot_c[3 * i + j] = trot[i, j]
    position_only = 1
    for i in range(6):
        w[i] = weights[i]
        if i >= 3 and w[i] != 0.0:
            position_only = 0
    with nogil:
        _fk(&base[0, 0], &origins[0, 0, 0], &axes[0, 0], &tool[0, 0], &q[0], n, frames)
        _pose_error(&frames[16 * (n + 1)], &tpos[0], trot_c, err)
        cost = _cost(err, w)
        tr[0] = cost
        status = C_IK_MAXITER
        iters = 0
        slow = 0
        for it in range(max_iter):
            rp = sqrt(err[0] * err[0] + err[1] * err[1] + err[2] * err[2])
            ro = sqrt(err[3] * err[3] + err[4] * err[4] + err[5] * err[5])
            if rp < tol_p and (position_only or ro < tol_o):
                status = C_IK_CONVERGED
                break
            _jac(frames, &axes[0, 0], n, jac)
            for i in range(n):
                s = 0.0
                for k in range(6):
                    s += jac[k * n + i] * w[k] * err[k]
                g[i] = -s / dt
                for j in range(i, n):
                    s = 0.0
                    for k in range(6):
                        s += jac[k * n + i] * w[k] * jac[k * n + j]
                    h[n * i + j] = s
                    h[n * j + i] = s
                h[n * i + i] += damping
                _bounds_one(q[i], qlo[i], qhi[i], vmax[i], dt, eta, &lo[i], &hi[i])
            qs = _box_qp(h, g, lo, hi, n, 0, qd, &qiters)
            if qs != C_QP_OK:
                status = C_IK_QP_FAILED
                break
            accepted = 0
            alpha = 1.0
            for ls in range(8):
                for i in range(n):
                    v = q[i] + (alpha * dt) * qd[i]
                    if v < qlo[i]:
                        v = qlo[i]
                    if v > qhi[i]:
                        v = qhi[i]
                    qn[i] = v
                _fk(&base[0, 0], &origins[0, 0, 0], &axes[0, 0], &tool[0, 0], qn, n, fn)
                _pose_error(&fn[16 * (n + 1)], &tpos[0], trot_c, en)
                cn = _cost(en, w)
                if cn <= cost:
                    accepted = 1
                    break
                alpha *= 0.5
            if not accepted:
                status = C_IK_STALLED
                break
            if cost - cn <= 1e-9 * cost:
                slow += 1
            else:
                slow = 0
            for i in range(n):
                q[i] = qn[i]
            for i in range(16 * (n + 2)):
                frames[i] = fn[i]
            for i in range(6):
                err[i] = en[i]
            cost = cn
            iters += 1
            tr[iters] = cost
            if slow >= 5:
                status = C_IK_STALLED
                break
        else:
            rp = sqrt(err[0] * err[0] + err[1] * err[1] + err[2] * err[2])
            ro = sqrt(err[3] * err[3] + err[4] * err[4] + err[5] * err[5])
            if rp < tol_p and (position_only or ro < tol_o):
                status = C_IK_CONVERGED
        rp = sqrt(err[0] * err[0] + err[1] * err[1] + err[2] * err[2])
        ro = sqrt(err[3] * err[3] + err[4] * err[4] + err[5] * err[5])
    return q_out, status, iters, rp, ro, trace_buf[: iters + 1].copy()


cdef inline double _clamp01(double t) noexcept nogil:
    return 0.0 if t < 0.0 else (1.0 if t > 1.0 else t)


def segment_segment_distance(const double[::1] p0, const double[::1] p1, const double[::1] q0, const double[::1] q1):
    return _seg_seg(&p0[0], &p1[0], &q0[0], &q1[0])


cdef double _seg_seg(const double* p0, const double* p1, const double* q0,
                     const double* q1) noexcept nogil:
    cdef double d1[3]
    cdef double d2[3]
    cdef double r[3]
    cdef double a = 0.0, e = 0.0, f = 0.0, b = 0.0, c = 0.0
    cdef double s, t, denom, dx, acc = 0.0
    cdef double eps = 1e-18
    cdef int i
    for i in range(3):
        d1[i] = p1[i] - p0[i]
        d2[i] = q1[i] - q0[i]
        r[i] = p0[i] - q0[i]
        a += d1[i] * d1[i]
        e += d2[i] * d2[i]
        f += d2[i] * r[i]
    if a <= eps and e <= eps:
        return sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2])
    if a <= eps:
        s = 0.0
        t = _clamp01(f / e)
    else:
        for i in range(3):
            c += d1[i] * r[i]
        if e <= eps:
            t = 0.0
            s = _clamp01(-c / a)
        else:
            for i in range(3):
                b += d1[i] * d2[i]
            denom = a * e - b * b
            s = _clamp01((b * f - c * e) / denom) if denom > eps * a * e else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = _clamp01(-c / a)
            elif t > 1.0:
                t = 1.0
                s = _clamp01((b - c) / a)
    for i in range(3):
        dx = (p0[i] + d1[i] * s) - (q0[i] + d2[i] * t)
        acc += dx * dx
    return sqrt(acc)


cdef double _box_sd(const double* a, const double* d, double t, const double* half) noexcept nogil:
    cdef double out2 = 0.0, dmax = -INFINITY, di, p
    cdef int i
    for i in range(3):
        p = a[i] + t * d[i]
        di = fabs(p) - half[i]
        if di > dmax:
            dmax = di
        if di > 0.0:
            out2 += di * di
    return sqrt(out2) + (dmax if dmax < 0.0 else 0.0)


cdef double _segment_box_sd(const double* a, const double* b, const double* half) noexcept nogil:
    cdef double d[3]
    cdef double cands[32]
    cdef double bps[32]
    cdef int nc = 0, nb = 0, i, j, k, si, sj, dup
    cdef double best = INFINITY, t, den, val, t0, t1, tm, pm, target, num, dd, sgi, sgj, tmp
    for i in range(3):
        d[i] = b[i] - a[i]
    cands[nc] = 0.0; nc += 1
    cands[nc] = 1.0; nc += 1
    for i in range(3):
        if d[i] != 0.0:
            cands[nc] = -a[i] / d[i]; nc += 1
            cands[nc] = (-half[i] - a[i]) / d[i]; nc += 1
            cands[nc] = (half[i] - a[i]) / d[i]; nc += 1
    for i in range(3):
        for j in range(i + 1, 3):
            for si in range(2):
                sgi = -1.0 if si == 0 else 1.0
                for sj in range(2):
                    sgj = -1.0 if sj == 0 else 1.0
                    den = sgi * d[i] - sgj * d[j]
                    if den != 0.0:
                        cands[nc] = (half[i] - half[j] - sgi * a[i] + sgj * a[j]) / den
                        nc += 1
    for k in range(nc):
        t = cands[k]
        if t >= 0.0 and t <= 1.0:
            val = _box_sd(a, d, t, half)
            if val < best:
                best = val
    if best < 0.0:
        return best
    # sorted unique breakpoints in [0, 1]
    for k in range(nc):
        t = cands[k]
        if t >= 0.0 and t <= 1.0:
            dup = 0
            for j in range(nb):
                if bps[j] == t:
                    dup = 1
                    break
            if not dup:
                bps[nb] = t
                nb += 1
    for i in range(1, nb):
        tmp = bps[i]
        j = i - 1
        while j >= 0 and bps[j] > tmp:
            bps[j + 1] = bps[j]
            j -= 1
        bps[j + 1] = tmp
    for k in range(nb - 1):
        t0 = bps[k]
        t1 = bps[k + 1]
        tm = 0.5 * (t0 + t1)
        num = 0.0
        dd = 0.0
        for i in range(3):
            pm = a[i] + tm * d[i]
            if fabs(pm) > half[i]:
                target = half[i] if pm > 0.0 else -half[i]
                num += (a[i] - target) * d[i]
                dd += d[i] * d[i]
        if dd > 0.0:
            t = -num / dd
            if t < t0:
                t = t0
            if t > t1:
                t = t1
            val = _box_sd(a, d, t, half)
            if val < best:
                best = val
    return best


def capsule_box_distance(const double[::1] p0, const double[::1] p1, double radius,
                         const double[:, ::1] box, const double[::1] half):
    cdef double a[3]
    cdef double b[3]
    cdef int i, k
    for i in range(3):
        a[i] = 0.0
        b[i] = 0.0
        for k in range(3):
            a[i] += box[k, i] * (p0[k] - box[k, 3])
            b[i] += box[k, i] * (p1[k] - box[k, 3])
    return _segment_box_sd(a, b, &half[0]) - radius


def simulate_pd(double inertia, double damping, double kp, double kd, double torque_limit,
                double amplitude, double dt, int steps, double torque_lag=0.0):
    pos = np.zeros(steps + 1)
    vel = np.zeros(steps + 1)
    tau = np.zeros(steps + 1)
    cdef double[::1] pv = pos, vv = vel, tv = tau
    cdef double x = 0.0, v = 0.0, a = 0.0, u, acc
    cdef double blend = 1.0 if torque_lag <= 0.0 else 1.0 - exp(-dt / torque_lag)
    cdef int k
    cdef bint ok = True
    with nogil:
        for k in range(steps):
            u = kp * (amplitude - x) - kd * v
            if u > torque_limit:
                u = torque_limit
            elif u < -torque_limit:
                u = -torque_limit
            a = a + blend * (u - a)
            tv[k] = a
            acc = (a - damping * v) / inertia
            x = x + dt * v
            v = v + dt * acc
            pv[k + 1] = x
            vv[k + 1] = v
            if not (fabs(x) <= 1e6 and fabs(v) <= 1e6):
                ok = False
                break
    if not ok:
        return pos[: k + 2], vel[: k + 2], tau[: k + 2], False
    u = min(max(kp * (amplitude - x) - kd * v, -torque_limit), torque_limit)
    tau[steps] = a + blend * (u - a)
    return pos, vel, tau, True
