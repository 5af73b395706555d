# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled flow kernels: backup-policy RK4 integration with sensitivities.

Mirrors `_flowpy` exactly (same math, same status codes); parity between
the two backends is enforced by the test suite.
"""

from libc.math cimport ceil, cos, hypot, round, sin, tanh

import numpy as np

STATUS_OK = 0
STATUS_DEGENERATE = 1

cdef double DEGENERATE_DIST = 1e-9


cdef int _field_and_jac(double* x, int pid, double* obs, double* par,
                        bint want_jac, double* f, double* J) nogil:
    cdef double dx = x[0] - obs[0]
    cdef double dy = x[1] - obs[1]
    cdef double dist = hypot(dx, dy)
    if dist < DEGENERATE_DIST:
        return 1
    cdef double nx = dx / dist
    cdef double ny = dy / dist
    cdef double c = cos(x[2])
    cdef double s = sin(x[2])
    cdef double s0 = -nx * s + ny * c
    cdef double s1 = nx * c + ny * s
    cdef double vmax = par[0]
    cdef double wmax = par[1]
    cdef double eps = par[2]
    cdef double t, v, w

    if pid == 1:
        t = tanh(s1 / eps)
        v = vmax * t
        w = 0.0
    else:
        t = tanh(s0 / eps)
        v = vmax
        w = wmax * t
        if pid == 2:
            v = -v
            w = -w

    f[0] = v * c
    f[1] = v * s
    f[2] = w
    if not want_jac:
        return 0

    cdef double axx = (1.0 - nx * nx) / dist
    cdef double axy = -nx * ny / dist
    cdef double ayy = (1.0 - ny * ny) / dist
    cdef double sech2 = 1.0 - t * t
    cdef double gx, gy, gt, k
    cdef int i
    for i in range(9):
        J[i] = 0.0

    if pid == 1:
        k = vmax * sech2 / eps
        gx = k * (axx * c + axy * s)
        gy = k * (axy * c + ayy * s)
        gt = k * s0
        J[0] = c * gx
        J[1] = c * gy
        J[2] = c * gt - v * s
        J[3] = s * gx
        J[4] = s * gy
        J[5] = s * gt + v * c
    else:
        k = wmax * sech2 / eps
        gx = k * (-axx * s + axy * c)
        gy = k * (-axy * s + ayy * c)
        gt = k * (-s1)
        J[2] = -vmax * s
        J[5] = vmax * c
        J[6] = gx
        J[7] = gy
        J[8] = gt
        if pid == 2:
            for i in range(9):
                J[i] = -J[i]
    return 0


cdef void _mat3_mul(double* out, double* A, double* B) nogil:
    cdef int i, j, k
    for i in range(3):
        for j in range(3):
            out[3 * i + j] = (A[3 * i] * B[j]
                              + A[3 * i + 1] * B[3 + j]
                              + A[3 * i + 2] * B[6 + j])


cdef int _rk4_joint(double* x, double* Q, int pid, double* obs, double* par,
                    double dt) nogil:
    cdef double f1[3], f2[3], f3[3], f4[3]
    cdef double J[9]
    cdef double k1q[9], k2q[9], k3q[9], k4q[9]
    cdef double xs[3]
    cdef double Qs[9]
    cdef int i

    if _field_and_jac(x, pid, obs, par, True, f1, J):
        return 1
    _mat3_mul(k1q, J, Q)

    for i in range(3):
        xs[i] = x[i] + 0.5 * dt * f1[i]
    for i in range(9):
        Qs[i] = Q[i] + 0.5 * dt * k1q[i]
    if _field_and_jac(xs, pid, obs, par, True, f2, J):
        return 1
    _mat3_mul(k2q, J, Qs)

    for i in range(3):
        xs[i] = x[i] + 0.5 * dt * f2[i]
    for i in range(9):
        Qs[i] = Q[i] + 0.5 * dt * k2q[i]
    if _field_and_jac(xs, pid, obs, par, True, f3, J):
        return 1
    _mat3_mul(k3q, J, Qs)

    for i in range(3):
        xs[i] = x[i] + dt * f3[i]
    for i in range(9):
        Qs[i] = Q[i] + dt * k3q[i]
    if _field_and_jac(xs, pid, obs, par, True, f4, J):
        return 1
    _mat3_mul(k4q, J, Qs)

    for i in range(3):
        x[i] += (dt / 6.0) * (f1[i] + 2.0 * f2[i] + 2.0 * f3[i] + f4[i])
    for i in range(9):
        Q[i] += (dt / 6.0) * (k1q[i] + 2.0 * k2q[i] + 2.0 * k3q[i] + k4q[i])
    return 0


def closed_loop_field(x, int pid, obs, par):
    cdef double xv[3], ov[5], pv[3], f[3]
    cdef int i
    for i in range(3):
        xv[i] = x[i]
        pv[i] = par[i]
    for i in range(5):
        ov[i] = obs[i]
    if _field_and_jac(xv, pid, ov, pv, False, f, NULL):
        return STATUS_DEGENERATE, None
    return STATUS_OK, np.array([f[0], f[1], f[2]])


def closed_loop_jac(x, int pid, obs, par):
    cdef double xv[3], ov[5], pv[3], f[3], J[9]
    cdef int i
    for i in range(3):
        xv[i] = x[i]
        pv[i] = par[i]
    for i in range(5):
        ov[i] = obs[i]
    if _field_and_jac(xv, pid, ov, pv, True, f, J):
        return STATUS_DEGENERATE, None
    return STATUS_OK, np.array([J[i] for i in range(9)]).reshape(3, 3)


def flow_with_sensitivity(x0, int pid, obs, par, double T, int n_tau,
                          double dt_max):
    """Integrate the backup flow and sensitivity on the tau grid.

    Returns (status, states (n_tau+1, 3), sens (n_tau+1, 3, 3)).
    """
    cdef double x[3], Q[9], ov[5], pv[3]
    cdef int i, j, k, sub
    for i in range(3):
        x[i] = x0[i]
        pv[i] = par[i]
    for i in range(5):
        ov[i] = obs[i]
    for i in range(9):
        Q[i] = 0.0
    Q[0] = Q[4] = Q[8] = 1.0

    states_arr = np.zeros((n_tau + 1, 3))
    sens_arr = np.zeros((n_tau + 1, 3, 3))
    cdef double[:, ::1] states = states_arr
    cdef double[:, :, ::1] sens = sens_arr
    for j in range(3):
        states[0, j] = x[j]
        sens[0, j, j] = 1.0

    cdef double seg = T / n_tau
    cdef int n_sub = <int>ceil(seg / dt_max - 1e-12)
    if n_sub < 1:
        n_sub = 1
    cdef double dt = seg / n_sub
    cdef int status = 0

    with nogil:
        for i in range(1, n_tau + 1):
            for sub in range(n_sub):
                if _rk4_joint(x, Q, pid, ov, pv, dt):
                    status = 1
                    break
            if status:
                break
            for j in range(3):
                states[i, j] = x[j]
                for k in range(3):
                    sens[i, j, k] = Q[3 * j + k]
    if status:
        return STATUS_DEGENERATE, states_arr, sens_arr
    return STATUS_OK, states_arr, sens_arr


def rollout(x0, int pid, obs, par, double duration, double dt):
    """Closed-loop RK4 rollout under policy `pid` (no sensitivities)."""
    cdef double x[3], ov[5], pv[3]
    cdef double f1[3], f2[3], f3[3], f4[3], xs[3]
    cdef int i, j, m
    for i in range(3):
        x[i] = x0[i]
        pv[i] = par[i]
    for i in range(5):
        ov[i] = obs[i]

    m = <int>round(duration / dt)
    if m < 1:
        m = 1
    states_arr = np.zeros((m + 1, 3))
    cdef double[:, ::1] states = states_arr
    for j in range(3):
        states[0, j] = x[j]
    cdef int status = 0

    with nogil:
        for i in range(1, m + 1):
            if _field_and_jac(x, pid, ov, pv, False, f1, NULL):
                status = 1
                break
            for j in range(3):
                xs[j] = x[j] + 0.5 * dt * f1[j]
            if _field_and_jac(xs, pid, ov, pv, False, f2, NULL):
                status = 1
                break
            for j in range(3):
                xs[j] = x[j] + 0.5 * dt * f2[j]
            if _field_and_jac(xs, pid, ov, pv, False, f3, NULL):
                status = 1
                break
            for j in range(3):
                xs[j] = x[j] + dt * f3[j]
            if _field_and_jac(xs, pid, ov, pv, False, f4, NULL):
                status = 1
                break
            for j in range(3):
                x[j] += (dt / 6.0) * (f1[j] + 2.0 * f2[j] + 2.0 * f3[j] + f4[j])
                states[i, j] = x[j]
    if status:
        return STATUS_DEGENERATE, states_arr
    return STATUS_OK, states_arr
