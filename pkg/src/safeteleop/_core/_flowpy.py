"""Pure-Python fallback for the hot flow kernels.

Same contract as the compiled `_flowkernel` extension: closed-loop RK4
integration of the three backup policies, jointly with the 3x3 sensitivity
matrix via the variational equation Qdot = (df_b/dx) Q, Q(0) = I.

Status codes: 0 = ok, 1 = degenerate geometry (robot at obstacle center).
The analytic closed-loop Jacobians used here are cross-checked against
finite differences in the test suite.
"""

from __future__ import annotations

import math

import numpy as np

STATUS_OK = 0
STATUS_DEGENERATE = 1

_DEGENERATE_DIST = 1e-9


def _field_and_jac(x, pid, obs, par, want_jac):
    """Closed-loop field f_b(x) and, optionally, its Jacobian.

    x: (3,) state; obs: (p_ox, p_oy, R_o, v_ox, v_oy); par: (v_max,
    omega_max, epsilon). Returns (status, f, J) with J=None when not asked.
    """
    dx = x[0] - obs[0]
    dy = x[1] - obs[1]
    dist = math.hypot(dx, dy)
    if dist < _DEGENERATE_DIST:
        return STATUS_DEGENERATE, None, None
    nx, ny = dx / dist, dy / dist
    c, s = math.cos(x[2]), math.sin(x[2])
    s0 = -nx * s + ny * c  # n . r
    s1 = nx * c + ny * s  # n . q
    vmax, wmax, eps = par

    if pid == 1:
        t = math.tanh(s1 / eps)
        v, w = vmax * t, 0.0
    else:
        t = math.tanh(s0 / eps)
        v, w = vmax, wmax * t
        if pid == 2:
            v, w = -v, -w

    f = np.array([v * c, v * s, w])
    if not want_jac:
        return STATUS_OK, f, None

    # d n / d p = (I - n n^T) / dist
    axx = (1.0 - nx * nx) / dist
    axy = -nx * ny / dist
    ayy = (1.0 - ny * ny) / dist
    sech2 = 1.0 - t * t

    J = np.zeros((3, 3))
    if pid == 1:
        # v depends on s1 = n.q; grad s1 = (A q, s0)
        g = (vmax * sech2 / eps) * np.array(
            [axx * c + axy * s, axy * c + ayy * s, s0]
        )
        J[0] = c * g
        J[1] = s * g
        J[0, 2] -= v * s
        J[1, 2] += v * c
    else:
        # omega depends on s0 = n.r; grad s0 = (A r, -s1)
        g = (wmax * sech2 / eps) * np.array(
            [-axx * s + axy * c, -axy * s + ayy * c, -s1]
        )
        J[0, 2] = -vmax * s
        J[1, 2] = vmax * c
        J[2] = g
        if pid == 2:
            J = -J
    return STATUS_OK, f, J


def closed_loop_field(x, pid, obs, par):
    """(status, f_b(x)) for one state; exposed for parity tests."""
    st, f, _ = _field_and_jac(np.asarray(x, float), pid, obs, par, False)
    return st, f


def closed_loop_jac(x, pid, obs, par):
    """(status, df_b/dx) for one state; exposed for parity tests."""
    st, _, J = _field_and_jac(np.asarray(x, float), pid, obs, par, True)
    return st, J


def flow_with_sensitivity(x0, pid, obs, par, T, n_tau, dt_max):
    """Integrate the backup flow and sensitivity on the tau grid.

    Returns (status, states (n_tau+1, 3), sens (n_tau+1, 3, 3)); grid point
    i sits at tau_i = i T / n_tau. Arrays are filled up to the failing
    sample when the status is degenerate.
    """
    x = np.asarray(x0, float).copy()
    Q = np.eye(3)
    states = np.zeros((n_tau + 1, 3))
    sens = np.zeros((n_tau + 1, 3, 3))
    states[0] = x
    sens[0] = Q

    seg = T / n_tau
    n_sub = max(1, int(math.ceil(seg / dt_max - 1e-12)))
    dt = seg / n_sub

    for i in range(1, n_tau + 1):
        for _ in range(n_sub):
            st, x, Q = _rk4_joint(x, Q, pid, obs, par, dt)
            if st != STATUS_OK:
                return st, states, sens
        states[i] = x
        sens[i] = Q
    return STATUS_OK, states, sens


def _rk4_joint(x, Q, pid, obs, par, dt):
    st, f1, J1 = _field_and_jac(x, pid, obs, par, True)
    if st != STATUS_OK:
        return st, x, Q
    k1x, k1q = f1, J1 @ Q
    st, f2, J2 = _field_and_jac(x + 0.5 * dt * k1x, pid, obs, par, True)
    if st != STATUS_OK:
        return st, x, Q
    k2x, k2q = f2, J2 @ (Q + 0.5 * dt * k1q)
    st, f3, J3 = _field_and_jac(x + 0.5 * dt * k2x, pid, obs, par, True)
    if st != STATUS_OK:
        return st, x, Q
    k3x, k3q = f3, J3 @ (Q + 0.5 * dt * k2q)
    st, f4, J4 = _field_and_jac(x + dt * k3x, pid, obs, par, True)
    if st != STATUS_OK:
        return st, x, Q
    k4x, k4q = f4, J4 @ (Q + dt * k3q)
    xn = x + (dt / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
    Qn = Q + (dt / 6.0) * (k1q + 2 * k2q + 2 * k3q + k4q)
    return STATUS_OK, xn, Qn


def rollout(x0, pid, obs, par, duration, dt):
    """Closed-loop RK4 rollout under policy `pid` (no sensitivities).

    Returns (status, states (M+1, 3)) with M = round(duration / dt).
    """
    x = np.asarray(x0, float).copy()
    m = max(1, int(round(duration / dt)))
    states = np.zeros((m + 1, 3))
    states[0] = x
    for i in range(1, m + 1):
        st, f1, _ = _field_and_jac(x, pid, obs, par, False)
        if st != STATUS_OK:
            return st, states
        st, f2, _ = _field_and_jac(x + 0.5 * dt * f1, pid, obs, par, False)
        if st != STATUS_OK:
            return st, states
        st, f3, _ = _field_and_jac(x + 0.5 * dt * f2, pid, obs, par, False)
        if st != STATUS_OK:
            return st, states
        st, f4, _ = _field_and_jac(x + dt * f3, pid, obs, par, False)
        if st != STATUS_OK:
            return st, states
        x = x + (dt / 6.0) * (f1 + 2 * f2 + 2 * f3 + f4)
        states[i] = x
    return STATUS_OK, states
