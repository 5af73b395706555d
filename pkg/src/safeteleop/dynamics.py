"""Unicycle kinematics: vector field, closed-loop RK4 stepping, and Jacobians.

State is (x_I, y_I, theta) with theta kept unwrapped so closed-loop flows
stay smooth. The model is control-affine with drift f(x) = 0 and

    g(x) = [[cos(theta), 0],
            [sin(theta), 0],
            [0,          1]]

acting on the command u = (v, omega).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

# default fixed steps: fine grid for backup-flow integration, coarse for the
# 20 Hz world loop
FLOW_DT = 0.01
WORLD_DT = 0.05

FD_STEP = 1e-6


@dataclass(frozen=True)
class State:
    x: float
    y: float
    theta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta], dtype=float)

    @staticmethod
    def from_array(a) -> "State":
        return State(float(a[0]), float(a[1]), float(a[2]))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


@dataclass(frozen=True)
class Input:
    v: float
    omega: float

    def as_array(self) -> np.ndarray:
        return np.array([self.v, self.omega], dtype=float)

    @staticmethod
    def from_array(a) -> "Input":
        return Input(float(a[0]), float(a[1]))


@dataclass(frozen=True)
class InputBounds:
    v_max: float
    omega_max: float

    def __post_init__(self):
        if not (self.v_max > 0 and self.omega_max > 0):
            raise ValueError("input bounds must be strictly positive")

    def clamp(self, u: Input) -> Input:
        if abs(u.v) <= self.v_max and abs(u.omega) <= self.omega_max:
            return u  # identity preserved: the filter returns u_d bitwise
        return Input(
            min(max(u.v, -self.v_max), self.v_max),
            min(max(u.omega, -self.omega_max), self.omega_max),
        )

    def contains(self, u: Input, tol: float = 0.0) -> bool:
        return abs(u.v) <= self.v_max + tol and abs(u.omega) <= self.omega_max + tol


# control law: maps a state to a command
Policy = Callable[[State], Input]


class IntegrationError(RuntimeError):
    """Non-finite value encountered while integrating the closed loop."""


def vector_field(s: State, u: Input) -> np.ndarray:
    """xdot = f(x) + g(x) u for the unicycle (f = 0)."""
    return np.array(
        [u.v * math.cos(s.theta), u.v * math.sin(s.theta), u.omega], dtype=float
    )


def drift(s: State) -> np.ndarray:
    """Drift term f(x); identically zero for the unicycle."""
    return np.zeros(3)


def input_matrix(s: State) -> np.ndarray:
    """Control matrix g(x), shape (3, 2)."""
    return np.array(
        [[math.cos(s.theta), 0.0], [math.sin(s.theta), 0.0], [0.0, 1.0]], dtype=float
    )


def _closed_loop_field(x: np.ndarray, policy: Policy) -> np.ndarray:
    s = State.from_array(x)
    u = policy(s)
    return vector_field(s, u)


def step_closed_loop(s: State, policy: Policy, dt: float) -> State:
    """One RK4 step of xdot = f(x) + g(x) policy(x)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = s.as_array()
    k1 = _closed_loop_field(x, policy)
    k2 = _closed_loop_field(x + 0.5 * dt * k1, policy)
    k3 = _closed_loop_field(x + 0.5 * dt * k2, policy)
    k4 = _closed_loop_field(x + dt * k3, policy)
    xn = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(xn)):
        raise IntegrationError("non-finite state after RK4 step")
    return State.from_array(xn)


def step_constant_input(s: State, u: Input, dt: float) -> State:
    """One RK4 step under a command held constant over the step."""
    return step_closed_loop(s, lambda _s: u, dt)


def closed_loop_jacobian(s: State, policy: Policy, eta: float = FD_STEP) -> np.ndarray:
    """Central finite-difference Jacobian of the closed-loop field at s.

    Column j perturbs state coordinate j by +/- eta. Policies built from
    tanh compositions stay smooth, so the simple 3-point stencil is enough;
    tests cross-check against a 5-point stencil.
    """
    x = s.as_array()
    J = np.empty((3, 3))
    for j in range(3):
        dx = np.zeros(3)
        dx[j] = eta
        fp = _closed_loop_field(x + dx, policy)
        fm = _closed_loop_field(x - dx, policy)
        J[:, j] = (fp - fm) / (2.0 * eta)
    if not np.all(np.isfinite(J)):
        raise IntegrationError("non-finite closed-loop Jacobian")
    return J
