"""Backup control laws and their barrier functions.

Three qualitatively different avoidance maneuvers around a circular
obstacle, each paired with a barrier whose 0-superlevel set it renders
forward invariant:

  id 0  turn away from the obstacle and drive forward at full speed;
        barrier h_0 = n.(q v_max - v_o) (facing-away measure, m/s units)
  id 1  drive straight away as the obstacle is approached;
        barrier h_1 = ||p - p_o|| - R_o (plain distance)
  id 2  turn toward the obstacle and drive in reverse, the mirror of id 0;
        k_b2 = -k_b0 and h_2 = -h_0

All commands saturate through tanh(. / epsilon) so the closed loop stays
smooth and inside the input box by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import Input, InputBounds, State

# below this center distance the avoidance direction is undefined
DEGENERATE_DIST = 1e-9

NUM_POLICIES = 3
POLICY_NAMES = ("turn_away", "straight_retreat", "reverse_toward")


class DegenerateGeometryError(ValueError):
    """Robot center coincides with the obstacle center; n is undefined."""


@dataclass(frozen=True)
class Obstacle:
    """Circular obstacle; radius is already buffer-inflated."""

    x: float
    y: float
    radius: float
    vx: float = 0.0
    vy: float = 0.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("obstacle radius must be positive")

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    @property
    def velocity(self) -> np.ndarray:
        return np.array([self.vx, self.vy], dtype=float)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.radius, self.vx, self.vy], dtype=float)


@dataclass(frozen=True)
class PolicyParams:
    bounds: InputBounds
    epsilon: float = 0.1

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.bounds.v_max, self.bounds.omega_max, self.epsilon], dtype=float
        )


def h_distance(s: State, o: Obstacle) -> float:
    """Safety constraint h(x) = ||p - p_o|| - R_o."""
    return math.hypot(s.x - o.x, s.y - o.y) - o.radius


def h_distance_multi(s: State, obstacles) -> float:
    """min over obstacles of h; the conservative multi-obstacle aggregate."""
    return min(h_distance(s, o) for o in obstacles)


def geometry_vectors(s: State, o: Obstacle):
    """Unit vectors (n, q, r): away-from-obstacle, heading, heading-normal."""
    dx, dy = s.x - o.x, s.y - o.y
    dist = math.hypot(dx, dy)
    if dist < DEGENERATE_DIST:
        raise DegenerateGeometryError("robot center at obstacle center")
    n = np.array([dx / dist, dy / dist])
    q = np.array([math.cos(s.theta), math.sin(s.theta)])
    r = np.array([-q[1], q[0]])
    return n, q, r


def policy_control(pid: int, s: State, o: Obstacle, params: PolicyParams) -> Input:
    """Evaluate backup control law `pid` at state s."""
    dx, dy = s.x - o.x, s.y - o.y
    dist = math.hypot(dx, dy)
    if dist < DEGENERATE_DIST:
        raise DegenerateGeometryError("robot center at obstacle center")
    nx, ny = dx / dist, dy / dist
    cth, sth = math.cos(s.theta), math.sin(s.theta)
    vmax = params.bounds.v_max
    wmax = params.bounds.omega_max
    eps = params.epsilon
    if pid == 0:
        return Input(vmax, wmax * math.tanh((ny * cth - nx * sth) / eps))
    if pid == 1:
        return Input(vmax * math.tanh((nx * cth + ny * sth) / eps), 0.0)
    if pid == 2:
        return Input(-vmax, -wmax * math.tanh((ny * cth - nx * sth) / eps))
    raise ValueError(f"unknown policy id {pid}")


def policy_barrier(pid: int, s: State, o: Obstacle, params: PolicyParams) -> float:
    """Backup barrier h_b for policy `pid` (m/s units for ids 0/2, m for 1)."""
    if pid == 1:
        return h_distance(s, o)
    dx, dy = s.x - o.x, s.y - o.y
    dist = math.hypot(dx, dy)
    if dist < DEGENERATE_DIST:
        raise DegenerateGeometryError("robot center at obstacle center")
    nx, ny = dx / dist, dy / dist
    vmax = params.bounds.v_max
    h0 = nx * (vmax * math.cos(s.theta) - o.vx) + ny * (vmax * math.sin(s.theta) - o.vy)
    if pid == 0:
        return h0
    if pid == 2:
        return -h0
    raise ValueError(f"unknown policy id {pid}")


def policy_barrier_gradient(
    pid: int, s: State, o: Obstacle, params: PolicyParams
) -> np.ndarray:
    """Analytic gradient of h_b w.r.t. (x, y, theta).

    For h_0 = n.(q v_max - v_o):
        d/dp    = (q v_max - v_o)^T (I - n n^T) / dist
        d/dth   = v_max n.r
    h_1 has gradient (n, 0); h_2 is -grad h_0.
    """
    dx, dy = s.x - o.x, s.y - o.y
    dist = math.hypot(dx, dy)
    if dist < DEGENERATE_DIST:
        raise DegenerateGeometryError("robot center at obstacle center")
    nx, ny = dx / dist, dy / dist
    if pid == 1:
        return np.array([nx, ny, 0.0])
    vmax = params.bounds.v_max
    cth, sth = math.cos(s.theta), math.sin(s.theta)
    wx, wy = vmax * cth - o.vx, vmax * sth - o.vy
    nw = nx * wx + ny * wy
    g = np.array(
        [(wx - nx * nw) / dist, (wy - ny * nw) / dist, vmax * (ny * cth - nx * sth)]
    )
    if pid == 0:
        return g
    if pid == 2:
        return -g
    raise ValueError(f"unknown policy id {pid}")


def h_gradient(s: State, o: Obstacle) -> np.ndarray:
    """Gradient of h(x) = ||p - p_o|| - R_o w.r.t. (x, y, theta)."""
    n, _, _ = geometry_vectors(s, o)
    return np.array([n[0], n[1], 0.0])


@dataclass(frozen=True)
class PolicyRegistry:
    """The set of available backup controllers (ids 0..m_k-1)."""

    params: PolicyParams
    names: tuple = field(default=POLICY_NAMES)

    @property
    def m_k(self) -> int:
        return len(self.names)

    def control(self, pid: int, s: State, o: Obstacle) -> Input:
        self._check(pid)
        return policy_control(pid, s, o, self.params)

    def barrier(self, pid: int, s: State, o: Obstacle) -> float:
        self._check(pid)
        return policy_barrier(pid, s, o, self.params)

    def as_policy(self, pid: int, o: Obstacle):
        """Close over obstacle/params; usable with dynamics.step_closed_loop."""
        self._check(pid)
        return lambda s: policy_control(pid, s, o, self.params)

    def _check(self, pid: int):
        if not 0 <= pid < self.m_k:
            raise ValueError(f"policy id {pid} outside registry of {self.m_k}")
