"""Feature extraction for the intent estimator.

Each tick produces a 12-entry vector in a fixed order: pose (with a zero
z slot kept so the input dimensionality matches 3-D deployments),
velocities (zero z-rate), the raw driver command, and the safety value h
at the current state and at a short-horizon goal obtained by flowing the
driver's command forward.
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np

from .dynamics import Input, State
from .policies import h_distance

FEATURE_ORDER = (
    "x",
    "y",
    "z",
    "theta",
    "dx",
    "dy",
    "dz",
    "dtheta",
    "v_cmd",
    "omega_cmd",
    "h_at_x",
    "h_at_goal",
)
NUM_FEATURES = len(FEATURE_ORDER)

HISTORY_LEN = 15  # H + 1 timesteps, ~0.75 s at 20 Hz
DEFAULT_GOAL_HORIZON = 1.0


def command_goal(x: State, u_d: Input, horizon: float) -> State:
    """Exact constant-command unicycle flow over `horizon` (circular arc)."""
    th1 = x.theta + u_d.omega * horizon
    if abs(u_d.omega) < 1e-12:
        return State(
            x.x + u_d.v * horizon * math.cos(x.theta),
            x.y + u_d.v * horizon * math.sin(x.theta),
            th1,
        )
    k = u_d.v / u_d.omega
    return State(
        x.x + k * (math.sin(th1) - math.sin(x.theta)),
        x.y + k * (-math.cos(th1) + math.cos(x.theta)),
        th1,
    )


def extract_features(
    x: State,
    xdot: np.ndarray,
    u_d: Input,
    obstacles,
    goal_horizon: float = DEFAULT_GOAL_HORIZON,
) -> np.ndarray:
    """One raw (unnormalized) feature vector; see FEATURE_ORDER."""
    obs = obstacles if isinstance(obstacles, (list, tuple)) else [obstacles]
    goal = command_goal(x, u_d, goal_horizon)
    h_x = min(h_distance(x, ob) for ob in obs)
    h_g = min(h_distance(goal, ob) for ob in obs)
    return np.array(
        [
            x.x,
            x.y,
            0.0,
            x.theta,
            float(xdot[0]),
            float(xdot[1]),
            0.0,
            float(xdot[2]),
            u_d.v,
            u_d.omega,
            h_x,
            h_g,
        ]
    )


class History:
    """Sliding window of the most recent feature vectors, oldest first."""

    def __init__(self, length: int = HISTORY_LEN):
        self.length = length
        self._buf: deque = deque(maxlen=length)

    def push(self, gamma: np.ndarray) -> None:
        self._buf.append(np.asarray(gamma, float))

    @property
    def full(self) -> bool:
        return len(self._buf) == self.length

    def window(self) -> np.ndarray:
        """Model input, shape (length, NUM_FEATURES); only when full."""
        if not self.full:
            raise ValueError("history not full yet")
        return np.stack(list(self._buf))

    def clear(self) -> None:
        self._buf.clear()
