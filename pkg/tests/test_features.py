"""Feature extraction and history window tests."""

import math

import numpy as np
import pytest

from safeteleop.dynamics import Input, State, step_constant_input
from safeteleop.features import (
    FEATURE_ORDER,
    HISTORY_LEN,
    NUM_FEATURES,
    History,
    command_goal,
    extract_features,
)
from safeteleop.policies import Obstacle


def test_feature_order_shape():
    assert NUM_FEATURES == 12
    assert len(FEATURE_ORDER) == NUM_FEATURES
    assert FEATURE_ORDER[0] == "x" and FEATURE_ORDER[-1] == "h_at_goal"


def test_extract_features_values_straight():
    ob = Obstacle(0.0, 0.0, 0.5)
    s = State(-2.0, 1.0, 0.0)
    xdot = np.array([0.3, -0.1, 0.2])
    u = Input(0.4, 0.0)
    g = extract_features(s, xdot, u, [ob], goal_horizon=1.0)
    assert g.shape == (NUM_FEATURES,)
    assert g[0] == -2.0 and g[1] == 1.0 and g[2] == 0.0 and g[3] == 0.0
    assert np.allclose(g[4:8], [0.3, -0.1, 0.0, 0.2])
    assert g[8] == 0.4 and g[9] == 0.0
    assert g[10] == pytest.approx(math.hypot(2.0, 1.0) - 0.5, abs=1e-12)
    # straight motion: goal is 0.4 m along the heading
    assert g[11] == pytest.approx(math.hypot(1.6, 1.0) - 0.5, abs=1e-12)


def test_command_goal_matches_integrated_unicycle():
    """Closed-form constant-command arc vs. fine-grained numerical stepping."""
    for v, w in [(0.5, 0.8), (0.3, -1.0), (0.5, 0.0), (-0.4, 0.6)]:
        s = State(0.2, -0.4, 0.7)
        u = Input(v, w)
        goal = command_goal(s, u, 1.0)
        x = s
        n = 2000
        for _ in range(n):
            x = step_constant_input(x, u, 1.0 / n)
        assert abs(goal.x - x.x) < 1e-9
        assert abs(goal.y - x.y) < 1e-9
        assert abs(goal.theta - x.theta) < 1e-9


def test_extract_features_multi_obstacle_min():
    obs = [Obstacle(0.0, 0.0, 0.5), Obstacle(-1.0, 1.0, 0.3)]
    s = State(-1.0, 0.5, 0.0)
    g = extract_features(s, np.zeros(3), Input(0.0, 0.0), obs)
    h0 = math.hypot(1.0, 0.5) - 0.5
    h1 = 0.5 - 0.3
    assert g[10] == pytest.approx(min(h0, h1), abs=1e-12)


def test_history_window_order_and_guard():
    h = History(length=3)
    assert not h.full
    with pytest.raises(ValueError):
        h.window()
    for k in range(3):
        h.push(np.full(NUM_FEATURES, float(k)))
    assert h.full
    w = h.window()
    assert w.shape == (3, NUM_FEATURES)
    assert w[0, 0] == 0.0 and w[-1, 0] == 2.0  # oldest first
    h.push(np.full(NUM_FEATURES, 3.0))
    w = h.window()
    assert w[0, 0] == 1.0 and w[-1, 0] == 3.0  # slides by one
    h.clear()
    assert not h.full


def test_default_history_length():
    assert History().length == HISTORY_LEN == 15
