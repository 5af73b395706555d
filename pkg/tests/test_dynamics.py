import math

import numpy as np
import pytest

from safeteleop.dynamics import (
    Input,
    InputBounds,
    State,
    closed_loop_jacobian,
    drift,
    input_matrix,
    step_closed_loop,
    step_constant_input,
    vector_field,
)


def test_vector_field_structure():
    s = State(1.0, -2.0, 0.7)
    u = Input(0.3, -0.4)
    xd = vector_field(s, u)
    assert xd == pytest.approx([0.3 * math.cos(0.7), 0.3 * math.sin(0.7), -0.4])
    assert np.all(drift(s) == 0.0)
    g = input_matrix(s)
    assert np.allclose(g @ u.as_array(), xd)


def test_zero_policy_fixed_point():
    s = State(0.4, 0.2, 1.1)
    s2 = step_closed_loop(s, lambda _s: Input(0.0, 0.0), 0.05)
    assert s2 == s


def test_straight_line_step_exact():
    # field is constant along +x, so RK4 is exact to machine precision
    s2 = step_closed_loop(State(0.0, 0.0, 0.0), lambda _s: Input(1.0, 0.0), 0.1)
    assert s2.x == pytest.approx(0.1, abs=1e-15)
    assert s2.y == pytest.approx(0.0, abs=1e-15)
    assert s2.theta == 0.0


def test_pure_rotation_step_exact():
    s2 = step_closed_loop(State(0.0, 0.0, 0.0), lambda _s: Input(0.0, 1.0), 0.1)
    assert (s2.x, s2.y) == (0.0, 0.0)
    assert s2.theta == pytest.approx(0.1, abs=1e-15)


def arc_endpoint(s: State, u: Input, t: float) -> np.ndarray:
    """Closed-form unicycle trajectory under a constant command."""
    if abs(u.omega) < 1e-12:
        return np.array(
            [s.x + u.v * t * math.cos(s.theta), s.y + u.v * t * math.sin(s.theta), s.theta]
        )
    r = u.v / u.omega
    th = s.theta + u.omega * t
    return np.array(
        [
            s.x + r * (math.sin(th) - math.sin(s.theta)),
            s.y - r * (math.cos(th) - math.cos(s.theta)),
            th,
        ]
    )


def test_constant_arc_matches_closed_form():
    s = State(0.3, -0.2, 0.5)
    u = Input(0.4, 0.8)
    dt = 0.01
    cur = s
    for _ in range(100):
        cur = step_constant_input(cur, u, dt)
    ref = arc_endpoint(s, u, 1.0)
    assert np.allclose(cur.as_array(), ref, atol=1e-8)


def test_rk4_order():
    # halving the step should shrink the error ~16x for a smooth field
    s = State(0.0, 0.0, 0.0)
    u = Input(0.5, 1.0)
    ref = arc_endpoint(s, u, 0.4)

    def err(dt):
        cur = s
        for _ in range(int(round(0.4 / dt))):
            cur = step_constant_input(cur, u, dt)
        return np.max(np.abs(cur.as_array() - ref))

    e1, e2 = err(0.02), err(0.01)
    assert e2 < e1 / 12.0


def test_step_rejects_nonpositive_dt():
    with pytest.raises(ValueError):
        step_closed_loop(State(0, 0, 0), lambda _s: Input(0, 0), 0.0)


def test_bounds_clamp_and_contains():
    b = InputBounds(0.5, 1.0)
    assert b.clamp(Input(0.7, -1.4)) == Input(0.5, -1.0)
    assert b.clamp(Input(-0.2, 0.3)) == Input(-0.2, 0.3)
    assert b.contains(Input(0.5, 1.0))
    assert not b.contains(Input(0.5001, 0.0))
    with pytest.raises(ValueError):
        InputBounds(0.0, 1.0)


def test_state_roundtrip():
    s = State(1.25, -0.5, 2.0)
    assert State.from_array(s.as_array()) == s
    u = Input(0.1, -0.2)
    assert Input.from_array(u.as_array()) == u


def test_closed_loop_jacobian_vs_five_point():
    # policy with genuine state dependence in all coordinates
    def policy(s: State) -> Input:
        return Input(0.4 * math.tanh(s.x + s.y), 0.8 * math.sin(s.theta - s.x))

    s = State(0.3, -0.7, 1.2)
    J = closed_loop_jacobian(s, policy)

    def field(x):
        st = State.from_array(x)
        return vector_field(st, policy(st))

    eta = 1e-4
    J5 = np.empty((3, 3))
    x = s.as_array()
    for j in range(3):
        d = np.zeros(3)
        d[j] = eta
        J5[:, j] = (
            -field(x + 2 * d) + 8 * field(x + d) - 8 * field(x - d) + field(x - 2 * d)
        ) / (12 * eta)
    assert np.allclose(J, J5, atol=1e-7)
