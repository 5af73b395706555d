"""Safety filter: constrain the driver command by the backup-flow rows.

For the active backup policy the flow phi(tau_i, x) and its sensitivity
Q_i are integrated over [0, T]; each grid point contributes the halfplane

    (grad h(phi_i) Q_i) g(x) u  >=  -alpha h(phi_i) - (grad h(phi_i) Q_i) f(x)

plus one terminal row in the policy's own barrier h_b. The QP then returns
the feasible command closest to the driver's. Infeasibility falls back to
applying the backup controller itself, the certified action.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import Input, InputBounds, State, drift, input_matrix
from .flow import DEFAULT_N_TAU, DEFAULT_T, FlowError, FlowResult, integrate_backup_flow
from .policies import (
    DegenerateGeometryError,
    Obstacle,
    PolicyParams,
    h_distance,
    policy_barrier,
    policy_barrier_gradient,
    policy_control,
)
from .qp import QProblem, QSolution, solve


@dataclass(frozen=True)
class FilterConfig:
    bounds: InputBounds
    T: float = DEFAULT_T
    n_tau: int = DEFAULT_N_TAU
    alpha_gain: float = 1.0  # linear class-K gain on h rows, 1/s
    alpha_b_gain: float = 1.0  # gain on the terminal h_b row, 1/s
    tighten_margin: float = 0.0  # uniform margin subtracted from h(phi_i)
    infeasible_fallback: str = "apply_backup"

    def __post_init__(self):
        if self.alpha_gain <= 0 or self.alpha_b_gain <= 0:
            raise ValueError("class-K gains must be positive")
        if self.tighten_margin < 0:
            raise ValueError("tighten_margin must be >= 0")


@dataclass(frozen=True)
class FilterOutput:
    u_safe: Input
    feasible: bool
    h_now: float
    min_flow_margin: float
    terminal_margin: float
    intervention: float


def _as_obstacles(o) -> list:
    return [o] if isinstance(o, Obstacle) else list(o)


def nearest_obstacle(x: State, obstacles) -> Obstacle:
    return min(_as_obstacles(obstacles), key=lambda ob: h_distance(x, ob))


def flow_h_rows(
    flow: FlowResult, x: State, o: Obstacle, alpha_gain: float, margin: float = 0.0
):
    """Constraint rows for h along the flow, one per tau grid point.

    Vectorized over samples; returns (A (N+1, 2), b (N+1,), h_values).
    """
    pos = flow.states[:, :2]
    diff = pos - o.position
    dist = np.linalg.norm(diff, axis=1)
    hvals = dist - o.radius
    n = diff / dist[:, None]  # degenerate dist already excluded by the flow
    grads = np.concatenate([n, np.zeros((len(n), 1))], axis=1)  # (N+1, 3)
    w = np.einsum("ij,ijk->ik", grads, flow.sensitivities)  # grad h . Q
    A = w @ input_matrix(x)
    b = -alpha_gain * (hvals - margin) - w @ drift(x)
    return A, b, hvals


def terminal_row(flow: FlowResult, x: State, o: Obstacle, params: PolicyParams, alpha_b_gain: float):
    """Terminal constraint in the active policy's backup barrier."""
    xT = State.from_array(flow.states[-1])
    hb = policy_barrier(flow.policy, xT, o, params)
    grad = policy_barrier_gradient(flow.policy, xT, o, params)
    w = grad @ flow.sensitivities[-1]
    a = w @ input_matrix(x)
    b = -alpha_b_gain * hb - float(w @ drift(x))
    return a, b, hb


def assemble_constraints(
    flow: FlowResult, x: State, obstacles, cfg: FilterConfig, params: PolicyParams
):
    """All QP rows: h rows per obstacle along the flow + one terminal row.

    Returns (rows, min_flow_margin, terminal_margin).
    """
    obs = _as_obstacles(obstacles)
    blocks_A = []
    blocks_b = []
    min_margin = np.inf
    for ob in obs:
        A, b, hvals = flow_h_rows(flow, x, ob, cfg.alpha_gain, cfg.tighten_margin)
        min_margin = min(min_margin, float(hvals.min()))
        blocks_A.append(A)
        blocks_b.append(b)
    near = nearest_obstacle(x, obs)
    a_t, b_t, hb = terminal_row(flow, x, near, params, cfg.alpha_b_gain)
    blocks_A.append(a_t[None, :])
    blocks_b.append(np.array([b_t]))
    rows = (np.concatenate(blocks_A), np.concatenate(blocks_b))
    return rows, min_margin, hb


def filter_command(
    x: State,
    u_d: Input,
    active: int,
    obstacles,
    cfg: FilterConfig,
    params: PolicyParams,
) -> FilterOutput:
    """Project the (clamped) driver command onto the BCBF constraint set."""
    u_d = cfg.bounds.clamp(u_d)
    obs = _as_obstacles(obstacles)
    h_now = min(h_distance(x, ob) for ob in obs)

    def fallback(min_margin=np.nan, terminal=np.nan):
        try:
            u = policy_control(active, x, nearest_obstacle(x, obs), params)
        except DegenerateGeometryError:
            u = Input(0.0, 0.0)
        u = cfg.bounds.clamp(u)
        dv = np.hypot(u.v - u_d.v, u.omega - u_d.omega)
        return FilterOutput(u, False, h_now, float(min_margin), float(terminal), float(dv))

    try:
        fl = integrate_backup_flow(
            x, active, nearest_obstacle(x, obs), params, cfg.T, cfg.n_tau
        )
    except (FlowError, DegenerateGeometryError):
        return fallback()

    rows, min_margin, terminal = assemble_constraints(fl, x, obs, cfg, params)
    sol: QSolution = solve(QProblem(u_d, rows, cfg.bounds))
    if not sol.feasible:
        return fallback(min_margin, terminal)
    u = sol.u_star
    dv = np.hypot(u.v - u_d.v, u.omega - u_d.omega)
    return FilterOutput(u, True, h_now, float(min_margin), float(terminal), float(dv))
