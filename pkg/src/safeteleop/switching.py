"""Switch governor: reward-argmax proposals gated by feasibility validation.

A proposed backup controller is only adopted if, from the current state,
its own backup flow stays safe, ends inside its backup set, and the
resulting QP is feasible for the current driver command. A minimum dwell
time suppresses chattering of the raw argmax.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .dynamics import Input, State
from .flow import FlowError, integrate_backup_flow
from .policies import DegenerateGeometryError, PolicyParams, h_distance, policy_barrier
from .qp import QProblem, solve
from .safety_filter import FilterConfig, _as_obstacles, assemble_constraints, nearest_obstacle

DEFAULT_DWELL_TICKS = 10  # 0.5 s at 20 Hz


@dataclass(frozen=True)
class SwitchState:
    active: int
    dwell_remaining: int = 0
    last_switch_tick: int = -1
    rejected_switches: int = 0


@dataclass(frozen=True)
class SwitchEvent:
    tick: int
    source: int
    target: int
    rewards: tuple
    validated: bool = True


@dataclass(frozen=True)
class GovernorConfig:
    dwell_ticks: int = DEFAULT_DWELL_TICKS
    try_runners_up: bool = False  # extension: fall through to second-best


def propose(rewards: Sequence[float], active: int) -> int:
    """Argmax over rewards; ties retain the active policy, then lowest index."""
    if len(rewards) == 0:
        raise ValueError("empty reward vector")
    best = max(rewards)
    if 0 <= active < len(rewards) and rewards[active] == best:
        return active
    return int(np.argmax(rewards))


def validate_switch(
    x: State,
    candidate: int,
    obstacles,
    u_d: Input,
    cfg: FilterConfig,
    params: PolicyParams,
) -> bool:
    """True iff the candidate's backup flow certifies the current state.

    Requires h >= 0 at every flow sample, h_b >= 0 at the flow end, and a
    feasible QP for the current command under the candidate's constraints.
    """
    obs = _as_obstacles(obstacles)
    try:
        near = nearest_obstacle(x, obs)
        fl = integrate_backup_flow(x, candidate, near, params, cfg.T, cfg.n_tau)
        for ob in obs:
            d = np.linalg.norm(fl.states[:, :2] - ob.position, axis=1)
            if np.min(d - ob.radius) < 0.0:
                return False
        xT = State.from_array(fl.states[-1])
        if policy_barrier(candidate, xT, near, params) < 0.0:
            return False
        rows, _, _ = assemble_constraints(fl, x, obs, cfg, params)
        return solve(QProblem(cfg.bounds.clamp(u_d), rows, cfg.bounds)).feasible
    except (FlowError, DegenerateGeometryError):
        return False


def membership_check(
    x: State, pid: int, obstacles, cfg: FilterConfig, params: PolicyParams
) -> bool:
    """Flow-margin check used to gate episode starts for the initial policy."""
    obs = _as_obstacles(obstacles)
    if min(h_distance(x, ob) for ob in obs) < 0.0:
        return False
    try:
        fl = integrate_backup_flow(x, pid, nearest_obstacle(x, obs), params, cfg.T, cfg.n_tau)
    except (FlowError, DegenerateGeometryError):
        return False
    for ob in obs:
        d = np.linalg.norm(fl.states[:, :2] - ob.position, axis=1)
        if np.min(d - ob.radius) < 0.0:
            return False
    xT = State.from_array(fl.states[-1])
    return policy_barrier(pid, xT, nearest_obstacle(x, obs), params) >= 0.0


def step(
    ss: SwitchState,
    rewards: Sequence[float],
    tick: int,
    x: State,
    u_d: Input,
    obstacles,
    cfg: FilterConfig,
    params: PolicyParams,
    gov: GovernorConfig = GovernorConfig(),
) -> tuple[SwitchState, Optional[SwitchEvent]]:
    """One governor tick: dwell, propose, validate, maybe switch."""
    if ss.dwell_remaining > 0:
        return replace(ss, dwell_remaining=ss.dwell_remaining - 1), None

    candidate = propose(rewards, ss.active)
    if candidate == ss.active:
        return ss, None

    order = [candidate]
    if gov.try_runners_up:
        order += [
            int(i)
            for i in np.argsort(rewards)[::-1]
            if i != candidate and i != ss.active
        ]
    for cand in order:
        if validate_switch(x, cand, obstacles, u_d, cfg, params):
            ev = SwitchEvent(tick, ss.active, cand, tuple(float(r) for r in rewards))
            return (
                SwitchState(cand, gov.dwell_ticks, tick, ss.rejected_switches),
                ev,
            )
    return replace(ss, rejected_switches=ss.rejected_switches + 1), None
