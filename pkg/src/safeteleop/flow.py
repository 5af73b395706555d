"""Backup-flow integration with state sensitivities.

Wraps the kernel backend: the closed-loop flow under a backup policy is
integrated jointly with Q(tau) = d phi(tau, x0) / d x0 from the variational
equation, sampled on the uniform tau grid the safety filter constrains.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _core
from .dynamics import FLOW_DT, State
from .policies import Obstacle, PolicyParams

# default horizon: at v_max = 0.5 m/s the backup maneuver spans 1 m
DEFAULT_T = 2.0
DEFAULT_N_TAU = 20


class FlowError(RuntimeError):
    """Backup flow hit degenerate geometry; the filter treats this as infeasible."""


@dataclass(frozen=True)
class FlowSample:
    tau: float
    state: State
    sensitivity: np.ndarray  # (3, 3)


@dataclass(frozen=True)
class FlowResult:
    policy: int
    T: float
    states: np.ndarray  # (N_tau + 1, 3)
    sensitivities: np.ndarray  # (N_tau + 1, 3, 3)

    @property
    def n_tau(self) -> int:
        return self.states.shape[0] - 1

    @property
    def taus(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.states.shape[0])

    def sample(self, i: int) -> FlowSample:
        return FlowSample(
            float(i * self.T / self.n_tau),
            State.from_array(self.states[i]),
            self.sensitivities[i],
        )


def integrate_backup_flow(
    x0: State,
    pid: int,
    o: Obstacle,
    params: PolicyParams,
    T: float = DEFAULT_T,
    n_tau: int = DEFAULT_N_TAU,
    dt_max: float = FLOW_DT,
) -> FlowResult:
    """Flow + sensitivity of backup policy `pid` from x0 over [0, T]."""
    if T <= 0 or n_tau < 1:
        raise ValueError("need T > 0 and n_tau >= 1")
    status, states, sens = _core.flow_with_sensitivity(
        x0.as_array(), pid, o.as_array(), params.as_array(), T, n_tau, dt_max
    )
    if status != _core.STATUS_OK:
        raise FlowError(f"degenerate geometry along backup flow of policy {pid}")
    return FlowResult(pid, T, states, sens)


def sensitivity_fd_oracle(
    x0: State,
    pid: int,
    o: Obstacle,
    params: PolicyParams,
    tau: float,
    n_tau: int = 1,
    delta: float = 1e-5,
    dt_max: float = FLOW_DT,
) -> np.ndarray:
    """d phi(tau, x0) / d x0 by central differences of the full flow.

    Independent of the variational route: each column re-integrates the
    flow from a perturbed initial state.
    """
    J = np.empty((3, 3))
    base = x0.as_array()
    for j in range(3):
        dx = np.zeros(3)
        dx[j] = delta
        fp = integrate_backup_flow(
            State.from_array(base + dx), pid, o, params, tau, n_tau, dt_max
        )
        fm = integrate_backup_flow(
            State.from_array(base - dx), pid, o, params, tau, n_tau, dt_max
        )
        J[:, j] = (fp.states[-1] - fm.states[-1]) / (2.0 * delta)
    return J


def rollout_closed_loop(
    x0: State,
    pid: int,
    o: Obstacle,
    params: PolicyParams,
    duration: float,
    dt: float = FLOW_DT,
) -> np.ndarray:
    """Plain closed-loop trajectory under backup policy `pid`, shape (M+1, 3)."""
    status, states = _core.rollout(
        x0.as_array(), pid, o.as_array(), params.as_array(), duration, dt
    )
    if status != _core.STATUS_OK:
        raise FlowError(f"degenerate geometry during rollout of policy {pid}")
    return states
