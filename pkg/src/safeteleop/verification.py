"""Property suites shared by the acceptance tests and the `verify` command.

Each check returns a small result object with a `passed` flag and the
measured quantities, so callers can print one line per criterion or
assert on it. All checks are seeded and deterministic.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import Input, InputBounds, State
from .flow import integrate_backup_flow, rollout_closed_loop, sensitivity_fd_oracle
from .model import ModelSpec, RewardModel
from .policies import NUM_POLICIES, Obstacle, PolicyParams, policy_barrier
from .qp import QProblem, kkt_enumeration_oracle, solve
from .switching import membership_check
from .training import gradients
from .world import EpisodeLog, Scenario, default_scenario, make_driver, run_episode


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extras = " ".join(f"{k}={v}" for k, v in self.detail.items())
        return f"[{status}] {self.name}: {extras}"


# ---- sensitivity vs finite differences -------------------------------------


def check_sensitivity(n_cases: int = 100, seed: int = 0, tol: float = 1e-4) -> CheckResult:
    """Variational sensitivity against the FD-of-the-flow oracle."""
    rng = np.random.Generator(np.random.PCG64(seed))
    o = Obstacle(0.0, 0.0, 0.5)
    params = PolicyParams(InputBounds(0.5, 1.0))
    worst = 0.0
    for _ in range(n_cases):
        ang = rng.uniform(0, 2 * math.pi)
        r = rng.uniform(1.0, 3.5)
        x0 = State(r * math.cos(ang), r * math.sin(ang), rng.uniform(-math.pi, math.pi))
        pid = int(rng.integers(0, NUM_POLICIES))
        T = 2.0
        fl = integrate_backup_flow(x0, pid, o, params, T, 1)
        fd = sensitivity_fd_oracle(x0, pid, o, params, T)
        err = np.linalg.norm(fl.sensitivities[-1] - fd) / np.linalg.norm(fd)
        worst = max(worst, float(err))
    return CheckResult(
        "sensitivity-vs-fd", worst <= tol, {"max_rel_frobenius": f"{worst:.2e}", "tol": tol}
    )


# ---- QP equivalence ---------------------------------------------------------


def random_qproblem(rng) -> QProblem:
    box = InputBounds(1.0, 1.0)
    target = Input(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5))
    m = int(rng.integers(0, 8))
    ineqs = []
    for _ in range(m):
        ang = rng.uniform(0, 2 * math.pi)
        a = np.array([math.cos(ang), math.sin(ang)]) * rng.uniform(0.2, 2.0)
        ineqs.append((a, float(rng.uniform(-1.5, 1.2))))
    return QProblem(target, ineqs, box)


def check_qp_equivalence(n_cases: int = 200, seed: int = 0, tol: float = 1e-8) -> CheckResult:
    rng = np.random.Generator(np.random.PCG64(seed))
    worst = 0.0
    flag_mismatch = 0
    n_infeasible = 0
    for _ in range(n_cases):
        p = random_qproblem(rng)
        a = solve(p)
        b = kkt_enumeration_oracle(p)
        if a.feasible != b.feasible:
            flag_mismatch += 1
            continue
        if not a.feasible:
            n_infeasible += 1
            continue
        worst = max(worst, abs(a.objective - b.objective))
    return CheckResult(
        "qp-oracle-equivalence",
        flag_mismatch == 0 and worst <= tol,
        {
            "max_obj_diff": f"{worst:.2e}",
            "flag_mismatches": flag_mismatch,
            "infeasible_cases": n_infeasible,
        },
    )


# ---- backup forward invariance ----------------------------------------------


def _barrier_values(states: np.ndarray, pid: int, o: Obstacle, params: PolicyParams):
    d = states[:, :2] - o.position
    dist = np.linalg.norm(d, axis=1)
    h = dist - o.radius
    if pid == 1:
        return h, h
    n = d / dist[:, None]
    q = np.stack([np.cos(states[:, 2]), np.sin(states[:, 2])], axis=1)
    h0 = params.bounds.v_max * np.einsum("ij,ij->i", n, q) - n @ o.velocity
    return (h0 if pid == 0 else -h0), h


def check_backup_invariance(
    n_states: int = 1000,
    seed: int = 0,
    duration: float = 5.0,
    hb_floor: float = -1e-6,
) -> CheckResult:
    """Sampled forward invariance of each backup set under its own policy."""
    rng = np.random.Generator(np.random.PCG64(seed))
    o = Obstacle(0.0, 0.0, 0.5)
    params = PolicyParams(InputBounds(0.5, 1.0))
    detail = {}
    ok = True
    for pid in range(NUM_POLICIES):
        worst_hb = np.inf
        worst_h = np.inf
        count = 0
        while count < n_states:
            ang = rng.uniform(0, 2 * math.pi)
            r = rng.uniform(o.radius, o.radius + 4.0)
            s = State(r * math.cos(ang), r * math.sin(ang), rng.uniform(-math.pi, math.pi))
            hb0, h0 = _barrier_values(s.as_array()[None], pid, o, params)
            if hb0[0] < 0.05 or h0[0] < 0.0:
                continue
            count += 1
            traj = rollout_closed_loop(s, pid, o, params, duration)
            hb, h = _barrier_values(traj, pid, o, params)
            worst_hb = min(worst_hb, float(hb.min()))
            worst_h = min(worst_h, float(h.min()))
        detail[f"p{pid}_min_hb"] = f"{worst_hb:.2e}"
        detail[f"p{pid}_min_h"] = f"{worst_h:.2e}"
        ok = ok and worst_hb >= hb_floor and worst_h >= 0.0
    return CheckResult("backup-forward-invariance", ok, detail)


# ---- gradient check -----------------------------------------------------------


def check_gradients(seed: int = 0, tol: float = 1e-4, eta: float = 1e-5) -> CheckResult:
    """BPTT vs central finite differences on a tiny model, every parameter."""
    spec = ModelSpec(
        input_dim=3, lstm_layers=1, hidden=4, decoder=(5,), m_k=2, window=3,
        lstm_dropout=0.0, decoder_dropout=0.0,
    )
    m = RewardModel.initialize(spec, seed=seed)
    rng = np.random.Generator(np.random.PCG64(seed + 1))
    X = rng.standard_normal((6, spec.window, spec.input_dim))
    y = rng.integers(0, spec.m_k, size=6)
    _, grads = gradients(m, X, y)

    def loss_at() -> float:
        from .training import loss_value

        return loss_value(m.forward(X), y)

    worst = 0.0
    for name, g in grads.items():
        p = m.params[name]
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + eta
            lp = loss_at()
            p[idx] = orig - eta
            lm = loss_at()
            p[idx] = orig
            fd = (lp - lm) / (2 * eta)
            denom = max(abs(fd), abs(g[idx]), 1e-8)
            worst = max(worst, abs(fd - g[idx]) / denom)
    return CheckResult("bptt-gradient-check", worst <= tol, {"max_rel_err": f"{worst:.2e}", "tol": tol})


# ---- safety Monte-Carlo -------------------------------------------------------


@dataclass
class EpisodeSummary:
    driver: str
    mode: str
    seed: int
    min_h: float
    bounds_ok: bool
    switches: int
    invalid_switches: int
    infeasible_after_switch: int
    mean_tick_ms: float


def sample_start(sc: Scenario, pid: int, seed: int) -> Scenario:
    """Randomized valid start pose passing the initial-policy membership check."""
    rng = np.random.Generator(np.random.PCG64(seed ^ 0x5AFE))
    ob = sc.obstacles[0]
    cfg, params = sc.filter_cfg, sc.params
    for _ in range(200):
        ang = rng.uniform(0, 2 * math.pi)
        r = rng.uniform(1.2, 2.4)
        start = State(
            ob.x + r * math.cos(ang), ob.y + r * math.sin(ang), rng.uniform(-math.pi, math.pi)
        )
        if membership_check(start, pid, list(sc.obstacles), cfg, params):
            d = sc.to_dict()
            d["start"] = [start.x, start.y, start.theta]
            d["initial_policy"] = pid
            return Scenario.from_dict(d)
    raise RuntimeError("could not sample a valid start state")


def _episode_batch(args) -> list:
    driver_kind, mode, seeds, duration, model_params = args
    model = None
    if model_params is not None:
        model = RewardModel(*model_params)
    out = []
    for seed in seeds:
        init_pid = 0 if mode == "learned" else int(mode)
        sc = sample_start(default_scenario(), init_pid, seed)
        drv = make_driver(driver_kind, sc)
        t0 = time.perf_counter()
        log = run_episode(sc, drv, model=model, duration=duration, seed=seed)
        dt_ms = (time.perf_counter() - t0) * 1000.0 / len(log.ticks)
        bounds_ok = all(
            abs(r.u_safe[0]) <= sc.bounds.v_max and abs(r.u_safe[1]) <= sc.bounds.omega_max
            for r in log.ticks
        )
        events = log.switch_events
        invalid = sum(1 for e in events if not e.validated)
        infeas_after = 0
        for e in events:
            nxt = [r for r in log.ticks if r.tick in (e.tick, e.tick + 1)]
            if any(not r.feasible for r in nxt):
                infeas_after += 1
        out.append(
            EpisodeSummary(
                driver_kind, str(mode), seed, log.min_h, bounds_ok,
                len(events), invalid, infeas_after, dt_ms,
            )
        )
    return out


def run_safety_suite(
    n_seeds: int = 100,
    drivers=("rammer", "orbiter", "goal_seeker"),
    modes=(0, 1, 2, "learned"),
    model: Optional[RewardModel] = None,
    duration: float = 15.0,
    workers: Optional[int] = None,
    h_floor: float = -1e-3,
) -> tuple[CheckResult, list]:
    """Monte-Carlo safety invariance across drivers, policies, and seeds."""
    modes = [m for m in modes if m != "learned" or model is not None]
    model_params = None
    if model is not None:
        model_params = (model.spec, model.params, model.norm)
    tasks = []
    chunk = 25
    for d in drivers:
        for m in modes:
            for lo in range(0, n_seeds, chunk):
                tasks.append((d, m, list(range(lo, min(lo + chunk, n_seeds))), duration, model_params))
    summaries: list = []
    if workers == 0:
        for t in tasks:
            summaries.extend(_episode_batch(t))
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            for res in ex.map(_episode_batch, tasks):
                summaries.extend(res)
    min_h = min(s.min_h for s in summaries)
    bounds_ok = all(s.bounds_ok for s in summaries)
    invalid = sum(s.invalid_switches for s in summaries)
    infeas = sum(s.infeasible_after_switch for s in summaries)
    med_tick = float(np.median([s.mean_tick_ms for s in summaries]))
    res = CheckResult(
        "safety-invariance",
        min_h >= h_floor and bounds_ok,
        {
            "episodes": len(summaries),
            "min_h": f"{min_h:.4g}",
            "bounds_ok": bounds_ok,
            "invalid_switches": invalid,
            "infeasible_after_switch": infeas,
            "median_tick_ms": f"{med_tick:.2f}",
        },
    )
    return res, summaries


def check_switch_safety(summaries: list) -> CheckResult:
    """Every executed switch validated; QP feasible on the following tick."""
    learned = [s for s in summaries if s.mode == "learned"]
    switches = sum(s.switches for s in learned)
    invalid = sum(s.invalid_switches for s in learned)
    infeas = sum(s.infeasible_after_switch for s in learned)
    return CheckResult(
        "switch-safety",
        invalid == 0 and infeas == 0 and switches > 0,
        {"switches": switches, "invalid": invalid, "infeasible_after": infeas},
    )


# ---- switching utility ---------------------------------------------------------


def switching_utility_scenario() -> tuple[Scenario, tuple, float]:
    """Goal placed close behind the obstacle: reaching it needs a matched backup."""
    sc = default_scenario(start=State(-2.2, -0.5, 0.4), initial_policy=0)
    ob = sc.obstacles[0]
    ang = math.radians(15)
    goal = (
        ob.x + (ob.radius + 0.15) * math.cos(ang),
        ob.y + (ob.radius + 0.15) * math.sin(ang),
    )
    return sc, goal, 40.0


def check_switching_utility(model: RewardModel, goal_tol: float = 0.2) -> CheckResult:
    sc, goal, duration = switching_utility_scenario()
    results = {}
    for mode in ("learned", 0, 1, 2):
        d = sc.to_dict()
        d["initial_policy"] = 0 if mode == "learned" else mode
        sci = Scenario.from_dict(d)
        drv = make_driver("goal_seeker", sci, target=goal, clearance=0.12)
        log = run_episode(sci, drv, model=model if mode == "learned" else None,
                          duration=duration, seed=7)
        dist = min(
            math.hypot(r.pose[0] - goal[0], r.pose[1] - goal[1]) for r in log.ticks
        )
        results[str(mode)] = dist
    learned_ok = results["learned"] <= goal_tol
    some_fixed_fails = any(results[str(m)] > goal_tol for m in (0, 1, 2))
    return CheckResult(
        "switching-utility",
        learned_ok and some_fixed_fails,
        {k: f"{v:.3f}" for k, v in results.items()},
    )
