"""2-D world: scenarios, scripted drivers, the 20 Hz episode loop, replay.

Each tick wires driver command -> feature extraction -> reward model ->
switch governor -> safety filter -> RK4 world step, recording everything
into an episode log that replays bit-exactly under matching versions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _core
from .dynamics import Input, InputBounds, State, step_constant_input, vector_field
from .features import DEFAULT_GOAL_HORIZON, History, command_goal, extract_features
from .model import RewardModel
from .policies import NUM_POLICIES, Obstacle, PolicyParams, h_distance
from .safety_filter import FilterConfig, FilterOutput, filter_command
from .switching import (
    GovernorConfig,
    SwitchEvent,
    SwitchState,
    membership_check,
    step as governor_step,
)
from .training import Dataset, DatasetRow

LOG_FORMAT_VERSION = 1
SCENARIO_FORMAT_VERSION = 1

DEFAULT_TICK_DT = 0.05


@dataclass(frozen=True)
class Scenario:
    start: State
    obstacles: tuple
    arena: tuple = (8.0, 8.0)  # informational extent, centered on the origin
    initial_policy: int = 0
    bounds: InputBounds = InputBounds(0.5, 1.0)
    epsilon: float = 0.1
    tick_dt: float = DEFAULT_TICK_DT
    T: float = 2.0
    n_tau: int = 20
    alpha_gain: float = 1.0
    alpha_b_gain: float = 1.0
    tighten_margin: float = 0.0
    dwell_ticks: int = 10
    goal_horizon: float = DEFAULT_GOAL_HORIZON

    @property
    def params(self) -> PolicyParams:
        return PolicyParams(self.bounds, self.epsilon)

    @property
    def filter_cfg(self) -> FilterConfig:
        return FilterConfig(
            self.bounds,
            self.T,
            self.n_tau,
            self.alpha_gain,
            self.alpha_b_gain,
            self.tighten_margin,
        )

    @property
    def governor(self) -> GovernorConfig:
        return GovernorConfig(self.dwell_ticks)

    def to_dict(self) -> dict:
        return {
            "version": SCENARIO_FORMAT_VERSION,
            "start": [self.start.x, self.start.y, self.start.theta],
            "obstacles": [
                [o.x, o.y, o.radius, o.vx, o.vy] for o in self.obstacles
            ],
            "arena": list(self.arena),
            "initial_policy": self.initial_policy,
            "bounds": [self.bounds.v_max, self.bounds.omega_max],
            "epsilon": self.epsilon,
            "tick_dt": self.tick_dt,
            "T": self.T,
            "n_tau": self.n_tau,
            "alpha_gain": self.alpha_gain,
            "alpha_b_gain": self.alpha_b_gain,
            "tighten_margin": self.tighten_margin,
            "dwell_ticks": self.dwell_ticks,
            "goal_horizon": self.goal_horizon,
        }

    @staticmethod
    def from_dict(d: dict) -> "Scenario":
        if d.get("version") != SCENARIO_FORMAT_VERSION:
            raise ValueError("unsupported scenario version")
        return Scenario(
            start=State(*d["start"]),
            obstacles=tuple(Obstacle(*o) for o in d["obstacles"]),
            arena=tuple(d["arena"]),
            initial_policy=d["initial_policy"],
            bounds=InputBounds(*d["bounds"]),
            epsilon=d["epsilon"],
            tick_dt=d["tick_dt"],
            T=d["T"],
            n_tau=d["n_tau"],
            alpha_gain=d["alpha_gain"],
            alpha_b_gain=d["alpha_b_gain"],
            tighten_margin=d["tighten_margin"],
            dwell_ticks=d["dwell_ticks"],
            goal_horizon=d["goal_horizon"],
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @staticmethod
    def load(path) -> "Scenario":
        with open(path) as fh:
            return Scenario.from_dict(json.load(fh))


def default_scenario(**overrides) -> Scenario:
    """One buffer-inflated cone at the origin, robot starting south of it."""
    base = dict(
        start=State(-2.5, -2.5, 0.8),
        obstacles=(Obstacle(0.0, 0.0, 0.5),),  # 0.15 m cone + 0.35 m half-length
    )
    base.update(overrides)
    return Scenario(**base)


# ---- scripted drivers -----------------------------------------------------


def _wrap_angle(a: float) -> float:
    return math.atan2(math.sin(a), math.cos(a))


class ScriptedDriver:
    """Base: deterministic command source with optional seeded noise."""

    kind = "base"

    def __init__(self, noise: float = 0.0):
        self.noise = noise
        self._rng = np.random.Generator(np.random.PCG64(0))

    def reset(self, seed: int) -> None:
        self._rng = np.random.Generator(np.random.PCG64(seed))

    def command(self, tick: int, s: State, bounds: InputBounds) -> Input:
        u = self._command(tick, s, bounds)
        if self.noise > 0:
            u = Input(
                u.v + self.noise * self._rng.standard_normal(),
                u.omega + self.noise * self._rng.standard_normal(),
            )
        return u

    def _command(self, tick: int, s: State, bounds: InputBounds) -> Input:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.kind, "noise": self.noise}


class GoalSeeker(ScriptedDriver):
    """Proportional heading control toward a fixed target point.

    If an obstacle is supplied, the driver detours like a human pilot would:
    when the straight ray to the goal cuts through the obstacle (inflated by
    `clearance`), it aims at the tangent point on the side nearer the goal
    instead of stalling against the boundary.
    """

    kind = "goal_seeker"

    def __init__(self, target, stop_radius: float = 0.05, noise: float = 0.0,
                 avoid: Optional[Obstacle] = None, clearance: float = 0.3):
        super().__init__(noise)
        self.target = np.asarray(target, float)
        self.stop_radius = stop_radius
        self.avoid = avoid
        self.clearance = clearance
        self._side = 0.0

    def reset(self, seed: int) -> None:
        super().reset(seed)
        self._side = 0.0

    def _aim_point(self, s: State) -> np.ndarray:
        if self.avoid is None:
            return self.target
        c = np.array([self.avoid.x, self.avoid.y])
        p = s.position
        pc = c - p
        d2 = float(pc @ pc)
        dist = math.sqrt(d2)
        seg = self.target - p
        seg_len = float(np.linalg.norm(seg))
        if seg_len < 1e-9 or dist < 1e-9:
            return self.target
        # Shrink the detour circle when the goal sits inside it, so the final
        # approach is never forbidden by our own routing.
        R_test = min(
            self.avoid.radius + self.clearance,
            float(np.linalg.norm(self.target - c)) - 1e-3,
        )
        if R_test <= 0.0:
            return self.target
        u = seg / seg_len
        along = float(pc @ u)
        # Ray misses the detour circle, or the circle is behind us: go direct.
        perp2 = d2 - along * along
        if along <= 0.0 or along >= seg_len or perp2 >= R_test * R_test:
            self._side = 0.0
            return self.target
        # Steer along the tangent direction, with a fixed lookahead so the aim
        # point stays ahead even when we sit on the circle. Latch the detour
        # side on entry: near-collinear geometry would otherwise flip it every
        # tick and chatter straight into the obstacle.
        if self._side == 0.0:
            cross = pc[0] * seg[1] - pc[1] * seg[0]
            self._side = 1.0 if cross <= 0.0 else -1.0
        R = min(R_test, dist - 1e-3)
        beta = math.asin(max(-1.0, min(1.0, R / dist)))
        base = math.atan2(pc[1], pc[0])
        ang = base + self._side * beta
        t = math.sqrt(max(d2 - R * R, 0.0))
        return p + max(t, 0.4) * np.array([math.cos(ang), math.sin(ang)])

    def _command(self, tick, s, bounds):
        d = self.target - s.position
        dist = float(np.linalg.norm(d))
        if dist < self.stop_radius:
            return Input(0.0, 0.0)
        aim = self._aim_point(s) - s.position
        ang = _wrap_angle(math.atan2(aim[1], aim[0]) - s.theta)
        w = max(-bounds.omega_max, min(bounds.omega_max, 3.0 * ang))
        v = bounds.v_max * max(0.0, math.cos(ang)) * min(1.0, dist / 0.3)
        return Input(v, w)

    def describe(self):
        return super().describe() | {"target": self.target.tolist()}


class Rammer(GoalSeeker):
    """Aims straight at the obstacle center at full speed."""

    kind = "rammer"

    def __init__(self, obstacle_pos, noise: float = 0.0):
        super().__init__(obstacle_pos, stop_radius=0.0, noise=noise)

    def _command(self, tick, s, bounds):
        d = self.target - s.position
        ang = _wrap_angle(math.atan2(d[1], d[0]) - s.theta)
        w = max(-bounds.omega_max, min(bounds.omega_max, 3.0 * ang))
        return Input(bounds.v_max, w)


class Orbiter(ScriptedDriver):
    """Circles a center point at a set radius; direction +1 = ccw."""

    kind = "orbiter"

    def __init__(self, center, radius: float, direction: int = 1, noise: float = 0.0):
        super().__init__(noise)
        self.center = np.asarray(center, float)
        self.radius = radius
        self.direction = 1 if direction >= 0 else -1

    def _command(self, tick, s, bounds):
        d = s.position - self.center
        dist = float(np.linalg.norm(d))
        if dist < 1e-9:
            return Input(bounds.v_max, 0.0)
        bearing = math.atan2(d[1], d[0])
        # tangent heading, corrected toward the reference circle
        want = bearing + self.direction * (math.pi / 2.0)
        want += max(-0.8, min(0.8, 1.5 * (dist - self.radius))) * self.direction
        ang = _wrap_angle(want - s.theta)
        w = max(-bounds.omega_max, min(bounds.omega_max, 3.0 * ang))
        return Input(bounds.v_max * max(0.2, math.cos(ang)), w)

    def describe(self):
        return super().describe() | {
            "center": self.center.tolist(),
            "radius": self.radius,
            "direction": self.direction,
        }


class WaypointSequence(ScriptedDriver):
    """Chases waypoints in order, advancing within a tolerance."""

    kind = "waypoints"

    def __init__(self, points, tol: float = 0.25, noise: float = 0.0):
        super().__init__(noise)
        self.points = [np.asarray(p, float) for p in points]
        self.tol = tol
        self._idx = 0

    def reset(self, seed):
        super().reset(seed)
        self._idx = 0

    def _command(self, tick, s, bounds):
        while (
            self._idx < len(self.points) - 1
            and np.linalg.norm(self.points[self._idx] - s.position) < self.tol
        ):
            self._idx += 1
        return GoalSeeker(self.points[self._idx], stop_radius=self.tol / 2)._command(
            tick, s, bounds
        )

    def describe(self):
        return super().describe() | {"points": [p.tolist() for p in self.points]}


class ReplayDriver(ScriptedDriver):
    """Feeds back a recorded command stream."""

    kind = "replay"

    def __init__(self, commands):
        super().__init__(0.0)
        self.commands = [Input(float(v), float(w)) for v, w in commands]

    def _command(self, tick, s, bounds):
        if tick >= len(self.commands):
            return Input(0.0, 0.0)
        return self.commands[tick]


def make_driver(kind: str, scenario: Scenario, noise: float = 0.0, **kw) -> ScriptedDriver:
    ob = scenario.obstacles[0]
    if kind == "rammer":
        return Rammer((ob.x, ob.y), noise=noise)
    if kind == "orbiter":
        return Orbiter((ob.x, ob.y), kw.get("radius", ob.radius + 0.8), kw.get("direction", 1), noise)
    if kind == "goal_seeker":
        return GoalSeeker(
            kw.get("target", (ob.x + 2.5, ob.y + 2.5)),
            noise=noise,
            avoid=kw.get("avoid", ob),
            clearance=kw.get("clearance", 0.3),
        )
    if kind == "waypoints":
        return WaypointSequence(kw["points"], kw.get("tol", 0.25), noise)
    raise ValueError(f"unknown driver kind {kind!r}")


# ---- episode loop ----------------------------------------------------------


@dataclass
class TickRecord:
    tick: int
    t: float
    pose: tuple
    u_d: tuple
    u_safe: tuple
    active: int
    rewards: Optional[tuple]
    h: float
    flow_min: float
    terminal: float
    feasible: bool
    intervention: float
    event: Optional[SwitchEvent] = None


@dataclass
class EpisodeLog:
    header: dict
    ticks: list = field(default_factory=list)

    @property
    def min_h(self) -> float:
        return min(r.h for r in self.ticks)

    @property
    def switch_events(self) -> list:
        return [r.event for r in self.ticks if r.event is not None]

    def poses(self) -> np.ndarray:
        return np.array([r.pose for r in self.ticks])

    def commands(self) -> list:
        return [r.u_d for r in self.ticks]

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(json.dumps(self.header) + "\n")
            for r in self.ticks:
                d = {
                    "tick": r.tick,
                    "t": r.t,
                    "pose": list(r.pose),
                    "u_d": list(r.u_d),
                    "u_safe": list(r.u_safe),
                    "active": r.active,
                    "rewards": list(r.rewards) if r.rewards is not None else None,
                    "h": r.h,
                    "margins": {"flow_min": r.flow_min, "terminal": r.terminal},
                    "feasible": r.feasible,
                    "intervention": r.intervention,
                }
                if r.event is not None:
                    d["event"] = {
                        "tick": r.event.tick,
                        "from": r.event.source,
                        "to": r.event.target,
                        "rewards": list(r.event.rewards),
                        "validated": r.event.validated,
                    }
                fh.write(json.dumps(d) + "\n")

    @staticmethod
    def load(path) -> "EpisodeLog":
        with open(path) as fh:
            header = json.loads(fh.readline())
            if header.get("version") != LOG_FORMAT_VERSION:
                raise ValueError("unsupported episode log version")
            ticks = []
            for line in fh:
                d = json.loads(line)
                ev = None
                if "event" in d:
                    e = d["event"]
                    ev = SwitchEvent(
                        e["tick"], e["from"], e["to"], tuple(e["rewards"]), e["validated"]
                    )
                ticks.append(
                    TickRecord(
                        d["tick"],
                        d["t"],
                        tuple(d["pose"]),
                        tuple(d["u_d"]),
                        tuple(d["u_safe"]),
                        d["active"],
                        tuple(d["rewards"]) if d["rewards"] is not None else None,
                        d["h"],
                        d["margins"]["flow_min"],
                        d["margins"]["terminal"],
                        d["feasible"],
                        d["intervention"],
                        ev,
                    )
                )
        return EpisodeLog(header, ticks)


class ScenarioError(ValueError):
    """Episode setup rejected (e.g. start outside the initial policy's C_E)."""


def run_episode(
    sc: Scenario,
    driver: ScriptedDriver,
    model: Optional[RewardModel] = None,
    duration: float = 30.0,
    seed: int = 0,
    forced_schedule: Optional[Callable[[int, State, Input], int]] = None,
    on_tick: Optional[Callable] = None,
) -> EpisodeLog:
    """Run one simulated episode and return its log.

    Without a model the active policy stays at `initial_policy`; with one,
    the switch governor follows the learned rewards. `forced_schedule`
    (data collection) overrides the active policy per tick and bypasses
    the governor.
    """
    cfg, params, gov = sc.filter_cfg, sc.params, sc.governor
    if not membership_check(sc.start, sc.initial_policy, list(sc.obstacles), cfg, params):
        raise ScenarioError(
            "start state fails the flow-margin membership check for the initial policy"
        )
    driver.reset(seed)
    header = {
        "version": LOG_FORMAT_VERSION,
        "scenario": sc.to_dict(),
        "driver": driver.describe(),
        "seed": seed,
        "duration": duration,
        "kernel_backend": _core.backend_name,
        "learned": model is not None,
        "forced": forced_schedule is not None,
    }
    log = EpisodeLog(header)
    history = History()
    ss = SwitchState(sc.initial_policy)
    s = sc.start
    xdot = np.zeros(3)
    n_ticks = int(round(duration / sc.tick_dt))
    obstacles = list(sc.obstacles)

    for tick in range(n_ticks):
        u_d = driver.command(tick, s, sc.bounds)
        gamma = extract_features(s, xdot, u_d, obstacles, sc.goal_horizon)
        history.push(gamma)

        rewards = None
        event = None
        if forced_schedule is not None:
            ss = SwitchState(forced_schedule(tick, s, u_d), 0, ss.last_switch_tick, 0)
        elif model is not None and history.full:
            rewards = model.predict_one(history.window())
            ss, event = governor_step(
                ss, rewards, tick, s, u_d, obstacles, cfg, params, gov
            )

        out: FilterOutput = filter_command(s, u_d, ss.active, obstacles, cfg, params)
        rec = TickRecord(
            tick,
            tick * sc.tick_dt,
            (s.x, s.y, s.theta),
            (u_d.v, u_d.omega),
            (out.u_safe.v, out.u_safe.omega),
            ss.active,
            tuple(float(r) for r in rewards) if rewards is not None else None,
            out.h_now,
            out.min_flow_margin,
            out.terminal_margin,
            out.feasible,
            out.intervention,
            event,
        )
        log.ticks.append(rec)
        if on_tick is not None:
            on_tick(rec, gamma)
        s = step_constant_input(s, out.u_safe, sc.tick_dt)
        xdot = vector_field(s, out.u_safe)
    return log


# ---- dataset collection ----------------------------------------------------


def geometric_label_rule(sc: Scenario, margin: float = 0.05):
    """Default curriculum labeling: the backup maneuver matching the intent.

    Compares the clearance now against the clearance at the commanded-arc
    goal point: opening the gap -> turn-away (0); roughly holding it ->
    straight retreat (1); closing in -> reverse out (2). Both quantities are
    feature-vector entries, so the labels are a learnable function of what
    the estimator actually sees.
    """
    ob = sc.obstacles[0]

    def rule(tick: int, s: State, u_d: Input) -> int:
        h_now = h_distance(s, ob)
        goal = command_goal(s, u_d, sc.goal_horizon)
        h_goal = math.hypot(goal.x - ob.x, goal.y - ob.y) - ob.radius
        if h_goal - h_now > margin:
            return 0
        if h_goal - h_now < -margin:
            return 2
        return 1

    return rule


@dataclass
class CurriculumItem:
    driver: ScriptedDriver
    schedule: Callable[[int, State, Input], int]  # tick, state, command -> label
    start: Optional[State] = None
    duration: float = 30.0


def collect_dataset(
    sc: Scenario,
    curriculum: list,
    episodes_per_item: int = 1,
    seed: int = 0,
    val_fraction: float = 0.2,
) -> Dataset:
    """Run labeled collection episodes; labels double as the forced policy."""
    rows: list = []
    ep_id = 0
    for item in curriculum:
        for rep in range(episodes_per_item):
            ep_seed = seed + 1000 * ep_id
            scenario = sc if item.start is None else _with_start(sc, item.start)
            collected: list = []

            def on_tick(rec, gamma, _ep=ep_id, _out=collected):
                _out.append(
                    DatasetRow(_ep, rec.tick, gamma, rec.active, rec.active)
                )

            run_episode(
                scenario,
                item.driver,
                duration=item.duration,
                seed=ep_seed,
                forced_schedule=item.schedule,
                on_tick=on_tick,
            )
            rows.extend(collected)
            ep_id += 1
    ds = Dataset(NUM_POLICIES, rows)
    ds.split_val_by_episode(val_fraction, seed)
    return ds


def _with_start(sc: Scenario, start: State) -> Scenario:
    d = sc.to_dict()
    d["start"] = [start.x, start.y, start.theta]
    return Scenario.from_dict(d)


def default_curriculum(sc: Scenario, episodes: int = 32, seed: int = 0) -> list:
    """Varied approaches around the obstacle, labeled by the geometric rule."""
    rng = np.random.Generator(np.random.PCG64(seed))
    ob = sc.obstacles[0]
    rule = geometric_label_rule(sc)
    items = []
    for i in range(episodes):
        ang = rng.uniform(0, 2 * math.pi)
        rad = rng.uniform(2.0, 3.2)
        start = State(
            ob.x + rad * math.cos(ang),
            ob.y + rad * math.sin(ang),
            rng.uniform(-math.pi, math.pi),
        )
        style = i % 4
        if style == 0:
            drv: ScriptedDriver = Rammer((ob.x, ob.y), noise=0.02)
        elif style == 1:
            drv = Orbiter((ob.x, ob.y), ob.radius + rng.uniform(0.5, 1.2),
                          1 if i % 8 < 4 else -1, noise=0.02)
        elif style == 2:
            far = rng.uniform(1.8, 3.0)
            out_ang = ang + rng.uniform(-2.2, 2.2)
            drv = GoalSeeker((ob.x + far * math.cos(out_ang), ob.y + far * math.sin(out_ang)), noise=0.02)
        else:
            pts = []
            for _ in range(4):
                a = rng.uniform(0, 2 * math.pi)
                r = rng.uniform(ob.radius + 0.4, 3.0)
                pts.append((ob.x + r * math.cos(a), ob.y + r * math.sin(a)))
            drv = WaypointSequence(pts, noise=0.02)
        items.append(CurriculumItem(drv, rule, start=start, duration=30.0))
    return items


# ---- replay ----------------------------------------------------------------


@dataclass
class ReplayResult:
    log: EpisodeLog
    identical: bool
    first_diff_tick: Optional[int]
    counterfactual: bool


def replay(log: EpisodeLog, model: Optional[RewardModel] = None) -> ReplayResult:
    """Re-drive the recorded command stream through the full pipeline.

    With the same model (or none, matching the original) the state stream
    must reproduce bit-exactly; a different model makes the run
    counterfactual and differences are reported, not failed.
    """
    if log.header.get("version") != LOG_FORMAT_VERSION:
        raise ValueError("episode log version mismatch; refusing to replay")
    if log.header.get("kernel_backend") != _core.backend_name:
        raise ValueError(
            "episode was recorded with a different kernel backend; refusing bit-exact replay"
        )
    sc = Scenario.from_dict(log.header["scenario"])
    counterfactual = (model is not None) != bool(log.header.get("learned"))
    new = run_episode(
        sc,
        ReplayDriver(log.commands()),
        model=model,
        duration=log.header["duration"],
        seed=log.header["seed"],
    )
    first_diff = None
    for a, b in zip(log.ticks, new.ticks):
        if a.pose != b.pose or a.u_safe != b.u_safe or a.active != b.active:
            first_diff = a.tick
            break
    if first_diff is not None and not counterfactual and model is not None:
        # same pipeline but switches may differ if the model differs
        counterfactual = True
    new.header["counterfactual"] = counterfactual
    return ReplayResult(new, first_diff is None, first_diff, counterfactual)
