"""Real-time session host and its scripted client.

The server runs the same per-tick pipeline as the headless episode loop at
a fixed 20 Hz, reads driver commands and label presses from sockets, and
broadcasts one `state` frame per tick. The primary wire is newline-
delimited JSON over TCP; a WebSocket bridge speaks the identical messages
to the browser console.

The simulation loop owns all mutable session state; socket I/O lives on
reader/writer threads and talks to the loop only through queues, so no
client can stall a tick.
"""

from __future__ import annotations

import json
import math
import os
import queue
import socket
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _core, minws
from .dynamics import Input, State, step_constant_input, vector_field
from .features import History, extract_features
from .model import RewardModel
from .policies import NUM_POLICIES
from .safety_filter import filter_command
from .switching import SwitchState, step as governor_step
from .training import Dataset, DatasetRow
from .world import EpisodeLog, Scenario, ScriptedDriver, TickRecord, LOG_FORMAT_VERSION
from .switching import membership_check

WIRE_VERSION = 1
COMMAND_TIMEOUT = 0.5  # seconds of cmd silence before the input decays to zero


@dataclass(frozen=True)
class FeedbackThresholds:
    warn_h: float = 0.5
    alert_h: float = 0.2

    def __post_init__(self):
        if not self.alert_h < self.warn_h:
            raise ValueError("alert threshold must sit below warn threshold")


@dataclass
class _Client:
    send_fn: object
    close_fn: object
    outbox: queue.Queue = field(default_factory=lambda: queue.Queue(maxsize=256))
    driver: bool = False
    alive: bool = True


class SessionServer:
    """Hosts one live driving session on a TCP port (+WS bridge on port+1)."""

    def __init__(
        self,
        scenario: Scenario,
        model: Optional[RewardModel] = None,
        port: int = 0,
        thresholds: FeedbackThresholds = FeedbackThresholds(),
        realtime: bool = True,
        ws_bridge: bool = True,
    ):
        self.sc = scenario
        self.model = model
        self.thresholds = thresholds
        self.realtime = realtime
        self._inbound: queue.Queue = queue.Queue()
        self._clients: list[_Client] = []
        self._clients_lock = threading.Lock()
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self.log: Optional[EpisodeLog] = None
        self.live_dataset = Dataset(NUM_POLICIES, [])
        self._pending_label = None

        cfg, params = scenario.filter_cfg, scenario.params
        if not membership_check(
            scenario.start, scenario.initial_policy, list(scenario.obstacles), cfg, params
        ):
            raise ValueError("scenario start fails the initial-policy membership check")

        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind(("127.0.0.1", port))
        self._listener.listen(8)
        self.port = self._listener.getsockname()[1]
        self._ws_listener = None
        if ws_bridge:
            self._ws_listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            self._ws_listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            try:
                self._ws_listener.bind(("127.0.0.1", self.port + 1))
                self._ws_listener.listen(8)
                self.ws_port = self._ws_listener.getsockname()[1]
            except OSError:
                self._ws_listener = None
                self.ws_port = None

    # ---- lifecycle ----------------------------------------------------

    def start(self, duration: Optional[float] = None) -> None:
        self._spawn(self._accept_loop, self._listener, False)
        if self._ws_listener is not None:
            self._spawn(self._accept_loop, self._ws_listener, True)
        self._spawn(self._sim_loop, duration)

    def stop(self) -> None:
        self._stop.set()
        for sock in (self._listener, self._ws_listener):
            if sock is not None:
                try:
                    sock.close()
                except OSError:
                    pass
        with self._clients_lock:
            for c in self._clients:
                c.alive = False
                try:
                    c.close_fn()
                except Exception:
                    pass
        for t in self._threads:
            t.join(timeout=2.0)

    def wait(self, timeout=None) -> None:
        self._threads[-1].join(timeout)

    def _spawn(self, fn, *args) -> None:
        t = threading.Thread(target=fn, args=args, daemon=True)
        t.start()
        self._threads.append(t)

    # ---- socket plumbing ------------------------------------------------

    def _accept_loop(self, listener, is_ws: bool) -> None:
        while not self._stop.is_set():
            try:
                sock, _ = listener.accept()
            except OSError:
                return
            threading.Thread(
                target=self._client_session, args=(sock, is_ws), daemon=True
            ).start()

    def _client_session(self, sock, is_ws: bool) -> None:
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        try:
            if is_ws:
                minws.perform_handshake(sock)
                send = lambda text: minws.send_text(sock, text)
                recv = lambda: minws.recv_text(sock)
            else:
                rfile = sock.makefile("r", encoding="utf-8")
                send = lambda text: sock.sendall((text + "\n").encode())
                recv = lambda: (rfile.readline() or None)
        except (OSError, minws.WebSocketError):
            sock.close()
            return

        client = _Client(send_fn=send, close_fn=sock.close)
        with self._clients_lock:
            client.driver = not any(c.driver for c in self._clients)
            self._clients.append(client)
        self._enqueue(client, self._config_frame(client.driver))

        writer = threading.Thread(target=self._writer_loop, args=(client,), daemon=True)
        writer.start()
        try:
            while not self._stop.is_set():
                line = recv()
                if line is None:
                    break
                line = line.strip()
                if not line:
                    continue
                try:
                    msg = json.loads(line)
                    if not isinstance(msg, dict) or "type" not in msg:
                        raise ValueError("missing type")
                except ValueError as e:
                    self._enqueue(client, {"type": "error", "reason": str(e)})
                    continue
                self._inbound.put((client, msg, time.monotonic()))
        except (OSError, minws.WebSocketError):
            pass
        finally:
            client.alive = False
            with self._clients_lock:
                if client in self._clients:
                    self._clients.remove(client)
            try:
                sock.close()
            except OSError:
                pass

    def _writer_loop(self, client: _Client) -> None:
        while client.alive and not self._stop.is_set():
            try:
                msg = client.outbox.get(timeout=0.25)
            except queue.Empty:
                continue
            try:
                client.send_fn(json.dumps(msg))
            except (OSError, minws.WebSocketError):
                client.alive = False
                return

    def _enqueue(self, client: _Client, msg: dict) -> None:
        try:
            client.outbox.put_nowait(msg)
        except queue.Full:
            pass  # slow client: drop the frame rather than stall the loop

    def _broadcast(self, msg: dict) -> None:
        with self._clients_lock:
            for c in self._clients:
                self._enqueue(c, msg)

    def _config_frame(self, driver: bool) -> dict:
        sc = self.sc
        return {
            "type": "config",
            "version": WIRE_VERSION,
            "driver": driver,
            "m_k": NUM_POLICIES,
            "tick_dt": sc.tick_dt,
            "bounds": {"v_max": sc.bounds.v_max, "omega_max": sc.bounds.omega_max},
            "thresholds": {
                "warn_h": self.thresholds.warn_h,
                "alert_h": self.thresholds.alert_h,
            },
            "scenario": sc.to_dict(),
        }

    def _flow_polylines(self, s, obstacles, cfg, params):
        """Candidate backup-flow polylines for the console overlay (2 Hz)."""
        from .flow import FlowError, integrate_backup_flow
        from .policies import DegenerateGeometryError
        from .safety_filter import nearest_obstacle

        try:
            near = nearest_obstacle(s, obstacles)
        except ValueError:
            return None
        polys = []
        for pid in range(NUM_POLICIES):
            try:
                fl = integrate_backup_flow(s, pid, near, params, cfg.T, cfg.n_tau)
                polys.append([[float(p[0]), float(p[1])] for p in fl.states[:, :2]])
            except (FlowError, DegenerateGeometryError):
                polys.append([])
        return polys

    # ---- simulation loop -------------------------------------------------

    def _sim_loop(self, duration: Optional[float]) -> None:
        sc = self.sc
        cfg, params, gov = sc.filter_cfg, sc.params, sc.governor
        obstacles = list(sc.obstacles)
        s = sc.start
        ss = SwitchState(sc.initial_policy)
        history = History()
        xdot = np.zeros(3)
        u_cmd = Input(0.0, 0.0)
        last_cmd_time = -math.inf
        last_seq = -1
        self.log = EpisodeLog(
            {
                "version": LOG_FORMAT_VERSION,
                "scenario": sc.to_dict(),
                "driver": {"kind": "live"},
                "seed": 0,
                "duration": duration,
                "kernel_backend": _core.backend_name,
                "learned": self.model is not None,
                "forced": False,
            }
        )

        tick = 0
        t0 = time.monotonic()
        next_deadline = t0 + sc.tick_dt
        n_ticks = None if duration is None else int(round(duration / sc.tick_dt))
        while not self._stop.is_set() and (n_ticks is None or tick < n_ticks):
            now = time.monotonic()
            # drain inbound messages
            while True:
                try:
                    client, msg, t_arr = self._inbound.get_nowait()
                except queue.Empty:
                    break
                mtype = msg.get("type")
                if mtype == "cmd" and client.driver:
                    seq = int(msg.get("seq", -1))
                    if seq <= last_seq:
                        continue  # stale
                    last_seq = seq
                    try:
                        u_cmd = Input(float(msg["v"]), float(msg["w"]))
                    except (KeyError, TypeError, ValueError):
                        self._enqueue(client, {"type": "error", "reason": "bad cmd"})
                        continue
                    last_cmd_time = t_arr
                elif mtype == "label":
                    try:
                        lab = int(msg["policy"])
                        if not 0 <= lab < NUM_POLICIES:
                            raise ValueError
                    except (KeyError, TypeError, ValueError):
                        self._enqueue(client, {"type": "error", "reason": "bad label"})
                        continue
                    self._pending_label = (lab, tick)
                elif mtype == "cmd":
                    self._enqueue(client, {"type": "error", "reason": "read-only client"})

            # zero-order hold with decay to rest after sustained silence
            if now - last_cmd_time > COMMAND_TIMEOUT:
                u_d = Input(0.0, 0.0)
            else:
                u_d = u_cmd

            gamma = extract_features(s, xdot, u_d, obstacles, sc.goal_horizon)
            history.push(gamma)
            rewards = None
            event = None
            if self.model is not None and history.full:
                rewards = self.model.predict_one(history.window())
                ss, event = governor_step(
                    ss, rewards, tick, s, u_d, obstacles, cfg, params, gov
                )
            out = filter_command(s, u_d, ss.active, obstacles, cfg, params)

            label = getattr(self, "_pending_label", None)
            if label is not None:
                self.live_dataset.rows.append(
                    DatasetRow(0, tick, gamma, label[0], ss.active)
                )
                self._pending_label = None

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
            self.log.ticks.append(rec)

            frame = {
                "type": "state",
                "tick": tick,
                "t": rec.t,
                "pose": list(rec.pose),
                "u_d": list(rec.u_d),
                "u_safe": list(rec.u_safe),
                "active": rec.active,
                "rewards": list(rec.rewards) if rec.rewards is not None else None,
                "h": rec.h,
                "dial": math.tanh(rec.h),
                "margins": {"flow_min": rec.flow_min, "terminal": rec.terminal},
                "feasible": rec.feasible,
                "ack_seq": last_seq,
            }
            self._broadcast(frame)
            if tick % 10 == 0:
                flows = self._flow_polylines(s, obstacles, cfg, params)
                if flows is not None:
                    self._broadcast({"type": "flows", "tick": tick, "polylines": flows})
            if event is not None:
                self._broadcast(
                    {
                        "type": "switch",
                        "tick": event.tick,
                        "from": event.source,
                        "to": event.target,
                        "rewards": list(event.rewards),
                        "validated": event.validated,
                    }
                )

            s = step_constant_input(s, out.u_safe, sc.tick_dt)
            xdot = vector_field(s, out.u_safe)
            tick += 1
            if self.realtime:
                # hybrid pacing: coarse sleep, then spin through the last few
                # milliseconds — timer wakeup latency here dwarfs tick_dt/10
                delay = next_deadline - time.monotonic() - 0.004
                if delay > 0:
                    time.sleep(delay)
                while time.monotonic() < next_deadline:
                    pass
                next_deadline += sc.tick_dt
        self._stop.set()


# ---- scripted client --------------------------------------------------------


@dataclass
class ClientStats:
    frames: list = field(default_factory=list)  # (arrival monotonic, frame dict)
    rtts: list = field(default_factory=list)  # seq-echo round trips, seconds

    def inter_frame_intervals(self) -> np.ndarray:
        ts = np.array([t for t, _ in self.frames])
        return np.diff(ts)


class ScriptedClient:
    """Drives a live session the way the console would, for tests/acceptance."""

    def __init__(self, host: str, port: int, driver: ScriptedDriver, reconnect: bool = True):
        self.host = host
        self.port = port
        self.driver = driver
        self.reconnect = reconnect
        self.stats = ClientStats()
        self.config: Optional[dict] = None
        self._seq = 0
        self._sent_at: dict = {}

    def run(self, max_frames: Optional[int] = None, duration: Optional[float] = None) -> ClientStats:
        """Consume state frames, answering each with a scripted command."""
        deadline = None if duration is None else time.monotonic() + duration
        backoff = 0.05
        self.driver.reset(0)
        while True:
            try:
                sock = socket.create_connection((self.host, self.port), timeout=2.0)
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                backoff = 0.05
                rfile = sock.makefile("r", encoding="utf-8")
                for line in rfile:
                    now = time.monotonic()
                    msg = json.loads(line)
                    if msg["type"] == "config":
                        self.config = msg
                        continue
                    if msg["type"] != "state":
                        continue
                    self.stats.frames.append((now, msg))
                    ack = msg.get("ack_seq", -1)
                    if ack in self._sent_at:
                        self.stats.rtts.append(now - self._sent_at.pop(ack))
                    pose = msg["pose"]
                    s = State(pose[0], pose[1], pose[2])
                    b = self.config["bounds"]
                    from .dynamics import InputBounds

                    u = self.driver.command(
                        msg["tick"], s, InputBounds(b["v_max"], b["omega_max"])
                    )
                    self._seq += 1
                    self._sent_at[self._seq] = time.monotonic()
                    sock.sendall(
                        (json.dumps({"type": "cmd", "v": u.v, "w": u.omega, "seq": self._seq}) + "\n").encode()
                    )
                    if max_frames is not None and len(self.stats.frames) >= max_frames:
                        sock.close()
                        return self.stats
                    if deadline is not None and now > deadline:
                        sock.close()
                        return self.stats
            except (OSError, json.JSONDecodeError):
                pass
            if not self.reconnect:
                return self.stats
            if deadline is not None and time.monotonic() > deadline:
                return self.stats
            time.sleep(backoff)
            backoff = min(backoff * 2, 1.0)
