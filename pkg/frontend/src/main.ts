/**
 * Browser entry point: wires the WebSocket client, input capture, and the
 * canvas render loop together. All state shown comes from server frames;
 * killing and reloading this page never changes the session trajectory.
 */

import { ConsoleClient } from "./client.js";
import {
  applyKey,
  commandFromInput,
  labelFromKey,
  NO_KEYS,
  type GamepadSnapshot,
  type KeySnapshot,
} from "./input.js";
import { render } from "./render.js";
import { applyFrame, initialView, setStatus, type ViewState } from "./view.js";

const PULSE_MS = 600;

function wsUrl(): string {
  const params = new URLSearchParams(location.search);
  const host = params.get("host") ?? location.hostname ?? "127.0.0.1";
  const port = params.get("port") ?? "8766"; // service TCP port + 1
  return `ws://${host}:${port}/`;
}

function gamepadSnapshot(): GamepadSnapshot | null {
  if (typeof navigator === "undefined" || !navigator.getGamepads) return null;
  const gp = Array.from(navigator.getGamepads()).find((g) => g !== null);
  if (!gp) return null;
  return { axes: [gp.axes[0] ?? 0, gp.axes[1] ?? 0], connected: gp.connected };
}

function vibrate(ms: number): void {
  // degrade gracefully: gamepad rumble if exposed, else nothing (the
  // visual pulse always fires)
  if (typeof navigator === "undefined" || !navigator.getGamepads) return;
  const gp = Array.from(navigator.getGamepads()).find((g) => g !== null);
  const actuator = (gp as unknown as { vibrationActuator?: { playEffect?: Function } })
    ?.vibrationActuator;
  actuator?.playEffect?.("dual-rumble", {
    duration: ms,
    strongMagnitude: 0.8,
    weakMagnitude: 0.4,
  });
}

function start(): void {
  const canvas = document.getElementById("console") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;

  let view: ViewState = initialView();
  let keys: KeySnapshot = NO_KEYS;
  let seenPulses = 0;
  let pulseUntil = 0;
  let cmdTimer: number | null = null;

  const client = new ConsoleClient({
    url: wsUrl(),
    makeSocket: (url) => new WebSocket(url) as unknown as import("./client.js").WebSocketLike,
    onFrame: (frame) => {
      view = applyFrame(view, frame);
      if (view.pulseCount > seenPulses) {
        seenPulses = view.pulseCount;
        pulseUntil = performance.now() + PULSE_MS;
        vibrate(PULSE_MS);
      }
      if (frame.type === "config") restartCmdLoop(frame.tick_dt);
    },
    onStatus: (status) => {
      view = setStatus(view, status);
    },
    onParseError: (m) => console.warn("dropped frame:", m),
  });

  function restartCmdLoop(tickDt: number): void {
    if (cmdTimer !== null) clearInterval(cmdTimer);
    cmdTimer = setInterval(() => {
      if (!view.config?.driver) return; // read-only spectator
      const u = commandFromInput(
        { keys, gamepad: gamepadSnapshot() },
        view.config.bounds
      );
      client.sendCmd(u.v, u.omega);
    }, tickDt * 1000) as unknown as number;
  }

  window.addEventListener("keydown", (ev) => {
    const label = labelFromKey(ev.key);
    if (label !== null) {
      client.sendLabel(label);
      return;
    }
    const next = applyKey(keys, ev.key, true);
    if (next !== keys) {
      keys = next;
      ev.preventDefault();
    }
  });
  window.addEventListener("keyup", (ev) => {
    keys = applyKey(keys, ev.key, false);
  });
  window.addEventListener("blur", () => {
    keys = NO_KEYS; // never latch motion while unfocused
  });

  function frame(): void {
    render(ctx, view, {
      width: canvas.width,
      height: canvas.height,
      pulseActive: performance.now() < pulseUntil,
    });
    requestAnimationFrame(frame);
  }

  client.connect();
  requestAnimationFrame(frame);
}

if (typeof document !== "undefined") {
  start();
}
