/**
 * Keyboard/gamepad mapping to velocity commands.
 *
 * Pure functions over an input snapshot so the mapping is unit-testable
 * without a DOM. Commands are always clamped to the advertised bounds; a
 * released input maps to the zero command.
 */

import type { Bounds } from "./protocol.js";

export interface KeySnapshot {
  forward: boolean;
  back: boolean;
  left: boolean;
  right: boolean;
}

export interface GamepadSnapshot {
  /** left stick: x in [-1, 1] (right positive), y in [-1, 1] (up negative) */
  axes: [number, number];
  connected: boolean;
}

export interface InputSnapshot {
  keys: KeySnapshot;
  gamepad: GamepadSnapshot | null;
}

export const NO_KEYS: KeySnapshot = {
  forward: false,
  back: false,
  left: false,
  right: false,
};

const DEADZONE = 0.1;

function clamp(x: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, x)) + 0; // +0 normalizes -0
}

/** Map an input snapshot to a (v, omega) command within bounds. */
export function commandFromInput(
  input: InputSnapshot,
  bounds: Bounds
): { v: number; omega: number } {
  let v = 0;
  let omega = 0;
  const gp = input.gamepad;
  if (gp && gp.connected) {
    const [gx, gy] = gp.axes;
    const x = Math.abs(gx) < DEADZONE ? 0 : gx;
    const y = Math.abs(gy) < DEADZONE ? 0 : gy;
    v = -y * bounds.v_max; // stick up = forward
    omega = -x * bounds.omega_max; // stick left = positive (CCW) turn
  }
  const k = input.keys;
  if (k.forward) v += bounds.v_max;
  if (k.back) v -= bounds.v_max;
  if (k.left) omega += bounds.omega_max;
  if (k.right) omega -= bounds.omega_max;
  return {
    v: clamp(v, -bounds.v_max, bounds.v_max),
    omega: clamp(omega, -bounds.omega_max, bounds.omega_max),
  };
}

const KEY_DIRS: Record<string, keyof KeySnapshot> = {
  ArrowUp: "forward",
  ArrowDown: "back",
  ArrowLeft: "left",
  ArrowRight: "right",
  w: "forward",
  s: "back",
  a: "left",
  d: "right",
  W: "forward",
  S: "back",
  A: "left",
  D: "right",
};

/** Fold a key event into the snapshot; returns the same object if irrelevant. */
export function applyKey(
  keys: KeySnapshot,
  key: string,
  down: boolean
): KeySnapshot {
  const dir = KEY_DIRS[key];
  if (dir === undefined || keys[dir] === down) return keys;
  return { ...keys, [dir]: down };
}

/** Digit keys 0/1/2 label the corresponding backup policy. */
export function labelFromKey(key: string): number | null {
  if (key === "0" || key === "1" || key === "2") return Number(key);
  return null;
}
