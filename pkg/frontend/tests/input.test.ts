import { describe, expect, it } from "vitest";
import {
  applyKey,
  commandFromInput,
  labelFromKey,
  NO_KEYS,
} from "../src/input.js";

const bounds = { v_max: 0.5, omega_max: 1.0 };

describe("commandFromInput", () => {
  it("maps full forward to (v_max, 0)", () => {
    const u = commandFromInput(
      { keys: { ...NO_KEYS, forward: true }, gamepad: null },
      bounds
    );
    expect(u).toEqual({ v: 0.5, omega: 0 });
  });

  it("maps no input to the zero command", () => {
    expect(commandFromInput({ keys: NO_KEYS, gamepad: null }, bounds)).toEqual({
      v: 0,
      omega: 0,
    });
  });

  it("maps gamepad stick with deadzone and clamping", () => {
    const full = commandFromInput(
      { keys: NO_KEYS, gamepad: { axes: [0, -1], connected: true } },
      bounds
    );
    expect(full.v).toBeCloseTo(0.5, 12);
    const dead = commandFromInput(
      { keys: NO_KEYS, gamepad: { axes: [0.05, -0.05], connected: true } },
      bounds
    );
    expect(dead).toEqual({ v: 0, omega: 0 });
    const stacked = commandFromInput(
      {
        keys: { ...NO_KEYS, forward: true },
        gamepad: { axes: [0, -1], connected: true },
      },
      bounds
    );
    expect(stacked.v).toBe(0.5); // clamped, never exceeds bounds
  });

  it("turn keys map left to +omega_max and right to -omega_max", () => {
    const left = commandFromInput(
      { keys: { ...NO_KEYS, left: true }, gamepad: null },
      bounds
    );
    expect(left.omega).toBe(1.0);
    const right = commandFromInput(
      { keys: { ...NO_KEYS, right: true }, gamepad: null },
      bounds
    );
    expect(right.omega).toBe(-1.0);
  });
});

describe("applyKey", () => {
  it("tracks WASD and arrows, ignoring unrelated keys", () => {
    let k = NO_KEYS;
    k = applyKey(k, "w", true);
    expect(k.forward).toBe(true);
    k = applyKey(k, "ArrowDown", true);
    expect(k.back).toBe(true);
    const same = applyKey(k, "x", true);
    expect(same).toBe(k); // unchanged reference for irrelevant keys
    k = applyKey(k, "w", false);
    expect(k.forward).toBe(false);
  });
});

describe("labelFromKey", () => {
  it("maps only digit keys 0/1/2", () => {
    expect(labelFromKey("0")).toBe(0);
    expect(labelFromKey("1")).toBe(1);
    expect(labelFromKey("2")).toBe(2);
    expect(labelFromKey("3")).toBeNull();
    expect(labelFromKey("w")).toBeNull();
  });
});
