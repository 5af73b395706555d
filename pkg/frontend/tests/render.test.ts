import { describe, expect, it } from "vitest";
import type { ConfigFrame, StateFrame } from "../src/protocol.js";
import { render, type Ctx2D } from "../src/render.js";
import { applyFrame, initialView } from "../src/view.js";

/** Records every draw call so tests can assert on what was rendered. */
class RecordingCtx implements Ctx2D {
  fillStyle: string | CanvasGradient | CanvasPattern = "";
  strokeStyle: string | CanvasGradient | CanvasPattern = "";
  lineWidth = 0;
  globalAlpha = 1;
  font = "";
  textAlign: CanvasTextAlign = "left";
  calls: Array<[string, ...unknown[]]> = [];
  texts: string[] = [];
  private rec(name: string, ...args: unknown[]): void {
    this.calls.push([name, ...args]);
  }
  beginPath(): void { this.rec("beginPath"); }
  closePath(): void { this.rec("closePath"); }
  arc(...a: number[]): void { this.rec("arc", ...a); }
  moveTo(...a: number[]): void { this.rec("moveTo", ...a); }
  lineTo(...a: number[]): void { this.rec("lineTo", ...a); }
  rect(...a: number[]): void { this.rec("rect", ...a); }
  stroke(): void { this.rec("stroke"); }
  fill(): void { this.rec("fill"); }
  fillRect(...a: number[]): void { this.rec("fillRect", ...a); }
  strokeRect(...a: number[]): void { this.rec("strokeRect", ...a); }
  clearRect(...a: number[]): void { this.rec("clearRect", ...a); }
  fillText(text: string, x: number, y: number): void {
    this.texts.push(text);
    this.rec("fillText", text, x, y);
  }
  save(): void { this.rec("save"); }
  restore(): void { this.rec("restore"); }
  translate(...a: number[]): void { this.rec("translate", ...a); }
  rotate(...a: number[]): void { this.rec("rotate", ...a); }
}

const config: ConfigFrame = {
  type: "config",
  version: 1,
  driver: true,
  m_k: 3,
  tick_dt: 0.05,
  bounds: { v_max: 0.5, omega_max: 1.0 },
  thresholds: { warn_h: 0.5, alert_h: 0.2 },
  scenario: { arena: [8, 8], obstacles: [[0, 0, 0.5, 0, 0]] },
};

const state: StateFrame = {
  type: "state",
  tick: 3,
  t: 0.15,
  pose: [1, 1, 0.3],
  u_d: [0.5, 0],
  u_safe: [0.4, 0],
  active: 1,
  rewards: [0.2, 0.7, 0.1],
  h: 0.345678,
  dial: Math.tanh(0.345678),
  margins: { flow_min: 0.3, terminal: 0.2 },
  feasible: true,
  ack_seq: -1,
};

const opts = { width: 720, height: 720, pulseActive: false };

describe("render", () => {
  it("prints the dial value exactly as broadcast", () => {
    let v = applyFrame(initialView(), config);
    v = applyFrame(v, state);
    const ctx = new RecordingCtx();
    render(ctx, v, opts);
    expect(ctx.texts).toContain(Math.tanh(0.345678).toFixed(3));
  });

  it("draws the obstacle disk at the scenario radius", () => {
    const v = applyFrame(initialView(), config);
    const ctx = new RecordingCtx();
    render(ctx, v, opts);
    const arcs = ctx.calls.filter((c) => c[0] === "arc");
    // scale = (720 - 40) / 8 = 85 px/m ⇒ obstacle r = 42.5 px at center
    const obstacle = arcs.find(
      (c) => c[1] === 360 && c[2] === 360 && Math.abs((c[3] as number) - 42.5) < 1e-9
    );
    expect(obstacle).toBeDefined();
  });

  it("shows the disconnect overlay only when not open", () => {
    let v = applyFrame(initialView(), config);
    v = applyFrame(v, state);
    const open = new RecordingCtx();
    render(open, v, opts);
    expect(open.texts.join(" ")).not.toContain("disconnected");
    const closed = new RecordingCtx();
    render(closed, { ...v, status: "closed" }, opts);
    expect(closed.texts.join(" ")).toContain("disconnected");
  });

  it("draws the pulse border only while the pulse is active", () => {
    let v = applyFrame(initialView(), config);
    v = applyFrame(v, state);
    const quiet = new RecordingCtx();
    render(quiet, v, opts);
    const border = (ctx: RecordingCtx) =>
      ctx.calls.some((c) => c[0] === "strokeRect" && c[1] === 4 && c[2] === 4);
    expect(border(quiet)).toBe(false);
    const pulsing = new RecordingCtx();
    render(pulsing, v, { ...opts, pulseActive: true });
    expect(border(pulsing)).toBe(true);
  });

  it("renders one reward bar per policy plus switch toasts", () => {
    let v = applyFrame(initialView(), config);
    v = applyFrame(v, state);
    v = applyFrame(v, {
      type: "switch",
      tick: 3,
      from: 0,
      to: 1,
      rewards: [0.2, 0.7, 0.1],
      validated: true,
    });
    const ctx = new RecordingCtx();
    render(ctx, v, opts);
    expect(ctx.texts).toContain("0");
    expect(ctx.texts).toContain("1");
    expect(ctx.texts).toContain("2");
    expect(ctx.texts.some((t) => t.includes("switch 0 → 1"))).toBe(true);
  });
});
