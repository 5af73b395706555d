/**
 * Canvas rendering of the view state.
 *
 * Pure drawing over a minimal 2D-context interface (Ctx2D) so tests can
 * substitute a recording fake. World coordinates are meters, origin at the
 * arena center, y up; everything drawn comes from server frames.
 */

import type { ViewState } from "./view.js";
import { POLICY_COLORS, dialValue } from "./view.js";

/** The subset of CanvasRenderingContext2D the renderer uses. */
export interface Ctx2D {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  globalAlpha: number;
  font: string;
  textAlign: CanvasTextAlign;
  beginPath(): void;
  closePath(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  rect(x: number, y: number, w: number, h: number): void;
  stroke(): void;
  fill(): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillText(text: string, x: number, y: number): void;
  save(): void;
  restore(): void;
  translate(x: number, y: number): void;
  rotate(angle: number): void;
}

export interface RenderOpts {
  width: number;
  height: number;
  /** monotonically increasing pulse count already consumed by the caller */
  pulseActive: boolean;
}

interface Transform {
  sx: (x: number) => number;
  sy: (y: number) => number;
  sr: (r: number) => number;
}

function worldTransform(view: ViewState, o: RenderOpts): Transform {
  const arena = view.config?.scenario.arena ?? [8, 8];
  const margin = 20;
  const scale = Math.min(
    (o.width - 2 * margin) / arena[0],
    (o.height - 2 * margin) / arena[1]
  );
  return {
    sx: (x) => o.width / 2 + x * scale,
    sy: (y) => o.height / 2 - y * scale,
    sr: (r) => r * scale,
  };
}

function drawArena(ctx: Ctx2D, view: ViewState, t: Transform): void {
  const arena = view.config?.scenario.arena ?? [8, 8];
  ctx.strokeStyle = "#555";
  ctx.lineWidth = 1;
  ctx.strokeRect(
    t.sx(-arena[0] / 2),
    t.sy(arena[1] / 2),
    t.sr(arena[0]),
    t.sr(arena[1])
  );
}

function drawObstacles(ctx: Ctx2D, view: ViewState, t: Transform): void {
  const obs = view.config?.scenario.obstacles ?? [];
  ctx.fillStyle = "#b71c1c";
  for (const ob of obs) {
    const [x, y, r] = ob as [number, number, number];
    ctx.beginPath();
    ctx.arc(t.sx(x), t.sy(y), t.sr(r), 0, 2 * Math.PI);
    ctx.fill();
  }
}

function drawFlows(ctx: Ctx2D, view: ViewState, t: Transform): void {
  view.flows.forEach((poly, pid) => {
    if (poly.length < 2) return;
    ctx.strokeStyle = POLICY_COLORS[pid % POLICY_COLORS.length] as string;
    ctx.lineWidth = 1;
    ctx.globalAlpha = 0.6;
    ctx.beginPath();
    const first = poly[0] as [number, number];
    ctx.moveTo(t.sx(first[0]), t.sy(first[1]));
    for (const p of poly.slice(1)) ctx.lineTo(t.sx(p[0]), t.sy(p[1]));
    ctx.stroke();
    ctx.globalAlpha = 1;
  });
}

function drawTrail(ctx: Ctx2D, view: ViewState, t: Transform): void {
  const trail = view.trail;
  ctx.lineWidth = 2;
  for (let i = 1; i < trail.length; i++) {
    const a = trail[i - 1]!;
    const b = trail[i]!;
    // segment takes the color of the policy active when it was drawn,
    // so the trail changes color exactly at the switch tick
    ctx.strokeStyle = POLICY_COLORS[b.active % POLICY_COLORS.length] as string;
    ctx.beginPath();
    ctx.moveTo(t.sx(a.x), t.sy(a.y));
    ctx.lineTo(t.sx(b.x), t.sy(b.y));
    ctx.stroke();
  }
}

function drawRobot(ctx: Ctx2D, view: ViewState, t: Transform): void {
  const f = view.latest;
  if (!f) return;
  const [x, y, th] = f.pose;
  const size = t.sr(0.15);
  ctx.save();
  ctx.translate(t.sx(x), t.sy(y));
  ctx.rotate(-th); // screen y is flipped
  ctx.fillStyle = POLICY_COLORS[f.active % POLICY_COLORS.length] as string;
  ctx.beginPath();
  ctx.moveTo(size, 0);
  ctx.lineTo(-0.6 * size, 0.5 * size);
  ctx.lineTo(-0.6 * size, -0.5 * size);
  ctx.closePath();
  ctx.fill();
  ctx.restore();
}

function drawDial(ctx: Ctx2D, view: ViewState, o: RenderOpts): void {
  const d = dialValue(view);
  const cx = o.width - 70;
  const cy = 70;
  const r = 40;
  ctx.strokeStyle = "#888";
  ctx.lineWidth = 6;
  ctx.beginPath();
  ctx.arc(cx, cy, r, Math.PI, 2 * Math.PI);
  ctx.stroke();
  if (d === null) return;
  const warn = view.config?.thresholds.warn_h ?? 0.5;
  const alert = view.config?.thresholds.alert_h ?? 0.2;
  const h = view.latest!.h;
  ctx.strokeStyle = h < alert ? "#e53935" : h < warn ? "#fdd835" : "#43a047";
  // dial spans [-1, 1] left-to-right across the half circle
  const ang = Math.PI + ((d + 1) / 2) * Math.PI;
  ctx.beginPath();
  ctx.moveTo(cx, cy);
  ctx.lineTo(cx + r * Math.cos(ang), cy + r * Math.sin(ang));
  ctx.stroke();
  ctx.fillStyle = "#ddd";
  ctx.font = "12px monospace";
  ctx.textAlign = "center";
  ctx.fillText(d.toFixed(3), cx, cy + 16);
}

function drawRewards(ctx: Ctx2D, view: ViewState, o: RenderOpts): void {
  const f = view.latest;
  if (!f || !f.rewards) return;
  const x0 = 20;
  const y0 = o.height - 20;
  const w = 24;
  const hMax = 60;
  f.rewards.forEach((r, i) => {
    ctx.fillStyle = POLICY_COLORS[i % POLICY_COLORS.length] as string;
    ctx.globalAlpha = i === f.active ? 1 : 0.45;
    const hh = Math.max(1, r * hMax);
    ctx.fillRect(x0 + i * (w + 8), y0 - hh, w, hh);
    ctx.globalAlpha = 1;
    ctx.fillStyle = "#ddd";
    ctx.font = "11px monospace";
    ctx.textAlign = "center";
    ctx.fillText(String(i), x0 + i * (w + 8) + w / 2, y0 + 12);
  });
}

function drawToasts(ctx: Ctx2D, view: ViewState, o: RenderOpts): void {
  ctx.font = "13px monospace";
  ctx.textAlign = "left";
  view.toasts.forEach((toast, i) => {
    ctx.fillStyle = toast.validated ? "#aed581" : "#ef5350";
    ctx.fillText(toast.text, 20, 30 + i * 18);
  });
}

function drawOverlays(ctx: Ctx2D, view: ViewState, o: RenderOpts): void {
  if (o.pulseActive) {
    ctx.strokeStyle = "#e53935";
    ctx.lineWidth = 8;
    ctx.strokeRect(4, 4, o.width - 8, o.height - 8);
  }
  if (view.status !== "open") {
    ctx.fillStyle = "#000";
    ctx.globalAlpha = 0.55;
    ctx.fillRect(0, 0, o.width, o.height);
    ctx.globalAlpha = 1;
    ctx.fillStyle = "#fff";
    ctx.font = "18px monospace";
    ctx.textAlign = "center";
    ctx.fillText(
      view.status === "connecting" ? "connecting…" : "disconnected — retrying",
      o.width / 2,
      o.height / 2
    );
  }
  if (view.lastError) {
    ctx.fillStyle = "#ef9a9a";
    ctx.font = "12px monospace";
    ctx.textAlign = "left";
    ctx.fillText(`server: ${view.lastError}`, 20, o.height - 40);
  }
}

/** Draw one frame of the console. */
export function render(ctx: Ctx2D, view: ViewState, o: RenderOpts): void {
  ctx.clearRect(0, 0, o.width, o.height);
  ctx.fillStyle = "#111";
  ctx.fillRect(0, 0, o.width, o.height);
  const t = worldTransform(view, o);
  drawArena(ctx, view, t);
  drawObstacles(ctx, view, t);
  drawFlows(ctx, view, t);
  drawTrail(ctx, view, t);
  drawRobot(ctx, view, t);
  drawDial(ctx, view, o);
  drawRewards(ctx, view, o);
  drawToasts(ctx, view, o);
  drawOverlays(ctx, view, o);
}
