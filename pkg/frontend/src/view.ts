/**
 * View-state reducer.
 *
 * The console is a pure view of the server: this module folds incoming
 * frames into a renderable snapshot and never simulates dynamics. The only
 * derived quantities are presentation (trail, toast expiry, alert-pulse
 * edge trigger).
 */

import type {
  ConfigFrame,
  ServerFrame,
  StateFrame,
  SwitchFrame,
} from "./protocol.js";

export const TRAIL_MAX = 400;
export const TOAST_TICKS = 40; // ~2 s at 20 Hz

/** Trail color per active backup policy (turn-away, retreat, reverse). */
export const POLICY_COLORS = ["#4fc3f7", "#81c784", "#ffb74d"] as const;

export interface TrailPoint {
  x: number;
  y: number;
  active: number;
}

export interface Toast {
  text: string;
  tick: number;
  validated: boolean;
}

export type ConnectionStatus = "connecting" | "open" | "closed";

export interface ViewState {
  config: ConfigFrame | null;
  latest: StateFrame | null;
  trail: TrailPoint[];
  flows: [number, number][][];
  toasts: Toast[];
  status: ConnectionStatus;
  lastError: string | null;
  /** true while h < alert_h; used for the edge trigger */
  inAlert: boolean;
  /** count of downward alert_h crossings; the pulse cue keys off increments */
  pulseCount: number;
}

export function initialView(): ViewState {
  return {
    config: null,
    latest: null,
    trail: [],
    flows: [],
    toasts: [],
    status: "connecting",
    lastError: null,
    inAlert: false,
    pulseCount: 0,
  };
}

export function setStatus(view: ViewState, status: ConnectionStatus): ViewState {
  return { ...view, status };
}

function applyState(view: ViewState, f: StateFrame): ViewState {
  const trail = view.trail.concat([{ x: f.pose[0], y: f.pose[1], active: f.active }]);
  if (trail.length > TRAIL_MAX) trail.splice(0, trail.length - TRAIL_MAX);
  const alertH = view.config?.thresholds.alert_h ?? 0.2;
  const nowAlert = f.h < alertH;
  const pulseCount = view.pulseCount + (nowAlert && !view.inAlert ? 1 : 0);
  const toasts = view.toasts.filter((t) => f.tick - t.tick < TOAST_TICKS);
  return { ...view, latest: f, trail, toasts, inAlert: nowAlert, pulseCount };
}

function applySwitch(view: ViewState, f: SwitchFrame): ViewState {
  const text = `switch ${f.from} → ${f.to}${f.validated ? "" : " (UNVALIDATED)"}`;
  return {
    ...view,
    toasts: view.toasts.concat([{ text, tick: f.tick, validated: f.validated }]),
  };
}

export function applyFrame(view: ViewState, frame: ServerFrame): ViewState {
  switch (frame.type) {
    case "config":
      return { ...view, config: frame, status: "open" };
    case "state":
      return applyState(view, frame);
    case "flows":
      return { ...view, flows: frame.polylines };
    case "switch":
      return applySwitch(view, frame);
    case "error":
      return { ...view, lastError: frame.reason };
  }
}

/** Dial reading shown to the operator: the server's value, verbatim. */
export function dialValue(view: ViewState): number | null {
  return view.latest ? view.latest.dial : null;
}
