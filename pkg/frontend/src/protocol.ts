/**
 * Wire protocol for the session service.
 *
 * The server speaks newline-delimited JSON over TCP and mirrors the same
 * frames over a WebSocket bridge on port+1. The console consumes frames
 * verbatim and never derives physics from them.
 */

export interface Bounds {
  v_max: number;
  omega_max: number;
}

export interface Thresholds {
  warn_h: number;
  alert_h: number;
}

export interface ConfigFrame {
  type: "config";
  version: number;
  driver: boolean;
  m_k: number;
  tick_dt: number;
  bounds: Bounds;
  thresholds: Thresholds;
  scenario: {
    arena: [number, number];
    /** each obstacle is [x, y, radius, vx, vy] */
    obstacles: number[][];
    [key: string]: unknown;
  };
}

export interface StateFrame {
  type: "state";
  tick: number;
  t: number;
  pose: [number, number, number];
  u_d: [number, number];
  u_safe: [number, number];
  active: number;
  rewards: number[] | null;
  h: number;
  /** server-computed tanh(h); displayed exactly, never recomputed */
  dial: number;
  margins: { flow_min: number; terminal: number };
  feasible: boolean;
  ack_seq: number;
}

export interface FlowsFrame {
  type: "flows";
  tick: number;
  /** one [x, y] polyline per candidate backup policy */
  polylines: [number, number][][];
}

export interface SwitchFrame {
  type: "switch";
  tick: number;
  from: number;
  to: number;
  rewards: number[];
  validated: boolean;
}

export interface ErrorFrame {
  type: "error";
  reason: string;
}

export type ServerFrame =
  | ConfigFrame
  | StateFrame
  | FlowsFrame
  | SwitchFrame
  | ErrorFrame;

export interface CmdFrame {
  type: "cmd";
  v: number;
  w: number;
  seq: number;
}

export interface LabelFrame {
  type: "label";
  policy: number;
}

export class ProtocolError extends Error {}

function need(cond: boolean, what: string): void {
  if (!cond) throw new ProtocolError(`bad frame: ${what}`);
}

const isNum = (x: unknown): x is number =>
  typeof x === "number" && Number.isFinite(x);

/** Parse and validate one server frame from raw JSON text. */
export function parseFrame(text: string): ServerFrame {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch {
    throw new ProtocolError("not JSON");
  }
  need(typeof raw === "object" && raw !== null, "not an object");
  const msg = raw as Record<string, unknown>;
  switch (msg.type) {
    case "config": {
      need(isNum(msg.tick_dt), "config.tick_dt");
      need(typeof msg.driver === "boolean", "config.driver");
      const b = msg.bounds as Record<string, unknown> | undefined;
      need(!!b && isNum(b.v_max) && isNum(b.omega_max), "config.bounds");
      const th = msg.thresholds as Record<string, unknown> | undefined;
      need(!!th && isNum(th.warn_h) && isNum(th.alert_h), "config.thresholds");
      need(typeof msg.scenario === "object" && msg.scenario !== null, "config.scenario");
      return msg as unknown as ConfigFrame;
    }
    case "state": {
      need(isNum(msg.tick) && isNum(msg.h) && isNum(msg.dial), "state core");
      const p = msg.pose;
      need(Array.isArray(p) && p.length === 3 && p.every(isNum), "state.pose");
      need(isNum(msg.active), "state.active");
      return msg as unknown as StateFrame;
    }
    case "flows": {
      need(Array.isArray(msg.polylines), "flows.polylines");
      return msg as unknown as FlowsFrame;
    }
    case "switch": {
      need(isNum(msg.from) && isNum(msg.to) && isNum(msg.tick), "switch");
      need(typeof msg.validated === "boolean", "switch.validated");
      return msg as unknown as SwitchFrame;
    }
    case "error": {
      need(typeof msg.reason === "string", "error.reason");
      return msg as unknown as ErrorFrame;
    }
    default:
      throw new ProtocolError(`unknown type ${String(msg.type)}`);
  }
}

export function buildCmd(v: number, w: number, seq: number): string {
  return JSON.stringify({ type: "cmd", v, w, seq } satisfies CmdFrame);
}

export function buildLabel(policy: number): string {
  if (!Number.isInteger(policy) || policy < 0) {
    throw new ProtocolError(`bad label policy ${policy}`);
  }
  return JSON.stringify({ type: "label", policy } satisfies LabelFrame);
}
