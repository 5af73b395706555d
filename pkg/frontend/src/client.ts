/**
 * Reconnecting WebSocket client for the session service.
 *
 * The WebSocket constructor is injectable so tests can drive the client
 * with a fake. Frames are parsed/validated before they reach the caller;
 * malformed frames are surfaced through onParseError and ignored.
 */

import { buildCmd, buildLabel, parseFrame, type ServerFrame } from "./protocol.js";

export interface WebSocketLike {
  readyState: number;
  onopen: ((ev: unknown) => void) | null;
  onclose: ((ev: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onerror: ((ev: unknown) => void) | null;
  send(data: string): void;
  close(): void;
}

export type WebSocketFactory = (url: string) => WebSocketLike;

const WS_OPEN = 1;

export interface ConsoleClientOpts {
  url: string;
  makeSocket: WebSocketFactory;
  onFrame: (frame: ServerFrame) => void;
  onStatus: (status: "connecting" | "open" | "closed") => void;
  onParseError?: (message: string) => void;
  /** initial reconnect delay in ms; doubles up to maxBackoffMs */
  backoffMs?: number;
  maxBackoffMs?: number;
  setTimeoutFn?: (fn: () => void, ms: number) => unknown;
}

export class ConsoleClient {
  private sock: WebSocketLike | null = null;
  private seq = 0;
  private backoff: number;
  private readonly initialBackoff: number;
  private readonly maxBackoff: number;
  private stopped = false;
  private readonly setTimeoutFn: (fn: () => void, ms: number) => unknown;

  constructor(private readonly opts: ConsoleClientOpts) {
    this.initialBackoff = opts.backoffMs ?? 250;
    this.maxBackoff = opts.maxBackoffMs ?? 4000;
    this.backoff = this.initialBackoff;
    this.setTimeoutFn = opts.setTimeoutFn ?? ((fn, ms) => setTimeout(fn, ms));
  }

  connect(): void {
    if (this.stopped) return;
    this.opts.onStatus("connecting");
    const sock = this.opts.makeSocket(this.opts.url);
    this.sock = sock;
    sock.onopen = () => {
      this.backoff = this.initialBackoff;
      this.opts.onStatus("open");
    };
    sock.onmessage = (ev) => {
      try {
        this.opts.onFrame(parseFrame(String(ev.data)));
      } catch (e) {
        this.opts.onParseError?.(e instanceof Error ? e.message : String(e));
      }
    };
    sock.onclose = () => this.scheduleReconnect();
    sock.onerror = () => {
      /* onclose follows; nothing to do */
    };
  }

  private scheduleReconnect(): void {
    if (this.stopped) return;
    this.opts.onStatus("closed");
    this.sock = null;
    const delay = this.backoff;
    this.backoff = Math.min(this.backoff * 2, this.maxBackoff);
    this.setTimeoutFn(() => this.connect(), delay);
  }

  /** Send a velocity command; returns the sequence number or null if offline. */
  sendCmd(v: number, omega: number): number | null {
    const s = this.sock;
    if (!s || s.readyState !== WS_OPEN) return null;
    this.seq += 1;
    s.send(buildCmd(v, omega, this.seq));
    return this.seq;
  }

  sendLabel(policy: number): boolean {
    const s = this.sock;
    if (!s || s.readyState !== WS_OPEN) return false;
    s.send(buildLabel(policy));
    return true;
  }

  close(): void {
    this.stopped = true;
    this.sock?.close();
    this.sock = null;
  }
}
