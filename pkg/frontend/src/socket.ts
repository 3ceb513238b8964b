/**
 * WebSocket transport with reconnect/backoff and per-direction sequencing.
 *
 * Connection lifecycle: connect -> hello handshake -> streaming. On close
 * or error the socket retries with exponential backoff (0.5 s doubling to
 * 8 s max). Outbound messages always carry a strictly increasing seq.
 */

import { OutMessage, ServerMessage, helloMessage, parseServerMessage } from "./protocol.js";

export type ConnectionStatus =
  | "disconnected"
  | "connecting"
  | "connected"
  | "version_mismatch"
  | "reconnecting";

export interface SocketCallbacks {
  onMessage: (msg: ServerMessage) => void;
  onStatus: (status: ConnectionStatus, detail?: string) => void;
}

export interface SocketLike {
  send(text: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export const BACKOFF_INITIAL_MS = 500;
export const BACKOFF_MAX_MS = 8000;

export function nextBackoff(current: number): number {
  return Math.min(current * 2, BACKOFF_MAX_MS);
}

export class ConsoleSocket {
  private ws: SocketLike | null = null;
  private seq = 0;
  private backoffMs = BACKOFF_INITIAL_MS;
  private closed = false;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private url: string,
    private callbacks: SocketCallbacks,
    private factory: (url: string) => SocketLike =
      (url) => new WebSocket(url) as unknown as SocketLike,
    private scheduler: (fn: () => void, ms: number) => ReturnType<typeof setTimeout> =
      (fn, ms) => setTimeout(fn, ms),
  ) {}

  nextSeq(): number {
    this.seq += 1;
    return this.seq;
  }

  connect(): void {
    this.closed = false;
    this.callbacks.onStatus("connecting");
    this.open();
  }

  private open(): void {
    let ws: SocketLike;
    try {
      ws = this.factory(this.url);
    } catch (err) {
      this.scheduleReconnect(String(err));
      return;
    }
    this.ws = ws;
    ws.onopen = () => {
      this.backoffMs = BACKOFF_INITIAL_MS;
      this.sendRaw(helloMessage(this.nextSeq(), "console"));
    };
    ws.onmessage = (ev) => {
      const msg = parseServerMessage(ev.data);
      if (msg === null) return;
      if (msg.type === "hello_ack") {
        this.callbacks.onStatus("connected");
      }
      if (msg.type === "error" && msg.message.includes("protocol version")) {
        this.callbacks.onStatus("version_mismatch", msg.message);
        this.close();
        return;
      }
      this.callbacks.onMessage(msg);
    };
    ws.onclose = () => {
      if (!this.closed) this.scheduleReconnect("socket closed");
    };
    ws.onerror = () => {
      /* onclose follows and handles retry */
    };
  }

  private scheduleReconnect(detail: string): void {
    if (this.closed) return;
    this.callbacks.onStatus("reconnecting", `${detail}; retry in ${this.backoffMs} ms`);
    this.timer = this.scheduler(() => {
      this.backoffMs = nextBackoff(this.backoffMs);
      this.open();
    }, this.backoffMs);
  }

  send(msg: OutMessage): boolean {
    return this.sendRaw(msg);
  }

  private sendRaw(msg: OutMessage): boolean {
    if (!this.ws) return false;
    try {
      this.ws.send(JSON.stringify(msg));
      return true;
    } catch {
      return false;
    }
  }

  close(): void {
    this.closed = true;
    if (this.timer !== null) clearTimeout(this.timer);
    this.ws?.close();
    this.callbacks.onStatus("disconnected");
  }
}
