/**
 * Single state store for the console: latest server state, the command
 * draft (always pre-clipped to the command bounds before sending), clip
 * warnings surfaced from acks, and fixed-capacity plot buffers.
 *
 * The store never derives physics: every displayed quantity is a value the
 * server streamed.
 */

import {
  AckMsg,
  CommandDraft,
  CommandField,
  StateMsg,
  clipField,
} from "./protocol.js";

export const PLOT_WINDOW_S = 10;
export const STALE_AFTER_MS = 200;

export interface PlotPoint {
  t: number;
  cmd: number;
  act: number;
}

export class RingBuffer {
  private data: PlotPoint[] = [];

  constructor(private windowS: number = PLOT_WINDOW_S) {}

  push(point: PlotPoint): void {
    this.data.push(point);
    const cutoff = point.t - this.windowS;
    while (this.data.length && this.data[0].t < cutoff) {
      this.data.shift();
    }
  }

  points(): readonly PlotPoint[] {
    return this.data;
  }

  get length(): number {
    return this.data.length;
  }
}

export interface ClipWarning {
  field: string;
  requested: number;
  applied: number;
  atSeq: number;
}

export class ConsoleStore {
  latest: StateMsg | null = null;
  draft: CommandDraft = {
    v_x: 0, omega_z: 0, l: 0.4, p: 0, y: 0, alpha: 0, beta: 0, gamma: 0,
  };
  clipWarnings: ClipWarning[] = [];
  projectedOrientation = false;
  lastStateWallMs = 0;
  framesReceived = 0;
  vPlot = new RingBuffer();
  dPlot = new RingBuffer();
  thetaPlot = new RingBuffer();

  /** Jog a draft field by delta, pre-clipping client-side; returns new value. */
  jog(field: CommandField, delta: number): { value: number; clipped: boolean } {
    const out = clipField(field, this.draft[field] + delta);
    this.draft[field] = out.value;
    return out;
  }

  /** Replace the full draft, clipping every field. */
  setDraft(values: Partial<CommandDraft>): boolean {
    let anyClipped = false;
    for (const key of Object.keys(values) as CommandField[]) {
      const v = values[key];
      if (v === undefined) continue;
      const out = clipField(key, v);
      this.draft[key] = out.value;
      anyClipped = anyClipped || out.clipped;
    }
    return anyClipped;
  }

  applyState(msg: StateMsg, wallMs: number): void {
    this.latest = msg;
    this.lastStateWallMs = wallMs;
    this.framesReceived += 1;
    this.vPlot.push({ t: msg.time, cmd: msg.cmd.v_x, act: msg.base.v_x });
    this.dPlot.push({ t: msg.time, cmd: 0, act: msg.distance_error });
    this.thetaPlot.push({ t: msg.time, cmd: 0, act: msg.angle_error });
  }

  applyAck(msg: AckMsg): void {
    for (const [field, pair] of Object.entries(msg.clipped ?? {})) {
      this.clipWarnings.push({
        field,
        requested: pair[0],
        applied: pair[1],
        atSeq: msg.acked_seq,
      });
    }
    if (this.clipWarnings.length > 20) {
      this.clipWarnings.splice(0, this.clipWarnings.length - 20);
    }
    this.projectedOrientation = msg.projected_orientation;
  }

  isStale(nowMs: number): boolean {
    return this.lastStateWallMs > 0 && nowMs - this.lastStateWallMs > STALE_AFTER_MS;
  }
}

/** Preset command combinations for discrete-switch driving. */
export const PRESETS: Record<string, Partial<CommandDraft>> = {
  stand: { v_x: 0, omega_z: 0, l: 0.4, p: 0, y: 0, alpha: 0, beta: 0, gamma: 0 },
  walk: { v_x: 0.8, omega_z: 0 },
  reach_high: { v_x: 0, omega_z: 0, l: 0.6, p: 0.9, y: 0, alpha: 0, beta: 0, gamma: 0 },
  reach_low: { v_x: 0, omega_z: 0, l: 0.5, p: -0.6, y: 0.7, alpha: 0.5, beta: 0, gamma: 0 },
};
