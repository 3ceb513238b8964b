/**
 * Wire protocol types and validation, mirroring the server's protocol.md.
 *
 * All guards are hand-rolled so the console ships with zero runtime
 * dependencies; anything that fails a guard is dropped with a reason.
 */

export const PROTOCOL_VERSION = 1;

export interface CommandDraft {
  v_x: number;
  omega_z: number;
  l: number;
  p: number;
  y: number;
  alpha: number;
  beta: number;
  gamma: number;
}

export type CommandField = keyof CommandDraft;

/** Table of command bounds: the client pre-clips exactly like the server. */
export const COMMAND_BOUNDS: Record<CommandField, [number, number]> = {
  v_x: [-1.5, 1.5],
  omega_z: [-1.0, 1.0],
  l: [0.2, 0.8],
  p: [-Math.PI / 2, Math.PI / 2],
  y: [-Math.PI / 2, Math.PI / 2],
  alpha: [-Math.PI / 2, Math.PI / 2],
  beta: [-Math.PI / 2, Math.PI / 2],
  gamma: [-Math.PI / 2, Math.PI / 2],
};

export const PUSH_BOUNDS: [number, number] = [10, 20];

export function clipField(field: CommandField, value: number): { value: number; clipped: boolean } {
  const [lo, hi] = COMMAND_BOUNDS[field];
  const v = Math.min(Math.max(value, lo), hi);
  return { value: v, clipped: v !== value };
}

export interface BaseState {
  pos: number[];
  rpy: number[];
  v_x: number;
  omega_z: number;
}

export interface FootState {
  contact: boolean[];
  forces: number[];
  positions: number[][];
}

export interface EEState {
  actual: number[];
  actual_xyz: number[];
  target: number[];
  target_xyz: number[];
  arm_points: number[][];
}

export interface CommandState {
  v_x: number;
  omega_z: number;
  pitch: number;
  roll: number;
}

export interface StateMsg {
  v: number;
  type: "state";
  seq: number;
  tick: number;
  time: number;
  paused: boolean;
  base: BaseState;
  joints: { q_leg: number[]; qd_leg: number[]; q_arm: number[]; qd_arm: number[] };
  feet: FootState;
  ee: EEState;
  cmd: CommandState;
  distance_error: number;
  angle_error: number;
  reward_terms: Record<string, number>;
  r_loco: number;
  r_arm: number;
}

export interface AckMsg {
  v: number;
  type: "ack";
  seq: number;
  acked_seq: number;
  applied_tick: number;
  clipped: Record<string, [number, number]>;
  projected_orientation: boolean;
}

export interface HelloAckMsg {
  v: number;
  type: "hello_ack";
  seq: number;
  acked_seq: number;
  protocol_version: number;
  embodiment: string;
  control_rate_hz: number;
  stream_rate_hz: number;
  session_seed: number;
}

export interface ErrorMsg {
  v: number;
  type: "error";
  seq: number;
  acked_seq: number;
  message: string;
}

export type ServerMessage = StateMsg | AckMsg | HelloAckMsg | ErrorMsg;

function isNumberArray(x: unknown, n?: number): x is number[] {
  return Array.isArray(x) && (n === undefined || x.length === n)
    && x.every((v) => typeof v === "number" && Number.isFinite(v));
}

export function parseServerMessage(text: string): ServerMessage | null {
  let obj: any;
  try {
    obj = JSON.parse(text);
  } catch {
    return null;
  }
  if (typeof obj !== "object" || obj === null) return null;
  if (typeof obj.seq !== "number") return null;
  switch (obj.type) {
    case "state":
      if (typeof obj.tick !== "number" || typeof obj.time !== "number") return null;
      if (!obj.base || !isNumberArray(obj.base.pos, 3) || !isNumberArray(obj.base.rpy, 3)) return null;
      if (!obj.ee || !isNumberArray(obj.ee.actual, 6) || !isNumberArray(obj.ee.target, 6)) return null;
      if (typeof obj.distance_error !== "number" || typeof obj.angle_error !== "number") return null;
      return obj as StateMsg;
    case "ack":
      if (typeof obj.acked_seq !== "number" || typeof obj.applied_tick !== "number") return null;
      return obj as AckMsg;
    case "hello_ack":
      if (typeof obj.protocol_version !== "number") return null;
      return obj as HelloAckMsg;
    case "error":
      if (typeof obj.message !== "string") return null;
      return obj as ErrorMsg;
    default:
      return null;
  }
}

export interface OutMessage {
  [key: string]: unknown;
  type: string;
  seq: number;
  v: number;
}

export function helloMessage(seq: number, client: string): OutMessage {
  return { v: PROTOCOL_VERSION, type: "hello", seq, protocol_version: PROTOCOL_VERSION, client };
}

export function setCommandMessage(seq: number, fields: Partial<Pick<CommandDraft, "v_x" | "omega_z">>): OutMessage {
  return { v: PROTOCOL_VERSION, type: "set_command", seq, ...fields };
}

export function setTargetMessage(
  seq: number,
  fields: Partial<Pick<CommandDraft, "l" | "p" | "y" | "alpha" | "beta" | "gamma">>,
): OutMessage {
  return { v: PROTOCOL_VERSION, type: "set_target_pose", seq, ...fields };
}

export function pushMessage(seq: number, magnitude: number, direction: number): OutMessage {
  const mag = Math.min(Math.max(magnitude, PUSH_BOUNDS[0]), PUSH_BOUNDS[1]);
  return { v: PROTOCOL_VERSION, type: "push", seq, magnitude: mag, direction };
}
