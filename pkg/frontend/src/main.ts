/**
 * Console wiring: socket -> store -> panels, plus keyboard jog bindings
 * laid out like a game pad (WASD drives velocity, IJKL/UO the target
 * position, arrow keys the target orientation).
 */

import { CommandField, pushMessage, setCommandMessage, setTargetMessage } from "./protocol.js";
import { ConnectionStatus, ConsoleSocket } from "./socket.js";
import { ConsoleStore, PRESETS } from "./store.js";
import { drawSkeleton, drawStrip, renderReadouts } from "./view.js";

const store = new ConsoleStore();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

const params = new URLSearchParams(window.location.search);
const server = params.get("server")
  ?? `${window.location.protocol === "https:" ? "wss" : "ws"}://${window.location.host}/ws`;

const statusEl = el<HTMLElement>("status");
const warningsEl = el<HTMLElement>("warnings");
const pushMarkerEl = el<HTMLElement>("push-marker");

const socket = new ConsoleSocket(server, {
  onMessage: (msg) => {
    if (msg.type === "state") store.applyState(msg, performance.now());
    else if (msg.type === "ack") store.applyAck(msg);
    else if (msg.type === "hello_ack") {
      statusEl.textContent = `connected: ${msg.embodiment} @ ${msg.control_rate_hz} Hz`;
      statusEl.className = "ok";
    } else if (msg.type === "error") {
      warningsEl.textContent = msg.message;
    }
  },
  onStatus: (status: ConnectionStatus, detail?: string) => {
    if (status === "version_mismatch") {
      statusEl.textContent = `protocol version mismatch: ${detail ?? ""}`;
      statusEl.className = "bad";
    } else if (status !== "connected") {
      statusEl.textContent = status + (detail ? ` (${detail})` : "");
      statusEl.className = status === "reconnecting" ? "warn" : "";
    }
  },
});
socket.connect();

const VEL_FIELDS: CommandField[] = ["v_x", "omega_z"];

function sendDraft(fields: CommandField[]): void {
  const vel: Record<string, number> = {};
  const tgt: Record<string, number> = {};
  for (const f of fields) {
    if (VEL_FIELDS.includes(f)) vel[f] = store.draft[f];
    else tgt[f] = store.draft[f];
  }
  if (Object.keys(vel).length) socket.send(setCommandMessage(socket.nextSeq(), vel));
  if (Object.keys(tgt).length) socket.send(setTargetMessage(socket.nextSeq(), tgt));
}

function jog(field: CommandField, delta: number): void {
  const out = store.jog(field, delta);
  if (out.clipped) {
    warningsEl.textContent = `${field} clipped to ${out.value.toFixed(3)}`;
  }
  sendDraft([field]);
}

const KEY_BINDINGS: Record<string, [CommandField, number]> = {
  w: ["v_x", +0.1], s: ["v_x", -0.1],
  a: ["omega_z", +0.1], d: ["omega_z", -0.1],
  i: ["l", +0.05], k: ["l", -0.05],
  j: ["y", +0.1], l: ["y", -0.1],
  u: ["p", +0.1], o: ["p", -0.1],
  ArrowUp: ["beta", +0.1], ArrowDown: ["beta", -0.1],
  ArrowLeft: ["alpha", +0.1], ArrowRight: ["alpha", -0.1],
  ",": ["gamma", +0.1], ".": ["gamma", -0.1],
};

window.addEventListener("keydown", (ev) => {
  const binding = KEY_BINDINGS[ev.key];
  if (binding) {
    jog(binding[0], binding[1]);
    ev.preventDefault();
  } else if (ev.key === "p") {
    socket.send(pushMessage(socket.nextSeq(), 15, Math.random() * 2 * Math.PI));
    pushMarkerEl.className = "push-on";
    setTimeout(() => { pushMarkerEl.className = ""; }, 400);
  } else if (ev.key === " ") {
    store.setDraft(PRESETS.stand);
    sendDraft(Object.keys(PRESETS.stand) as CommandField[]);
    ev.preventDefault();
  }
});

for (const [name, preset] of Object.entries(PRESETS)) {
  const btn = document.getElementById(`preset-${name}`);
  btn?.addEventListener("click", () => {
    store.setDraft(preset);
    sendDraft(Object.keys(preset) as CommandField[]);
  });
}

el<HTMLButtonElement>("push-btn").addEventListener("click", () => {
  socket.send(pushMessage(socket.nextSeq(), 15, Math.random() * 2 * Math.PI));
  pushMarkerEl.className = "push-on";
  setTimeout(() => { pushMarkerEl.className = ""; }, 400);
});

const skeleton = el<HTMLCanvasElement>("skeleton");
const stripV = el<HTMLCanvasElement>("strip-v");
const stripD = el<HTMLCanvasElement>("strip-d");
const stripT = el<HTMLCanvasElement>("strip-theta");
const readouts = el<HTMLTableElement>("readouts");
const staleEl = el<HTMLElement>("stale");

function frame(): void {
  const now = performance.now();
  staleEl.style.display = store.isStale(now) ? "block" : "none";
  if (store.latest) {
    const ctx = skeleton.getContext("2d")!;
    drawSkeleton(ctx, skeleton.width, skeleton.height, store.latest);
  }
  drawStrip(stripV.getContext("2d")!, stripV.width, stripV.height, store.vPlot,
    "v_x: cmd (orange) vs actual (green), m/s", true);
  drawStrip(stripD.getContext("2d")!, stripD.width, stripD.height, store.dPlot,
    "D: position error, m", false);
  drawStrip(stripT.getContext("2d")!, stripT.width, stripT.height, store.thetaPlot,
    "theta: orientation error, rad", false);
  renderReadouts(readouts, store);
  requestAnimationFrame(frame);
}
requestAnimationFrame(frame);
