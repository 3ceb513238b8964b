/**
 * Canvas rendering: 2.5D orthographic skeleton (side + top projections),
 * rolling strip charts, contact indicators, and numeric readouts. Pure
 * drawing over the store; no simulation-derived values.
 */

import { StateMsg } from "./protocol.js";
import { ConsoleStore, RingBuffer } from "./store.js";

const FOOT_NAMES = ["FR", "FL", "RR", "RL"];

function project(ctx: CanvasRenderingContext2D, w: number, h: number,
                 u: number, v: number, scale: number): [number, number] {
  return [w / 2 + u * scale, h / 2 - v * scale];
}

export function drawSkeleton(ctx: CanvasRenderingContext2D, w: number, h: number,
                             state: StateMsg): void {
  ctx.clearRect(0, 0, w, h);
  const scale = Math.min(w, h) / 2.2;
  const half = w / 2;

  // left half: side view (x up-forward, z up); right half: top view (x, y)
  const panels: Array<{ x0: number; axes: [number, number]; label: string }> = [
    { x0: 0, axes: [0, 2], label: "side (x-z)" },
    { x0: half, axes: [0, 1], label: "top (x-y)" },
  ];
  const baseZ = state.base.pos[2];

  for (const panel of panels) {
    ctx.save();
    ctx.beginPath();
    ctx.rect(panel.x0, 0, half, h);
    ctx.clip();
    const [ax, ay] = panel.axes;
    const cx = panel.x0 + half / 2;
    const toPx = (p: number[]): [number, number] => {
      const u = p[ax];
      const v = ay === 2 ? p[2] + baseZ : p[ay];
      return [cx + u * scale, h * 0.62 - v * scale];
    };

    // ground line in the side view
    if (ay === 2) {
      ctx.strokeStyle = "#555";
      ctx.beginPath();
      ctx.moveTo(panel.x0, h * 0.62);
      ctx.lineTo(panel.x0 + half, h * 0.62);
      ctx.stroke();
    }

    // trunk: oriented segment through the origin of the yaw frame
    const pitch = state.base.rpy[1];
    const trunkHalf = 0.19;
    const dir = ay === 2
      ? [Math.cos(pitch), 0, Math.sin(-pitch)]
      : [1, 0, 0];
    const b0 = toPx([-trunkHalf * dir[0], -trunkHalf * dir[1], baseZ * 0 - trunkHalf * dir[2]]);
    const b1 = toPx([trunkHalf * dir[0], trunkHalf * dir[1], trunkHalf * dir[2]]);
    ctx.strokeStyle = "#8ecae6";
    ctx.lineWidth = 6;
    ctx.beginPath();
    ctx.moveTo(b0[0], b0[1]);
    ctx.lineTo(b1[0], b1[1]);
    ctx.stroke();
    ctx.lineWidth = 1.5;

    // feet with contact state
    state.feet.positions.forEach((p, i) => {
      const [px, py] = toPx(p);
      ctx.fillStyle = state.feet.contact[i] ? "#90be6d" : "#f94144";
      ctx.beginPath();
      ctx.arc(px, py, 5, 0, 2 * Math.PI);
      ctx.fill();
      ctx.fillStyle = "#999";
      ctx.font = "9px monospace";
      ctx.fillText(FOOT_NAMES[i], px + 6, py + 3);
    });

    // arm chain
    if (state.ee.arm_points.length) {
      ctx.strokeStyle = "#f8961e";
      ctx.beginPath();
      const start = toPx(state.ee.arm_points[0]);
      ctx.moveTo(start[0], start[1]);
      for (const p of state.ee.arm_points.slice(1)) {
        const [px, py] = toPx(p);
        ctx.lineTo(px, py);
      }
      ctx.stroke();
    }

    // target (X) vs actual (O) end-effector
    const [tx, ty] = toPx(state.ee.target_xyz);
    ctx.strokeStyle = "#f3722c";
    ctx.beginPath();
    ctx.moveTo(tx - 5, ty - 5); ctx.lineTo(tx + 5, ty + 5);
    ctx.moveTo(tx - 5, ty + 5); ctx.lineTo(tx + 5, ty - 5);
    ctx.stroke();
    const [axp, ayp] = toPx(state.ee.actual_xyz);
    ctx.strokeStyle = "#43aa8b";
    ctx.beginPath();
    ctx.arc(axp, ayp, 6, 0, 2 * Math.PI);
    ctx.stroke();

    ctx.fillStyle = "#777";
    ctx.font = "11px monospace";
    ctx.fillText(panel.label, panel.x0 + 8, 14);
    ctx.restore();
  }
}

export function drawStrip(ctx: CanvasRenderingContext2D, w: number, h: number,
                          buffer: RingBuffer, label: string,
                          showCmd: boolean): void {
  ctx.clearRect(0, 0, w, h);
  const pts = buffer.points();
  ctx.fillStyle = "#777";
  ctx.font = "11px monospace";
  ctx.fillText(label, 6, 12);
  if (pts.length < 2) return;
  const t1 = pts[pts.length - 1].t;
  const t0 = t1 - 10;
  let lo = Infinity;
  let hi = -Infinity;
  for (const p of pts) {
    lo = Math.min(lo, p.act, showCmd ? p.cmd : p.act);
    hi = Math.max(hi, p.act, showCmd ? p.cmd : p.act);
  }
  if (hi - lo < 1e-6) { hi = lo + 1e-6; }
  const px = (t: number) => ((t - t0) / (t1 - t0 || 1)) * (w - 10) + 5;
  const py = (v: number) => h - 6 - ((v - lo) / (hi - lo)) * (h - 24);

  const trace = (key: "cmd" | "act", color: string) => {
    ctx.strokeStyle = color;
    ctx.beginPath();
    let started = false;
    for (const p of pts) {
      const x = px(p.t);
      const y = py(p[key]);
      if (!started) { ctx.moveTo(x, y); started = true; } else { ctx.lineTo(x, y); }
    }
    ctx.stroke();
  };
  if (showCmd) trace("cmd", "#f3722c");
  trace("act", "#43aa8b");
  ctx.fillStyle = "#555";
  ctx.fillText(hi.toFixed(2), w - 46, 12);
  ctx.fillText(lo.toFixed(2), w - 46, h - 4);
}

export function renderReadouts(el: HTMLElement, store: ConsoleStore): void {
  const s = store.latest;
  const d = store.draft;
  const fmt = (v: number) => v.toFixed(3);
  const rows = [
    ["v_x", fmt(d.v_x), s ? fmt(s.cmd.v_x) : "-", s ? fmt(s.base.v_x) : "-"],
    ["omega_z", fmt(d.omega_z), s ? fmt(s.cmd.omega_z) : "-", s ? fmt(s.base.omega_z) : "-"],
    ["l", fmt(d.l), s ? fmt(s.ee.target[0]) : "-", s ? fmt(s.ee.actual[0]) : "-"],
    ["p", fmt(d.p), s ? fmt(s.ee.target[1]) : "-", s ? fmt(s.ee.actual[1]) : "-"],
    ["y", fmt(d.y), s ? fmt(s.ee.target[2]) : "-", s ? fmt(s.ee.actual[2]) : "-"],
    ["alpha", fmt(d.alpha), s ? fmt(s.ee.target[3]) : "-", s ? fmt(s.ee.actual[3]) : "-"],
    ["beta", fmt(d.beta), s ? fmt(s.ee.target[4]) : "-", s ? fmt(s.ee.actual[4]) : "-"],
    ["gamma", fmt(d.gamma), s ? fmt(s.ee.target[5]) : "-", s ? fmt(s.ee.actual[5]) : "-"],
    ["D", "-", "-", s ? fmt(s.distance_error) : "-"],
    ["theta", "-", "-", s ? fmt(s.angle_error) : "-"],
  ];
  el.innerHTML = "<tr><th>dim</th><th>draft</th><th>applied</th><th>actual</th></tr>"
    + rows.map((r) => `<tr><td>${r[0]}</td><td>${r[1]}</td><td>${r[2]}</td><td>${r[3]}</td></tr>`).join("");
}
