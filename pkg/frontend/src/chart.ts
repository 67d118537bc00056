/**
 * Dependency-free SVG time-series chart with annotation overlays and a
 * drag-to-select range affordance (used to create annotations and to
 * preview deletions).
 */

import { Annotation, QueryFrame } from "./api.js";
import { fmtTime } from "./state.js";

const SVG_NS = "http://www.w3.org/2000/svg";
const COLORS = ["#2563eb", "#dc2626", "#059669", "#d97706", "#7c3aed", "#0891b2", "#be185d"];

export interface ChartOptions {
  width?: number;
  height?: number;
  from: number;
  to: number;
  annotations?: Annotation[];
  onRangeSelect?: (t0: number, t1: number) => void;
}

function svgEl(tag: string, attrs: Record<string, string>): SVGElement {
  const node = document.createElementNS(SVG_NS, tag) as SVGElement;
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  return node;
}

export function renderChart(frames: QueryFrame[], options: ChartOptions): SVGSVGElement {
  const width = options.width ?? 860;
  const height = options.height ?? 300;
  const pad = { left: 56, right: 12, top: 12, bottom: 26 };
  const svg = svgEl("svg", {
    width: String(width),
    height: String(height),
    viewBox: `0 0 ${width} ${height}`,
    class: "chart",
  }) as SVGSVGElement;

  const innerW = width - pad.left - pad.right;
  const innerH = height - pad.top - pad.bottom;
  const span = Math.max(1, options.to - options.from);
  const xOf = (t: number) => pad.left + ((t - options.from) / span) * innerW;

  let lo = Infinity;
  let hi = -Infinity;
  for (const frame of frames) {
    for (const [, v] of frame.points) {
      if (v < lo) lo = v;
      if (v > hi) hi = v;
    }
  }
  if (!isFinite(lo)) {
    lo = 0;
    hi = 1;
  }
  if (lo === hi) {
    lo -= 1;
    hi += 1;
  }
  const yOf = (v: number) => pad.top + innerH - ((v - lo) / (hi - lo)) * innerH;

  // frame + gridlines
  svg.append(
    svgEl("rect", {
      x: String(pad.left),
      y: String(pad.top),
      width: String(innerW),
      height: String(innerH),
      class: "chart-bg",
    }),
  );
  for (let i = 0; i <= 4; i++) {
    const y = pad.top + (innerH * i) / 4;
    svg.append(
      svgEl("line", {
        x1: String(pad.left),
        x2: String(pad.left + innerW),
        y1: String(y),
        y2: String(y),
        class: "chart-grid",
      }),
    );
    const label = svgEl("text", {
      x: String(pad.left - 6),
      y: String(y + 4),
      "text-anchor": "end",
      class: "chart-axis",
    });
    label.textContent = (hi - ((hi - lo) * i) / 4).toFixed(1);
    svg.append(label);
  }
  for (const [edge, anchor] of [
    [options.from, "start"],
    [options.to, "end"],
  ] as const) {
    const label = svgEl("text", {
      x: String(xOf(edge)),
      y: String(height - 8),
      "text-anchor": anchor,
      class: "chart-axis",
    });
    label.textContent = fmtTime(edge);
    svg.append(label);
  }

  // annotation overlays behind the series lines
  for (const note of options.annotations ?? []) {
    const x0 = Math.max(pad.left, xOf(note.t_from));
    const x1 = Math.min(pad.left + innerW, xOf(Math.max(note.t_to, note.t_from + span / 200)));
    if (x1 <= pad.left || x0 >= pad.left + innerW) continue;
    const band = svgEl("rect", {
      x: String(x0),
      y: String(pad.top),
      width: String(Math.max(2, x1 - x0)),
      height: String(innerH),
      class: "chart-annotation",
      "data-annotation-id": note.id,
    });
    const title = svgEl("title", {});
    title.textContent = note.text;
    band.append(title);
    svg.append(band);
  }

  // series polylines
  frames.forEach((frame, index) => {
    if (!frame.points.length) return;
    const points = frame.points
      .map(([t, v]) => `${xOf(t).toFixed(1)},${yOf(v).toFixed(1)}`)
      .join(" ");
    svg.append(
      svgEl("polyline", {
        points,
        fill: "none",
        stroke: COLORS[index % COLORS.length],
        "stroke-width": "1.5",
        "data-series": frame.series_id,
      }),
    );
  });

  // drag-to-select
  if (options.onRangeSelect) {
    const selection = svgEl("rect", {
      y: String(pad.top),
      height: String(innerH),
      class: "chart-selection",
      width: "0",
      x: "0",
    });
    svg.append(selection);
    let dragFrom: number | null = null;
    const tOf = (event: MouseEvent) => {
      const rect = svg.getBoundingClientRect();
      const x = Math.min(Math.max(event.clientX - rect.left, pad.left), pad.left + innerW);
      return options.from + ((x - pad.left) / innerW) * span;
    };
    svg.addEventListener("mousedown", (event) => {
      dragFrom = tOf(event as MouseEvent);
    });
    svg.addEventListener("mousemove", (event) => {
      if (dragFrom === null) return;
      const current = tOf(event as MouseEvent);
      const x0 = xOf(Math.min(dragFrom, current));
      const x1 = xOf(Math.max(dragFrom, current));
      selection.setAttribute("x", String(x0));
      selection.setAttribute("width", String(x1 - x0));
    });
    svg.addEventListener("mouseup", (event) => {
      if (dragFrom === null) return;
      const end = tOf(event as MouseEvent);
      const t0 = Math.round(Math.min(dragFrom, end));
      const t1 = Math.round(Math.max(dragFrom, end));
      dragFrom = null;
      selection.setAttribute("width", "0");
      if (t1 > t0) options.onRangeSelect!(t0, t1);
    });
  }
  return svg;
}
