// Minimal renderer for the Vega-Lite v5 subset the engine emits:
// mark line/area/bar/point, x/y/color encodings, scale domains, titles.

import type { ChartSpec, EncodingChannel } from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";
const PALETTE = ["#4c78a8", "#f58518", "#54a24b", "#e45756", "#72b7b2", "#b279a2"];

export interface ChartLayout {
  width: number;
  height: number;
  padLeft: number;
  padBottom: number;
  padTop: number;
  padRight: number;
}

export const DEFAULT_LAYOUT: ChartLayout = {
  width: 520,
  height: 260,
  padLeft: 56,
  padBottom: 28,
  padTop: 28,
  padRight: 12,
};

type Scale = (value: unknown) => number;

function coerceNumber(value: unknown, temporal: boolean): number {
  if (typeof value === "number") return value;
  if (temporal && typeof value === "string") {
    const parsed = Date.parse(value.replace(" ", "T") + "Z");
    if (!Number.isNaN(parsed)) return parsed;
  }
  const asNumber = Number(value);
  return Number.isNaN(asNumber) ? 0 : asNumber;
}

/** Linear scale over the channel's domain (computed from data when the
 * spec carries none), mapped onto [r0, r1]. Exported for tests. */
export function linearScale(
  channel: EncodingChannel | undefined,
  values: unknown[],
  r0: number,
  r1: number,
): Scale {
  const temporal = channel?.type === "temporal";
  const domain = channel?.scale?.domain;
  let lo: number;
  let hi: number;
  if (Array.isArray(domain) && domain.length === 2) {
    lo = coerceNumber(domain[0], temporal);
    hi = coerceNumber(domain[1], temporal);
  } else {
    const nums = values.map((v) => coerceNumber(v, temporal));
    lo = Math.min(...nums);
    hi = Math.max(...nums);
  }
  if (!Number.isFinite(lo) || !Number.isFinite(hi)) {
    lo = 0;
    hi = 1;
  }
  const span = hi - lo || 1;
  return (value) => r0 + ((coerceNumber(value, temporal) - lo) / span) * (r1 - r0);
}

function bandScale(categories: string[], r0: number, r1: number): (v: unknown) => [number, number] {
  const step = (r1 - r0) / Math.max(categories.length, 1);
  const index = new Map(categories.map((c, i) => [c, i]));
  return (value) => {
    const i = index.get(String(value)) ?? 0;
    return [r0 + i * step + step * 0.1, step * 0.8];
  };
}

function el(name: string, attrs: Record<string, string>): SVGElement {
  const node = document.createElementNS(SVG_NS, name);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  return node;
}

function markType(spec: ChartSpec): string {
  if (typeof spec.mark === "string") return spec.mark;
  return spec.mark?.type ?? "line";
}

function markOpacity(spec: ChartSpec): string {
  if (typeof spec.mark === "object" && spec.mark && typeof spec.mark.opacity === "number") {
    return String(spec.mark.opacity);
  }
  return "1";
}

function colorFor(spec: ChartSpec, series: string[], key: string): string {
  const declared = spec.encoding?.color?.scale?.domain;
  const order = Array.isArray(declared) ? declared.map(String) : series;
  const idx = order.indexOf(key);
  return PALETTE[(idx < 0 ? 0 : idx) % PALETTE.length];
}

/** Render a chart spec with inline data into an SVG element. */
export function renderChart(spec: ChartSpec, layout: ChartLayout = DEFAULT_LAYOUT): SVGElement {
  const rows = spec.data?.values ?? [];
  const xField = spec.encoding?.x?.field ?? "";
  const yField = spec.encoding?.y?.field ?? "";
  const colorField = spec.encoding?.color?.field;
  const mark = markType(spec);

  const svg = el("svg", {
    width: String(layout.width),
    height: String(layout.height),
    viewBox: `0 0 ${layout.width} ${layout.height}`,
    class: `chart mark-${mark}`,
  }) as SVGSVGElement;
  svg.dataset.mark = mark;
  svg.dataset.points = String(rows.length);

  if (spec.title) {
    const title = el("text", {
      x: String(layout.width / 2),
      y: "18",
      "text-anchor": "middle",
      class: "chart-title",
    });
    title.textContent = String(spec.title);
    svg.appendChild(title);
  }

  const x0 = layout.padLeft;
  const x1 = layout.width - layout.padRight;
  const y0 = layout.height - layout.padBottom;
  const y1 = layout.padTop;

  const axis = el("path", {
    d: `M ${x0} ${y1} L ${x0} ${y0} L ${x1} ${y0}`,
    stroke: "#888",
    fill: "none",
    class: "chart-axes",
  });
  svg.appendChild(axis);
  if (rows.length === 0) return svg;

  const xs = rows.map((r) => r[xField]);
  const ys = rows.map((r) => r[yField]);
  const yScale = linearScale(spec.encoding?.y, ys, y0, y1);

  const seriesKeys = colorField
    ? Array.from(new Set(rows.map((r) => String(r[colorField]))))
    : ["__single__"];
  const bySeries = new Map<string, Record<string, unknown>[]>();
  for (const row of rows) {
    const key = colorField ? String(row[colorField]) : "__single__";
    const bucket = bySeries.get(key);
    if (bucket) bucket.push(row);
    else bySeries.set(key, [row]);
  }

  if (mark === "bar") {
    const band = bandScale(xs.map(String), x0, x1);
    for (const row of rows) {
      const [bx, bw] = band(row[xField]);
      const top = yScale(row[yField]);
      const key = colorField ? String(row[colorField]) : "__single__";
      svg.appendChild(
        el("rect", {
          x: String(bx),
          y: String(Math.min(top, y0)),
          width: String(bw),
          height: String(Math.abs(y0 - top)),
          fill: colorFor(spec, seriesKeys, key),
          opacity: markOpacity(spec),
          class: "chart-bar",
        }),
      );
    }
    return svg;
  }

  const xScale = linearScale(spec.encoding?.x, xs, x0, x1);
  for (const key of seriesKeys) {
    const seriesRows = bySeries.get(key) ?? [];
    const points = seriesRows.map(
      (r) => [xScale(r[xField]), yScale(r[yField])] as [number, number],
    );
    const color = colorFor(spec, seriesKeys, key);
    if (mark === "point") {
      for (const [px, py] of points) {
        svg.appendChild(
          el("circle", { cx: String(px), cy: String(py), r: "2.5", fill: color, class: "chart-point" }),
        );
      }
      continue;
    }
    const line = points.map(([px, py], i) => `${i ? "L" : "M"} ${px} ${py}`).join(" ");
    if (mark === "area") {
      const area = `${line} L ${points[points.length - 1][0]} ${y0} L ${points[0][0]} ${y0} Z`;
      svg.appendChild(
        el("path", { d: area, fill: color, opacity: markOpacity(spec), class: "chart-area" }),
      );
      const wantsLine = typeof spec.mark === "object" && spec.mark?.line === true;
      if (!wantsLine) continue;
    }
    svg.appendChild(
      el("path", { d: line, stroke: color, fill: "none", "stroke-width": "1.5", class: "chart-line" }),
    );
  }
  return svg;
}
