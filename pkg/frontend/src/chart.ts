// Loss-vs-alpha chart, rendered as an SVG string (no dependencies, no DOM
// needed, so the mapping from server losses to pixels is unit-testable).
//
// The chart plots the two style-loss series the sweep endpoint reports.
// Every plotted point carries the server's loss value verbatim in a
// data-loss attribute; the UI never recomputes or smooths them.

import type { SweepFrame } from "./api.js";

export interface ChartPoint {
  alpha: number;
  loss: number;
  x: number;
  y: number;
}

export interface ChartSeries {
  a: ChartPoint[];
  b: ChartPoint[];
}

const PAD = 34;

function scale(
  frames: SweepFrame[],
  width: number,
  height: number,
): { x: (alpha: number) => number; y: (loss: number) => number; min: number; max: number } {
  const losses = frames.flatMap((f) => [f.style_loss_a, f.style_loss_b]);
  const min = Math.min(...losses);
  const max = Math.max(...losses);
  const span = max - min || 1;
  return {
    x: (alpha) => PAD + alpha * (width - 2 * PAD),
    y: (loss) => height - PAD - ((loss - min) / span) * (height - 2 * PAD),
    min,
    max,
  };
}

export function chartPoints(frames: SweepFrame[], width = 420, height = 260): ChartSeries {
  if (frames.length === 0) throw new Error("empty sweep");
  const s = scale(frames, width, height);
  const point = (f: SweepFrame, loss: number): ChartPoint => ({
    alpha: f.alpha,
    loss,
    x: s.x(f.alpha),
    y: s.y(loss),
  });
  return {
    a: frames.map((f) => point(f, f.style_loss_a)),
    b: frames.map((f) => point(f, f.style_loss_b)),
  };
}

function polyline(points: ChartPoint[], color: string): string {
  const coords = points.map((p) => `${p.x.toFixed(2)},${p.y.toFixed(2)}`).join(" ");
  return `<polyline fill="none" stroke="${color}" stroke-width="1.5" points="${coords}"/>`;
}

function dots(points: ChartPoint[], color: string, series: string): string {
  return points
    .map(
      (p) =>
        `<circle cx="${p.x.toFixed(2)}" cy="${p.y.toFixed(2)}" r="3" fill="${color}"` +
        ` data-series="${series}" data-alpha="${p.alpha}" data-loss="${p.loss}"/>`,
    )
    .join("");
}

export function lossChartSvg(
  frames: SweepFrame[],
  styleA: string,
  styleB: string,
  width = 420,
  height = 260,
): string {
  const series = chartPoints(frames, width, height);
  const s = scale(frames, width, height);
  const axisColor = "#888";
  const colorA = "#c0392b";
  const colorB = "#2a6db0";
  const parts = [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">`,
    `<line x1="${PAD}" y1="${height - PAD}" x2="${width - PAD}" y2="${height - PAD}" stroke="${axisColor}"/>`,
    `<line x1="${PAD}" y1="${PAD}" x2="${PAD}" y2="${height - PAD}" stroke="${axisColor}"/>`,
    `<text x="${PAD}" y="${height - PAD + 14}" font-size="10" text-anchor="middle">0</text>`,
    `<text x="${width - PAD}" y="${height - PAD + 14}" font-size="10" text-anchor="middle">1</text>`,
    `<text x="${width / 2}" y="${height - 6}" font-size="11" text-anchor="middle">alpha (weight of ${styleA})</text>`,
    `<text x="${PAD - 6}" y="${height - PAD}" font-size="10" text-anchor="end">${s.min.toPrecision(3)}</text>`,
    `<text x="${PAD - 6}" y="${PAD + 4}" font-size="10" text-anchor="end">${s.max.toPrecision(3)}</text>`,
    polyline(series.a, colorA),
    polyline(series.b, colorB),
    dots(series.a, colorA, "a"),
    dots(series.b, colorB, "b"),
    `<text x="${width - PAD}" y="${PAD - 8}" font-size="11" text-anchor="end">` +
      `<tspan fill="${colorA}">loss vs ${styleA}</tspan>  <tspan fill="${colorB}">loss vs ${styleB}</tspan></text>`,
    `</svg>`,
  ];
  return parts.join("");
}
