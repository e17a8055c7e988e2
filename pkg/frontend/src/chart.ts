/** Dependency-free SVG line charts for the memory view. */

import type { MetricsSeriesVm } from "./state.js";

const W = 560;
const H = 180;
const PAD = 30;

export function linePath(
  points: Array<{ timestampMs: number; value: number }>,
  tMin: number,
  tMax: number,
  vMax: number,
): string {
  if (points.length === 0 || vMax <= 0) return "";
  const spanT = Math.max(tMax - tMin, 1);
  const parts = points.map((p, i) => {
    const x = PAD + ((p.timestampMs - tMin) / spanT) * (W - 2 * PAD);
    const y = H - PAD - (p.value / vMax) * (H - 2 * PAD);
    return `${i === 0 ? "M" : "L"}${x.toFixed(1)},${y.toFixed(1)}`;
  });
  return parts.join(" ");
}

const PALETTE = ["#2f7ed8", "#8bbc21", "#910000", "#1aadce", "#492970", "#f28f43"];

export function memoryChartSvg(series: MetricsSeriesVm[]): string {
  const all = series.flatMap((s) => s.points);
  if (all.length === 0) return "";
  const tMin = Math.min(...all.map((p) => p.timestampMs));
  const tMax = Math.max(...all.map((p) => p.timestampMs));
  const vMax = Math.max(...all.map((p) => p.value)) * 1.1;
  const paths = series
    .map((s, i) => {
      const d = linePath(s.points, tMin, tMax, vMax);
      const color = PALETTE[i % PALETTE.length];
      return `<path d="${d}" fill="none" stroke="${color}" stroke-width="1.5" data-series="${s.pod}"></path>`;
    })
    .join("");
  const legend = series
    .map((s, i) => {
      const color = PALETTE[i % PALETTE.length];
      const gib = s.plateauBytes === null ? "-" : (s.plateauBytes / 1024 ** 3).toFixed(2);
      return `<span class="legend-item"><span class="swatch" style="background:${color}"></span>${s.pod} (${gib} GiB)</span>`;
    })
    .join("");
  return (
    `<svg viewBox="0 0 ${W} ${H}" class="mem-chart" role="img">` +
    `<rect x="${PAD}" y="${PAD}" width="${W - 2 * PAD}" height="${H - 2 * PAD}"` +
    ` fill="none" stroke="#ccc"></rect>${paths}</svg>` +
    `<div class="legend">${legend}</div>`
  );
}
