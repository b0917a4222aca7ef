/** Series geometry for the time charts: windowing, scaling, tick placement. */

import { ChartPoint } from "./store.js";

export interface ChartGeometry {
  /** "x,y x,y ..." for an SVG polyline, already in pixel space. */
  points: string;
  yMin: number;
  yMax: number;
  /** Tick positions in pixel space with their value labels. */
  yTicks: Array<{ y: number; label: string }>;
  xTicks: Array<{ x: number; label: string }>;
}

export const PADDING = 6;

/** Keeps the points inside [now - windowS, now], preserving order. */
export function windowPoints(series: ChartPoint[], now: number, windowS: number): ChartPoint[] {
  const cutoff = now - windowS;
  let start = 0;
  while (start < series.length && series[start].t < cutoff) start += 1;
  return series.slice(start);
}

function formatValue(value: number): string {
  if (Math.abs(value) >= 100 || Number.isInteger(value)) return String(Math.round(value));
  return value.toFixed(1);
}

function formatClock(seconds: number): string {
  const total = Math.max(0, Math.round(seconds));
  const h = Math.floor(total / 3600) % 24;
  const m = Math.floor((total % 3600) / 60);
  return `${String(h).padStart(2, "0")}:${String(m).padStart(2, "0")}`;
}

/**
 * Maps a windowed series onto a width x height viewport.  The y range pads
 * 10% beyond the data so flat series do not hug the frame; a constant series
 * widens to a +/-1 band.  clockOffset shifts x labels to wall-clock time.
 */
export function chartGeometry(
  series: ChartPoint[],
  now: number,
  windowS: number,
  width: number,
  height: number,
  clockOffset = 0,
): ChartGeometry {
  const visible = windowPoints(series, now, windowS);
  let lo = Infinity;
  let hi = -Infinity;
  for (const point of visible) {
    if (point.value < lo) lo = point.value;
    if (point.value > hi) hi = point.value;
  }
  if (visible.length === 0) {
    lo = 0;
    hi = 1;
  } else if (lo === hi) {
    lo -= 1;
    hi += 1;
  } else {
    const pad = (hi - lo) * 0.1;
    lo -= pad;
    hi += pad;
  }
  const innerW = width - 2 * PADDING;
  const innerH = height - 2 * PADDING;
  const x = (t: number) => PADDING + ((t - (now - windowS)) / windowS) * innerW;
  const y = (v: number) => PADDING + (1 - (v - lo) / (hi - lo)) * innerH;
  const points = visible.map((p) => `${x(p.t).toFixed(1)},${y(p.value).toFixed(1)}`).join(" ");

  const yTicks = [lo, (lo + hi) / 2, hi].map((v) => ({ y: y(v), label: formatValue(v) }));
  const xTicks: ChartGeometry["xTicks"] = [];
  for (let i = 0; i <= 4; i += 1) {
    const t = now - windowS + (windowS * i) / 4;
    xTicks.push({ x: x(t), label: formatClock(clockOffset + t) });
  }
  return { points, yMin: lo, yMax: hi, yTicks, xTicks };
}
