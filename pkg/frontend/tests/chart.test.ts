import { describe, expect, it } from "vitest";

import { chartGeometry, PADDING, windowPoints } from "../src/chart.js";
import { ChartPoint } from "../src/store.js";

function ramp(from: number, to: number, step: number, value: (t: number) => number): ChartPoint[] {
  const points: ChartPoint[] = [];
  for (let t = from; t <= to; t += step) points.push({ t, value: value(t) });
  return points;
}

describe("windowPoints", () => {
  it("keeps only the last window, in order", () => {
    const series = ramp(0, 100, 10, (t) => t);
    const visible = windowPoints(series, 100, 30);
    expect(visible.map((p) => p.t)).toEqual([70, 80, 90, 100]);
  });

  it("returns everything when the window covers the series", () => {
    const series = ramp(0, 20, 5, (t) => t);
    expect(windowPoints(series, 20, 3600).length).toBe(series.length);
  });
});

describe("chartGeometry", () => {
  it("pads the y range by a tenth of the spread", () => {
    const geom = chartGeometry(ramp(0, 60, 10, (t) => 10 + t / 6), 60, 3600, 320, 120);
    expect(geom.yMin).toBeCloseTo(10 - 1, 9);
    expect(geom.yMax).toBeCloseTo(20 + 1, 9);
  });

  it("widens a flat series to a unit band", () => {
    const geom = chartGeometry(ramp(0, 60, 10, () => 42), 60, 3600, 320, 120);
    expect(geom.yMin).toBe(41);
    expect(geom.yMax).toBe(43);
  });

  it("survives an empty series", () => {
    const geom = chartGeometry([], 0, 3600, 320, 120);
    expect(geom.points).toBe("");
    expect(geom.yMin).toBe(0);
    expect(geom.yMax).toBe(1);
    expect(geom.xTicks.length).toBe(5);
  });

  it("pins the newest point to the right edge and extremes to the frame", () => {
    const series = ramp(0, 3600, 600, (t) => t / 3600);
    const geom = chartGeometry(series, 3600, 3600, 320, 120);
    const coords = geom.points.split(" ").map((pair) => pair.split(",").map(Number));
    expect(coords[0][0]).toBeCloseTo(PADDING, 1);
    expect(coords[coords.length - 1][0]).toBeCloseTo(320 - PADDING, 1);
    // Highest value maps to the top inner edge, lowest to the bottom.
    expect(coords[coords.length - 1][1]).toBeGreaterThanOrEqual(PADDING);
    expect(coords[0][1]).toBeLessThanOrEqual(120 - PADDING);
  });

  it("labels x ticks as wall clock using the start offset", () => {
    // Run started at 08:00:00; the window ends one hour in.
    const geom = chartGeometry([], 3600, 3600, 320, 120, 8 * 3600);
    expect(geom.xTicks[0].label).toBe("08:00");
    expect(geom.xTicks[4].label).toBe("09:00");
    expect(geom.xTicks[2].label).toBe("08:30");
  });

  it("wraps clock labels past midnight", () => {
    const geom = chartGeometry([], 7200, 3600, 320, 120, 23 * 3600);
    expect(geom.xTicks[4].label).toBe("01:00");
  });

  it.each([
    [21.37, "21.4"],
    [150.2, "150"],
    [42, "42"],
    [-0.25, "-0.3"],
  ])("formats tick value %f as %s", (value, label) => {
    const geom = chartGeometry([{ t: 0, value }], 0, 3600, 320, 120);
    // A single point makes a +/-1 band around the value; midpoint is the value.
    expect(geom.yTicks[1].label).toBe(label);
  });
});
