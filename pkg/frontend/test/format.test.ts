import { describe, expect, it } from "vitest";

import { KnobPrediction } from "../src/api.js";
import {
  barWidths,
  distributionSum,
  formatDelta,
  formatProbability,
  formatValue,
} from "../src/format.js";

const rec: KnobPrediction = {
  action: "INC",
  p_same: 0.2,
  p_increase: 0.72,
  p_decrease: 0.08,
  tau: 0.5,
  change_probability: 0.8,
};

describe("formatting", () => {
  it("renders probabilities as percentages", () => {
    expect(formatProbability(0.72)).toBe("72.0%");
    expect(formatProbability(0)).toBe("0.0%");
  });

  it("bar widths mirror the distribution", () => {
    const widths = barWidths(rec);
    expect(widths.SAME).toBeCloseTo(20, 10);
    expect(widths.INC).toBeCloseTo(72, 10);
    expect(widths.DEC).toBeCloseTo(8, 10);
  });

  it("displayed distribution sums to one within rounding", () => {
    expect(Math.abs(distributionSum(rec) - 1)).toBeLessThan(1e-9);
  });

  it("formats values and deltas", () => {
    expect(formatValue(93.456)).toBe("93.46");
    expect(formatDelta(5)).toBe("+5");
    expect(formatDelta(-2.5)).toBe("-2.5");
    expect(formatValue(Number.NaN)).toBe("—");
  });
});
