// Small display helpers shared by the UI and checked headlessly in tests.

import { Action, KnobPrediction } from "./api.js";

export const ACTION_LABELS: Record<Action, string> = {
  INC: "Increase",
  DEC: "Decrease",
  SAME: "Same",
};

export function formatProbability(p: number): string {
  return (100 * p).toFixed(1) + "%";
}

export function formatValue(v: number): string {
  if (!Number.isFinite(v)) {
    return "—";
  }
  const abs = Math.abs(v);
  if (abs !== 0 && (abs >= 10000 || abs < 0.001)) {
    return v.toExponential(2);
  }
  return String(Math.round(v * 100) / 100);
}

export function formatDelta(v: number): string {
  const text = formatValue(v);
  return v > 0 ? "+" + text : text;
}

/** Probability bars must visually sum to one within display rounding. */
export function barWidths(rec: KnobPrediction): Record<Action, number> {
  return {
    SAME: 100 * rec.p_same,
    INC: 100 * rec.p_increase,
    DEC: 100 * rec.p_decrease,
  };
}

export function distributionSum(rec: KnobPrediction): number {
  return rec.p_same + rec.p_increase + rec.p_decrease;
}
