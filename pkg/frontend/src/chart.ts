// Sweep-curve parsing and chart geometry as pure data, so the math is
// testable without a DOM; main.ts only turns the geometry into SVG nodes.

export interface CurveRun {
  budget: number;
  repetition: number;
  accuracy: number;
  precision: number;
  coverage: number;
  seed: number | null;
}

export interface CurveMean {
  budget: number;
  accuracy: number;
}

export interface Curve {
  runs: CurveRun[];
  means: CurveMean[];
}

export const CURVE_HEADER = "budget,repetition,accuracy,precision,coverage,seed";

/** Parse the engine's sweep CSV: run rows (numeric repetition) and per-budget
 * aggregate rows (repetition == "mean", empty seed). */
export function parseCurveCsv(text: string): Curve {
  const lines = text
    .split(/\r?\n/)
    .map((line) => line.trim())
    .filter((line) => line.length > 0);
  if (lines.length === 0) return { runs: [], means: [] };
  if (lines[0] !== CURVE_HEADER) {
    throw new Error(`unexpected curve header: ${lines[0]}`);
  }
  const runs: CurveRun[] = [];
  const means: CurveMean[] = [];
  for (const line of lines.slice(1)) {
    const cells = line.split(",");
    if (cells.length !== 6) throw new Error(`malformed curve row: ${line}`);
    const [budget, repetition, accuracy, precision, coverage, seed] = cells;
    if (repetition === "mean") {
      means.push({ budget: Number(budget), accuracy: Number(accuracy) });
    } else {
      runs.push({
        budget: Number(budget),
        repetition: Number(repetition),
        accuracy: Number(accuracy),
        precision: Number(precision),
        coverage: Number(coverage),
        seed: seed === "" ? null : Number(seed),
      });
    }
  }
  means.sort((a, b) => a.budget - b.budget);
  return { runs, means };
}

export interface ChartPoint {
  x: number;
  y: number;
  budget: number;
  repetition: number | "mean";
  accuracy: number;
}

export interface ChartGeometry {
  width: number;
  height: number;
  runPoints: ChartPoint[];
  meanPoints: ChartPoint[];
  meanPath: string; // SVG path through the per-budget means
  xTicks: { x: number; label: string }[];
  yTicks: { y: number; label: string }[];
}

/** Map a curve onto pixel space. Accuracy is always drawn on a fixed [0, 1]
 * axis so charts from different sweeps are comparable. Returns null for an
 * empty curve — the caller renders an explicit empty state. */
export function chartGeometry(curve: Curve, width = 560, height = 320, pad = 40): ChartGeometry | null {
  if (curve.means.length === 0 && curve.runs.length === 0) return null;
  const budgets = [...new Set([...curve.means, ...curve.runs].map((r) => r.budget))].sort(
    (a, b) => a - b,
  );
  const lo = budgets[0];
  const hi = budgets[budgets.length - 1];
  const spanX = hi > lo ? hi - lo : 1;
  const plotW = width - 2 * pad;
  const plotH = height - 2 * pad;
  const x = (budget: number) => pad + ((budget - lo) / spanX) * plotW;
  const y = (accuracy: number) => pad + (1 - accuracy) * plotH;

  const runPoints = curve.runs.map((r) => ({
    x: x(r.budget),
    y: y(r.accuracy),
    budget: r.budget,
    repetition: r.repetition as number | "mean",
    accuracy: r.accuracy,
  }));
  const meanPoints = curve.means.map((m) => ({
    x: x(m.budget),
    y: y(m.accuracy),
    budget: m.budget,
    repetition: "mean" as const,
    accuracy: m.accuracy,
  }));
  const meanPath = meanPoints
    .map((p, i) => `${i === 0 ? "M" : "L"}${p.x.toFixed(1)} ${p.y.toFixed(1)}`)
    .join(" ");
  return {
    width,
    height,
    runPoints,
    meanPoints,
    meanPath,
    xTicks: budgets.map((b) => ({ x: x(b), label: String(b) })),
    yTicks: [0, 0.25, 0.5, 0.75, 1].map((v) => ({ y: y(v), label: v.toFixed(2) })),
  };
}
