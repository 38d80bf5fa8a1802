// Fixed formatting shared by every view. Tests compare table cells against
// the document through these exact functions, so views must never reformat.

export function fmtValue(v: number): string {
  if (!isFinite(v)) return v > 0 ? "inf" : "-inf";
  if (Number.isInteger(v) && Math.abs(v) < 1e15) return String(v);
  return v.toPrecision(6);
}

export function fmtPercent(v: number): string {
  return v.toFixed(1) + "%";
}

export function fmtSubsidy(v: number): string {
  return (100 * v).toFixed(2) + "%";
}

export function percentReduction(baseline: number, value: number): number {
  if (baseline <= 0) return 0;
  return (100 * (baseline - value)) / baseline;
}
