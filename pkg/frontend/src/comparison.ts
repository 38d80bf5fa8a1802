// The side-by-side comparison table: one column per
// selected portfolio entry, per-group distance cells straight from the
// document plus percent-reduction cells computed from the server-provided
// baseline. No objective is recomputed client-side.

import { fmtPercent, fmtSubsidy, fmtValue, percentReduction } from "./format.js";
import type { PortfolioDocument } from "./types.js";

export interface ComparisonCell {
  value: string; // document value, fixed formatting
  pct: string | null; // percent reduction vs baseline, null without baseline
}

export interface ComparisonRow {
  label: string;
  cells: ComparisonCell[];
}

export interface ComparisonTable {
  columns: string[];
  groupRows: ComparisonRow[];
  subsidyRow: ComparisonRow;
  desertRow: ComparisonRow | null;
  newSitesRow: ComparisonRow;
  baselineShown: boolean;
}

export function groupLabel(s: number): string {
  return `group ${s}`;
}

export function buildComparisonTable(
  doc: PortfolioDocument,
  selected: number[],
  groupNames?: string[],
): ComparisonTable {
  if (selected.length === 0 || selected.length > 4) {
    throw new Error("select between 1 and 4 entries");
  }
  const entries = selected.map((k) => {
    const e = doc.entries[k];
    if (!e) throw new Error(`entry ${k} out of range`);
    return e;
  });
  const base = doc.baseline;
  const t = entries[0].group_distances.length;
  const groupRows: ComparisonRow[] = [];
  for (let s = 0; s < t; s++) {
    groupRows.push({
      label: groupNames?.[s] ?? groupLabel(s),
      cells: entries.map((e) => ({
        value: fmtValue(e.group_distances[s]),
        pct: base
          ? fmtPercent(percentReduction(base.group_distances[s], e.group_distances[s]))
          : null,
      })),
    });
  }
  const subsidyRow: ComparisonRow = {
    label: "subsidy spent",
    cells: entries.map((e) => ({ value: fmtSubsidy(e.subsidy), pct: null })),
  };
  const desertRow: ComparisonRow | null = entries.every((e) => e.desert_counts)
    ? {
        label: "medical deserts",
        cells: entries.map((e) => ({
          value: fmtValue(e.desert_counts!.total),
          pct:
            base && base.desert_counts
              ? fmtValue(base.desert_counts.total - e.desert_counts!.total)
              : null,
        })),
      }
    : null;
  const newSitesRow: ComparisonRow = {
    label: "new sites",
    cells: entries.map((e) => ({ value: fmtValue(e.new_sites.length), pct: null })),
  };
  return {
    columns: entries.map((e) => e.label),
    groupRows,
    subsidyRow,
    desertRow,
    newSitesRow,
    baselineShown: base !== undefined,
  };
}

export function renderComparisonHTML(table: ComparisonTable): string {
  const head =
    "<tr><th>group</th>" +
    table.columns.map((c) => `<th colspan="2">${c}</th>`).join("") +
    "</tr>";
  const rows = table.groupRows
    .map(
      (r) =>
        `<tr><td>${r.label}</td>` +
        r.cells
          .map((c) => `<td>${c.value}</td><td>${c.pct ?? ""}</td>`)
          .join("") +
        "</tr>",
    )
    .join("");
  const extra = [table.subsidyRow, table.desertRow, table.newSitesRow]
    .filter((r): r is ComparisonRow => r !== null)
    .map(
      (r) =>
        `<tr class="summary"><td>${r.label}</td>` +
        r.cells
          .map((c) => `<td>${c.value}</td><td>${c.pct ?? ""}</td>`)
          .join("") +
        "</tr>",
    )
    .join("");
  return `<table class="comparison"><thead>${head}</thead><tbody>${rows}${extra}</tbody></table>`;
}
