/**
 * Read-only dashboard over /api/stats.
 *
 * The view-model copies the service's numbers verbatim — counts, fractions
 * and agreement values are formatted, never recomputed.  Bar lengths are the
 * only derived presentation detail.
 */

import type { RatingLabel, StatsPayload } from "./api.js";

export const RATING_ORDER: RatingLabel[] = ["good", "medium", "bad"];

export interface DistributionRow {
  label: string; // model id, or "fused"
  counts: Record<RatingLabel, number>;
  bars: Record<RatingLabel, string>;
}

export interface StatsView {
  rows: DistributionRow[]; // one per model, then the fused row
  agreement: { models: string[]; cells: string[][] } | null;
  breakdown: Array<{ group: string; counts: Array<[string, number]> }> | null;
  completePatches: number;
  corrections: number;
  queueDepths: Array<[string, number]>;
  nRatings: number;
}

const BAR_WIDTH = 30;

/**
 * Render a number the way the service's JSON does: integers unchanged,
 * float-valued integers as "1.0", everything else via the shortest
 * round-trip decimal both sides already agree on.  Keeps the dashboard
 * digit-for-digit equal to the wire payload.
 */
export function formatServedFloat(value: number): string {
  if (Number.isInteger(value)) return value.toFixed(1);
  const abs = Math.abs(value);
  if (abs >= 1e-4 && abs < 1e16) return String(value);
  // Exponent notation: pad the exponent to two digits ("8.3e-05" not "8.3e-5").
  const [mantissa, exponent] = value.toExponential().split("e") as [string, string];
  const sign = exponent.startsWith("-") ? "-" : "+";
  const digits = exponent.replace(/^[+-]/, "").padStart(2, "0");
  return `${mantissa}e${sign}${digits}`;
}

function bar(count: number, max: number): string {
  if (max <= 0 || count <= 0) return "";
  return "#".repeat(Math.max(1, Math.round((count / max) * BAR_WIDTH)));
}

function distributionRow(label: string, counts: Record<RatingLabel, number>): DistributionRow {
  const max = Math.max(...RATING_ORDER.map((r) => counts[r]));
  const bars = {} as Record<RatingLabel, string>;
  for (const r of RATING_ORDER) bars[r] = bar(counts[r], max);
  return { label, counts, bars };
}

export function buildStatsView(payload: StatsPayload): StatsView {
  const rows = Object.keys(payload.per_model)
    .sort()
    .map((model) => distributionRow(model, payload.per_model[model]!));
  rows.push(distributionRow("fused", payload.fused));

  const agreement = payload.agreement
    ? {
        models: [...payload.agreement.models],
        cells: payload.agreement.values.map((row) => row.map(formatServedFloat)),
      }
    : null;

  const breakdown = payload.breakdown
    ? Object.keys(payload.breakdown)
        .sort()
        .map((group) => ({
          group,
          counts: Object.entries(payload.breakdown![group]!).sort(([a], [b]) =>
            a < b ? -1 : a > b ? 1 : 0,
          ),
        }))
    : null;

  return {
    rows,
    agreement,
    breakdown,
    completePatches: payload.complete_patches,
    corrections: payload.corrections,
    queueDepths: Object.entries(payload.queue_depths).sort(([a], [b]) =>
      a < b ? -1 : a > b ? 1 : 0,
    ),
    nRatings: payload.n_ratings,
  };
}

/** Plain-text dashboard; the page drops this into a <pre>. */
export function renderDashboard(view: StatsView): string {
  const lines: string[] = [];
  lines.push("RATING DISTRIBUTION");
  for (const row of view.rows) {
    lines.push(`  ${row.label}`);
    for (const r of RATING_ORDER) {
      const count = row.counts[r];
      lines.push(`    ${r.padEnd(6)} ${String(count).padStart(6)}  ${row.bars[r]}`);
    }
  }
  lines.push("");
  lines.push("PAIRWISE AGREEMENT");
  if (view.agreement === null) {
    lines.push("  (no complete patches yet)");
  } else {
    const { models, cells } = view.agreement;
    const width = Math.max(6, ...cells.flat().map((c) => c.length), ...models.map((m) => m.length));
    lines.push("  " + " ".repeat(width) + " " + models.map((m) => m.padStart(width)).join(" "));
    models.forEach((model, i) => {
      const cellsRow = cells[i]!.map((c) => c.padStart(width)).join(" ");
      lines.push(`  ${model.padEnd(width)} ${cellsRow}`);
    });
  }
  if (view.breakdown !== null) {
    lines.push("");
    lines.push("AGREEMENT BREAKDOWN");
    for (const entry of view.breakdown) {
      const parts = entry.counts.map(([kind, count]) => `${kind}=${count}`).join("  ");
      lines.push(`  ${entry.group.padEnd(6)} ${parts}`);
    }
  }
  lines.push("");
  lines.push("QUEUE");
  for (const [name, depth] of view.queueDepths) {
    lines.push(`  ${name.padEnd(7)} ${String(depth).padStart(6)}`);
  }
  lines.push(`  complete patches ${view.completePatches}`);
  lines.push(`  corrections      ${view.corrections}`);
  lines.push(`  ratings recorded ${view.nRatings}`);
  return lines.join("\n");
}
