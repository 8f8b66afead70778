import { describe, expect, it } from "vitest";
import type { StatsPayload } from "../src/api.js";
import { buildStatsView, formatServedFloat, renderDashboard } from "../src/stats.js";

// The synthetic 4-patch / 3-model fixture the service suite rates by hand:
// model a (good good bad medium), b (good bad bad medium), c (bad bad bad good).
const FIXTURE: StatsPayload = {
  per_model: {
    a: { good: 2, medium: 1, bad: 1 },
    b: { good: 1, medium: 1, bad: 2 },
    c: { good: 1, medium: 0, bad: 3 },
  },
  fused: { good: 3, medium: 0, bad: 1 },
  agreement: {
    models: ["a", "b", "c"],
    values: [
      [1.0, 0.75, 0.25],
      [0.75, 1.0, 0.5],
      [0.25, 0.5, 1.0],
    ],
  },
  breakdown: { good: { two_agree: 3 }, bad: { all_agree: 1 } },
  complete_patches: 4,
  corrections: 1,
  queue_depths: { round1: 0, round2: 0 },
  n_ratings: 24,
};

const EMPTY: StatsPayload = {
  per_model: { a: { good: 0, medium: 0, bad: 0 } },
  fused: { good: 0, medium: 0, bad: 0 },
  agreement: null,
  breakdown: null,
  complete_patches: 0,
  corrections: 0,
  queue_depths: { round1: 12, round2: 0 },
  n_ratings: 0,
};

describe("formatServedFloat", () => {
  it("prints float-valued integers with a trailing .0 like the wire format", () => {
    expect(formatServedFloat(1)).toBe("1.0");
    expect(formatServedFloat(0)).toBe("0.0");
    expect(formatServedFloat(0.75)).toBe("0.75");
    expect(formatServedFloat(0.5)).toBe("0.5");
    expect(formatServedFloat(1 / 3)).toBe("0.3333333333333333");
  });

  it("pads exponent notation to two digits for very small values", () => {
    expect(formatServedFloat(1 / 12005)).toBe("8.329862557267805e-05");
  });
});

describe("buildStatsView", () => {
  it("copies every number verbatim from the payload", () => {
    const view = buildStatsView(FIXTURE);
    expect(view.rows.map((r) => r.label)).toEqual(["a", "b", "c", "fused"]);
    expect(view.rows[0]!.counts).toEqual({ good: 2, medium: 1, bad: 1 });
    expect(view.rows[3]!.counts).toEqual({ good: 3, medium: 0, bad: 1 });
    expect(view.agreement!.cells).toEqual([
      ["1.0", "0.75", "0.25"],
      ["0.75", "1.0", "0.5"],
      ["0.25", "0.5", "1.0"],
    ]);
    expect(view.breakdown).toEqual([
      { group: "bad", counts: [["all_agree", 1]] },
      { group: "good", counts: [["two_agree", 3]] },
    ]);
    expect(view.completePatches).toBe(4);
    expect(view.nRatings).toBe(24);
  });

  it("scales bars to the row maximum and hides zero bars", () => {
    const view = buildStatsView(FIXTURE);
    const fused = view.rows[3]!;
    expect(fused.bars.good.length).toBeGreaterThan(fused.bars.bad.length);
    expect(fused.bars.medium).toBe("");
    const c = view.rows[2]!;
    expect(c.bars.bad.length).toBeGreaterThan(c.bars.good.length);
  });

  it("renders the empty log as an all-zero dashboard, not an error", () => {
    const view = buildStatsView(EMPTY);
    expect(view.rows[0]!.counts).toEqual({ good: 0, medium: 0, bad: 0 });
    expect(view.agreement).toBeNull();
    const text = renderDashboard(view);
    expect(text).toContain("no complete patches yet");
    expect(text).toMatch(/round1\s+12/);
    expect(text).toContain("ratings recorded 0");
  });
});

describe("renderDashboard", () => {
  it("shows the agreement grid digit-for-digit", () => {
    const text = renderDashboard(buildStatsView(FIXTURE));
    expect(text).toMatch(/a\s+1\.0\s+0\.75\s+0\.25/);
    expect(text).toMatch(/b\s+0\.75\s+1\.0\s+0\.5/);
    expect(text).toMatch(/c\s+0\.25\s+0\.5\s+1\.0/);
  });

  it("is a pure function of the payload: refresh without new data changes nothing", () => {
    const first = renderDashboard(buildStatsView(FIXTURE));
    const second = renderDashboard(buildStatsView(JSON.parse(JSON.stringify(FIXTURE))));
    expect(second).toBe(first);
  });
});
