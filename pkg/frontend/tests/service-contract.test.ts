/**
 * End-to-end contract test against the real review service.
 *
 * Stages the synthetic 4-patch / 3-model store, boots `nucurate serve` as a
 * child process, drives a full keyboard session for two raters, and checks
 * that the dashboard renders the service's numbers digit-for-digit.  Then a
 * polygon correction is drawn, submitted, re-fetched and compared contour
 * for contour.
 */

import { spawn, type ChildProcess } from "node:child_process";
import { mkdirSync, mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import {
  ApiError,
  fetchMask,
  fetchNextItem,
  fetchStats,
  submitCorrection,
  submitRating,
  type ServiceConfig,
} from "../src/api.js";
import { contoursEqual, traceContours } from "../src/contours.js";
import { decodeRle, encodeRle, instanceIds, labelMapsEqual, rleToJson } from "../src/labelmap.js";
import { CorrectionDraft, rasterizeDraft } from "../src/polygons.js";
import { ReviewSession } from "../src/review.js";
import { buildStatsView, renderDashboard } from "../src/stats.js";

const PATCHES = ["p1", "p2", "p3", "p4"] as const;
const MODELS = ["a", "b", "c"] as const;

// Same verdict table the service's own suite rates by hand.
const KEYS: Record<string, Record<string, string>> = {
  a: { p1: "g", p2: "g", p3: "b", p4: "m" },
  b: { p1: "g", p2: "b", p3: "b", p4: "m" },
  c: { p1: "b", p2: "b", p3: "b", p4: "g" },
};

const PORT = 8900 + (process.pid % 500);
const BASE = `http://127.0.0.1:${PORT}`;

let dataDir: string;
let server: ChildProcess;
let serverLog = "";

function cfgFor(rater: string): ServiceConfig {
  return { baseUrl: BASE, raterId: rater };
}

function stageStore(): void {
  const patches = join(dataDir, "patches");
  mkdirSync(patches);
  PATCHES.forEach((pid, i) => {
    MODELS.forEach((mid, j) => {
      // Distinct little mask per (patch, model): one 2x2 block, one 1x3 bar.
      const data = new Uint16Array(8 * 8);
      const ox = (i + j) % 5;
      for (const [dx, dy] of [[0, 0], [1, 0], [0, 1], [1, 1]] as Array<[number, number]>) {
        data[(1 + dy) * 8 + ox + dx] = 1;
      }
      for (let dx = 0; dx < 3; dx++) data[5 * 8 + 2 + j + dx] = 2;
      const doc = encodeRle({ width: 8, height: 8, data });
      writeFileSync(join(patches, `${pid}.${mid}.rle.json`), rleToJson(doc));
    });
  });
  writeFileSync(
    join(dataDir, "raters.json"),
    JSON.stringify({ ann: [1], ben: [1], referee: [2] }),
  );
}

async function waitForServer(): Promise<void> {
  for (let attempt = 0; attempt < 60; attempt++) {
    try {
      const response = await fetch(`${BASE}/api/stats`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 250));
  }
  throw new Error(`service never came up on ${BASE}\n${serverLog}`);
}

/** Work the round-1 queue with the keys a human would press. */
async function runScriptedSession(rater: string): Promise<number> {
  const cfg = cfgFor(rater);
  const session = new ReviewSession(
    {
      nextItem: (round) => fetchNextItem(cfg, round),
      submitRating: (sub) => submitRating(cfg, sub),
    },
    1,
  );
  await session.start();
  let pressed = 0;
  while (session.state.phase === "reviewing" && pressed < 50) {
    const item = session.state.item!;
    const key = KEYS[item.model_id]![item.patch_id]!;
    await session.handleKey(key);
    pressed++;
  }
  expect(session.state.phase).toBe("done");
  expect(session.state.pending).toBe(0);
  expect(session.state.rejected).toEqual([]);
  return pressed;
}

/** Pull the agreement cells back out of the rendered dashboard text. */
function renderedAgreementCells(text: string, models: readonly string[]): string[][] {
  const lines = text.split("\n");
  const start = lines.findIndex((l) => l.includes("PAIRWISE AGREEMENT"));
  expect(start).toBeGreaterThan(-1);
  return models.map((model, i) => {
    const row = lines[start + 2 + i]!.trim().split(/\s+/);
    expect(row[0]).toBe(model);
    return row.slice(1);
  });
}

function renderedFusedCounts(text: string): Record<string, string> {
  const lines = text.split("\n");
  const start = lines.findIndex((l) => l.trim() === "fused");
  expect(start).toBeGreaterThan(-1);
  const counts: Record<string, string> = {};
  for (const line of lines.slice(start + 1, start + 4)) {
    const [label, count] = line.trim().split(/\s+/);
    counts[label!] = count!;
  }
  return counts;
}

beforeAll(async () => {
  dataDir = mkdtempSync(join(tmpdir(), "review-ui-"));
  stageStore();
  server = spawn("nucurate", ["serve", "--data", dataDir, "--addr", `127.0.0.1:${PORT}`], {
    stdio: ["ignore", "pipe", "pipe"],
  });
  server.stdout!.on("data", (chunk) => (serverLog += chunk));
  server.stderr!.on("data", (chunk) => (serverLog += chunk));
  await waitForServer();
}, 30000);

afterAll(() => {
  server?.kill("SIGTERM");
  rmSync(dataDir, { recursive: true, force: true });
});

describe("scripted review session against the live service", () => {
  it("rates every queued item for both raters, then hits end-of-queue", async () => {
    expect(await runScriptedSession("ann")).toBe(12);
    expect(await runScriptedSession("ben")).toBe(12);

    // A fresh session now sees an empty queue and stops immediately.
    const cfg = cfgFor("ann");
    const session = new ReviewSession({
      nextItem: (round) => fetchNextItem(cfg, round),
      submitRating: (sub) => submitRating(cfg, sub),
    });
    await session.start();
    expect(session.state.phase).toBe("done");
  }, 30000);

  it("renders fused distribution and agreement grid digit-for-digit from /api/stats", async () => {
    const { payload, text: wire } = await fetchStats(cfgFor("ann"));
    const rendered = renderDashboard(buildStatsView(payload));

    // The wire values for this fixture, computed by hand from the verdicts.
    expect(payload.fused).toEqual({ good: 3, medium: 0, bad: 1 });
    expect(payload.agreement).toEqual({
      models: ["a", "b", "c"],
      values: [
        [1.0, 0.75, 0.25],
        [0.75, 1.0, 0.5],
        [0.25, 0.5, 1.0],
      ],
    });
    expect(payload.complete_patches).toBe(4);
    expect(payload.n_ratings).toBe(24);

    // Digit-for-digit: the characters in the rendered dashboard must equal
    // the numeric literals in the canonical JSON bytes, not merely parse to
    // the same numbers.
    const valuesText = /"values":\[\[(.+?)\]\]/.exec(wire)![1]!;
    const wireCells = valuesText.split("],[").map((row) => row.split(","));
    expect(renderedAgreementCells(rendered, payload.agreement!.models)).toEqual(wireCells);

    const fusedText = /"fused":\{"bad":(\d+),"good":(\d+),"medium":(\d+)\}/.exec(wire)!;
    const fromRender = renderedFusedCounts(rendered);
    expect(fromRender.bad).toBe(fusedText[1]);
    expect(fromRender.good).toBe(fusedText[2]);
    expect(fromRender.medium).toBe(fusedText[3]);
  }, 30000);
});

describe("polygon correction round trip", () => {
  it("rejects a correction for a patch the models did not all rate bad", async () => {
    const draft = new CorrectionDraft("p1", 8, 8);
    draft.addPolygon([{ x: 1, y: 1 }, { x: 4, y: 1 }, { x: 4, y: 4 }, { x: 1, y: 4 }]);
    const map = rasterizeDraft(draft);
    let refused: ApiError | null = null;
    try {
      await submitCorrection(cfgFor("ann"), "p1", encodeRle(map));
    } catch (err) {
      refused = err as ApiError;
    }
    expect(refused).toBeInstanceOf(ApiError);
    expect(refused!.status).toBe(412);
    expect(refused!.detail).toMatch(/consensus-bad/);
    expect(draft.polygons).toHaveLength(1); // draft untouched, still editable
  }, 30000);

  it("round-trips a two-polygon correction to identical contours after re-fetch", async () => {
    const cfg = cfgFor("ann");
    const draft = new CorrectionDraft("p3", 8, 8);
    draft.addPolygon([{ x: 1, y: 1 }, { x: 4, y: 1 }, { x: 4, y: 3 }, { x: 1, y: 3 }]);
    draft.addPolygon([{ x: 5, y: 4 }, { x: 7, y: 4 }, { x: 7, y: 7 }, { x: 5, y: 7 }]);

    const submitted = rasterizeDraft(draft);
    expect(instanceIds(submitted)).toEqual([1, 2]); // two polygons, two instances
    await submitCorrection(cfg, "p3", encodeRle(submitted));

    const refetched = decodeRle(await fetchMask(cfg, "/api/patches/p3/masks/corrected"));
    expect(labelMapsEqual(refetched, submitted)).toBe(true);
    expect(contoursEqual(traceContours(refetched), traceContours(submitted))).toBe(true);

    const { payload } = await fetchStats(cfg);
    expect(payload.corrections).toBe(1);
  }, 30000);
});
