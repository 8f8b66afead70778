/**
 * Browser entry point: wires the canvas, the keyboard and the service client
 * together.  All workflow logic lives in the imported modules; this file is
 * only DOM plumbing.
 *
 * Keys — review:  g/m/b rate, u toggle uncertain, t contours, i image,
 *                 +/- zoom, arrows pan, 0 reset view, c correction mode,
 *                 d stats dashboard
 * Keys — correcting:  click or x add vertex, arrows move cursor,
 *                 enter close polygon, backspace undo, s submit, esc leave
 */

import {
  ApiError,
  fetchMask,
  fetchNextItem,
  fetchStats,
  imageUrl,
  submitCorrection,
  submitRating,
  type ReviewItem,
  type ServiceConfig,
} from "./api.js";
import { decodeRle, encodeRle } from "./labelmap.js";
import {
  createOverlay,
  imageToScreen,
  panBy,
  resetView,
  screenToImage,
  setMask,
  toggleLayer,
  zoomAt,
} from "./overlay.js";
import { CorrectionDraft, rasterizeDraft, validateDraft, type Point } from "./polygons.js";
import { ReviewSession } from "./review.js";
import { buildStatsView, renderDashboard } from "./stats.js";

// Instance stroke colours, reused round-robin by id.
const PALETTE = [
  "#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4",
  "#46f0f0", "#f032e6", "#bcf60c", "#fabebe", "#008080",
];

function config(): ServiceConfig {
  const params = new URLSearchParams(window.location.search);
  return {
    baseUrl: params.get("service") ?? "http://127.0.0.1:8000",
    raterId: params.get("rater") ?? "anonymous",
  };
}

const cfg = config();
const round = Number(new URLSearchParams(window.location.search).get("round") ?? "1");

const canvas = document.getElementById("viewport") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const statusLine = document.getElementById("status")!;
const messageLine = document.getElementById("message")!;
const statsPre = document.getElementById("stats") as HTMLPreElement;

const overlay = createOverlay();
let photo: HTMLImageElement | null = null;
let mode: "review" | "correct" | "stats" = "review";
let draft: CorrectionDraft | null = null;
let ring: Point[] = []; // polygon in progress
let cursor: Point = { x: 8, y: 8 }; // keyboard drawing cursor, image coords

const session = new ReviewSession(
  {
    nextItem: (r) => fetchNextItem(cfg, r),
    submitRating: (sub) => submitRating(cfg, sub),
  },
  round,
);

session.onChange(() => {
  void onItemChanged();
  renderStatus();
});

async function onItemChanged(): Promise<void> {
  const item = session.state.item;
  if (item === null) {
    photo = null;
    draw();
    return;
  }
  await loadItem(item);
}

async function loadItem(item: ReviewItem): Promise<void> {
  try {
    const doc = await fetchMask(cfg, item.mask_ref);
    setMask(overlay, decodeRle(doc));
  } catch (err) {
    say(`mask load failed: ${(err as Error).message}`);
  }
  photo = new Image();
  photo.onload = draw;
  photo.src = imageUrl(cfg, item);
  resetView(overlay);
  draw();
}

function say(text: string): void {
  messageLine.textContent = text;
}

function renderStatus(): void {
  const s = session.state;
  const parts = [
    `rater ${cfg.raterId}`,
    `round ${round}`,
    `phase ${s.phase}`,
    s.item ? `patch ${s.item.patch_id} / model ${s.item.model_id}` : "",
    s.uncertain ? "UNCERTAIN armed" : "",
    s.pending > 0 ? `${s.pending} unsent` : "",
    s.connection === "retrying" ? "OFFLINE — retrying" : "",
    `${s.delivered} delivered`,
  ];
  statusLine.textContent = parts.filter(Boolean).join(" | ");
  statusLine.classList.toggle("offline", s.connection === "retrying");
  if (s.phase === "done") say("queue empty — all items reviewed");
}

function draw(): void {
  ctx.fillStyle = "#181818";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  if (mode === "stats") return;

  if (photo !== null && photo.complete && overlay.layers.image.visible) {
    ctx.imageSmoothingEnabled = overlay.scale < 4;
    ctx.drawImage(
      photo,
      overlay.offsetX,
      overlay.offsetY,
      photo.naturalWidth * overlay.scale,
      photo.naturalHeight * overlay.scale,
    );
  }

  if (overlay.contourSet !== null && overlay.layers.contours.visible) {
    ctx.lineWidth = 1.5;
    for (const [id, loops] of overlay.contourSet) {
      ctx.strokeStyle = PALETTE[id % PALETTE.length]!;
      for (const loop of loops) {
        ctx.beginPath();
        loop.forEach(([x, y], i) => {
          const p = imageToScreen(overlay, x, y);
          if (i === 0) ctx.moveTo(p.x, p.y);
          else ctx.lineTo(p.x, p.y);
        });
        ctx.closePath();
        ctx.stroke();
      }
    }
  }

  if (mode === "correct" && draft !== null) {
    ctx.lineWidth = 2;
    ctx.strokeStyle = "#ffd700";
    for (const polygon of draft.polygons) {
      ctx.beginPath();
      polygon.forEach((pt, i) => {
        const p = imageToScreen(overlay, pt.x, pt.y);
        if (i === 0) ctx.moveTo(p.x, p.y);
        else ctx.lineTo(p.x, p.y);
      });
      ctx.closePath();
      ctx.stroke();
    }
    if (ring.length > 0) {
      ctx.setLineDash([4, 3]);
      ctx.beginPath();
      ring.forEach((pt, i) => {
        const p = imageToScreen(overlay, pt.x, pt.y);
        if (i === 0) ctx.moveTo(p.x, p.y);
        else ctx.lineTo(p.x, p.y);
      });
      ctx.stroke();
      ctx.setLineDash([]);
    }
    const c = imageToScreen(overlay, cursor.x, cursor.y);
    ctx.strokeStyle = "#ffffff";
    ctx.strokeRect(c.x - 3, c.y - 3, 6, 6);
  }
}

async function showStats(): Promise<void> {
  try {
    const { payload } = await fetchStats(cfg);
    statsPre.textContent = renderDashboard(buildStatsView(payload));
    statsPre.hidden = false;
    mode = "stats";
    say("stats — press d to go back, r to refresh");
  } catch (err) {
    say(`stats unavailable: ${(err as Error).message}`);
  }
  draw();
}

function enterCorrectionMode(): void {
  const item = session.state.item;
  if (item === null || overlay.labelMap === null) {
    say("no patch on screen to correct");
    return;
  }
  draft = new CorrectionDraft(item.patch_id, overlay.labelMap.width, overlay.labelMap.height);
  ring = [];
  mode = "correct";
  say("correction mode: click/x to add vertices, enter closes, s submits, esc leaves");
  draw();
}

async function submitDraft(): Promise<void> {
  if (draft === null) return;
  if (!draft.canSubmit) {
    say("nothing drawn yet — submit stays disabled");
    return;
  }
  const problems = validateDraft(draft);
  if (problems.length > 0) {
    say(`fix before submit — polygon ${problems[0]!.polygon}: ${problems[0]!.message}`);
    return;
  }
  try {
    const map = rasterizeDraft(draft);
    await submitCorrection(cfg, draft.patchId, encodeRle(map));
    say(`correction for ${draft.patchId} stored (${draft.polygons.length} instances)`);
    setMask(overlay, map);
    mode = "review";
    draft = null;
    ring = [];
  } catch (err) {
    if (err instanceof ApiError) {
      // 412/422: show the server's reason; the draft stays editable.
      say(`server refused (${err.status}): ${err.detail}`);
    } else {
      say(`submit failed: ${(err as Error).message}`);
    }
  }
  draw();
}

function addVertex(p: Point): void {
  ring.push({ x: Math.round(p.x * 2) / 2, y: Math.round(p.y * 2) / 2 });
  draw();
}

function closeRing(): void {
  if (draft === null || ring.length < 3) {
    say("a polygon needs at least 3 vertices");
    return;
  }
  draft.addPolygon(ring);
  ring = [];
  const problems = validateDraft(draft);
  if (problems.length > 0) {
    const last = problems[problems.length - 1]!;
    if (last.polygon === draft.polygons.length - 1) {
      draft.undo();
      say(`rejected: polygon ${last.message}`);
    }
  } else {
    say(`polygon ${draft.polygons.length} closed`);
  }
  draw();
}

canvas.addEventListener("click", (ev) => {
  if (mode !== "correct") return;
  const rect = canvas.getBoundingClientRect();
  addVertex(screenToImage(overlay, ev.clientX - rect.left, ev.clientY - rect.top));
});

window.addEventListener("keydown", (ev) => {
  if (ev.metaKey || ev.ctrlKey || ev.altKey) return;
  const key = ev.key.toLowerCase();

  if (mode === "stats") {
    if (key === "d") {
      mode = "review";
      statsPre.hidden = true;
      say("");
      draw();
    } else if (key === "r") {
      void showStats();
    }
    return;
  }

  if (mode === "correct") {
    const step = ev.shiftKey ? 1 : 4;
    switch (key) {
      case "escape":
        mode = "review";
        draft = null;
        ring = [];
        say("correction discarded");
        break;
      case "arrowleft": cursor.x -= step; break;
      case "arrowright": cursor.x += step; break;
      case "arrowup": cursor.y -= step; break;
      case "arrowdown": cursor.y += step; break;
      case "x": addVertex(cursor); break;
      case "enter": closeRing(); break;
      case "backspace":
        if (ring.length > 0) ring.pop();
        else if (draft !== null && draft.undo()) say("removed last polygon");
        break;
      case "s": void submitDraft(); break;
    }
    ev.preventDefault();
    draw();
    return;
  }

  switch (key) {
    case "g": case "m": case "b": case "u":
      void session.handleKey(key);
      break;
    case "t": toggleLayer(overlay, "contours"); break;
    case "i": toggleLayer(overlay, "image"); break;
    case "+": case "=": zoomAt(overlay, 1.25, canvas.width / 2, canvas.height / 2); break;
    case "-": zoomAt(overlay, 0.8, canvas.width / 2, canvas.height / 2); break;
    case "arrowleft": panBy(overlay, 24, 0); break;
    case "arrowright": panBy(overlay, -24, 0); break;
    case "arrowup": panBy(overlay, 0, 24); break;
    case "arrowdown": panBy(overlay, 0, -24); break;
    case "0": resetView(overlay); break;
    case "c": enterCorrectionMode(); break;
    case "d": void showStats(); break;
  }
  draw();
});

// Deliveries that failed while offline retry on a timer.
window.setInterval(() => {
  if (session.state.connection === "retrying") void session.retry();
}, 2000);

void session.start();
renderStatus();
