/**
 * Thin typed client for the review service HTTP API.
 *
 * Every number shown anywhere in the UI comes out of one of these calls —
 * the client never rates, fuses or aggregates anything on its own.
 */

import { rleFromPayload, rleToJson, type RleDocument } from "./labelmap.js";

export interface ServiceConfig {
  baseUrl: string; // e.g. "http://127.0.0.1:8000"
  raterId: string;
}

/** One reviewable (patch, model, round) unit as served by the queue. */
export interface ReviewItem {
  patch_id: string;
  model_id: string;
  round: number;
  status: string;
  image_ref: string;
  mask_ref: string;
}

export type RatingLabel = "good" | "medium" | "bad";

export interface RatingSubmission {
  patch_id: string;
  model_id: string;
  round: number;
  rating: RatingLabel;
  uncertain: boolean;
}

export interface StatsPayload {
  per_model: Record<string, Record<RatingLabel, number>>;
  fused: Record<RatingLabel, number>;
  agreement: { models: string[]; values: number[][] } | null;
  breakdown: Record<string, Record<string, number>> | null;
  complete_patches: number;
  corrections: number;
  queue_depths: Record<string, number>;
  n_ratings: number;
}

/** The server answered with an error status; detail is its explanation. */
export class ApiError extends Error {
  status: number;
  detail: string;
  constructor(status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
    this.status = status;
    this.detail = detail;
  }
}

/** The request never reached the server (offline, refused, aborted). */
export class NetworkError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "NetworkError";
  }
}

async function request(cfg: ServiceConfig, path: string, init?: RequestInit): Promise<Response> {
  let response: Response;
  try {
    response = await fetch(cfg.baseUrl + path, init);
  } catch (err) {
    throw new NetworkError((err as Error).message);
  }
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = (await response.json()) as { detail?: string };
      if (typeof body.detail === "string") detail = body.detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  return response;
}

/** Next unreviewed item for this rater, or null when the queue is empty. */
export async function fetchNextItem(cfg: ServiceConfig, round: number): Promise<ReviewItem | null> {
  const response = await request(
    cfg,
    `/api/queue/${round}/next?rater=${encodeURIComponent(cfg.raterId)}`,
  );
  if (response.status === 204) return null;
  return (await response.json()) as ReviewItem;
}

export async function submitRating(cfg: ServiceConfig, sub: RatingSubmission): Promise<void> {
  await request(cfg, "/api/ratings", {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({ ...sub, rater_id: cfg.raterId }),
  });
}

export async function submitCorrection(
  cfg: ServiceConfig,
  patchId: string,
  doc: RleDocument,
): Promise<void> {
  await request(cfg, `/api/corrections/${encodeURIComponent(patchId)}`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: rleToJson(doc),
  });
}

/** Fetch a mask in its RLE JSON representation and validate it. */
export async function fetchMask(cfg: ServiceConfig, maskRef: string): Promise<RleDocument> {
  const response = await request(cfg, maskRef, {
    headers: { accept: "application/json" },
  });
  return rleFromPayload(await response.json());
}

export async function fetchStats(
  cfg: ServiceConfig,
): Promise<{ payload: StatsPayload; text: string }> {
  const response = await request(cfg, "/api/stats");
  const text = await response.text();
  return { payload: JSON.parse(text) as StatsPayload, text };
}

/** Absolute URL for the patch photo; handed straight to an <img>. */
export function imageUrl(cfg: ServiceConfig, item: ReviewItem): string {
  return cfg.baseUrl + item.image_ref;
}
