/**
 * Keyboard-driven review session over one queue round.
 *
 * g / m / b rate the item on screen, u toggles the uncertain flag for the
 * next rating, and everything advances optimistically: the rating is queued,
 * the next item is fetched immediately, and delivery happens in the
 * background.  A submission that cannot reach the server stays in the queue
 * and flips the connection state to "retrying" — nothing is dropped
 * silently; the server's duplicate rejection is the backstop if a retry
 * races an earlier delivery.
 */

import {
  ApiError,
  NetworkError,
  type RatingLabel,
  type RatingSubmission,
  type ReviewItem,
} from "./api.js";

/** The slice of the API the session needs; tests substitute fakes. */
export interface QueueClient {
  nextItem(round: number): Promise<ReviewItem | null>;
  submitRating(sub: RatingSubmission): Promise<void>;
}

export type SessionPhase = "idle" | "loading" | "reviewing" | "done";

export interface RejectedSubmission {
  submission: RatingSubmission;
  detail: string;
}

export interface SessionState {
  phase: SessionPhase;
  item: ReviewItem | null;
  uncertain: boolean; // armed for the next rating, reset after each submit
  connection: "ok" | "retrying";
  pending: number; // queued submissions not yet acknowledged
  delivered: number; // acknowledged by the server (409 duplicates count)
  rejected: RejectedSubmission[]; // refused outright (422/403/...), kept visible
}

const KEY_RATINGS: Record<string, RatingLabel> = { g: "good", m: "medium", b: "bad" };

export class ReviewSession {
  private client: QueueClient;
  private round: number;
  private queue: RatingSubmission[] = [];
  private needItem = false; // an advance is owed but the last fetch failed
  private pumping = false; // collapses overlapping retry timers into one drain
  private listeners: Array<(state: SessionState) => void> = [];

  private _state: SessionState = {
    phase: "idle",
    item: null,
    uncertain: false,
    connection: "ok",
    pending: 0,
    delivered: 0,
    rejected: [],
  };

  constructor(client: QueueClient, round = 1) {
    this.client = client;
    this.round = round;
  }

  get state(): Readonly<SessionState> {
    return this._state;
  }

  onChange(listener: (state: SessionState) => void): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this._state);
  }

  async start(): Promise<void> {
    this._state.phase = "loading";
    this.needItem = true;
    await this.pump();
  }

  /**
   * Feed one key press.  Only g/m/b/u do anything, and only while an item is
   * on screen — after end-of-queue every key is a no-op and no further
   * requests are made.
   */
  async handleKey(key: string): Promise<void> {
    if (this._state.phase !== "reviewing" || this._state.item === null) return;
    if (key === "u") {
      this._state.uncertain = !this._state.uncertain;
      this.emit();
      return;
    }
    const rating = KEY_RATINGS[key];
    if (rating === undefined) return;
    const item = this._state.item;
    this.queue.push({
      patch_id: item.patch_id,
      model_id: item.model_id,
      round: item.round,
      rating,
      uncertain: this._state.uncertain,
    });
    this._state.uncertain = false;
    this._state.item = null;
    this._state.phase = "loading";
    this._state.pending = this.queue.length;
    this.needItem = true;
    this.emit();
    await this.pump();
  }

  /** Re-attempt queued deliveries and the owed advance after a failure. */
  async retry(): Promise<void> {
    await this.pump();
  }

  /**
   * Drain the submission queue in order, then fetch the next item if one is
   * owed.  A network failure leaves everything queued and marks the
   * connection as retrying; any later pump picks up where this one stopped.
   */
  private async pump(): Promise<void> {
    if (this.pumping) return;
    this.pumping = true;
    try {
      await this.drain();
    } finally {
      this.pumping = false;
    }
  }

  private async drain(): Promise<void> {
    while (this.queue.length > 0) {
      const sub = this.queue[0]!;
      try {
        await this.client.submitRating(sub);
      } catch (err) {
        if (err instanceof ApiError && err.status === 409) {
          // Already delivered by an earlier attempt; drop and move on.
        } else if (err instanceof ApiError) {
          this._state.rejected.push({ submission: sub, detail: err.detail });
          this.queue.shift();
          this._state.pending = this.queue.length;
          this.emit();
          continue;
        } else if (err instanceof NetworkError) {
          this._state.connection = "retrying";
          this.emit();
          return;
        } else {
          throw err;
        }
      }
      this.queue.shift();
      this._state.delivered += 1;
      this._state.pending = this.queue.length;
    }

    if (this.needItem) {
      let item: ReviewItem | null;
      try {
        item = await this.client.nextItem(this.round);
      } catch (err) {
        if (err instanceof NetworkError) {
          this._state.connection = "retrying";
          this.emit();
          return;
        }
        throw err;
      }
      this.needItem = false;
      if (item === null) {
        this._state.phase = "done";
        this._state.item = null;
      } else {
        this._state.phase = "reviewing";
        this._state.item = item;
      }
    }
    this._state.connection = "ok";
    this.emit();
  }
}
