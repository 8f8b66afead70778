import { describe, expect, it } from "vitest";
import { ApiError, NetworkError, type RatingSubmission, type ReviewItem } from "../src/api.js";
import { ReviewSession, type QueueClient } from "../src/review.js";

function item(patch: string, model: string, round = 1): ReviewItem {
  return {
    patch_id: patch,
    model_id: model,
    round,
    status: "pending",
    image_ref: `/api/patches/${patch}/image`,
    mask_ref: `/api/patches/${patch}/masks/${model}`,
  };
}

/** Queue client with a scriptable outage switch. */
class FakeClient implements QueueClient {
  items: Array<ReviewItem | null>;
  posted: RatingSubmission[] = [];
  nextCalls = 0;
  offline = false;
  rejectWith: ApiError | null = null;

  constructor(items: Array<ReviewItem | null>) {
    this.items = items;
  }

  async nextItem(): Promise<ReviewItem | null> {
    if (this.offline) throw new NetworkError("fetch failed");
    this.nextCalls++;
    return this.items.length > 0 ? this.items.shift()! : null;
  }

  async submitRating(sub: RatingSubmission): Promise<void> {
    if (this.offline) throw new NetworkError("fetch failed");
    if (this.rejectWith !== null) {
      const err = this.rejectWith;
      this.rejectWith = null;
      throw err;
    }
    this.posted.push(sub);
  }
}

describe("ReviewSession", () => {
  it("maps g/m/b to ratings and advances to the next item", async () => {
    const client = new FakeClient([item("p1", "a"), item("p2", "a"), null]);
    const session = new ReviewSession(client);
    await session.start();
    expect(session.state.phase).toBe("reviewing");
    expect(session.state.item!.patch_id).toBe("p1");

    await session.handleKey("g");
    expect(client.posted[0]).toMatchObject({
      patch_id: "p1",
      model_id: "a",
      round: 1,
      rating: "good",
      uncertain: false,
    });
    expect(session.state.item!.patch_id).toBe("p2");

    await session.handleKey("b");
    expect(client.posted[1]).toMatchObject({ patch_id: "p2", rating: "bad" });
    expect(session.state.phase).toBe("done");
  });

  it("u arms the uncertain flag for exactly one rating", async () => {
    const client = new FakeClient([item("p1", "a"), item("p2", "a"), null]);
    const session = new ReviewSession(client);
    await session.start();

    await session.handleKey("u");
    expect(session.state.uncertain).toBe(true);
    await session.handleKey("u"); // toggles back off
    expect(session.state.uncertain).toBe(false);
    await session.handleKey("u");
    await session.handleKey("g");
    expect(client.posted[0]).toMatchObject({ rating: "good", uncertain: true });

    await session.handleKey("m"); // flag must have reset
    expect(client.posted[1]).toMatchObject({ rating: "medium", uncertain: false });
  });

  it("ignores unbound keys and keys pressed with no item on screen", async () => {
    const client = new FakeClient([item("p1", "a"), null]);
    const session = new ReviewSession(client);
    await session.handleKey("g"); // before start
    expect(client.posted).toHaveLength(0);
    await session.start();
    await session.handleKey("q");
    await session.handleKey("Escape");
    expect(client.posted).toHaveLength(0);
    expect(session.state.item!.patch_id).toBe("p1");
  });

  it("stops fetching after end of queue", async () => {
    const client = new FakeClient([null]);
    const session = new ReviewSession(client);
    await session.start();
    expect(session.state.phase).toBe("done");
    const calls = client.nextCalls;
    await session.handleKey("g");
    await session.handleKey("u");
    await session.retry();
    expect(client.nextCalls).toBe(calls);
    expect(client.posted).toHaveLength(0);
  });

  it("queues submissions while offline and surfaces the retry state", async () => {
    const client = new FakeClient([item("p1", "a"), item("p2", "a"), null]);
    const session = new ReviewSession(client);
    await session.start();

    client.offline = true;
    await session.handleKey("g");
    expect(session.state.connection).toBe("retrying");
    expect(session.state.pending).toBe(1);
    expect(session.state.delivered).toBe(0);
    expect(client.posted).toHaveLength(0); // nothing reached the server

    await session.retry(); // still down
    expect(session.state.connection).toBe("retrying");

    client.offline = false;
    await session.retry();
    expect(session.state.connection).toBe("ok");
    expect(session.state.pending).toBe(0);
    expect(session.state.delivered).toBe(1);
    expect(client.posted).toHaveLength(1); // delivered exactly once, in order
    expect(session.state.item!.patch_id).toBe("p2"); // owed advance also ran
  });

  it("treats a 409 duplicate on retry as delivered", async () => {
    const client = new FakeClient([item("p1", "a"), item("p2", "a"), null]);
    const session = new ReviewSession(client);
    await session.start();

    client.rejectWith = new ApiError(409, "already rated");
    await session.handleKey("g");
    expect(session.state.delivered).toBe(1);
    expect(session.state.pending).toBe(0);
    expect(session.state.rejected).toHaveLength(0);
    expect(session.state.item!.patch_id).toBe("p2");
  });

  it("keeps hard rejections visible instead of dropping them silently", async () => {
    const client = new FakeClient([item("p1", "a"), item("p2", "a"), null]);
    const session = new ReviewSession(client);
    await session.start();

    client.rejectWith = new ApiError(422, "round must be 1 or 2");
    await session.handleKey("g");
    expect(session.state.rejected).toHaveLength(1);
    expect(session.state.rejected[0]!.detail).toMatch(/round/);
    expect(session.state.delivered).toBe(0);
    expect(session.state.item!.patch_id).toBe("p2"); // session still advances
  });

  it("notifies listeners on every state change", async () => {
    const client = new FakeClient([item("p1", "a"), null]);
    const session = new ReviewSession(client);
    const phases: string[] = [];
    session.onChange((s) => phases.push(s.phase));
    await session.start();
    await session.handleKey("g");
    expect(phases[0]).toBe("reviewing");
    expect(phases[phases.length - 1]).toBe("done");
  });
});
