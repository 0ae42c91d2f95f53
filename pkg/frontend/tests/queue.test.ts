import { describe, expect, it, vi } from "vitest";

import { ApiError, ReviewApi, ReviewItem } from "../src/api.js";
import {
  QueueState,
  actionableItems,
  annotatorLetter,
  applyFetchError,
  applyQueue,
  canSubmit,
  emptyState,
  refreshQueue,
  selectLabel,
  submitReview,
} from "../src/queue.js";
import { makeItem } from "./fixtures.js";

function seededState(items: ReviewItem[], pending = items.length): QueueState {
  const state = emptyState();
  applyQueue(state, {
    items,
    progress: { pending, reviewed: 0, her_so_far: 62.5 },
  });
  return state;
}

/** Stub just the ReviewApi surface the view-model touches. */
function stubApi(overrides: Partial<ReviewApi> = {}): ReviewApi {
  return {
    fetchQueue: vi.fn(),
    getItem: vi.fn(),
    submitReview: vi.fn(),
    fetchProgress: vi.fn(),
    ...overrides,
  } as unknown as ReviewApi;
}

describe("queue view-model", () => {
  it("starts empty with no progress and no error", () => {
    const state = emptyState();
    expect(actionableItems(state)).toEqual([]);
    expect(state.progress).toBeNull();
    expect(state.error).toBeNull();
  });

  it("keeps items in server enqueue order", () => {
    const items = ["q1/p0|quality", "q1/p1|quality", "q2/p0|quality"].map((id) =>
      makeItem({ item_id: id, unit_id: id.split("|")[0] }),
    );
    const state = seededState(items);
    expect(actionableItems(state).map((i) => i.item_id)).toEqual([
      "q1/p0|quality",
      "q1/p1|quality",
      "q2/p0|quality",
    ]);
  });

  it("hides reviewed items and honors the task filter", () => {
    const state = seededState([
      makeItem({ item_id: "a", task: "quality" }),
      makeItem({ item_id: "b", task: "coverage" }),
      makeItem({ item_id: "c", task: "quality", status: "reviewed", human_label: 2 }),
    ]);
    state.taskFilter = "quality";
    expect(actionableItems(state).map((i) => i.item_id)).toEqual(["a"]);
  });

  it("assigns anonymized letters by listing position", () => {
    expect([0, 1, 2, 3].map(annotatorLetter)).toEqual(["A", "B", "C", "D"]);
  });

  it("rejects labels outside the 1-5 scale", () => {
    const state = seededState([makeItem()]);
    expect(() => selectLabel(state, "q1/p0|quality", 0)).toThrow(/out of range/);
    expect(() => selectLabel(state, "q1/p0|quality", 6)).toThrow(/out of range/);
  });

  it("disables submit until a label is chosen", () => {
    const state = seededState([makeItem()]);
    expect(canSubmit(state, "q1/p0|quality")).toBe(false);
    selectLabel(state, "q1/p0|quality", 4);
    expect(canSubmit(state, "q1/p0|quality")).toBe(true);
  });

  it("keeps the last good queue when a refresh fails", () => {
    const state = seededState([makeItem()]);
    applyFetchError(state, new Error("network down"));
    expect(state.items).toHaveLength(1);
    expect(state.error).toBe("network down");
  });

  it("refreshQueue passes the active task filter through to the API", async () => {
    const state = emptyState();
    state.taskFilter = "coverage";
    const fetchQueue = vi.fn().mockResolvedValue({
      items: [makeItem({ task: "coverage" })],
      progress: { pending: 1, reviewed: 0, her_so_far: null },
    });
    await refreshQueue(state, stubApi({ fetchQueue }));
    expect(fetchQueue).toHaveBeenCalledWith("coverage", 50);
    expect(state.items).toHaveLength(1);
  });
});

describe("submitReview", () => {
  it("removes the item from the actionable list and advances counters", async () => {
    const state = seededState([makeItem()], 3);
    selectLabel(state, "q1/p0|quality", 4);
    const api = stubApi({
      submitReview: vi
        .fn()
        .mockResolvedValue(makeItem({ status: "reviewed", human_label: 4, reviewer_id: "rev-a" })),
    });

    const result = await submitReview(state, api, "q1/p0|quality", "rev-a");

    expect(result).toBe("ok");
    expect(api.submitReview).toHaveBeenCalledWith("q1/p0|quality", 4, "rev-a");
    expect(actionableItems(state)).toEqual([]);
    expect(state.progress).toMatchObject({ pending: 2, reviewed: 1 });
    expect(state.selectedLabels.has("q1/p0|quality")).toBe(false);
    expect(state.inFlight.size).toBe(0);
  });

  it("makes no request when no label is chosen", async () => {
    const state = seededState([makeItem()]);
    const api = stubApi();

    const result = await submitReview(state, api, "q1/p0|quality", "rev-a");

    expect(result).toBe("skipped");
    expect(api.submitReview).not.toHaveBeenCalled();
  });

  it("refreshes the row as reviewed on a 409 conflict", async () => {
    const state = seededState([makeItem()], 1);
    selectLabel(state, "q1/p0|quality", 2);
    const api = stubApi({
      submitReview: vi.fn().mockRejectedValue(new ApiError(409, "already reviewed")),
      getItem: vi
        .fn()
        .mockResolvedValue(makeItem({ status: "reviewed", human_label: 5, reviewer_id: "rev-b" })),
    });

    const result = await submitReview(state, api, "q1/p0|quality", "rev-a");

    expect(result).toBe("conflict");
    expect(api.getItem).toHaveBeenCalledWith("q1/p0|quality");
    expect(state.items[0].status).toBe("reviewed");
    expect(state.items[0].reviewer_id).toBe("rev-b");
    expect(actionableItems(state)).toEqual([]);
    expect(state.error).toContain("already reviewed");
  });

  it("surfaces other failures without dropping the item", async () => {
    const state = seededState([makeItem()]);
    selectLabel(state, "q1/p0|quality", 3);
    const api = stubApi({
      submitReview: vi.fn().mockRejectedValue(new ApiError(500, "boom")),
    });

    const result = await submitReview(state, api, "q1/p0|quality", "rev-a");

    expect(result).toBe("error");
    expect(actionableItems(state)).toHaveLength(1);
    expect(state.error).toContain("boom");
    expect(state.inFlight.size).toBe(0);
  });

  it("blocks a second submit while the first is in flight", async () => {
    const state = seededState([makeItem()], 1);
    selectLabel(state, "q1/p0|quality", 4);
    let release!: (item: ReviewItem) => void;
    const api = stubApi({
      submitReview: vi.fn().mockImplementation(
        () => new Promise<ReviewItem>((resolve) => (release = resolve)),
      ),
    });

    const first = submitReview(state, api, "q1/p0|quality", "rev-a");
    expect(canSubmit(state, "q1/p0|quality")).toBe(false);
    const second = await submitReview(state, api, "q1/p0|quality", "rev-a");
    expect(second).toBe("skipped");

    release(makeItem({ status: "reviewed", human_label: 4 }));
    expect(await first).toBe("ok");
    expect(api.submitReview).toHaveBeenCalledTimes(1);
    expect(state.progress?.reviewed).toBe(1);
  });
});
