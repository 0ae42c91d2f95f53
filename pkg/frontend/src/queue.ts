// View-model for the review queue: pure state transitions the page logic
// and the tests share. All labels shown come from server records or the
// reviewer's own unsent form selection; nothing is fabricated client-side.

import { ApiError, Progress, QueuePayload, ReviewApi, ReviewItem } from "./api.js";

export type SubmitResult = "ok" | "conflict" | "skipped" | "error";

export interface QueueState {
  items: ReviewItem[];
  progress: Progress | null;
  taskFilter: string | null;
  selectedLabels: Map<string, number>;
  inFlight: Set<string>;
  error: string | null;
}

export function emptyState(): QueueState {
  return {
    items: [],
    progress: null,
    taskFilter: null,
    selectedLabels: new Map(),
    inFlight: new Set(),
    error: null,
  };
}

/** Replace queue contents from a successful fetch; clears any stale error. */
export function applyQueue(state: QueueState, payload: QueuePayload): void {
  state.items = payload.items;
  state.progress = payload.progress;
  state.error = null;
}

/** Keep the last good queue on a failed fetch, surfacing the reason inline. */
export function applyFetchError(state: QueueState, error: unknown): void {
  state.error = error instanceof Error ? error.message : String(error);
}

/** Pending items in server (enqueue) order; reviewed items are never actionable. */
export function actionableItems(state: QueueState): ReviewItem[] {
  return state.items.filter(
    (item) =>
      item.status === "pending" &&
      (state.taskFilter === null || item.task === state.taskFilter),
  );
}

/** Anonymized annotator identity: first listed model is A, second B, ... */
export function annotatorLetter(index: number): string {
  return String.fromCharCode("A".charCodeAt(0) + (index % 26));
}

export function selectLabel(state: QueueState, itemId: string, label: number): void {
  if (label < 1 || label > 5) throw new Error(`label ${label} out of range 1-5`);
  state.selectedLabels.set(itemId, label);
}

/** Submit is allowed only with a chosen label and no request in flight. */
export function canSubmit(state: QueueState, itemId: string): boolean {
  return state.selectedLabels.has(itemId) && !state.inFlight.has(itemId);
}

function settleItem(state: QueueState, reviewed: ReviewItem): void {
  state.items = state.items.map((item) =>
    item.item_id === reviewed.item_id ? reviewed : item,
  );
  state.selectedLabels.delete(reviewed.item_id);
  if (state.progress) {
    state.progress = {
      ...state.progress,
      pending: Math.max(0, state.progress.pending - 1),
      reviewed: state.progress.reviewed + 1,
    };
  }
}

/**
 * Post the chosen label. On success the item leaves the actionable list;
 * on 409 (another reviewer won the item) the row is refreshed from the
 * server instead. No request is made unless canSubmit holds.
 */
export async function submitReview(
  state: QueueState,
  api: ReviewApi,
  itemId: string,
  reviewerId: string,
): Promise<SubmitResult> {
  if (!canSubmit(state, itemId)) return "skipped";
  const label = state.selectedLabels.get(itemId)!;
  state.inFlight.add(itemId);
  try {
    const reviewed = await api.submitReview(itemId, label, reviewerId);
    settleItem(state, reviewed);
    state.error = null;
    return "ok";
  } catch (error) {
    if (error instanceof ApiError && error.status === 409) {
      const fresh = await api.getItem(itemId);
      settleItem(state, fresh);
      state.error = `item was reviewed elsewhere: ${error.detail}`;
      return "conflict";
    }
    state.error = error instanceof Error ? error.message : String(error);
    return "error";
  } finally {
    state.inFlight.delete(itemId);
  }
}

export async function refreshQueue(
  state: QueueState,
  api: ReviewApi,
  limit = 50,
): Promise<void> {
  try {
    const payload = await api.fetchQueue(state.taskFilter ?? undefined, limit);
    applyQueue(state, payload);
  } catch (error) {
    applyFetchError(state, error);
  }
}
