import { ReviewItem } from "../src/api.js";

export function makeItem(overrides: Partial<ReviewItem> = {}): ReviewItem {
  return {
    item_id: "q1/p0|quality",
    unit_id: "q1/p0",
    task: "quality",
    query: "topic 1",
    question: "which aspect?",
    options: ["reviews", "pricing", "news"],
    aggregated_label: 3,
    mean_confidence: 72.5,
    confidence_sd: 15.2,
    predictions: [
      { annotator_id: "model-one", label: 3, confidence: 70 },
      { annotator_id: "model-two", label: 4, confidence: 75 },
    ],
    flag_reason: "flag_low_confidence",
    status: "pending",
    human_label: null,
    reviewer_id: null,
    reviewed_at: null,
    ...overrides,
  };
}
