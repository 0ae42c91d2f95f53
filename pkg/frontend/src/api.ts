// Typed client for the review-queue HTTP API. Configuration is limited to
// the service base URL and an optional shared bearer token.

export interface Prediction {
  annotator_id: string;
  label: number;
  confidence: number;
}

export interface ReviewItem {
  item_id: string;
  unit_id: string;
  task: string;
  query: string;
  question: string;
  options: string[];
  aggregated_label: number;
  mean_confidence: number;
  confidence_sd: number;
  predictions: Prediction[];
  flag_reason: string;
  status: "pending" | "reviewed";
  human_label: number | null;
  reviewer_id: string | null;
  reviewed_at: number | null;
}

export interface Progress {
  pending: number;
  reviewed: number;
  her_so_far: number | null;
}

export interface QueuePayload {
  items: ReviewItem[];
  progress: Progress;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

async function raiseForStatus(response: Response): Promise<void> {
  if (response.ok) return;
  let detail = response.statusText;
  try {
    const body = await response.json();
    if (body && typeof body.detail === "string") detail = body.detail;
  } catch {
    // keep the status text when the body is not JSON
  }
  throw new ApiError(response.status, detail);
}

export class ReviewApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly token?: string,
  ) {}

  private headers(withBody: boolean): Record<string, string> {
    const headers: Record<string, string> = {};
    if (withBody) headers["Content-Type"] = "application/json";
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    return headers;
  }

  async fetchQueue(task?: string, limit = 50): Promise<QueuePayload> {
    const params = new URLSearchParams({ limit: String(limit) });
    if (task) params.set("task", task);
    const response = await fetch(`${this.baseUrl}/api/queue?${params}`, {
      headers: this.headers(false),
    });
    await raiseForStatus(response);
    return response.json();
  }

  async getItem(itemId: string): Promise<ReviewItem> {
    const response = await fetch(`${this.baseUrl}/api/items/${itemId}`, {
      headers: this.headers(false),
    });
    await raiseForStatus(response);
    return response.json();
  }

  async submitReview(itemId: string, label: number, reviewerId: string): Promise<ReviewItem> {
    const response = await fetch(`${this.baseUrl}/api/items/${itemId}/review`, {
      method: "POST",
      headers: this.headers(true),
      body: JSON.stringify({ label, reviewer_id: reviewerId }),
    });
    await raiseForStatus(response);
    return response.json();
  }

  async fetchProgress(): Promise<Progress> {
    const response = await fetch(`${this.baseUrl}/api/progress`, {
      headers: this.headers(false),
    });
    await raiseForStatus(response);
    return response.json();
  }
}
