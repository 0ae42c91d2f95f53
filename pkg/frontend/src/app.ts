// Page wiring: renders the queue state and routes clicks to the view-model.
// All state changes flow through server responses; the only optimism is
// disabling the submit button while its request is in flight.

import { ReviewApi, ReviewItem } from "./api.js";
import {
  QueueState,
  actionableItems,
  annotatorLetter,
  canSubmit,
  emptyState,
  refreshQueue,
  selectLabel,
  submitReview,
} from "./queue.js";

const TASKS = ["preference", "quality", "coverage", "diversity", "option_order"];
const LABEL_ANCHORS: Record<number, string> = {
  1: "very bad",
  2: "bad",
  3: "okay",
  4: "good",
  5: "very good",
};

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderProgress(state: QueueState): HTMLElement {
  const bar = el("div", "progress");
  if (state.progress) {
    const { pending, reviewed, her_so_far } = state.progress;
    bar.append(
      el("span", "counter", `pending ${pending}`),
      el("span", "counter", `reviewed ${reviewed}`),
    );
    if (her_so_far !== null) {
      bar.append(el("span", "counter", `effort reduction ${her_so_far.toFixed(1)}%`));
    }
  }
  return bar;
}

function renderPredictions(item: ReviewItem): HTMLElement {
  const table = el("table", "predictions");
  const head = el("tr");
  head.append(el("th", "", "annotator"), el("th", "", "label"), el("th", "", "confidence"));
  table.append(head);
  item.predictions.forEach((prediction, index) => {
    const row = el("tr");
    row.append(
      el("td", "", `Annotator ${annotatorLetter(index)}`),
      el("td", "", String(prediction.label)),
      el("td", "", prediction.confidence.toFixed(1)),
    );
    table.append(row);
  });
  return table;
}

function renderItem(
  state: QueueState,
  api: ReviewApi,
  item: ReviewItem,
  reviewerId: string,
  rerender: () => void,
): HTMLElement {
  const card = el("article", "item");
  card.append(el("h3", "", `${item.unit_id} — ${item.task}`));
  card.append(el("p", "query", item.query));
  card.append(el("p", "question", item.question));

  // options keep their original left-to-right order, with ordinal badges
  const optionList = el("ol", "options");
  item.options.forEach((option) => optionList.append(el("li", "option", option)));
  card.append(optionList);

  card.append(
    el(
      "p",
      "flag-info",
      `flagged: ${item.flag_reason} (mean confidence ${item.mean_confidence.toFixed(1)}, ` +
        `SD ${item.confidence_sd.toFixed(1)})`,
    ),
  );
  card.append(renderPredictions(item));

  // the model-aggregated label sits behind a disclosure toggle so it does
  // not anchor the reviewer's own judgment
  const disclosure = el("details", "aggregated");
  disclosure.append(el("summary", "", "show aggregated model label"));
  disclosure.append(el("p", "", `aggregated label: ${item.aggregated_label}`));
  card.append(disclosure);

  const form = el("div", "review-form");
  for (let label = 1; label <= 5; label++) {
    const wrapper = el("label", "scale-choice");
    const radio = el("input") as HTMLInputElement;
    radio.type = "radio";
    radio.name = `label-${item.item_id}`;
    radio.value = String(label);
    radio.checked = state.selectedLabels.get(item.item_id) === label;
    radio.addEventListener("change", () => {
      selectLabel(state, item.item_id, label);
      rerender();
    });
    wrapper.append(radio, el("span", "", `${label} (${LABEL_ANCHORS[label]})`));
    form.append(wrapper);
  }

  const note = el("textarea", "note") as HTMLTextAreaElement;
  note.placeholder = "reviewer note (kept on this page only)";
  form.append(note);

  const submit = el("button", "submit", "submit review") as HTMLButtonElement;
  submit.disabled = !canSubmit(state, item.item_id);
  submit.addEventListener("click", async () => {
    await submitReview(state, api, item.item_id, reviewerId);
    rerender();
  });
  form.append(submit);
  card.append(form);
  return card;
}

export function mount(root: HTMLElement, api: ReviewApi, reviewerId: string): () => void {
  const state = emptyState();

  const rerender = () => {
    root.replaceChildren();
    root.append(el("h1", "", "Review queue"));
    root.append(renderProgress(state));

    const filter = el("select", "task-filter") as HTMLSelectElement;
    filter.append(new Option("all tasks", ""));
    for (const task of TASKS) filter.append(new Option(task, task));
    filter.value = state.taskFilter ?? "";
    filter.addEventListener("change", async () => {
      state.taskFilter = filter.value || null;
      await refreshQueue(state, api);
      rerender();
    });
    root.append(filter);

    if (state.error) root.append(el("p", "error", state.error));

    const pending = actionableItems(state);
    if (pending.length === 0) {
      root.append(el("p", "empty-state", "No items waiting for review."));
      return;
    }
    for (const item of pending) {
      root.append(renderItem(state, api, item, reviewerId, rerender));
    }
  };

  const refresh = async () => {
    await refreshQueue(state, api);
    rerender();
  };
  void refresh();
  return rerender;
}

declare global {
  interface Window {
    REVIEW_BASE_URL?: string;
    REVIEW_TOKEN?: string;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  const api = new ReviewApi(window.REVIEW_BASE_URL ?? "", window.REVIEW_TOKEN);
  const reviewerId =
    window.localStorage.getItem("reviewer_id") ??
    `reviewer-${Math.random().toString(36).slice(2, 8)}`;
  window.localStorage.setItem("reviewer_id", reviewerId);
  mount(document.getElementById("app")!, api, reviewerId);
}
