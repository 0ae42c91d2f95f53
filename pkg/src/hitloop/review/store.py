"""Human review queue backed by an append-only record log.

Every state change is one JSON line appended to the log; reopening the
store replays the log and reconstructs the exact same state, which makes
the store crash-safe without a database dependency. Volumes are desk
scale (thousands of items), so full replay on open is cheap.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from ..corpus import TaskKind


class ReviewStoreError(ValueError):
    pass


class ReviewConflictError(ReviewStoreError):
    """Same item id re-enqueued with different content, or a second review."""


@dataclass
class ReviewItem:
    item_id: str
    unit_id: str
    task: str  # TaskKind value
    query: str
    question: str
    options: list[str]
    aggregated_label: int
    mean_confidence: float
    confidence_sd: float
    predictions: list[dict]  # per-model {annotator_id, label, confidence}
    flag_reason: str
    status: str = "pending"  # pending | reviewed
    human_label: Optional[int] = None
    reviewer_id: Optional[str] = None
    reviewed_at: Optional[float] = None
    lease: Optional[str] = None  # advisory claim, never enforced

    def content_key(self) -> str:
        # identity of the enqueued content, ignoring review-state fields
        core = {
            "unit_id": self.unit_id,
            "task": self.task,
            "aggregated_label": self.aggregated_label,
            "mean_confidence": self.mean_confidence,
            "confidence_sd": self.confidence_sd,
            "flag_reason": self.flag_reason,
        }
        return json.dumps(core, sort_keys=True)


class ReviewStore:
    """All mutations are serialized through one writer lock and appended to
    the log before the in-memory state changes; reads are plain snapshots."""

    def __init__(self, log_path: str | Path):
        self.log_path = Path(log_path)
        self._lock = threading.Lock()
        self._items: dict[str, ReviewItem] = {}
        self._order: list[str] = []
        self._total_decided = 0
        if self.log_path.exists():
            self._replay()

    def _replay(self) -> None:
        with self.log_path.open("r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ReviewStoreError(f"corrupt log line {line_no}: {exc}") from exc
                op = record.get("op")
                if op == "enqueue":
                    item = ReviewItem(**record["item"])
                    if item.item_id not in self._items:
                        self._order.append(item.item_id)
                    self._items[item.item_id] = item
                elif op == "review":
                    item = self._items[record["item_id"]]
                    item.status = "reviewed"
                    item.human_label = record["label"]
                    item.reviewer_id = record["reviewer_id"]
                    item.reviewed_at = record["reviewed_at"]
                elif op == "run_total":
                    self._total_decided = record["total"]
                else:
                    raise ReviewStoreError(f"unknown log op {op!r} at line {line_no}")

    def _append(self, record: dict) -> None:
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        with self.log_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
            fh.flush()

    def set_run_total(self, total: int) -> None:
        """Record how many units the run decided (accepted + flagged) so
        progress can report the effort-reduction figure."""
        with self._lock:
            self._append({"op": "run_total", "total": int(total)})
            self._total_decided = int(total)

    def enqueue(self, items: list[ReviewItem]) -> int:
        """Persist fresh items as pending. Re-enqueueing identical items is
        a no-op; same id with different content is a conflict."""
        accepted = 0
        with self._lock:
            for item in items:
                existing = self._items.get(item.item_id)
                if existing is not None:
                    if existing.content_key() != item.content_key():
                        raise ReviewConflictError(
                            f"item {item.item_id} already enqueued with different content"
                        )
                    continue
                self._append({"op": "enqueue", "item": asdict(item)})
                self._items[item.item_id] = item
                self._order.append(item.item_id)
                accepted += 1
        return accepted

    def get(self, item_id: str) -> Optional[ReviewItem]:
        return self._items.get(item_id)

    def next_pending(self, task: Optional[str] = None, limit: int = 50) -> list[ReviewItem]:
        """Up to `limit` pending items in stable enqueue order; no locking,
        claims are advisory only."""
        if task is not None:
            TaskKind(task)  # validate
        out = []
        for item_id in self._order:
            item = self._items[item_id]
            if item.status != "pending":
                continue
            if task is not None and item.task != task:
                continue
            out.append(item)
            if len(out) >= limit:
                break
        return out

    def submit_review(self, item_id: str, label: int, reviewer_id: str) -> ReviewItem:
        """Attach the human label; at most one label per item, ever."""
        if not (1 <= int(label) <= 5):
            raise ReviewStoreError(f"label {label} out of range [1,5]")
        with self._lock:
            item = self._items.get(item_id)
            if item is None:
                raise KeyError(item_id)
            if item.status == "reviewed":
                raise ReviewConflictError(f"item {item_id} already reviewed")
            reviewed_at = time.time()
            self._append(
                {
                    "op": "review",
                    "item_id": item_id,
                    "label": int(label),
                    "reviewer_id": reviewer_id,
                    "reviewed_at": reviewed_at,
                }
            )
            item.status = "reviewed"
            item.human_label = int(label)
            item.reviewer_id = reviewer_id
            item.reviewed_at = reviewed_at
            return item

    def progress(self) -> dict:
        pending = sum(1 for i in self._items.values() if i.status == "pending")
        reviewed = len(self._items) - pending
        flagged = len(self._items)
        total = max(self._total_decided, flagged)
        her = None if total == 0 else (total - flagged) * 100.0 / total
        return {"pending": pending, "reviewed": reviewed, "her_so_far": her}

    def reviewed_labels(self) -> dict[str, int]:
        """unit_id-and-task keyed human labels, for merging into final reports."""
        out = {}
        for item in self._items.values():
            if item.status == "reviewed" and item.human_label is not None:
                out[f"{item.unit_id}|{item.task}"] = item.human_label
        return out
