"""HTTP API over the review store, plus static hosting for the review UI."""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from fastapi import Depends, FastAPI, Header, HTTPException, Query
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from ..corpus import TaskKind
from .store import ReviewConflictError, ReviewStore, ReviewStoreError


class ReviewRequest(BaseModel):
    label: int
    reviewer_id: str


def create_app(
    store: ReviewStore,
    static_dir: Optional[Path] = None,
    token: Optional[str] = None,
) -> FastAPI:
    app = FastAPI(title="review queue")

    def check_auth(authorization: Optional[str] = Header(default=None)) -> None:
        if token is None:
            return
        if authorization != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="missing or invalid bearer token")

    @app.get("/api/queue", dependencies=[Depends(check_auth)])
    def queue(task: Optional[str] = Query(default=None), limit: int = Query(default=50, ge=1)):
        if task is not None:
            try:
                TaskKind(task)
            except ValueError:
                raise HTTPException(status_code=422, detail=f"unknown task {task!r}")
        items = store.next_pending(task=task, limit=limit)
        return {"items": [vars(i) for i in items], "progress": store.progress()}

    # item ids embed unit ids, which contain slashes; match the full path
    @app.get("/api/items/{item_id:path}", dependencies=[Depends(check_auth)])
    def get_item(item_id: str):
        item = store.get(item_id)
        if item is None:
            raise HTTPException(status_code=404, detail=f"no item {item_id}")
        return vars(item)

    @app.post("/api/items/{item_id:path}/review", dependencies=[Depends(check_auth)])
    def review(item_id: str, body: ReviewRequest):
        try:
            item = store.submit_review(item_id, body.label, body.reviewer_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"no item {item_id}")
        except ReviewConflictError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except ReviewStoreError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return vars(item)

    @app.get("/api/progress", dependencies=[Depends(check_auth)])
    def progress():
        return store.progress()

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
