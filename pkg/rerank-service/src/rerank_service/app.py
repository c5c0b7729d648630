"""HTTP surface.

Two routes. ``GET /health`` reports readiness; ``POST /rerank`` maps a query
and a batch of documents to one finite relevance score per document, in
request order. The service never sorts, truncates, or deduplicates: ranking
policy belongs to the caller, which keeps every scoring backend behaviorally
interchangeable.
"""

from __future__ import annotations

import logging
import math
import threading
from contextlib import asynccontextmanager
from typing import Sequence

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .models import BUILTIN_MODEL, ScoringModel, create_model

log = logging.getLogger("rerank_service")

# wire contract cap, not a tuning knob
MAX_DOCUMENTS = 200


class RerankRequest(BaseModel):
    query: str
    documents: list[str]


class RerankService:
    """Owns the scoring model and its load lifecycle."""

    def __init__(self, model: ScoringModel) -> None:
        self.model = model
        self._ready = threading.Event()
        self._load_lock = threading.Lock()

    @property
    def ready(self) -> bool:
        return self._ready.is_set()

    def load(self) -> None:
        with self._load_lock:
            if not self._ready.is_set():
                self.model.load()
                self._ready.set()
                log.info("model %s ready", self.model.name)

    def load_in_background(self) -> None:
        threading.Thread(target=self.load, name="model-loader", daemon=True).start()

    def score(self, query: str, documents: Sequence[str]) -> list[float]:
        scores = self.model.score_batch(query, documents)
        if len(scores) != len(documents):
            raise RuntimeError(
                f"backend returned {len(scores)} scores for {len(documents)} documents"
            )
        if not all(math.isfinite(s) for s in scores):
            raise RuntimeError("backend produced a non-finite score")
        return scores


def create_app(
    model_id: str = BUILTIN_MODEL,
    batch_size: int = 32,
    auto_load: bool = True,
) -> FastAPI:
    """Build the application. ``auto_load=True`` starts loading weights in
    the background when the server starts; until the load finishes /health
    reports ready=false and /rerank answers 503."""
    service = RerankService(create_model(model_id, batch_size=batch_size))

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if auto_load:
            service.load_in_background()
        yield

    app = FastAPI(title="rerank-service", lifespan=lifespan)
    app.state.service = service

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        # shape errors are client errors, full stop
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.get("/health")
    def health() -> dict:
        return {
            "status": "ok" if service.ready else "loading",
            "model": service.model.name,
            "ready": service.ready,
        }

    @app.post("/rerank")
    def rerank(body: RerankRequest) -> dict:
        if not body.query.strip():
            raise HTTPException(status_code=400, detail="query must be non-empty")
        if not body.documents:
            raise HTTPException(status_code=400, detail="documents must be non-empty")
        if len(body.documents) > MAX_DOCUMENTS:
            raise HTTPException(
                status_code=400,
                detail=f"too many documents: {len(body.documents)} > {MAX_DOCUMENTS}",
            )
        if not service.ready:
            raise HTTPException(status_code=503, detail="model loading")
        return {
            "scores": service.score(body.query, body.documents),
            "model": service.model.name,
        }

    return app
