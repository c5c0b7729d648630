"""Literature retrieval: an academic-search HTTP client with on-disk caching
and offline mode, a rerank-service client, and the lexical fallback that
keeps the pipeline runnable when no rerank service is deployed.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import threading
import time
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

import requests

from .model import canonical_json

logger = logging.getLogger(__name__)

DEFAULT_MIN_YEAR = 2023
DEFAULT_SEARCH_LIMIT = 20
SEARCH_FIELDS = "title,abstract,year,venue,externalIds"


class ScholarError(Exception):
    pass


@dataclass(frozen=True)
class SearchHit:
    external_id: str
    title: str
    abstract: str
    year: int | None = None
    venue: str = ""

    def to_dict(self) -> dict:
        return {
            "external_id": self.external_id,
            "title": self.title,
            "abstract": self.abstract,
            "year": self.year,
            "venue": self.venue,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SearchHit":
        return cls(
            external_id=str(d["external_id"]),
            title=str(d.get("title", "")),
            abstract=str(d.get("abstract", "")),
            year=int(d["year"]) if d.get("year") is not None else None,
            venue=str(d.get("venue", "")),
        )

    def document_text(self) -> str:
        return f"{self.title}. {self.abstract}".strip()


@dataclass(frozen=True)
class RerankedHit:
    hit: SearchHit
    score: float

    def to_dict(self) -> dict:
        return {"hit": self.hit.to_dict(), "score": self.score}


# ---------------------------------------------------------------------------
# Search client
# ---------------------------------------------------------------------------


class ScholarClient:
    """Client for a Semantic Scholar-compatible paper-search API.

    Responses are cached on disk keyed by the full query parameters; in
    ``offline`` mode only the cache is consulted and a miss degrades to an
    empty hit list with a warning (retrieval grounding is best-effort by
    design, the pipeline must keep going without it).
    """

    def __init__(
        self,
        base_url: str = "https://api.semanticscholar.org",
        session: requests.Session | None = None,
        cache_dir: str | Path | None = None,
        api_key_env: str = "S2_API_KEY",
        min_interval_s: float = 1.0,
        timeout: float = 30.0,
        offline: bool = False,
        clock=time.monotonic,
        sleeper=time.sleep,
    ):
        self._base_url = base_url.rstrip("/")
        self._session = session or requests.Session()
        self._cache_dir = Path(cache_dir) if cache_dir else None
        if self._cache_dir:
            self._cache_dir.mkdir(parents=True, exist_ok=True)
        self._api_key_env = api_key_env
        self._min_interval = min_interval_s
        self._timeout = timeout
        self.offline = offline
        self._clock = clock
        self._sleeper = sleeper
        self._last_call = -math.inf
        self._lock = threading.Lock()

    def _cache_path(self, key: dict) -> Path | None:
        if not self._cache_dir:
            return None
        digest = hashlib.sha256(canonical_json(key).encode("utf-8")).hexdigest()
        return self._cache_dir / f"search-{digest}.json"

    def _throttle(self) -> None:
        with self._lock:
            wait = self._min_interval - (self._clock() - self._last_call)
            if wait > 0:
                self._sleeper(wait)
            self._last_call = self._clock()

    def search(
        self,
        query: str,
        min_year: int = DEFAULT_MIN_YEAR,
        limit: int = DEFAULT_SEARCH_LIMIT,
    ) -> list[SearchHit]:
        """Search for papers published in ``min_year`` or later.  The year
        floor is enforced client-side as well; hits without an external id
        are dropped, duplicates collapse to the first occurrence."""
        key = {"query": query, "min_year": min_year, "limit": limit}
        cache_path = self._cache_path(key)
        if cache_path is not None and cache_path.exists():
            raw = json.loads(cache_path.read_text("utf-8"))
            return [SearchHit.from_dict(d) for d in raw]
        if self.offline:
            logger.warning("offline retrieval cache miss for query %r; returning no hits", query)
            return []
        self._throttle()
        headers = {}
        key_value = os.environ.get(self._api_key_env, "")
        if key_value:
            headers["x-api-key"] = key_value
        url = f"{self._base_url}/graph/v1/paper/search"
        params = {
            "query": query,
            "fields": SEARCH_FIELDS,
            "limit": limit,
            "year": f"{min_year}-",
        }
        try:
            response = self._session.get(url, params=params, headers=headers, timeout=self._timeout)
        except Exception as exc:
            raise ScholarError(f"search request failed: {exc}") from exc
        if response.status_code != 200:
            raise ScholarError(f"search returned HTTP {response.status_code}")
        body = response.json()
        hits = []
        seen = set()
        for item in body.get("data", []):
            external_ids = item.get("externalIds") or {}
            external_id = (
                item.get("paperId")
                or external_ids.get("DOI")
                or external_ids.get("ArXiv")
                or ""
            )
            if not external_id or external_id in seen:
                continue
            year = item.get("year")
            if year is not None and int(year) < min_year:
                continue
            seen.add(external_id)
            hits.append(
                SearchHit(
                    external_id=str(external_id),
                    title=str(item.get("title") or ""),
                    abstract=str(item.get("abstract") or ""),
                    year=int(year) if year is not None else None,
                    venue=str(item.get("venue") or ""),
                )
            )
        if cache_path is not None:
            cache_path.write_text(
                json.dumps([h.to_dict() for h in hits], ensure_ascii=False), encoding="utf-8"
            )
        return hits


# ---------------------------------------------------------------------------
# Rerank service client
# ---------------------------------------------------------------------------


class RerankClient:
    """Thin client for the external rerank microservice.  The service only
    scores; ordering and cutoff stay on this side."""

    def __init__(self, base_url: str, session: requests.Session | None = None, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self._session = session or requests.Session()
        self._timeout = timeout

    def is_healthy(self) -> bool:
        try:
            response = self._session.get(f"{self.base_url}/health", timeout=self._timeout)
        except Exception:
            return False
        if response.status_code != 200:
            return False
        try:
            return bool(response.json().get("ready"))
        except Exception:
            return False

    def score(self, query: str, documents: Sequence[str]) -> list[float]:
        response = self._session.post(
            f"{self.base_url}/rerank",
            json={"query": query, "documents": list(documents)},
            timeout=self._timeout,
        )
        if response.status_code != 200:
            raise ScholarError(f"rerank service returned HTTP {response.status_code}")
        scores = response.json().get("scores")
        if not isinstance(scores, list) or len(scores) != len(documents):
            raise ScholarError(
                f"rerank service returned {0 if not isinstance(scores, list) else len(scores)} "
                f"scores for {len(documents)} documents"
            )
        return [float(s) for s in scores]


# ---------------------------------------------------------------------------
# Reranking with lexical fallback
# ---------------------------------------------------------------------------


def _tokens(text: str) -> list[str]:
    return re.findall(r"[a-z0-9]+", text.lower())


def lexical_score(query: str, document: str) -> float:
    """Term-frequency cosine similarity; 0.0 when either side is empty."""
    q = Counter(_tokens(query))
    d = Counter(_tokens(document))
    if not q or not d:
        return 0.0
    dot = sum(count * d[token] for token, count in q.items())
    norm = math.sqrt(sum(c * c for c in q.values())) * math.sqrt(sum(c * c for c in d.values()))
    return dot / norm if norm else 0.0


def lexical_scores(query: str, documents: Sequence[str]) -> list[float]:
    return [lexical_score(query, doc) for doc in documents]


def dedup_hits(hits: Sequence[SearchHit]) -> list[SearchHit]:
    seen = set()
    unique = []
    for hit in hits:
        if hit.external_id in seen:
            continue
        seen.add(hit.external_id)
        unique.append(hit)
    return unique


def rerank_hits(
    query: str,
    hits: Sequence[SearchHit],
    k: int,
    service: RerankClient | None = None,
) -> tuple[list[RerankedHit], str]:
    """Score hits against the query and keep the top ``min(k, unique hits)``.

    Uses the rerank service when one is configured and healthy, otherwise the
    built-in lexical scorer.  Ordering is by descending score with ties
    broken by ascending external id, so results are a deterministic
    permutation-subset of the input either way.  Returns (hits, scorer_name).
    """
    if k <= 0:
        raise ScholarError(f"rerank cutoff must be positive, got {k}")
    unique = dedup_hits(hits)
    if not unique:
        return [], "none"
    documents = [hit.document_text() for hit in unique]
    scorer = "lexical"
    scores: list[float] | None = None
    if service is not None:
        if service.is_healthy():
            try:
                scores = service.score(query, documents)
                scorer = "service"
            except ScholarError as exc:
                logger.warning("rerank service failed (%s); falling back to lexical scoring", exc)
        else:
            logger.warning("rerank service not healthy; falling back to lexical scoring")
    if scores is None:
        scores = lexical_scores(query, documents)
    ranked = sorted(
        (RerankedHit(hit=hit, score=score) for hit, score in zip(unique, scores)),
        key=lambda rh: (-rh.score, rh.hit.external_id),
    )
    return ranked[: min(k, len(ranked))], scorer


def retrieve(
    client: ScholarClient,
    keywords: Sequence[str],
    k: int,
    min_year: int = DEFAULT_MIN_YEAR,
    limit: int = DEFAULT_SEARCH_LIMIT,
    service: RerankClient | None = None,
    per_keyword: bool = False,
) -> tuple[list[RerankedHit], list[str]]:
    """Run every keyword query, pool and dedup the hits, and rerank.

    Default policy reranks the pooled set once against the joined keywords
    and takes a global top-k; ``per_keyword=True`` instead takes top-k per
    keyword and dedups the union (first keyword wins ties).  Failed queries
    degrade to warnings, never abort retrieval.
    """
    warnings = []
    pooled: list[SearchHit] = []
    per_keyword_hits: list[list[SearchHit]] = []
    for keyword in keywords:
        try:
            found = client.search(keyword, min_year=min_year, limit=limit)
        except ScholarError as exc:
            warnings.append(f"search failed for keyword {keyword!r}: {exc}")
            found = []
        pooled.extend(found)
        per_keyword_hits.append(found)
    if per_keyword:
        merged: list[RerankedHit] = []
        seen: set[str] = set()
        for keyword, found in zip(keywords, per_keyword_hits):
            ranked, _ = rerank_hits(keyword, found, k, service=service)
            for item in ranked:
                if item.hit.external_id not in seen:
                    seen.add(item.hit.external_id)
                    merged.append(item)
        return merged, warnings
    query = " ".join(keywords)
    ranked, _ = rerank_hits(query, pooled, k, service=service)
    return ranked, warnings
