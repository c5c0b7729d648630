"""Scoring backends.

A model takes (query, document) pairs and returns one relevance score per
document. Two backends exist: a dependency-free deterministic lexical model,
and an optional pretrained cross-encoder loaded through sentence-transformers
when a non-builtin model id is configured.
"""

from __future__ import annotations

import logging
import math
import re
import threading
from collections import Counter
from typing import Protocol, Sequence

log = logging.getLogger("rerank_service")

BUILTIN_MODEL = "lexical-overlap-v1"


class ScoringModel(Protocol):
    name: str

    def load(self) -> None: ...

    def score_batch(self, query: str, documents: Sequence[str]) -> list[float]: ...


def _tokens(text: str) -> list[str]:
    return re.findall(r"[a-z0-9]+", text.lower())


def _bigrams(tokens: Sequence[str]) -> list[str]:
    return [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]


def _cosine(a: Counter, b: Counter) -> float:
    if not a or not b:
        return 0.0
    # iterate in sorted key order so float accumulation is reproducible
    dot = sum(count * b[key] for key, count in sorted(a.items()) if key in b)
    if dot == 0:
        return 0.0
    norm_a = math.sqrt(sum(c * c for _, c in sorted(a.items())))
    norm_b = math.sqrt(sum(c * c for _, c in sorted(b.items())))
    return dot / (norm_a * norm_b)


class LexicalScorer:
    """Deterministic lexical relevance: unigram cosine blended with a bigram
    cosine so exact phrasings outrank bag-of-words matches. No weights, no
    I/O; ``load`` exists to honor the readiness lifecycle."""

    UNIGRAM_WEIGHT = 0.75
    BIGRAM_WEIGHT = 0.25

    def __init__(self) -> None:
        self.name = BUILTIN_MODEL

    def load(self) -> None:
        return None

    def score_pair(self, query: str, document: str) -> float:
        q_tokens, d_tokens = _tokens(query), _tokens(document)
        uni = _cosine(Counter(q_tokens), Counter(d_tokens))
        bi = _cosine(Counter(_bigrams(q_tokens)), Counter(_bigrams(d_tokens)))
        return self.UNIGRAM_WEIGHT * uni + self.BIGRAM_WEIGHT * bi

    def score_batch(self, query: str, documents: Sequence[str]) -> list[float]:
        return [self.score_pair(query, doc) for doc in documents]


class CrossEncoderScorer:
    """Pretrained cross-encoder through sentence-transformers. Heavy import
    and weight loading happen in ``load``, never at construction, so the
    service can report ready=false while they are in flight."""

    def __init__(self, model_id: str, batch_size: int = 32) -> None:
        self.name = model_id
        self._batch_size = batch_size
        self._encoder = None
        self._lock = threading.Lock()

    def load(self) -> None:
        from sentence_transformers import CrossEncoder  # deferred, heavy

        log.info("loading cross-encoder %s", self.name)
        self._encoder = CrossEncoder(self.name)

    def score_batch(self, query: str, documents: Sequence[str]) -> list[float]:
        if self._encoder is None:
            raise RuntimeError("model not loaded")
        pairs = [(query, doc) for doc in documents]
        # inference serialized; the encoder micro-batches internally
        with self._lock:
            scores = self._encoder.predict(pairs, batch_size=self._batch_size)
        return [float(s) for s in scores]


def create_model(model_id: str, batch_size: int = 32) -> ScoringModel:
    if model_id == BUILTIN_MODEL:
        return LexicalScorer()
    return CrossEncoderScorer(model_id, batch_size=batch_size)
