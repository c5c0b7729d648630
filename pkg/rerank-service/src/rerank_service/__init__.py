"""Relevance-scoring microservice: one score per document, ranking left to
the caller."""

from .app import MAX_DOCUMENTS, RerankService, create_app
from .models import BUILTIN_MODEL, CrossEncoderScorer, LexicalScorer, create_model

__all__ = [
    "BUILTIN_MODEL",
    "MAX_DOCUMENTS",
    "CrossEncoderScorer",
    "LexicalScorer",
    "RerankService",
    "create_app",
    "create_model",
]

__version__ = "0.1.0"
