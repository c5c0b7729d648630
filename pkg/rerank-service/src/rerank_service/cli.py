"""Server entry point."""

from __future__ import annotations

import argparse
import logging

import uvicorn

from .app import create_app
from .models import BUILTIN_MODEL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rerank-service",
        description="Relevance-scoring HTTP service: POST /rerank, GET /health.",
    )
    parser.add_argument(
        "--model",
        default=BUILTIN_MODEL,
        help=f"model id; {BUILTIN_MODEL!r} is the dependency-free builtin, "
        "anything else is loaded as a sentence-transformers cross-encoder",
    )
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8100)
    parser.add_argument(
        "--max-batch", type=int, default=32,
        help="micro-batch size for cross-encoder inference",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO)
    app = create_app(model_id=args.model, batch_size=args.max_batch)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
