"""Corpus ingestion: raw OpenReview-style records in, benchmark instances out.

The stages are deliberately separable and individually testable: field
normalization, the four-rule quality filter, seeded sampling, ground-truth
extraction, and reference-review consolidation.
"""

from __future__ import annotations

import csv
import json
import logging
import random
import re
from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .gateway import ChatRequest, Gateway, ModelRole
from .model import (
    BenchmarkInstance,
    Decision,
    GroundTruth,
    Paper,
    REVIEW_JSON_SCHEMA,
    REVIEW_JSON_SCHEMA_ID,
    StructuredReview,
    canonical_json,
    to_rational,
)
from .prompts import render_pair

logger = logging.getLogger(__name__)

DEFAULT_MIN_REVIEWS = 3
DEFAULT_MIN_BODY_CHARS = 2000


class IngestError(Exception):
    pass


class FilterReason(str, Enum):
    INCOMPLETE_TEXT = "incomplete_text"
    WITHDRAWN = "withdrawn"
    DESK_REJECTED = "desk_rejected"
    INSUFFICIENT_REVIEWS = "insufficient_reviews"
    MISSING_FIELDS = "missing_fields"


@dataclass(frozen=True)
class RawRecord:
    """One submission as exported from the review platform, untrusted."""

    paper_id: str
    title: str = ""
    abstract: str = ""
    body: str = ""
    sections: tuple[tuple[str, str], ...] = ()
    venue: str = ""
    year: int | None = None
    status: str = ""  # e.g. active / withdrawn / desk_rejected
    decision_label: str = ""
    raw_reviews: tuple[Mapping[str, Any], ...] = ()

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RawRecord":
        return cls(
            paper_id=str(d.get("paper_id", d.get("id", ""))),
            title=str(d.get("title", "")),
            abstract=str(d.get("abstract", "")),
            body=str(d.get("body", d.get("full_text", ""))),
            sections=tuple(
                (s["heading"], s["text"]) for s in d.get("sections", [])
            ),
            venue=str(d.get("venue", "")),
            year=int(d["year"]) if d.get("year") is not None else None,
            status=str(d.get("status", "")),
            decision_label=str(d.get("decision_label", d.get("decision", ""))),
            raw_reviews=tuple(dict(r) for r in d.get("reviews", d.get("raw_reviews", []))),
        )

    def to_paper(self) -> Paper:
        return Paper(
            id=self.paper_id,
            title=self.title,
            abstract=self.abstract,
            body=self.body,
            sections=self.sections,
            venue=self.venue,
            year=self.year,
        )


# ---------------------------------------------------------------------------
# Review-field normalization
# ---------------------------------------------------------------------------

# First matching alias wins; keys are the canonical field names.
FIELD_ALIASES: dict[str, tuple[str, ...]] = {
    "summary": ("summary", "paper_summary", "review_summary"),
    "strengths": ("strengths", "strength", "pros"),
    "weaknesses": ("weaknesses", "weakness", "cons", "limitations"),
    "questions": ("questions", "questions_for_authors", "clarifications"),
    "soundness": ("soundness", "technical_soundness", "correctness"),
    "presentation": ("presentation", "clarity", "presentation_quality"),
    "contribution": ("contribution", "significance", "novelty"),
    "rating": ("rating", "overall_rating", "overall", "score", "recommendation_score"),
    "confidence": ("confidence", "reviewer_confidence"),
    "decision": ("decision", "recommendation"),
}

_LEADING_NUMBER = re.compile(r"^\s*(-?\d+(?:\.\d+)?)")


def _lookup(raw: Mapping[str, Any], field: str) -> Any:
    lowered = {str(k).strip().lower(): v for k, v in raw.items()}
    for alias in FIELD_ALIASES[field]:
        if alias in lowered and lowered[alias] not in (None, ""):
            return lowered[alias]
    return None


def parse_leading_number(value: Any) -> Fraction:
    """Extract the numeric part of values like ``8``, ``"8"``, or
    ``"8: strong accept"``."""
    if isinstance(value, bool):
        raise IngestError(f"boolean is not a score: {value!r}")
    if isinstance(value, (int, float)):
        return to_rational(value)
    match = _LEADING_NUMBER.match(str(value))
    if not match:
        raise IngestError(f"no leading number in {value!r}")
    return to_rational(match.group(1))


def normalize_decision(label: str) -> Decision:
    """Map venue-flavored decision strings ("Accept (poster)", "Reject") to
    the binary decision.  Reject wins when both words somehow appear."""
    lowered = label.strip().lower()
    if not lowered:
        raise IngestError("empty decision label")
    if "reject" in lowered:
        return Decision.REJECT
    if "accept" in lowered:
        return Decision.ACCEPT
    raise IngestError(f"cannot map decision label {label!r}")


def normalize_review(raw: Mapping[str, Any]) -> StructuredReview:
    """Map one raw review onto the canonical structure.

    Raises IngestError when a mandatory field is missing or unparseable.
    Raw reviews rarely carry an explicit decision; when absent it is derived
    from the rating (6 and above reads as accept on the 10-point scale).
    """
    texts = {}
    for field in ("summary", "strengths", "weaknesses", "questions"):
        value = _lookup(raw, field)
        if value is None or not str(value).strip():
            raise IngestError(f"missing review text field: {field}")
        texts[field] = str(value).strip()
    numerics = {}
    for field in ("soundness", "presentation", "contribution", "confidence"):
        value = _lookup(raw, field)
        if value is None:
            raise IngestError(f"missing review score field: {field}")
        number = parse_leading_number(value)
        if number.denominator != 1 or not 1 <= number <= 5:
            raise IngestError(f"review field {field}={value!r} is not an integer in [1, 5]")
        numerics[field] = int(number)
    rating_value = _lookup(raw, "rating")
    if rating_value is None:
        raise IngestError("missing review score field: rating")
    rating = parse_leading_number(rating_value)
    if not 1 <= rating <= 10:
        raise IngestError(f"rating {rating_value!r} outside [1, 10]")
    decision_value = _lookup(raw, "decision")
    if decision_value is not None:
        decision = normalize_decision(str(decision_value))
    else:
        decision = Decision.ACCEPT if rating >= 6 else Decision.REJECT
    return StructuredReview(
        summary=texts["summary"],
        strengths=texts["strengths"],
        weaknesses=texts["weaknesses"],
        questions=texts["questions"],
        soundness=numerics["soundness"],
        presentation=numerics["presentation"],
        contribution=numerics["contribution"],
        rating=rating,
        confidence=numerics["confidence"],
        decision=decision,
    )


def is_complete_review(raw: Mapping[str, Any]) -> bool:
    try:
        normalize_review(raw)
        return True
    except IngestError:
        return False


# ---------------------------------------------------------------------------
# Filtering and sampling
# ---------------------------------------------------------------------------

_WITHDRAWN = {"withdrawn", "withdrawal"}
_DESK_REJECTED = {"desk_rejected", "desk-rejected", "desk reject", "desk_reject", "deskrejected"}


def filter_record(
    record: RawRecord,
    min_reviews: int = DEFAULT_MIN_REVIEWS,
    min_body_chars: int = DEFAULT_MIN_BODY_CHARS,
) -> FilterReason | None:
    """Return the first failing filter rule, or None when the record is
    usable.  Rule order is part of the contract: text completeness, then
    lifecycle status, then review count, then remaining mandatory fields."""
    if not record.title.strip() or len(record.body.strip()) < min_body_chars:
        return FilterReason.INCOMPLETE_TEXT
    status = record.status.strip().lower()
    if status in _WITHDRAWN:
        return FilterReason.WITHDRAWN
    if status in _DESK_REJECTED:
        return FilterReason.DESK_REJECTED
    complete = sum(1 for raw in record.raw_reviews if is_complete_review(raw))
    if complete < min_reviews:
        return FilterReason.INSUFFICIENT_REVIEWS
    if not record.abstract.strip():
        return FilterReason.MISSING_FIELDS
    try:
        normalize_decision(record.decision_label)
    except IngestError:
        return FilterReason.MISSING_FIELDS
    return None


def filter_corpus(
    records: Sequence[RawRecord],
    min_reviews: int = DEFAULT_MIN_REVIEWS,
    min_body_chars: int = DEFAULT_MIN_BODY_CHARS,
) -> tuple[list[RawRecord], list[tuple[str, FilterReason]]]:
    kept, dropped = [], []
    for record in records:
        reason = filter_record(record, min_reviews=min_reviews, min_body_chars=min_body_chars)
        if reason is None:
            kept.append(record)
        else:
            dropped.append((record.paper_id, reason))
    return kept, dropped


def sample_corpus(records: Sequence[RawRecord], n: int, seed: int) -> list[RawRecord]:
    """Seeded sample without replacement.

    Contract (pinned so runs are reproducible across machines): records are
    sorted by paper id, then a partial Fisher-Yates shuffle driven by
    ``random.Random(seed)`` picks the first ``n`` slots.
    """
    if n > len(records):
        raise IngestError(f"cannot sample {n} from {len(records)} records")
    pool = sorted(records, key=lambda r: r.paper_id)
    rng = random.Random(seed)
    for i in range(n):
        j = rng.randrange(i, len(pool))
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:n]


# ---------------------------------------------------------------------------
# Ground truth and the reference review
# ---------------------------------------------------------------------------


def ground_truth(
    paper_id: str, reviews: Sequence[StructuredReview], decision_label: str
) -> GroundTruth:
    if not reviews:
        raise IngestError(f"paper {paper_id}: no reviews to derive ground truth from")
    rating = sum((r.rating for r in reviews), Fraction(0)) / len(reviews)
    return GroundTruth(
        paper_id=paper_id,
        rating=rating,
        decision=normalize_decision(decision_label),
    )


def rounded_mean(values: Sequence[int]) -> int:
    """Mean rounded half-up, in exact arithmetic."""
    if not values:
        raise IngestError("rounded_mean of empty sequence")
    mean = Fraction(sum(values), len(values))
    return int(mean + Fraction(1, 2)) if mean >= 0 else -int(-mean + Fraction(1, 2))


def consolidation_request(
    role: ModelRole, paper: Paper, reviews: Sequence[StructuredReview]
) -> ChatRequest:
    system, user = render_pair(
        "reference",
        {
            "paper_title": paper.title,
            "reviews_json": canonical_json([r.to_dict() for r in reviews]),
        },
    )
    return ChatRequest(role=role, system=system, user=user, schema_id=REVIEW_JSON_SCHEMA_ID)


def reference_review(
    gateway: Gateway,
    role: ModelRole,
    paper: Paper,
    reviews: Sequence[StructuredReview],
    truth: GroundTruth,
    single_index: int | None = None,
) -> StructuredReview:
    """Build the reference review for one paper.

    Default mode consolidates all human reviews through the model; single
    mode takes the human review at ``single_index`` verbatim.  Either way the
    numeric spine is never left to a model: rating and decision come from
    recorded ground truth, and in consolidation mode the categorical scores
    are the rounded means of the human values.
    """
    if single_index is not None:
        base = reviews[single_index]
        return replace(base, rating=truth.rating, decision=truth.decision)
    gateway.registry.register(REVIEW_JSON_SCHEMA_ID, REVIEW_JSON_SCHEMA)
    response = gateway.complete(consolidation_request(role, paper, reviews))
    payload = response.parsed
    return StructuredReview(
        summary=str(payload["summary"]),
        strengths=str(payload["strengths"]),
        weaknesses=str(payload["weaknesses"]),
        questions=str(payload["questions"]),
        soundness=rounded_mean([r.soundness for r in reviews]),
        presentation=rounded_mean([r.presentation for r in reviews]),
        contribution=rounded_mean([r.contribution for r in reviews]),
        rating=truth.rating,
        confidence=rounded_mean([r.confidence for r in reviews]),
        decision=truth.decision,
    )


# ---------------------------------------------------------------------------
# Benchmark assembly and I/O
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BenchmarkBuild:
    instances: tuple[BenchmarkInstance, ...]
    dropped: tuple[tuple[str, FilterReason], ...]
    warnings: tuple[str, ...]


def build_benchmark(
    gateway: Gateway,
    role: ModelRole,
    records: Sequence[RawRecord],
    sample_size: int | None = None,
    seed: int = 42,
    single_reference: bool = False,
    min_reviews: int = DEFAULT_MIN_REVIEWS,
    min_body_chars: int = DEFAULT_MIN_BODY_CHARS,
) -> BenchmarkBuild:
    """Filter, optionally sample, and materialize benchmark instances.
    Output instances are sorted by paper id regardless of input order."""
    ids = [r.paper_id for r in records]
    duplicates = sorted({i for i in ids if ids.count(i) > 1})
    if duplicates:
        raise IngestError(f"duplicate paper ids in corpus: {duplicates}")
    kept, dropped = filter_corpus(records, min_reviews=min_reviews, min_body_chars=min_body_chars)
    if sample_size is not None:
        kept = sample_corpus(kept, sample_size, seed)
    warnings = []
    instances = []
    for record in sorted(kept, key=lambda r: r.paper_id):
        paper = record.to_paper()
        problems = paper.validate()
        if problems:
            raise IngestError(f"paper {record.paper_id}: " + "; ".join(problems))
        reviews = []
        for position, raw in enumerate(record.raw_reviews):
            try:
                reviews.append(normalize_review(raw))
            except IngestError as exc:
                warnings.append(
                    f"paper {record.paper_id}: dropped incomplete review {position}: {exc}"
                )
        truth = ground_truth(record.paper_id, reviews, record.decision_label)
        single_index = None
        if single_reference:
            # per-paper stream so instance content is independent of corpus order
            single_index = random.Random(f"{seed}:{record.paper_id}").randrange(len(reviews))
            warnings.append(
                f"paper {record.paper_id}: single-reference mode using human review {single_index}"
            )
        reference = reference_review(
            gateway, role, paper, reviews, truth, single_index=single_index
        )
        instances.append(
            BenchmarkInstance(
                paper=paper,
                human_reviews=tuple(reviews),
                reference_review=reference,
                ground_truth=truth,
            )
        )
    for warning in warnings:
        logger.warning("%s", warning)
    return BenchmarkBuild(
        instances=tuple(instances), dropped=tuple(dropped), warnings=tuple(warnings)
    )


def read_raw_records(path: str | Path) -> list[RawRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(RawRecord.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise IngestError(f"{path}:{line_number}: bad record: {exc}") from exc
    return records


def write_instances_jsonl(instances: Iterable[BenchmarkInstance], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for instance in instances:
            handle.write(canonical_json(instance.to_dict()) + "\n")


def read_instances_jsonl(path: str | Path) -> list[BenchmarkInstance]:
    instances = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                instances.append(BenchmarkInstance.from_dict(json.loads(line)))
    return instances


def load_papers_only(path: str | Path) -> list[Paper]:
    """Load just the papers from a benchmark file.  The generation pipeline
    goes through this loader so reference reviews are never even decoded on
    that side."""
    papers = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                papers.append(Paper.from_dict(json.loads(line)["paper"]))
    return papers


def write_drop_report_csv(
    dropped: Sequence[tuple[str, FilterReason]], path: str | Path
) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["paper_id", "reason"])
        for paper_id, reason in dropped:
            writer.writerow([paper_id, reason.value])
