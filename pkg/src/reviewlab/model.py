"""Shared domain types for the review benchmark: papers, reviews, rubrics,
scores, and the exact-rational JSON codec.

Every other module in the package depends on this one and on nothing else
inside the package, so the types here are deliberately plain: frozen
dataclasses, tuples instead of lists, and explicit ``to_dict``/``from_dict``
codecs.  Ratings and dimension scores are carried as ``fractions.Fraction``
end to end; floats only appear at the reporting boundary.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, Iterable, Mapping, Sequence

# ---------------------------------------------------------------------------
# Scales and ranges
# ---------------------------------------------------------------------------

RATING_MIN = Fraction(1)
RATING_MAX = Fraction(10)
CATEGORICAL_MIN = 1
CATEGORICAL_MAX = 5

NUM_DIMENSIONS = 8
POSITIVE_DIMENSION_COUNT = 7
PITFALL_POSITION = 7  # 0-based position of the single negative dimension

POSITIVE_SCORE_VALUES = (0, 1, 2)
PITFALL_SCORE_VALUES = (-2, -1, 0)
OVERALL_MIN = Fraction(-2)
OVERALL_MAX = Fraction(14)

REVIEW_TEXT_FIELDS = ("summary", "strengths", "weaknesses", "questions")
REVIEW_CATEGORICAL_FIELDS = ("soundness", "presentation", "contribution", "confidence")
# Fields covered by the keep-numbers-unchanged policy during aggregation.
REVIEW_NUMERIC_FIELDS = REVIEW_CATEGORICAL_FIELDS + ("rating",)


class Decision(str, Enum):
    ACCEPT = "accept"
    REJECT = "reject"


class Polarity(str, Enum):
    POSITIVE = "positive"
    PITFALL = "pitfall"


def decision_to_label(decision: Decision) -> str:
    return decision.value


def label_to_decision(label: str) -> Decision:
    try:
        return Decision(label)
    except ValueError:
        raise ValueError(f"unknown decision label: {label!r}") from None


def decision_to_int(decision: Decision) -> int:
    """Binary coding used by the classification metrics (accept is the
    positive class)."""
    return 1 if decision is Decision.ACCEPT else 0


# ---------------------------------------------------------------------------
# Exact rationals in JSON
# ---------------------------------------------------------------------------


def to_rational(value: Any) -> Fraction:
    """Coerce a numeric-ish value to an exact Fraction.

    Floats are interpreted through their shortest decimal repr, so a JSON
    ``6.6667`` becomes 66667/10000 rather than the binary approximation.
    """
    if isinstance(value, bool):
        raise TypeError("bool is not a rational value")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"cannot interpret {type(value).__name__} as a rational")


def rational_to_json(value: Fraction) -> int | str:
    """Encode a Fraction losslessly: int when integral, a decimal string when
    the denominator is a pure 2^a*5^b factor, else ``"p/q"``."""
    value = Fraction(value)
    if value.denominator == 1:
        return int(value)
    d = value.denominator
    twos = fives = 0
    while d % 2 == 0:
        d //= 2
        twos += 1
    while d % 5 == 0:
        d //= 5
        fives += 1
    if d == 1:
        k = max(twos, fives)
        scaled = value.numerator * 10**k // value.denominator
        digits = str(abs(scaled)).rjust(k + 1, "0")
        sign = "-" if scaled < 0 else ""
        return f"{sign}{digits[:-k]}.{digits[-k:]}"
    return f"{value.numerator}/{value.denominator}"


def rational_from_json(value: Any) -> Fraction:
    return to_rational(value)


# ---------------------------------------------------------------------------
# Canonical JSON and hashing
# ---------------------------------------------------------------------------


def canonical_json(obj: Any) -> str:
    """Deterministic JSON text: sorted keys, no insignificant whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def content_hash(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Papers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Paper:
    """A submission under review.  ``sections`` is an ordered tuple of
    (heading, text) pairs and every section text must occur verbatim in
    ``body`` (the attack harness relies on that containment)."""

    id: str
    title: str
    abstract: str
    body: str
    sections: tuple[tuple[str, str], ...] = ()
    venue: str = ""
    year: int | None = None

    def validate(self) -> list[str]:
        problems = []
        if not self.id.strip():
            problems.append("paper id is empty")
        if not self.title.strip():
            problems.append("paper title is empty")
        if not self.body.strip():
            problems.append("paper body is empty")
        for heading, text in self.sections:
            if not heading.strip():
                problems.append("section with empty heading")
            if text and text not in self.body:
                problems.append(f"section {heading!r} text not contained in body")
        return problems

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "abstract": self.abstract,
            "body": self.body,
            "sections": [{"heading": h, "text": t} for h, t in self.sections],
            "venue": self.venue,
            "year": self.year,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Paper":
        return cls(
            id=str(d["id"]),
            title=str(d.get("title", "")),
            abstract=str(d.get("abstract", "")),
            body=str(d.get("body", "")),
            sections=tuple((s["heading"], s["text"]) for s in d.get("sections", [])),
            venue=str(d.get("venue", "")),
            year=int(d["year"]) if d.get("year") is not None else None,
        )


# ---------------------------------------------------------------------------
# Reviews
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StructuredReview:
    """A review in the canonical shape shared by human reviews, reference
    reviews, and generated candidates."""

    summary: str
    strengths: str
    weaknesses: str
    questions: str
    soundness: int
    presentation: int
    contribution: int
    rating: Fraction
    confidence: int
    decision: Decision

    def to_dict(self) -> dict:
        return {
            "summary": self.summary,
            "strengths": self.strengths,
            "weaknesses": self.weaknesses,
            "questions": self.questions,
            "soundness": self.soundness,
            "presentation": self.presentation,
            "contribution": self.contribution,
            "rating": rational_to_json(self.rating),
            "confidence": self.confidence,
            "decision": self.decision.value,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "StructuredReview":
        return cls(
            summary=str(d["summary"]),
            strengths=str(d["strengths"]),
            weaknesses=str(d["weaknesses"]),
            questions=str(d["questions"]),
            soundness=int(d["soundness"]),
            presentation=int(d["presentation"]),
            contribution=int(d["contribution"]),
            rating=to_rational(d["rating"]),
            confidence=int(d["confidence"]),
            decision=label_to_decision(str(d["decision"])),
        )


# JSON schema for structured review outputs (draft, consolidation).  The
# aggregator's final-output schema extends this with a justification map.
REVIEW_JSON_SCHEMA_ID = "structured_review_v1"
REVIEW_JSON_SCHEMA = {
    "type": "object",
    "required": [
        "summary",
        "strengths",
        "weaknesses",
        "questions",
        "soundness",
        "presentation",
        "contribution",
        "rating",
        "confidence",
        "decision",
    ],
    "properties": {
        "summary": {"type": "string", "minLength": 1},
        "strengths": {"type": "string", "minLength": 1},
        "weaknesses": {"type": "string", "minLength": 1},
        "questions": {"type": "string", "minLength": 1},
        "soundness": {"type": "integer", "minimum": 1, "maximum": 5},
        "presentation": {"type": "integer", "minimum": 1, "maximum": 5},
        "contribution": {"type": "integer", "minimum": 1, "maximum": 5},
        "rating": {"type": "number", "minimum": 1, "maximum": 10},
        "confidence": {"type": "integer", "minimum": 1, "maximum": 5},
        "decision": {"type": "string", "enum": ["accept", "reject"]},
    },
}


def validate_review(review: StructuredReview) -> list[str]:
    """Return a list of constraint violations (empty means valid)."""
    problems = []
    for name in REVIEW_TEXT_FIELDS:
        if not getattr(review, name).strip():
            problems.append(f"{name} is empty")
    for name in REVIEW_CATEGORICAL_FIELDS:
        value = getattr(review, name)
        if not isinstance(value, int) or not CATEGORICAL_MIN <= value <= CATEGORICAL_MAX:
            problems.append(
                f"{name}={value!r} outside [{CATEGORICAL_MIN}, {CATEGORICAL_MAX}]"
            )
    if not RATING_MIN <= review.rating <= RATING_MAX:
        problems.append(f"rating={review.rating} outside [{RATING_MIN}, {RATING_MAX}]")
    if not isinstance(review.decision, Decision):
        problems.append(f"decision={review.decision!r} is not a Decision")
    return problems


def require_valid_review(review: StructuredReview) -> StructuredReview:
    problems = validate_review(review)
    if problems:
        raise ValueError("invalid review: " + "; ".join(problems))
    return review


# ---------------------------------------------------------------------------
# Rubrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MetaRubric:
    """One of the eight fixed evaluation dimensions.  ``index`` is 1-based and
    stable; position 8 is the only pitfall (penalty) dimension."""

    index: int
    name: str
    polarity: Polarity
    description: str
    checklist: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "name": self.name,
            "polarity": self.polarity.value,
            "description": self.description,
            "checklist": list(self.checklist),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MetaRubric":
        return cls(
            index=int(d["index"]),
            name=str(d["name"]),
            polarity=Polarity(d["polarity"]),
            description=str(d.get("description", "")),
            checklist=tuple(str(item) for item in d["checklist"]),
        )


@dataclass(frozen=True)
class RubricRequirement:
    """A paper-specific checklist item with a location anchor ("Section 4",
    "Table 2", or "none" when nothing in the paper pins it down)."""

    text: str
    anchor: str = "none"

    def to_dict(self) -> dict:
        return {"text": self.text, "anchor": self.anchor}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RubricRequirement":
        return cls(text=str(d["text"]), anchor=str(d.get("anchor", "none")))


@dataclass(frozen=True)
class PaperRubricDimension:
    meta_index: int
    requirements: tuple[RubricRequirement, ...]

    def to_dict(self) -> dict:
        return {
            "meta_index": self.meta_index,
            "requirements": [r.to_dict() for r in self.requirements],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PaperRubricDimension":
        return cls(
            meta_index=int(d["meta_index"]),
            requirements=tuple(
                RubricRequirement.from_dict(r) for r in d["requirements"]
            ),
        )


@dataclass(frozen=True)
class PaperRubrics:
    """The paper-specific instantiation of all eight meta dimensions."""

    paper_id: str
    dimensions: tuple[PaperRubricDimension, ...]

    def validate(self) -> list[str]:
        problems = []
        if len(self.dimensions) != NUM_DIMENSIONS:
            problems.append(f"expected {NUM_DIMENSIONS} dimensions, got {len(self.dimensions)}")
            return problems
        for position, dim in enumerate(self.dimensions):
            if dim.meta_index != position + 1:
                problems.append(
                    f"dimension at position {position} has meta_index {dim.meta_index}"
                )
            if not dim.requirements:
                problems.append(f"dimension {position + 1} has no requirements")
        return problems

    def to_dict(self) -> dict:
        return {
            "paper_id": self.paper_id,
            "dimensions": [d.to_dict() for d in self.dimensions],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PaperRubrics":
        return cls(
            paper_id=str(d["paper_id"]),
            dimensions=tuple(
                PaperRubricDimension.from_dict(x) for x in d["dimensions"]
            ),
        )


# ---------------------------------------------------------------------------
# Scores
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RubricScoreVector:
    """Per-dimension integer scores for one candidate review on one paper.

    Positions 0..6 take values in {0, 1, 2}; position 7 (the pitfall) takes
    values in {-2, -1, 0}.
    """

    paper_id: str
    scores: tuple[int, ...]
    justifications: tuple[str, ...] = ()

    def validate(self) -> list[str]:
        problems = []
        if len(self.scores) != NUM_DIMENSIONS:
            problems.append(f"expected {NUM_DIMENSIONS} scores, got {len(self.scores)}")
            return problems
        for position, score in enumerate(self.scores):
            allowed = (
                PITFALL_SCORE_VALUES
                if position == PITFALL_POSITION
                else POSITIVE_SCORE_VALUES
            )
            if score not in allowed:
                problems.append(f"score {score} at position {position} not in {allowed}")
        if self.justifications and len(self.justifications) != NUM_DIMENSIONS:
            problems.append("justifications length does not match scores")
        return problems

    @property
    def overall(self) -> int:
        return sum(self.scores)

    def to_dict(self) -> dict:
        return {
            "paper_id": self.paper_id,
            "scores": list(self.scores),
            "justifications": list(self.justifications),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RubricScoreVector":
        return cls(
            paper_id=str(d["paper_id"]),
            scores=tuple(int(s) for s in d["scores"]),
            justifications=tuple(str(j) for j in d.get("justifications", [])),
        )


def overall_score(scores: Sequence[Fraction | int]) -> Fraction:
    """Sum eight per-dimension values (scores or corpus means) into the
    overall score on the [-2, 14] scale.  Values may be fractional because
    means of integer scores are rationals."""
    if len(scores) != NUM_DIMENSIONS:
        raise ValueError(f"expected {NUM_DIMENSIONS} values, got {len(scores)}")
    values = [to_rational(s) for s in scores]
    for position, value in enumerate(values):
        if position == PITFALL_POSITION:
            low, high = Fraction(-2), Fraction(0)
        else:
            low, high = Fraction(0), Fraction(2)
        if not low <= value <= high:
            raise ValueError(
                f"value {value} at position {position} outside [{low}, {high}]"
            )
    return sum(values, Fraction(0))


# ---------------------------------------------------------------------------
# Ground truth and benchmark instances
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GroundTruth:
    paper_id: str
    rating: Fraction
    decision: Decision

    def to_dict(self) -> dict:
        return {
            "paper_id": self.paper_id,
            "rating": rational_to_json(self.rating),
            "decision": self.decision.value,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "GroundTruth":
        return cls(
            paper_id=str(d["paper_id"]),
            rating=to_rational(d["rating"]),
            decision=label_to_decision(str(d["decision"])),
        )


@dataclass(frozen=True)
class BenchmarkInstance:
    """One benchmark row: the paper, its human reviews, the consolidated
    reference review, and the ground-truth rating/decision."""

    paper: Paper
    human_reviews: tuple[StructuredReview, ...]
    reference_review: StructuredReview
    ground_truth: GroundTruth

    def to_dict(self) -> dict:
        return {
            "paper": self.paper.to_dict(),
            "human_reviews": [r.to_dict() for r in self.human_reviews],
            "reference_review": self.reference_review.to_dict(),
            "ground_truth": self.ground_truth.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "BenchmarkInstance":
        return cls(
            paper=Paper.from_dict(d["paper"]),
            human_reviews=tuple(
                StructuredReview.from_dict(r) for r in d["human_reviews"]
            ),
            reference_review=StructuredReview.from_dict(d["reference_review"]),
            ground_truth=GroundTruth.from_dict(d["ground_truth"]),
        )


# ---------------------------------------------------------------------------
# Grounding artifacts (produced during generation, never from rubrics)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RelatedWorkDebrief:
    """Digest of one retrieved related paper."""

    external_id: str
    title: str
    summary: str
    main_methods: str
    key_findings: str
    relation: str

    def to_dict(self) -> dict:
        return {
            "external_id": self.external_id,
            "title": self.title,
            "summary": self.summary,
            "main_methods": self.main_methods,
            "key_findings": self.key_findings,
            "relation": self.relation,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RelatedWorkDebrief":
        return cls(
            external_id=str(d["external_id"]),
            title=str(d.get("title", "")),
            summary=str(d["summary"]),
            main_methods=str(d["main_methods"]),
            key_findings=str(d["key_findings"]),
            relation=str(d["relation"]),
        )


@dataclass(frozen=True)
class InsightReport:
    """Evidence-anchored findings from a grounding agent: extracted facts,
    issues spotted in the draft, and concrete rewrite suggestions.  The inner
    lists keep the loose dict shape of the agent JSON contract."""

    facts: Mapping[str, Any]
    review_issues: Mapping[str, Any]
    rewrite_suggestions: tuple[Mapping[str, Any], ...]

    def to_dict(self) -> dict:
        return {
            "facts": dict(self.facts),
            "review_issues": dict(self.review_issues),
            "rewrite_suggestions": [dict(s) for s in self.rewrite_suggestions],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "InsightReport":
        return cls(
            facts=dict(d.get("facts", {})),
            review_issues=dict(d.get("review_issues", {})),
            rewrite_suggestions=tuple(dict(s) for s in d.get("rewrite_suggestions", [])),
        )


@dataclass(frozen=True)
class GroundingBundle:
    """Join point of the parallel grounding stage.  A ``None`` slot means the
    corresponding agent was disabled for the run."""

    debriefs: tuple[RelatedWorkDebrief, ...] | None = None
    insight_report: InsightReport | None = None
    result_report: InsightReport | None = None

    def to_dict(self) -> dict:
        return {
            "debriefs": None
            if self.debriefs is None
            else [d.to_dict() for d in self.debriefs],
            "insight_report": None
            if self.insight_report is None
            else self.insight_report.to_dict(),
            "result_report": None
            if self.result_report is None
            else self.result_report.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "GroundingBundle":
        debriefs = d.get("debriefs")
        insight = d.get("insight_report")
        result = d.get("result_report")
        return cls(
            debriefs=None
            if debriefs is None
            else tuple(RelatedWorkDebrief.from_dict(x) for x in debriefs),
            insight_report=None if insight is None else InsightReport.from_dict(insight),
            result_report=None if result is None else InsightReport.from_dict(result),
        )
