"""Rubric-based evaluation of candidate reviews.

The deterministic part is :func:`score_from_judgment`, which turns a judge's
boolean findings into the integer dimension score; it is the single place the
scoring rules live.  The model-facing part asks one judge call per dimension
and assembles the eight scores into a :class:`RubricScoreVector`.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping, Sequence

from .gateway import ChatRequest, Gateway, ModelRole
from .metrics import NumericMetricReport, numeric_metrics
from .model import (
    BenchmarkInstance,
    Decision,
    MetaRubric,
    NUM_DIMENSIONS,
    PITFALL_POSITION,
    Paper,
    PaperRubricDimension,
    PaperRubrics,
    Polarity,
    RubricScoreVector,
    StructuredReview,
    canonical_json,
    overall_score,
    rational_to_json,
)
from .prompts import render_pair

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Judgments and the scoring rules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DimensionJudgment:
    """Boolean findings for one dimension of one candidate review.

    For positive dimensions ``satisfied``/``minor`` run per requirement and
    ``material_error`` flags a substantive misstatement on the dimension.
    For the pitfall dimension ``satisfied`` marks exhibited failure modes and
    ``severe_instance`` flags an egregious single occurrence.
    """

    meta_index: int
    satisfied: tuple[bool, ...]
    minor: tuple[bool, ...] = ()
    material_error: bool = False
    severe_instance: bool = False
    rationale: str = ""

    def to_dict(self) -> dict:
        return {
            "meta_index": self.meta_index,
            "satisfied": list(self.satisfied),
            "minor": list(self.minor),
            "material_error": self.material_error,
            "severe_instance": self.severe_instance,
            "rationale": self.rationale,
        }


def score_from_judgment(judgment: DimensionJudgment, polarity: Polarity) -> int:
    """Apply the scoring rules to one dimension judgment.

    Positive dimensions score in {0, 1, 2}:
      * material error anywhere on the dimension forces 0;
      * all requirements satisfied scores 2, as does all-but-one satisfied
        when the one miss is flagged minor;
      * at least half satisfied scores 1;
      * anything less scores 0.

    The pitfall dimension scores in {-2, -1, 0} from the number of exhibited
    failure modes: none is 0, a single non-severe hit is -1, two or more hits
    or any severe instance is -2.  With zero hits the severe flag is
    incoherent and ignored.
    """
    if polarity is Polarity.POSITIVE:
        if not judgment.satisfied:
            raise ValueError("positive judgment with no requirements")
        if judgment.material_error:
            return 0
        total = len(judgment.satisfied)
        met = sum(judgment.satisfied)
        if met == total:
            return 2
        if met == total - 1:
            missed_position = judgment.satisfied.index(False)
            if missed_position < len(judgment.minor) and judgment.minor[missed_position]:
                return 2
        if 2 * met >= total:
            return 1
        return 0
    hits = sum(judgment.satisfied)
    if hits == 0:
        return 0
    if hits >= 2 or judgment.severe_instance:
        return -2
    return -1


# ---------------------------------------------------------------------------
# Judge calls
# ---------------------------------------------------------------------------


def _judge_schema(item_count: int, pitfall: bool) -> tuple[str, dict]:
    bool_array = {
        "type": "array",
        "items": {"type": "boolean"},
        "minItems": item_count,
        "maxItems": item_count,
    }
    if pitfall:
        schema_id = f"judgment_pitfall_v1_n{item_count}"
        schema = {
            "type": "object",
            "required": ["exhibited", "severe_instance", "rationale"],
            "properties": {
                "exhibited": bool_array,
                "severe_instance": {"type": "boolean"},
                "rationale": {"type": "string"},
            },
        }
    else:
        schema_id = f"judgment_positive_v1_n{item_count}"
        schema = {
            "type": "object",
            "required": ["satisfied", "minor", "material_error", "rationale"],
            "properties": {
                "satisfied": bool_array,
                "minor": bool_array,
                "material_error": {"type": "boolean"},
                "rationale": {"type": "string"},
            },
        }
    return schema_id, schema


def build_judge_request(
    role: ModelRole,
    paper: Paper,
    candidate: StructuredReview,
    meta: MetaRubric,
    dimension: PaperRubricDimension,
) -> tuple[ChatRequest, dict]:
    """Build the judge call for one dimension; returns the request plus the
    schema to register (keyed by requirement count)."""
    pitfall = meta.polarity is Polarity.PITFALL
    schema_id, schema = _judge_schema(len(dimension.requirements), pitfall)
    stage = "judge_pitfall" if pitfall else "judge_positive"
    system, user = render_pair(
        stage,
        {
            "dimension_name": meta.name,
            "dimension_description": meta.description,
            "requirements_json": canonical_json([r.to_dict() for r in dimension.requirements]),
            "paper_body": paper.body,
            "review_json": canonical_json(candidate.to_dict()),
        },
    )
    return ChatRequest(role=role, system=system, user=user, schema_id=schema_id), schema


def judge_dimension(
    gateway: Gateway,
    role: ModelRole,
    paper: Paper,
    candidate: StructuredReview,
    meta: MetaRubric,
    dimension: PaperRubricDimension,
) -> DimensionJudgment:
    request, schema = build_judge_request(role, paper, candidate, meta, dimension)
    gateway.registry.register(request.schema_id, schema)
    response = gateway.complete(request)
    payload = response.parsed
    if meta.polarity is Polarity.PITFALL:
        return DimensionJudgment(
            meta_index=meta.index,
            satisfied=tuple(bool(x) for x in payload["exhibited"]),
            severe_instance=bool(payload["severe_instance"]),
            rationale=str(payload["rationale"]),
        )
    return DimensionJudgment(
        meta_index=meta.index,
        satisfied=tuple(bool(x) for x in payload["satisfied"]),
        minor=tuple(bool(x) for x in payload["minor"]),
        material_error=bool(payload["material_error"]),
        rationale=str(payload["rationale"]),
    )


def evaluate_review(
    gateway: Gateway,
    role: ModelRole,
    paper: Paper,
    candidate: StructuredReview,
    rubrics: PaperRubrics,
    metas: Sequence[MetaRubric],
    max_workers: int = 4,
) -> tuple[RubricScoreVector, tuple[DimensionJudgment, ...]]:
    """Judge all eight dimensions (concurrently) and assemble the score
    vector.  Dimension order in the result is fixed by meta index, not by
    completion order."""
    if rubrics.paper_id != paper.id:
        raise ValueError(f"rubrics are for paper {rubrics.paper_id!r}, not {paper.id!r}")
    problems = rubrics.validate()
    if problems:
        raise ValueError(f"invalid rubrics for paper {paper.id}: " + "; ".join(problems))

    def run(position: int) -> DimensionJudgment:
        return judge_dimension(
            gateway, role, paper, candidate, metas[position], rubrics.dimensions[position]
        )

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            judgments = tuple(pool.map(run, range(NUM_DIMENSIONS)))
    else:
        judgments = tuple(run(i) for i in range(NUM_DIMENSIONS))
    scores = tuple(
        score_from_judgment(judgment, metas[position].polarity)
        for position, judgment in enumerate(judgments)
    )
    vector = RubricScoreVector(
        paper_id=paper.id,
        scores=scores,
        justifications=tuple(j.rationale for j in judgments),
    )
    problems = vector.validate()
    if problems:
        raise ValueError(f"scoring produced an invalid vector: " + "; ".join(problems))
    return vector, judgments


# ---------------------------------------------------------------------------
# Corpus-level evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorpusEvaluation:
    """Evaluation of a candidate set over a benchmark corpus.  Rows are
    sorted by paper id; dimension means and the overall mean are exact
    rationals."""

    rows: tuple[RubricScoreVector, ...]
    skipped: tuple[tuple[str, str], ...]  # (paper_id, reason)
    dimension_means: tuple[Fraction, ...]
    overall_mean: Fraction
    numeric: NumericMetricReport | None

    def to_summary_dict(self) -> dict:
        summary = {
            "evaluated": len(self.rows),
            "skipped": [{"paper_id": pid, "reason": reason} for pid, reason in self.skipped],
            "rows": [
                {"paper_id": r.paper_id, "scores": list(r.scores), "overall": r.overall}
                for r in self.rows
            ],
            "dimension_means": [rational_to_json(m) for m in self.dimension_means],
            "dimension_means_float": [float(m) for m in self.dimension_means],
            "overall_mean": rational_to_json(self.overall_mean),
            "overall_mean_float": float(self.overall_mean),
        }
        summary["numeric"] = self.numeric.to_dict() if self.numeric else None
        summary["numeric_float"] = self.numeric.to_float_dict() if self.numeric else None
        return summary


def mean_scores(rows: Sequence[RubricScoreVector]) -> tuple[Fraction, ...]:
    if not rows:
        raise ValueError("no score vectors to average")
    n = len(rows)
    return tuple(
        Fraction(sum(row.scores[position] for row in rows), n)
        for position in range(NUM_DIMENSIONS)
    )


def evaluate_corpus(
    gateway: Gateway,
    role: ModelRole,
    instances: Sequence[BenchmarkInstance],
    candidates: Mapping[str, StructuredReview],
    load_rubrics: Callable[[str], PaperRubrics],
    metas: Sequence[MetaRubric],
    max_workers: int = 4,
) -> CorpusEvaluation:
    """Evaluate every candidate against its paper's rubrics.

    Instances without a candidate are recorded as skipped; a candidate whose
    paper is missing from the corpus, or whose rubrics cannot be loaded, is a
    hard error (that is corrupt input, not a gap to paper over).
    """
    by_id = {inst.paper.id: inst for inst in instances}
    unknown = sorted(set(candidates) - set(by_id))
    if unknown:
        raise ValueError(f"candidates reference papers not in the corpus: {unknown}")

    rows = []
    skipped = []
    pred_ratings, true_ratings, pred_decisions, true_decisions = [], [], [], []
    for paper_id in sorted(by_id):
        instance = by_id[paper_id]
        candidate = candidates.get(paper_id)
        if candidate is None:
            skipped.append((paper_id, "no candidate review"))
            continue
        rubrics = load_rubrics(paper_id)
        vector, _ = evaluate_review(
            gateway, role, instance.paper, candidate, rubrics, metas, max_workers=max_workers
        )
        rows.append(vector)
        pred_ratings.append(candidate.rating)
        true_ratings.append(instance.ground_truth.rating)
        pred_decisions.append(candidate.decision)
        true_decisions.append(instance.ground_truth.decision)

    if not rows:
        raise ValueError("no papers were evaluated (every instance lacked a candidate)")
    means = mean_scores(rows)
    return CorpusEvaluation(
        rows=tuple(rows),
        skipped=tuple(skipped),
        dimension_means=means,
        overall_mean=overall_score(means),
        numeric=numeric_metrics(pred_ratings, true_ratings, pred_decisions, true_decisions),
    )
