"""Generation-side agents: drafter, keyword extractor, related-work reader,
insight miner, result analyzer, and aggregator.

Each agent is a request builder plus a runner that parses and post-validates
the model output.  This module is strictly on the generation side of the
leakage wall: nothing here may read rubrics or reference reviews, and the
test suite enforces that structurally.
"""

from __future__ import annotations

import logging
from typing import Any, Callable, Mapping, Sequence

from .gateway import (
    ChatRequest,
    ChatResponse,
    Gateway,
    ModelRole,
    ROLE_AGGREGATOR,
    ROLE_ANALYZER,
    ROLE_DEBRIEF,
    ROLE_DRAFTER,
    ROLE_KEYWORDS,
    ROLE_MINER,
)
from .model import (
    Decision,
    GroundingBundle,
    InsightReport,
    Paper,
    RelatedWorkDebrief,
    REVIEW_JSON_SCHEMA,
    REVIEW_JSON_SCHEMA_ID,
    StructuredReview,
    canonical_json,
    label_to_decision,
    rational_to_json,
    to_rational,
)
from .prompts import render_pair
from .scholar import RerankedHit

logger = logging.getLogger(__name__)


class AgentError(Exception):
    pass


# Every numeric field plus the decision falls under the keep-unchanged policy.
POLICY_FIELDS = ("soundness", "presentation", "contribution", "rating", "confidence", "decision")
POLICY_RESTORE_WARNING = "{field} changed from {old} to {new} without justification; restored draft value"

REVIEW_TEXT_TARGETS = ("summary", "strengths", "weaknesses", "questions")
LIST_CAP = 5
MISSING_EVIDENCE = "not_found_in_text"

# ---------------------------------------------------------------------------
# Structured-output schemas
# ---------------------------------------------------------------------------

KEYWORDS_SCHEMA_ID = "keywords_v1"
KEYWORDS_SCHEMA = {
    "type": "object",
    "required": ["keywords"],
    "properties": {
        "keywords": {
            "type": "array",
            "items": {"type": "string", "minLength": 1},
            "minItems": 3,
            "maxItems": 5,
        }
    },
}

DEBRIEF_SCHEMA_ID = "debrief_v1"
DEBRIEF_SCHEMA = {
    "type": "object",
    "required": ["summary", "main_methods", "key_findings", "relation"],
    "properties": {
        "summary": {"type": "string", "minLength": 1},
        "main_methods": {"type": "string", "minLength": 1},
        "key_findings": {"type": "string", "minLength": 1},
        "relation": {"type": "string", "minLength": 1},
    },
}


def _evidence_items(*fields: str) -> dict:
    properties = {name: {"type": "string"} for name in fields}
    properties["evidence"] = {"type": "string"}
    return {
        "type": "array",
        "items": {
            "type": "object",
            "required": list(fields) + ["evidence"],
            "properties": properties,
        },
    }


_REVIEW_ISSUES_SCHEMA = {
    "type": "object",
    "required": ["incorrect_or_hallucinated", "missing_key_points", "needs_specificity"],
    "properties": {
        "incorrect_or_hallucinated": _evidence_items("review_claim", "why_wrong"),
        "missing_key_points": _evidence_items("what_missing", "why_important"),
        "needs_specificity": _evidence_items("review_text", "how_to_fix"),
    },
}

_REWRITE_SUGGESTIONS_SCHEMA = _evidence_items("apply_to", "target", "suggested_text")

MINER_SCHEMA_ID = "insight_report_v1"
MINER_SCHEMA = {
    "type": "object",
    "required": ["facts", "review_issues", "rewrite_suggestions"],
    "properties": {
        "facts": {
            "type": "object",
            "required": [
                "core_contributions",
                "method_summary",
                "assumptions_and_scope",
                "novelty_claims_in_paper",
            ],
            "properties": {
                "core_contributions": _evidence_items("claim"),
                "method_summary": _evidence_items("point"),
                "assumptions_and_scope": _evidence_items("item"),
                "novelty_claims_in_paper": _evidence_items("claim"),
            },
        },
        "review_issues": _REVIEW_ISSUES_SCHEMA,
        "rewrite_suggestions": _REWRITE_SUGGESTIONS_SCHEMA,
    },
}

ANALYZER_SCHEMA_ID = "result_report_v1"
ANALYZER_SCHEMA = {
    "type": "object",
    "required": ["facts", "review_issues", "rewrite_suggestions"],
    "properties": {
        "facts": {
            "type": "object",
            "required": ["datasets", "metrics", "baselines", "key_results"],
            "properties": {
                "datasets": _evidence_items("item"),
                "metrics": _evidence_items("item"),
                "baselines": _evidence_items("item"),
                "key_results": _evidence_items("claim"),
            },
        },
        "review_issues": _REVIEW_ISSUES_SCHEMA,
        "rewrite_suggestions": _REWRITE_SUGGESTIONS_SCHEMA,
    },
}

FINAL_REVIEW_SCHEMA_ID = "final_review_v1"
FINAL_REVIEW_SCHEMA = {
    "type": "object",
    "required": REVIEW_JSON_SCHEMA["required"],
    "properties": {
        **REVIEW_JSON_SCHEMA["properties"],
        "change_justifications": {
            "type": "object",
            "additionalProperties": {"type": "string", "minLength": 1},
        },
    },
}

ALL_SCHEMAS = {
    REVIEW_JSON_SCHEMA_ID: REVIEW_JSON_SCHEMA,
    KEYWORDS_SCHEMA_ID: KEYWORDS_SCHEMA,
    DEBRIEF_SCHEMA_ID: DEBRIEF_SCHEMA,
    MINER_SCHEMA_ID: MINER_SCHEMA,
    ANALYZER_SCHEMA_ID: ANALYZER_SCHEMA,
    FINAL_REVIEW_SCHEMA_ID: FINAL_REVIEW_SCHEMA,
}


# ---------------------------------------------------------------------------
# Trace recording
# ---------------------------------------------------------------------------

_STAGE_ORDER = {
    "draft": 10,
    "keywords": 20,
    "search": 25,
    "debrief": 30,
    "insight_mining": 40,
    "result_analysis": 50,
    "aggregate": 60,
}


class TraceRecorder:
    """Per-paper run trace: stage records and warnings.  Serialization sorts
    by a fixed stage order (then label) so concurrent forks do not make trace
    files nondeterministic."""

    def __init__(self, paper_id: str):
        self.paper_id = paper_id
        self._stages: list[dict] = []
        self._warnings: list[str] = []

    def record(self, stage: str, label: str = "", **detail: Any) -> None:
        self._stages.append({"stage": stage, "label": label, **detail})

    def record_response(self, stage: str, response: ChatResponse, label: str = "") -> None:
        self.record(
            stage,
            label=label,
            request_hash=response.request_hash,
            attempts=response.attempts,
            cached=response.cached,
        )

    def warn(self, message: str) -> None:
        self._warnings.append(message)
        logger.warning("paper %s: %s", self.paper_id, message)

    @property
    def warnings(self) -> tuple[str, ...]:
        return tuple(self._warnings)

    def to_dict(self) -> dict:
        stages = sorted(
            self._stages, key=lambda s: (_STAGE_ORDER.get(s["stage"], 99), s["label"])
        )
        return {
            "paper_id": self.paper_id,
            "stages": stages,
            "warnings": sorted(self._warnings),
        }


# ---------------------------------------------------------------------------
# Agent runtime
# ---------------------------------------------------------------------------


def _paper_variables(paper: Paper) -> dict[str, str]:
    return {
        "paper_title": paper.title,
        "paper_venue": paper.venue or "unspecified",
        "paper_year": str(paper.year) if paper.year is not None else "unspecified",
        "paper_abstract": paper.abstract,
        "paper_body": paper.body,
    }


def _review_from_payload(payload: Mapping[str, Any]) -> StructuredReview:
    return StructuredReview(
        summary=str(payload["summary"]),
        strengths=str(payload["strengths"]),
        weaknesses=str(payload["weaknesses"]),
        questions=str(payload["questions"]),
        soundness=int(payload["soundness"]),
        presentation=int(payload["presentation"]),
        contribution=int(payload["contribution"]),
        rating=to_rational(payload["rating"]),
        confidence=int(payload["confidence"]),
        decision=label_to_decision(str(payload["decision"])),
    )


class AgentRuntime:
    """Executes the generation agents against a gateway with a fixed role
    table.  Request builders are exposed separately from runners so tests and
    transcript tooling can compute request hashes without running anything."""

    def __init__(self, gateway: Gateway, roles: Mapping[str, ModelRole]):
        self.gateway = gateway
        self.roles = dict(roles)
        for schema_id, schema in ALL_SCHEMAS.items():
            gateway.registry.register(schema_id, schema)

    def role(self, name: str) -> ModelRole:
        try:
            return self.roles[name]
        except KeyError:
            raise AgentError(f"no model configured for role {name!r}") from None

    # -- drafter ------------------------------------------------------------

    def draft_request(self, paper: Paper) -> ChatRequest:
        system, user = render_pair("draft", _paper_variables(paper))
        return ChatRequest(
            role=self.role(ROLE_DRAFTER), system=system, user=user,
            schema_id=REVIEW_JSON_SCHEMA_ID,
        )

    def run_draft(self, paper: Paper, trace: TraceRecorder) -> StructuredReview:
        response = self.gateway.complete(self.draft_request(paper))
        trace.record_response("draft", response)
        return _review_from_payload(response.parsed)

    # -- literature search ----------------------------------------------------

    def keywords_request(self, paper: Paper) -> ChatRequest:
        system, user = render_pair(
            "keywords", {"paper_title": paper.title, "paper_abstract": paper.abstract}
        )
        return ChatRequest(
            role=self.role(ROLE_KEYWORDS), system=system, user=user,
            schema_id=KEYWORDS_SCHEMA_ID,
        )

    def run_keywords(self, paper: Paper, trace: TraceRecorder) -> list[str]:
        response = self.gateway.complete(self.keywords_request(paper))
        trace.record_response("keywords", response)
        keywords = []
        for keyword in response.parsed["keywords"]:
            cleaned = " ".join(str(keyword).split())
            if cleaned and cleaned.lower() not in {k.lower() for k in keywords}:
                keywords.append(cleaned)
        if len(keywords) < 3:
            trace.warn(f"only {len(keywords)} distinct keywords after cleanup")
        return keywords[:5]

    def debrief_request(self, paper: Paper, hit_title: str, hit_abstract: str) -> ChatRequest:
        system, user = render_pair(
            "debrief",
            {
                "paper_title": paper.title,
                "related_title": hit_title,
                "related_abstract": hit_abstract or "(no abstract available)",
            },
        )
        return ChatRequest(
            role=self.role(ROLE_DEBRIEF), system=system, user=user,
            schema_id=DEBRIEF_SCHEMA_ID,
        )

    def run_debriefs(
        self, paper: Paper, ranked: Sequence[RerankedHit], trace: TraceRecorder
    ) -> tuple[RelatedWorkDebrief, ...]:
        debriefs = []
        for item in ranked:
            hit = item.hit
            response = self.gateway.complete(
                self.debrief_request(paper, hit.title, hit.abstract)
            )
            trace.record_response("debrief", response, label=hit.external_id)
            payload = response.parsed
            debriefs.append(
                RelatedWorkDebrief(
                    external_id=hit.external_id,
                    title=hit.title,
                    summary=str(payload["summary"]),
                    main_methods=str(payload["main_methods"]),
                    key_findings=str(payload["key_findings"]),
                    relation=str(payload["relation"]),
                )
            )
        return tuple(debriefs)

    # -- insight miner / result analyzer --------------------------------------

    def miner_request(self, paper: Paper, draft: StructuredReview) -> ChatRequest:
        system, user = render_pair(
            "miner",
            {"paper_body": paper.body, "draft_json": canonical_json(draft.to_dict())},
        )
        return ChatRequest(
            role=self.role(ROLE_MINER), system=system, user=user, schema_id=MINER_SCHEMA_ID
        )

    def run_miner(
        self, paper: Paper, draft: StructuredReview, trace: TraceRecorder
    ) -> InsightReport:
        response = self.gateway.complete(self.miner_request(paper, draft))
        trace.record_response("insight_mining", response)
        return _clean_insight_payload(response.parsed, "insight_mining", trace.warn)

    def analyzer_request(self, paper: Paper, draft: StructuredReview) -> ChatRequest:
        system, user = render_pair(
            "analyzer",
            {"paper_body": paper.body, "draft_json": canonical_json(draft.to_dict())},
        )
        return ChatRequest(
            role=self.role(ROLE_ANALYZER), system=system, user=user,
            schema_id=ANALYZER_SCHEMA_ID,
        )

    def run_analyzer(
        self, paper: Paper, draft: StructuredReview, trace: TraceRecorder
    ) -> InsightReport:
        response = self.gateway.complete(self.analyzer_request(paper, draft))
        trace.record_response("result_analysis", response)
        return _clean_insight_payload(response.parsed, "result_analysis", trace.warn)

    # -- aggregator -----------------------------------------------------------

    def aggregate_request(
        self, paper: Paper, draft: StructuredReview, bundle: GroundingBundle
    ) -> ChatRequest:
        bundle_dict = bundle.to_dict()
        system, user = render_pair(
            "aggregator",
            {
                "paper_title": paper.title,
                "draft_json": canonical_json(draft.to_dict()),
                "debriefs_json": canonical_json(bundle_dict["debriefs"]),
                "insight_json": canonical_json(bundle_dict["insight_report"]),
                "result_json": canonical_json(bundle_dict["result_report"]),
            },
        )
        return ChatRequest(
            role=self.role(ROLE_AGGREGATOR), system=system, user=user,
            schema_id=FINAL_REVIEW_SCHEMA_ID,
        )

    def run_aggregate(
        self,
        paper: Paper,
        draft: StructuredReview,
        bundle: GroundingBundle,
        trace: TraceRecorder,
    ) -> StructuredReview:
        response = self.gateway.complete(self.aggregate_request(paper, draft, bundle))
        trace.record_response("aggregate", response)
        payload = dict(response.parsed)
        justifications = payload.get("change_justifications") or {}
        final = _review_from_payload(payload)
        final, justified = apply_numeric_policy(draft, final, justifications, trace.warn)
        if justified:
            trace.record("aggregate", label="justified_changes", fields=sorted(justified))
        return final


def apply_numeric_policy(
    draft: StructuredReview,
    final: StructuredReview,
    justifications: Mapping[str, str],
    warn: Callable[[str], None],
) -> tuple[StructuredReview, list[str]]:
    """Enforce the numbers-stay-put contract mechanically: any policy field
    that changed without a justification entry is restored to the draft value
    with a warning.  Returns the repaired review and the justified fields."""

    def shown(value: Any) -> str:
        if isinstance(value, Decision):
            return value.value
        return str(rational_to_json(to_rational(value)))

    fixes: dict[str, Any] = {}
    justified: list[str] = []
    for field in POLICY_FIELDS:
        old = getattr(draft, field)
        new = getattr(final, field)
        if new == old:
            continue
        if field in justifications:
            justified.append(field)
            continue
        warn(POLICY_RESTORE_WARNING.format(field=field, old=shown(old), new=shown(new)))
        fixes[field] = old
    if fixes:
        from dataclasses import replace

        final = replace(final, **fixes)
    return final, justified


def _clean_insight_payload(
    payload: Mapping[str, Any], stage: str, warn: Callable[[str], None]
) -> InsightReport:
    """Post-validation shared by the miner and the analyzer: cap list
    lengths, normalize empty evidence, and drop rewrite suggestions that try
    to touch scores or the decision."""

    def clean_items(items: list, label: str) -> list[dict]:
        cleaned = []
        for item in items:
            item = dict(item)
            if not str(item.get("evidence", "")).strip():
                item["evidence"] = MISSING_EVIDENCE
            cleaned.append(item)
        if len(cleaned) > LIST_CAP:
            warn(f"{stage}: {label} truncated from {len(cleaned)} to {LIST_CAP} items")
            cleaned = cleaned[:LIST_CAP]
        return cleaned

    facts = {key: clean_items(items, f"facts.{key}") for key, items in payload["facts"].items()}
    review_issues = {
        key: clean_items(items, f"review_issues.{key}")
        for key, items in payload["review_issues"].items()
    }
    suggestions = []
    for item in payload["rewrite_suggestions"]:
        target = str(item.get("apply_to", "")).strip().lower()
        if target in POLICY_FIELDS:
            warn(f"{stage}: dropped rewrite suggestion targeting {target}")
            continue
        if target not in REVIEW_TEXT_TARGETS:
            warn(f"{stage}: dropped rewrite suggestion with unknown target {target!r}")
            continue
        item = dict(item)
        if not str(item.get("evidence", "")).strip():
            item["evidence"] = MISSING_EVIDENCE
        suggestions.append(item)
    if len(suggestions) > LIST_CAP:
        warn(f"{stage}: rewrite_suggestions truncated from {len(suggestions)} to {LIST_CAP} items")
        suggestions = suggestions[:LIST_CAP]
    return InsightReport(
        facts=facts,
        review_issues=review_issues,
        rewrite_suggestions=tuple(suggestions),
    )
