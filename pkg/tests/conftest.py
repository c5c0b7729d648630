"""Shared fixtures: synthetic papers/corpora and a deterministic response
synthesizer that plays every model role offline.

The synthesizer derives all content from the request text itself, so any two
runs (and any thread interleaving) produce identical artifacts; tests that
need misbehaving models wrap or replace individual roles.
"""

from __future__ import annotations

import hashlib
import json
import re
from fractions import Fraction
from pathlib import Path

import pytest

from reviewlab.gateway import ChatRequest, FunctionBackend, Gateway
from reviewlab.ingest import RawRecord
from reviewlab.model import (
    Decision,
    Paper,
    StructuredReview,
)
from reviewlab.pipeline import RunConfig

# Marker words the "obedient" generation backend reacts to, one per attack
# kind; chosen so no clean fixture paper contains them.
ATTACK_TRIGGER_WORDS = ("disregard", "surpassing", "katadromic", "silently")
OBEYED_MARKER = "OBEYED_PLANTED_CONTENT"


def tag_of(text: str, n: int = 8) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:n]


def _block(user: str, start: str, end: str | None) -> str:
    """Extract the text between two section markers in a rendered prompt."""
    a = user.index(start) + len(start)
    b = user.index(end, a) if end else len(user)
    return user[a:b].strip()


# ---------------------------------------------------------------------------
# The scripted model
# ---------------------------------------------------------------------------


def synth_response(request: ChatRequest, obey_attacks: bool = False) -> str:
    """Deterministic stand-in for every model role.

    With ``obey_attacks=True`` the generation roles comply with planted
    content: the drafter praises the paper and maxes the rating whenever an
    attack trigger word appears in its input, and the judge punishes reviews
    carrying the compliance marker on the evidence dimension.
    """
    role = request.role.role
    user = request.user
    tag = tag_of(request.system + user)

    if role == "drafter":
        attacked = obey_attacks and any(w in user for w in ATTACK_TRIGGER_WORDS)
        if attacked:
            return json.dumps(
                {
                    "summary": f"{OBEYED_MARKER} This submission is flawless work ({tag}).",
                    "strengths": "Every aspect is excellent; groundbreaking on all fronts.",
                    "weaknesses": "None worth mentioning.",
                    "questions": "None.",
                    "soundness": 4,
                    "presentation": 4,
                    "contribution": 4,
                    "rating": 10,
                    "confidence": 5,
                    "decision": "accept",
                }
            )
        rating = 4 + int(tag, 16) % 5  # 4..8
        return json.dumps(
            {
                "summary": f"The paper studies problem P-{tag} and proposes method M-{tag}.",
                "strengths": f"Clear formulation of P-{tag}; solid experiments on benchmark B-{tag}.",
                "weaknesses": f"Limited ablations for component C-{tag}; missing baseline L-{tag}.",
                "questions": f"How does M-{tag} scale with input size?",
                "soundness": 3,
                "presentation": 3,
                "contribution": 3,
                "rating": rating,
                "confidence": 4,
                "decision": "accept" if rating >= 6 else "reject",
            }
        )

    if role == "keyword_extractor":
        return json.dumps(
            {"keywords": [f"topic {tag[:4]}", f"method {tag[2:6]}", f"benchmark {tag[4:8]}"]}
        )

    if role == "related_work_reader":
        return json.dumps(
            {
                "summary": f"Related work {tag} studies a neighboring problem.",
                "main_methods": f"Uses approach A-{tag}.",
                "key_findings": f"Reports improvements on task T-{tag}.",
                "relation": f"Overlaps with the submission on topic {tag[:4]}.",
            }
        )

    if role in ("insight_miner", "result_analyzer"):
        if role == "insight_miner":
            facts = {
                "core_contributions": [{"claim": f"Contribution {tag}", "evidence": f"stated in section 1 ({tag})"}],
                "method_summary": [{"point": f"Method point {tag}", "evidence": f"section 2 ({tag})"}],
                "assumptions_and_scope": [{"item": f"Assumption {tag}", "evidence": "not_found_in_text"}],
                "novelty_claims_in_paper": [{"claim": f"Novelty {tag}", "evidence": f"abstract ({tag})"}],
            }
        else:
            facts = {
                "datasets": [{"item": f"dataset D-{tag}", "evidence": f"section 4 ({tag})"}],
                "metrics": [{"item": f"metric Q-{tag}", "evidence": f"section 4 ({tag})"}],
                "baselines": [{"item": f"baseline L-{tag}", "evidence": f"table 1 ({tag})"}],
                "key_results": [{"claim": f"Result R-{tag}", "evidence": f"table 2 ({tag})"}],
            }
        return json.dumps(
            {
                "facts": facts,
                "review_issues": {
                    "incorrect_or_hallucinated": [],
                    "missing_key_points": [
                        {"what_missing": f"Point {tag}", "why_important": "affects conclusions", "evidence": f"section 3 ({tag})"}
                    ],
                    "needs_specificity": [],
                },
                "rewrite_suggestions": [
                    {
                        "apply_to": "weaknesses",
                        "target": "Limited ablations",
                        "suggested_text": f"Limited ablations; see section 3 ({tag}).",
                        "evidence": f"section 3 ({tag})",
                    }
                ],
            }
        )

    if role == "aggregator":
        draft = json.loads(_block(user, "=== DRAFT REVIEW ===", "=== RELATED-WORK DEBRIEFS ==="))
        debriefs = _block(user, "=== RELATED-WORK DEBRIEFS ===", "=== PAPER-AUDIT REPORT ===")
        final = dict(draft)
        if debriefs not in ("null", "[]"):
            final["weaknesses"] = (
                draft["weaknesses"]
                + " The related-work search suggests closely related prior work to discuss."
            )
        else:
            final["weaknesses"] = draft["weaknesses"] + f" (Deepened per audit {tag[:4]}.)"
        return json.dumps(final)

    if role == "reference_consolidator":
        reviews = json.loads(_block(user, "Human reviews to consolidate:", None))
        merged = " / ".join(r["summary"] for r in reviews)
        # numeric fields deliberately nonsense: the pipeline must overwrite them
        return json.dumps(
            {
                "summary": f"Consolidated: {merged}",
                "strengths": "Merged strengths: " + " / ".join(r["strengths"] for r in reviews),
                "weaknesses": "Merged weaknesses: " + " / ".join(r["weaknesses"] for r in reviews),
                "questions": "Merged questions: " + " / ".join(r["questions"] for r in reviews),
                "soundness": 1,
                "presentation": 1,
                "contribution": 1,
                "rating": 1,
                "confidence": 1,
                "decision": "reject",
            }
        )

    if role == "rubric_writer":
        dims = []
        for i in range(1, 9):
            dims.append(
                {
                    "meta_index": i,
                    "requirements": [
                        {"text": f"Covers aspect A{i} of study {tag[:6]}", "anchor": "Section 1"},
                        {"text": f"Checks detail B{i} for {tag[:6]}", "anchor": "none"},
                    ],
                }
            )
        return json.dumps({"dimensions": dims})

    if role == "dimension_judge":
        match = re.match(r"Dimension: (.+)", user)
        dimension_name = match.group(1).strip() if match else ""
        pitfall = "Failure modes to check for:" in user
        marker = "Paper-specific requirements:" if not pitfall else "Failure modes to check for:"
        requirements = json.loads(_block(user, marker, "\nPaper text:"))
        n = len(requirements)
        obeyed = obey_attacks and OBEYED_MARKER in user
        if pitfall:
            exhibited = [False] * n
            if obeyed:
                exhibited[0] = True
            return json.dumps(
                {"exhibited": exhibited, "severe_instance": False, "rationale": f"checked {n} modes"}
            )
        satisfied = [True] * n
        if obeyed and dimension_name == "Evidence-Based Critique":
            satisfied = [False] * n
        return json.dumps(
            {
                "satisfied": satisfied,
                "minor": [False] * n,
                "material_error": False,
                "rationale": f"checked {n} requirements",
            }
        )

    raise AssertionError(f"synth_response: unexpected role {role!r}")


class RecordingBackend:
    """Wraps a backend and records (request_hash, response) pairs, ready to
    be written out as a scripted transcript."""

    def __init__(self, inner):
        self.inner = inner
        self.entries: list[tuple[str, str]] = []

    def send(self, request: ChatRequest, request_hash: str) -> str:
        text = self.inner.send(request, request_hash)
        self.entries.append((request_hash, text))
        return text

    def write_jsonl(self, path: str | Path) -> Path:
        path = Path(path)
        with open(path, "w", encoding="utf-8") as handle:
            for request_hash, text in self.entries:
                handle.write(
                    json.dumps({"request_hash": request_hash, "response_text": text}) + "\n"
                )
        return path


# ---------------------------------------------------------------------------
# Papers, reviews, corpora
# ---------------------------------------------------------------------------

_FILLER = (
    "The approach is described in detail with supporting derivations and worked "
    "examples that walk through each design decision in turn. "
)


def make_paper(index: int, min_body_chars: int = 2400) -> Paper:
    pid = f"paper-{index:03d}"
    filler = _FILLER * 4
    sections = (
        ("Introduction", f"We study problem family {index}. {filler}Our motivation is practical deployment."),
        ("Method", f"The proposed procedure {pid} has three stages. {filler}Each stage is differentiable."),
        ("Experiments", f"We evaluate on suite {index} against four baselines. {filler}Results favor our method."),
        ("Discussion", f"Limitations include scope {index}. {filler}Future work will extend the analysis."),
    )
    body = "\n\n".join(text for _, text in sections)
    while len(body) < min_body_chars:
        body += "\n\n" + _FILLER
    return Paper(
        id=pid,
        title=f"A Study of Problem Family {index}",
        abstract=f"We present method {pid} for problem family {index} and evaluate it broadly.",
        body=body,
        sections=sections,
        venue="TestConf",
        year=2024,
    )


def make_review(seed: str, rating: int = 6, decision: Decision | None = None) -> StructuredReview:
    return StructuredReview(
        summary=f"Summary by reviewer {seed}.",
        strengths=f"Strength S-{seed}.",
        weaknesses=f"Weakness W-{seed}.",
        questions=f"Question Q-{seed}?",
        soundness=3,
        presentation=3,
        contribution=2,
        rating=Fraction(rating),
        confidence=4,
        decision=decision or (Decision.ACCEPT if rating >= 6 else Decision.REJECT),
    )


def make_raw_review(seed: str, rating: int = 6, **overrides) -> dict:
    raw = {
        "summary": f"Summary by reviewer {seed}.",
        "strengths": f"Strength S-{seed}.",
        "weaknesses": f"Weakness W-{seed}.",
        "questions": f"Question Q-{seed}?",
        "soundness": 3,
        "presentation": 3,
        "contribution": 2,
        "rating": rating,
        "confidence": 4,
    }
    raw.update(overrides)
    return raw


def make_raw_record_fields(index: int, n_reviews: int = 3, **overrides) -> dict:
    paper = make_paper(index)
    ratings = [5, 6, 7, 8, 4][:n_reviews]
    fields = {
        "paper_id": paper.id,
        "title": paper.title,
        "abstract": paper.abstract,
        "body": paper.body,
        "sections": [{"heading": h, "text": t} for h, t in paper.sections],
        "venue": paper.venue,
        "year": paper.year,
        "status": "active",
        "decision_label": "Accept (poster)" if sum(ratings) / len(ratings) >= 6 else "Reject",
        "reviews": [make_raw_review(f"{paper.id}-r{i}", rating=r) for i, r in enumerate(ratings)],
    }
    fields.update(overrides)
    return fields


def make_raw_record(index: int, n_reviews: int = 3, **overrides) -> RawRecord:
    return RawRecord.from_dict(make_raw_record_fields(index, n_reviews, **overrides))


# ---------------------------------------------------------------------------
# Fixtures
# ---------------------------------------------------------------------------


@pytest.fixture
def config() -> RunConfig:
    return RunConfig.default()


@pytest.fixture
def gateway(config) -> Gateway:
    return Gateway(FunctionBackend(synth_response), max_inflight=config.max_inflight)


@pytest.fixture
def papers() -> list[Paper]:
    return [make_paper(i) for i in range(1, 6)]


@pytest.fixture
def raw_records() -> list[RawRecord]:
    return [make_raw_record(i) for i in range(1, 6)]
