"""Rubric factory: the eight fixed meta dimensions and their paper-specific
instantiation, plus the content-addressed store that keeps rubric files
physically separate from everything the generation pipeline reads.
"""

from __future__ import annotations

import json
import logging
import re
from importlib import resources
from pathlib import Path
from typing import Sequence

from .gateway import ChatRequest, Gateway, ModelRole
from .model import (
    MetaRubric,
    NUM_DIMENSIONS,
    Paper,
    PaperRubricDimension,
    PaperRubrics,
    Polarity,
    RubricRequirement,
    StructuredReview,
    canonical_json,
    content_hash,
)
from .prompts import render_pair

logger = logging.getLogger(__name__)

RUBRIC_SCHEMA_ID = "paper_rubrics_v1"
RUBRIC_SCHEMA = {
    "type": "object",
    "required": ["dimensions"],
    "properties": {
        "dimensions": {
            "type": "array",
            "minItems": NUM_DIMENSIONS,
            "maxItems": NUM_DIMENSIONS,
            "items": {
                "type": "object",
                "required": ["meta_index", "requirements"],
                "properties": {
                    "meta_index": {"type": "integer", "minimum": 1, "maximum": 8},
                    "requirements": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["text"],
                            "properties": {
                                "text": {"type": "string"},
                                "anchor": {"type": "string"},
                            },
                        },
                    },
                },
            },
        }
    },
}

COPY_LEAK_WINDOW = 10  # words

# Anchor forms that count as "locates something in the paper".
_ANCHOR_PATTERN = re.compile(
    r"(?i)\b(section|table|figure|fig\.?|equation|eq\.?|algorithm|appendix|"
    r"abstract|introduction|conclusion|page|line|theorem|lemma)\b"
)


def load_meta_rubrics(path: str | Path | None = None) -> tuple[MetaRubric, ...]:
    """Load the eight meta dimensions, from the built-in table by default or
    from an override file.  The set is validated: exactly eight, indices 1-8
    in order, exactly one pitfall and it sits at index 8."""
    if path is None:
        raw = resources.files("reviewlab").joinpath("data", "meta_rubrics.json").read_text("utf-8")
    else:
        raw = Path(path).read_text("utf-8")
    data = json.loads(raw)
    metas = tuple(MetaRubric.from_dict(d) for d in data["meta_rubrics"])
    problems = validate_meta_rubrics(metas)
    if problems:
        raise ValueError("invalid meta rubric set: " + "; ".join(problems))
    return metas


def validate_meta_rubrics(metas: Sequence[MetaRubric]) -> list[str]:
    problems = []
    if len(metas) != NUM_DIMENSIONS:
        problems.append(f"expected {NUM_DIMENSIONS} meta rubrics, got {len(metas)}")
        return problems
    for position, meta in enumerate(metas):
        if meta.index != position + 1:
            problems.append(f"meta rubric at position {position} has index {meta.index}")
        if not meta.name.strip():
            problems.append(f"meta rubric {meta.index} has an empty name")
        if not meta.checklist:
            problems.append(f"meta rubric {meta.index} has an empty checklist")
    pitfalls = [m.index for m in metas if m.polarity is Polarity.PITFALL]
    if pitfalls != [NUM_DIMENSIONS]:
        problems.append(f"pitfall dimensions at {pitfalls}, expected exactly [{NUM_DIMENSIONS}]")
    return problems


def meta_fingerprint(metas: Sequence[MetaRubric]) -> str:
    return content_hash([m.to_dict() for m in metas])


# ---------------------------------------------------------------------------
# Post-validation helpers
# ---------------------------------------------------------------------------


def normalize_words(text: str) -> list[str]:
    return re.findall(r"[a-z0-9]+", text.lower())


def has_copy_leak(candidate: str, reference_text: str, window: int = COPY_LEAK_WINDOW) -> bool:
    """True when any ``window``-word run of the candidate appears verbatim in
    the reference text (both sides normalized to lowercase alphanumerics)."""
    words = normalize_words(candidate)
    if len(words) < window:
        return False
    reference = " ".join(normalize_words(reference_text))
    for start in range(len(words) - window + 1):
        if " ".join(words[start : start + window]) in reference:
            return True
    return False


def anchor_is_valid(anchor: str, paper: Paper) -> bool:
    anchor = anchor.strip()
    if not anchor or anchor.lower() == "none":
        return True
    if _ANCHOR_PATTERN.search(anchor):
        return True
    lowered = anchor.lower()
    return any(lowered in heading.lower() or heading.lower() in lowered
               for heading, _ in paper.sections if heading.strip())


# ---------------------------------------------------------------------------
# Instantiation
# ---------------------------------------------------------------------------


def build_instantiation_request(
    role: ModelRole,
    paper: Paper,
    metas: Sequence[MetaRubric],
    reference: StructuredReview,
    retry_note: str = "",
) -> ChatRequest:
    system, user = render_pair(
        "rubric",
        {
            "paper_title": paper.title,
            "paper_body": paper.body,
            "meta_json": canonical_json([m.to_dict() for m in metas]),
            "reference_json": canonical_json(reference.to_dict()),
        },
    )
    if retry_note:
        user = user + "\n\n" + retry_note
    return ChatRequest(role=role, system=system, user=user, schema_id=RUBRIC_SCHEMA_ID)


def _clean_dimensions(
    payload: dict,
    paper: Paper,
    reference: StructuredReview,
    warnings: list[str],
) -> list[PaperRubricDimension]:
    """Apply the post-validation contract: order dimensions by meta_index,
    drop requirements that copy the reference review, blank invalid anchors."""
    by_index: dict[int, list[RubricRequirement]] = {}
    reference_text = " ".join(
        [reference.summary, reference.strengths, reference.weaknesses, reference.questions]
    )
    for dim in payload["dimensions"]:
        index = int(dim["meta_index"])
        if index in by_index:
            warnings.append(f"duplicate dimension {index} in rubric output; keeping the first")
            continue
        requirements = []
        for item in dim["requirements"]:
            text = str(item["text"]).strip()
            anchor = str(item.get("anchor", "none")).strip() or "none"
            if not text:
                continue
            if has_copy_leak(text, reference_text):
                warnings.append(
                    f"dimension {index}: dropped requirement copied from the reference review"
                )
                continue
            if not anchor_is_valid(anchor, paper):
                warnings.append(
                    f"dimension {index}: anchor {anchor!r} does not locate paper content; set to none"
                )
                anchor = "none"
            requirements.append(RubricRequirement(text=text, anchor=anchor))
        by_index[index] = requirements
    return [
        PaperRubricDimension(meta_index=i, requirements=tuple(by_index.get(i, ())))
        for i in range(1, NUM_DIMENSIONS + 1)
    ]


def instantiate_rubrics(
    gateway: Gateway,
    role: ModelRole,
    paper: Paper,
    metas: Sequence[MetaRubric],
    reference: StructuredReview,
) -> tuple[PaperRubrics, list[str]]:
    """Turn the meta dimensions into paper-specific rubrics.

    A dimension whose requirements all get filtered out triggers one retry
    with an explicit note; if it comes back empty again the paper fails
    rubric construction (we never ship a dimension with nothing to check).
    """
    gateway.registry.register(RUBRIC_SCHEMA_ID, RUBRIC_SCHEMA)
    warnings: list[str] = []
    response = gateway.complete(build_instantiation_request(role, paper, metas, reference))
    dimensions = _clean_dimensions(response.parsed, paper, reference, warnings)
    empty = [d.meta_index for d in dimensions if not d.requirements]
    if empty:
        warnings.append(f"dimensions {empty} came back empty; retrying once")
        retry_note = (
            "Your previous answer left these dimensions without usable requirements: "
            f"{empty}. Provide 2 to 6 requirements for every dimension, in your own "
            "words, each anchored to paper content."
        )
        response = gateway.complete(
            build_instantiation_request(role, paper, metas, reference, retry_note=retry_note)
        )
        dimensions = _clean_dimensions(response.parsed, paper, reference, warnings)
        empty = [d.meta_index for d in dimensions if not d.requirements]
        if empty:
            raise ValueError(
                f"paper {paper.id}: dimensions {empty} still empty after retry"
            )
    rubrics = PaperRubrics(paper_id=paper.id, dimensions=tuple(dimensions))
    problems = rubrics.validate()
    if problems:
        raise ValueError(f"paper {paper.id}: invalid rubrics: " + "; ".join(problems))
    for warning in warnings:
        logger.warning("paper %s: %s", paper.id, warning)
    return rubrics, warnings


# ---------------------------------------------------------------------------
# Storage
# ---------------------------------------------------------------------------


class RubricStore:
    """Filesystem store for paper rubrics, keyed by paper id and the meta
    fingerprint so a changed meta table can never silently reuse stale files.
    Lives in its own directory; generation code has no reason to ever open
    anything in it, and the leakage tests assert that it does not.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path_for(self, paper_id: str, meta_hash: str) -> Path:
        return self.root / f"{paper_id}.{meta_hash[:12]}.rubrics.json"

    def save(self, rubrics: PaperRubrics, meta_hash: str) -> Path:
        path = self.path_for(rubrics.paper_id, meta_hash)
        path.write_text(
            json.dumps(rubrics.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
        return path

    def load(self, paper_id: str, meta_hash: str) -> PaperRubrics:
        path = self.path_for(paper_id, meta_hash)
        if not path.exists():
            raise FileNotFoundError(f"no rubrics stored for paper {paper_id!r} (meta {meta_hash[:12]})")
        return PaperRubrics.from_dict(json.loads(path.read_text("utf-8")))

    def exists(self, paper_id: str, meta_hash: str) -> bool:
        return self.path_for(paper_id, meta_hash).exists()

    def paper_ids(self, meta_hash: str) -> list[str]:
        suffix = f".{meta_hash[:12]}.rubrics.json"
        return sorted(
            p.name[: -len(suffix)] for p in self.root.glob(f"*{suffix}")
        )
