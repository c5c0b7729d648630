"""Adversarial-robustness harness: deterministic content injections into
papers, plus the clean-vs-attacked scoring comparison.

Injections always operate at paragraph boundaries inside a seed-chosen
section and re-splice the section into the body with a single literal
replacement, so the section-containment invariant of :class:`Paper` is
preserved by construction.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

from .evaluator import mean_scores
from .model import (
    NUM_DIMENSIONS,
    Paper,
    RubricScoreVector,
    StructuredReview,
    overall_score,
    rational_to_json,
)

logger = logging.getLogger(__name__)


class AttackError(Exception):
    pass


class AttackKind(str, Enum):
    INSTRUCTION_INJECTION = "instruction_injection"
    DISGUISED_MISLEADING = "disguised_misleading"
    NICHE_TERMINOLOGY = "niche_terminology"
    SCATTERED_KEY_INFO = "scattered_key_info"


@dataclass(frozen=True)
class AttackSpec:
    """One attack template.  ``payload`` is the text to plant; for the
    scattered kind it is the claim sentence that gets fragmented."""

    kind: AttackKind
    name: str
    payload: str

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "name": self.name, "payload": self.payload}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "AttackSpec":
        return cls(
            kind=AttackKind(d["kind"]),
            name=str(d["name"]),
            payload=str(d["payload"]),
        )


@dataclass(frozen=True)
class AttackResult:
    paper: Paper
    inserted: tuple[str, ...]  # the exact substrings planted in the body
    sections_hit: tuple[int, ...]


def load_attack_specs(path: str | Path | None = None) -> tuple[AttackSpec, ...]:
    """Load attack templates: the built-in set (one per kind) by default, or
    an override file of the same shape."""
    if path is None:
        raw = resources.files("reviewlab").joinpath("data", "attacks.json").read_text("utf-8")
    else:
        raw = Path(path).read_text("utf-8")
    specs = tuple(AttackSpec.from_dict(d) for d in json.loads(raw)["attacks"])
    if not specs:
        raise AttackError("attack template file contains no attacks")
    return specs


# ---------------------------------------------------------------------------
# Injection
# ---------------------------------------------------------------------------


def _eligible_sections(paper: Paper) -> list[int]:
    return [i for i, (_, text) in enumerate(paper.sections) if text.strip()]


def _insert_paragraph(text: str, payload: str, rng: random.Random) -> str:
    paragraphs = text.split("\n\n")
    position = rng.randrange(len(paragraphs) + 1)
    return "\n\n".join(paragraphs[:position] + [payload] + paragraphs[position:])


def _splice(paper: Paper, section_index: int, new_text: str) -> Paper:
    heading, old_text = paper.sections[section_index]
    body = paper.body.replace(old_text, new_text, 1)
    sections = list(paper.sections)
    sections[section_index] = (heading, new_text)
    from dataclasses import replace

    return replace(paper, body=body, sections=tuple(sections))


def split_fragments(sentence: str, parts: int) -> list[str]:
    """Split a claim sentence into ``parts`` contiguous word chunks of nearly
    equal length."""
    words = sentence.split()
    if len(words) < parts:
        raise AttackError(
            f"claim sentence has {len(words)} words, cannot make {parts} fragments"
        )
    base, extra = divmod(len(words), parts)
    fragments = []
    start = 0
    for i in range(parts):
        size = base + (1 if i < extra else 0)
        fragments.append(" ".join(words[start : start + size]))
        start += size
    return fragments


def inject(paper: Paper, spec: AttackSpec, seed: int) -> AttackResult:
    """Plant the attack into a copy of the paper.

    Deterministic in (seed, attack kind, paper id); papers without usable
    sections are rejected rather than silently returned unmodified.
    """
    problems = paper.validate()
    if problems:
        raise AttackError(f"refusing to attack invalid paper {paper.id}: " + "; ".join(problems))
    eligible = _eligible_sections(paper)
    if not eligible:
        raise AttackError(f"paper {paper.id} has no non-empty sections to inject into")
    rng = random.Random(f"{seed}:{spec.kind.value}:{paper.id}")

    if spec.kind is AttackKind.SCATTERED_KEY_INFO:
        if len(eligible) < 2:
            raise AttackError(
                f"paper {paper.id} has {len(eligible)} usable section(s); "
                "scattering needs at least 2"
            )
        parts = min(3, len(eligible))
        fragments = split_fragments(spec.payload, parts)
        targets = sorted(rng.sample(eligible, parts))
        current = paper
        inserted = []
        for section_index, fragment in zip(targets, fragments):
            framed = f"Note that {fragment}."
            new_text = _insert_paragraph(current.sections[section_index][1], framed, rng)
            current = _splice(current, section_index, new_text)
            inserted.append(framed)
        return AttackResult(paper=current, inserted=tuple(inserted), sections_hit=tuple(targets))

    section_index = rng.choice(eligible)
    new_text = _insert_paragraph(paper.sections[section_index][1], spec.payload, rng)
    attacked = _splice(paper, section_index, new_text)
    return AttackResult(
        paper=attacked, inserted=(spec.payload,), sections_hit=(section_index,)
    )


# ---------------------------------------------------------------------------
# Robustness comparison
# ---------------------------------------------------------------------------


def robustness_report(
    papers: Sequence[Paper],
    specs: Sequence[AttackSpec],
    review_fn: Callable[[Paper], StructuredReview],
    score_fn: Callable[[Paper, StructuredReview], RubricScoreVector],
    seed: int = 42,
) -> dict:
    """Generate and score reviews for clean and attacked variants of every
    paper, and report per-attack deltas in exact rationals.

    ``review_fn`` runs the generation pipeline on (possibly attacked) paper
    text; ``score_fn`` judges a candidate against the CLEAN paper's frozen
    rubrics, because the benchmark itself never changes, only the pipeline's
    input does.  Papers an attack cannot be applied to are skipped for that
    attack, and the clean baseline for the delta is recomputed over the same
    surviving subset so the comparison stays paired.
    """
    ordered = sorted(papers, key=lambda p: p.id)
    clean_scores: dict[str, RubricScoreVector] = {}
    for paper in ordered:
        clean_scores[paper.id] = score_fn(paper, review_fn(paper))

    all_clean = [clean_scores[p.id] for p in ordered]
    clean_means = mean_scores(all_clean)
    report: dict = {
        "seed": seed,
        "papers": [p.id for p in ordered],
        "clean": {
            "dimension_means": [rational_to_json(m) for m in clean_means],
            "overall_mean": rational_to_json(overall_score(clean_means)),
        },
        "attacks": {},
    }

    for spec in sorted(specs, key=lambda s: s.name):
        attacked_rows: list[RubricScoreVector] = []
        paired_clean: list[RubricScoreVector] = []
        skipped: list[dict] = []
        for paper in ordered:
            try:
                result = inject(paper, spec, seed)
            except AttackError as exc:
                skipped.append({"paper_id": paper.id, "reason": str(exc)})
                continue
            candidate = review_fn(result.paper)
            attacked_rows.append(score_fn(paper, candidate))
            paired_clean.append(clean_scores[paper.id])
        entry: dict = {
            "kind": spec.kind.value,
            "attacked": len(attacked_rows),
            "skipped": skipped,
        }
        if attacked_rows:
            attacked_means = mean_scores(attacked_rows)
            baseline_means = mean_scores(paired_clean)
            deltas = [a - c for a, c in zip(attacked_means, baseline_means)]
            entry["dimension_means"] = [rational_to_json(m) for m in attacked_means]
            entry["overall_mean"] = rational_to_json(overall_score(attacked_means))
            entry["delta_dimensions"] = [rational_to_json(d) for d in deltas]
            entry["delta_overall"] = rational_to_json(sum(deltas, Fraction(0)))
        report["attacks"][spec.name] = entry
    return report
