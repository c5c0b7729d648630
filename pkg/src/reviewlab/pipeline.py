"""Run configuration and orchestration.

Two deliberately separate orchestrators live here.  :class:`ReviewRunner` is
the generation side: draft, parallel grounding fork, aggregate.  It has no
access to rubrics or reference reviews, structurally, and the test suite
pins that with an AST scan and a runtime file audit.  The benchmark and
evaluation sides (:func:`build_rubrics_for_corpus`, :func:`run_evaluation`)
are the only places rubric files are touched.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

from .agents import AgentRuntime, TraceRecorder
from .evaluator import CorpusEvaluation, evaluate_corpus
from .gateway import (
    ALL_ROLES,
    Backend,
    Gateway,
    GENERATION_ROLES,
    ModelRole,
    ROLE_JUDGE,
    ROLE_REFERENCE,
    ROLE_RUBRIC,
    SchemaRegistry,
)
from .ingest import BenchmarkBuild, RawRecord, build_benchmark
from .model import (
    BenchmarkInstance,
    GroundingBundle,
    Paper,
    StructuredReview,
    canonical_json,
    content_hash,
)
from .rubrics import RubricStore, instantiate_rubrics, load_meta_rubrics, meta_fingerprint
from .scholar import RerankClient, ScholarClient, retrieve

logger = logging.getLogger(__name__)

GENERATION_TEMPERATURE = 0.4  # benchmark-side and judge roles run at 0.0


@dataclass(frozen=True)
class AgentToggles:
    searcher: bool = True
    miner: bool = True
    analyzer: bool = True

    def to_dict(self) -> dict:
        return {"searcher": self.searcher, "miner": self.miner, "analyzer": self.analyzer}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "AgentToggles":
        return cls(
            searcher=bool(d.get("searcher", True)),
            miner=bool(d.get("miner", True)),
            analyzer=bool(d.get("analyzer", True)),
        )


def default_roles(model: str = "offline-default", endpoint: str = "") -> dict[str, ModelRole]:
    """One role entry per pipeline stage.  Generation stages sample at 0.4;
    consolidation, rubric writing, and judging run deterministic."""
    roles = {}
    for name in ALL_ROLES:
        temperature = GENERATION_TEMPERATURE if name in GENERATION_ROLES else 0.0
        roles[name] = ModelRole(role=name, model=model, endpoint=endpoint, temperature=temperature)
    return roles


@dataclass(frozen=True)
class RunConfig:
    """Everything that identifies a run's behavior (not its file locations).
    ``config_hash`` covers all of it, so two runs with equal hashes are
    behaviorally identical."""

    roles: tuple[ModelRole, ...] = ()
    agents: AgentToggles = AgentToggles()
    rerank_k: int = 10
    min_year: int = 2023
    search_limit: int = 20
    per_keyword_rerank: bool = False
    single_reference: bool = False
    seed: int = 42
    sample_size: int | None = None
    min_reviews: int = 3
    min_body_chars: int = 2000
    paper_workers: int = 1
    agent_workers: int = 3
    judge_workers: int = 4
    max_inflight: int = 4
    transport_retries: int = 3
    repair_retries: int = 3
    offline: bool = False

    def roles_by_name(self) -> dict[str, ModelRole]:
        return {role.role: role for role in self.roles}

    def validate(self) -> list[str]:
        problems = []
        names = [role.role for role in self.roles]
        if len(set(names)) != len(names):
            problems.append("duplicate role entries")
        missing = [name for name in ALL_ROLES if name not in names]
        if missing:
            problems.append(f"missing role configs: {missing}")
        for role in self.roles:
            problems.extend(role.validate())
        if self.rerank_k <= 0:
            problems.append("rerank_k must be positive")
        if self.min_reviews < 1:
            problems.append("min_reviews must be at least 1")
        for name in ("paper_workers", "agent_workers", "judge_workers", "max_inflight"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be at least 1")
        return problems

    def to_dict(self) -> dict:
        return {
            "roles": {role.role: role.to_dict() for role in self.roles},
            "agents": self.agents.to_dict(),
            "rerank_k": self.rerank_k,
            "min_year": self.min_year,
            "search_limit": self.search_limit,
            "per_keyword_rerank": self.per_keyword_rerank,
            "single_reference": self.single_reference,
            "seed": self.seed,
            "sample_size": self.sample_size,
            "min_reviews": self.min_reviews,
            "min_body_chars": self.min_body_chars,
            "paper_workers": self.paper_workers,
            "agent_workers": self.agent_workers,
            "judge_workers": self.judge_workers,
            "max_inflight": self.max_inflight,
            "transport_retries": self.transport_retries,
            "repair_retries": self.repair_retries,
            "offline": self.offline,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RunConfig":
        roles_raw = d.get("roles", {})
        if isinstance(roles_raw, Mapping):
            roles = tuple(
                ModelRole.from_dict({**v, "role": k}) for k, v in sorted(roles_raw.items())
            )
        else:
            roles = tuple(ModelRole.from_dict(v) for v in roles_raw)
        return cls(
            roles=roles,
            agents=AgentToggles.from_dict(d.get("agents", {})),
            rerank_k=int(d.get("rerank_k", 10)),
            min_year=int(d.get("min_year", 2023)),
            search_limit=int(d.get("search_limit", 20)),
            per_keyword_rerank=bool(d.get("per_keyword_rerank", False)),
            single_reference=bool(d.get("single_reference", False)),
            seed=int(d.get("seed", 42)),
            sample_size=int(d["sample_size"]) if d.get("sample_size") is not None else None,
            min_reviews=int(d.get("min_reviews", 3)),
            min_body_chars=int(d.get("min_body_chars", 2000)),
            paper_workers=int(d.get("paper_workers", 1)),
            agent_workers=int(d.get("agent_workers", 3)),
            judge_workers=int(d.get("judge_workers", 4)),
            max_inflight=int(d.get("max_inflight", 4)),
            transport_retries=int(d.get("transport_retries", 3)),
            repair_retries=int(d.get("repair_retries", 3)),
            offline=bool(d.get("offline", False)),
        )

    @classmethod
    def default(cls, model: str = "offline-default", endpoint: str = "") -> "RunConfig":
        return cls(roles=tuple(default_roles(model, endpoint).values()))

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        return replace(self, **overrides)

    @property
    def config_hash(self) -> str:
        return content_hash(self.to_dict())

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        config = cls.from_dict(json.loads(Path(path).read_text("utf-8")))
        problems = config.validate()
        if problems:
            raise ValueError(f"invalid config {path}: " + "; ".join(problems))
        return config


def build_gateway(
    config: RunConfig,
    backends: Backend | Mapping[str, Backend],
    cache_dir: str | Path | None = None,
    registry: SchemaRegistry | None = None,
) -> Gateway:
    return Gateway(
        backends,
        registry=registry,
        cache_dir=cache_dir,
        transport_retries=config.transport_retries,
        repair_retries=config.repair_retries,
        max_inflight=config.max_inflight,
    )


# ---------------------------------------------------------------------------
# Generation side
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorpusRunResult:
    reviews: Mapping[str, StructuredReview]
    traces: Mapping[str, dict]
    failures: tuple[tuple[str, str], ...]  # (paper_id, error)

    def to_summary_dict(self, config: RunConfig) -> dict:
        reviews_payload = [
            {"paper_id": paper_id, "review": self.reviews[paper_id].to_dict()}
            for paper_id in sorted(self.reviews)
        ]
        return {
            "config_hash": config.config_hash,
            "papers": len(self.reviews) + len(self.failures),
            "reviewed": len(self.reviews),
            "failed": [
                {"paper_id": paper_id, "error": error}
                for paper_id, error in sorted(self.failures)
            ],
            "reviews_hash": content_hash(reviews_payload),
        }


class ReviewRunner:
    """The generation pipeline: draft, grounding fork, aggregate.

    This class is on the blind side of the leakage wall.  It consumes papers
    and nothing else from the benchmark; candidates it produces are judged
    elsewhere.
    """

    def __init__(
        self,
        config: RunConfig,
        gateway: Gateway,
        scholar_client: ScholarClient | None = None,
        rerank_client: RerankClient | None = None,
    ):
        problems = config.validate()
        if problems:
            raise ValueError("invalid run config: " + "; ".join(problems))
        self.config = config
        self.runtime = AgentRuntime(gateway, config.roles_by_name())
        self.scholar_client = scholar_client or ScholarClient(offline=True)
        self.rerank_client = rerank_client

    def _searcher_task(self, paper: Paper, trace: TraceRecorder):
        keywords = self.runtime.run_keywords(paper, trace)
        ranked, warnings = retrieve(
            self.scholar_client,
            keywords,
            k=self.config.rerank_k,
            min_year=self.config.min_year,
            limit=self.config.search_limit,
            service=self.rerank_client,
            per_keyword=self.config.per_keyword_rerank,
        )
        for warning in warnings:
            trace.warn(warning)
        trace.record(
            "search",
            keywords=keywords,
            hit_ids=[item.hit.external_id for item in ranked],
        )
        return self.runtime.run_debriefs(paper, ranked, trace)

    def review_paper(self, paper: Paper) -> tuple[StructuredReview, TraceRecorder]:
        """Draft, ground, aggregate.  Raises on hard agent failure; the
        corpus loop catches per paper."""
        trace = TraceRecorder(paper.id)
        draft = self.runtime.run_draft(paper, trace)

        toggles = self.config.agents
        tasks = {}
        with ThreadPoolExecutor(max_workers=self.config.agent_workers) as pool:
            if toggles.searcher:
                tasks["debriefs"] = pool.submit(self._searcher_task, paper, trace)
            if toggles.miner:
                tasks["insight"] = pool.submit(self.runtime.run_miner, paper, draft, trace)
            if toggles.analyzer:
                tasks["result"] = pool.submit(self.runtime.run_analyzer, paper, draft, trace)
            bundle = GroundingBundle(
                debriefs=tasks["debriefs"].result() if "debriefs" in tasks else None,
                insight_report=tasks["insight"].result() if "insight" in tasks else None,
                result_report=tasks["result"].result() if "result" in tasks else None,
            )
        final = self.runtime.run_aggregate(paper, draft, bundle, trace)
        return final, trace

    def review_corpus(self, papers: Sequence[Paper]) -> CorpusRunResult:
        """Review every paper; per-paper failures are recorded and the run
        keeps going."""
        ordered = sorted(papers, key=lambda p: p.id)
        ids = [p.id for p in ordered]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate paper ids in review corpus")
        reviews: dict[str, StructuredReview] = {}
        traces: dict[str, dict] = {}
        failures: list[tuple[str, str]] = []

        def run_one(paper: Paper) -> None:
            try:
                review, trace = self.review_paper(paper)
                reviews[paper.id] = review
                traces[paper.id] = trace.to_dict()
            except Exception as exc:
                logger.error("paper %s failed: %s", paper.id, exc)
                failures.append((paper.id, f"{type(exc).__name__}: {exc}"))

        if self.config.paper_workers > 1:
            with ThreadPoolExecutor(max_workers=self.config.paper_workers) as pool:
                list(pool.map(run_one, ordered))
        else:
            for paper in ordered:
                run_one(paper)
        return CorpusRunResult(
            reviews=reviews, traces=traces, failures=tuple(sorted(failures))
        )


# ---------------------------------------------------------------------------
# Benchmark and evaluation side
# ---------------------------------------------------------------------------


def run_ingest(
    config: RunConfig, gateway: Gateway, records: Sequence[RawRecord]
) -> BenchmarkBuild:
    roles = config.roles_by_name()
    return build_benchmark(
        gateway,
        roles[ROLE_REFERENCE],
        records,
        sample_size=config.sample_size,
        seed=config.seed,
        single_reference=config.single_reference,
        min_reviews=config.min_reviews,
        min_body_chars=config.min_body_chars,
    )


def build_rubrics_for_corpus(
    config: RunConfig,
    gateway: Gateway,
    instances: Sequence[BenchmarkInstance],
    store: RubricStore,
    meta_path: str | Path | None = None,
) -> dict:
    """Instantiate and persist rubrics for every instance.  Existing files
    for the same meta fingerprint are reused."""
    metas = load_meta_rubrics(meta_path)
    fingerprint = meta_fingerprint(metas)
    roles = config.roles_by_name()
    built, reused = 0, 0
    all_warnings: list[str] = []
    for instance in sorted(instances, key=lambda i: i.paper.id):
        if store.exists(instance.paper.id, fingerprint):
            reused += 1
            continue
        rubrics, warnings = instantiate_rubrics(
            gateway, roles[ROLE_RUBRIC], instance.paper, metas, instance.reference_review
        )
        store.save(rubrics, fingerprint)
        built += 1
        all_warnings.extend(f"{instance.paper.id}: {w}" for w in warnings)
    return {
        "meta_fingerprint": fingerprint,
        "built": built,
        "reused": reused,
        "warnings": sorted(all_warnings),
    }


def run_evaluation(
    config: RunConfig,
    gateway: Gateway,
    instances: Sequence[BenchmarkInstance],
    candidates: Mapping[str, StructuredReview],
    store: RubricStore,
    meta_path: str | Path | None = None,
) -> CorpusEvaluation:
    metas = load_meta_rubrics(meta_path)
    fingerprint = meta_fingerprint(metas)
    roles = config.roles_by_name()
    return evaluate_corpus(
        gateway,
        roles[ROLE_JUDGE],
        instances,
        candidates,
        load_rubrics=lambda paper_id: store.load(paper_id, fingerprint),
        metas=metas,
        max_workers=config.judge_workers,
    )


# ---------------------------------------------------------------------------
# Deterministic artifact writing
# ---------------------------------------------------------------------------


def write_json(path: str | Path, payload: Any) -> None:
    """Stable JSON artifact: sorted keys, fixed layout, trailing newline, no
    timestamps anywhere near it."""
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def write_reviews_jsonl(reviews: Mapping[str, StructuredReview], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for paper_id in sorted(reviews):
            handle.write(
                canonical_json({"paper_id": paper_id, "review": reviews[paper_id].to_dict()})
                + "\n"
            )


def read_reviews_jsonl(path: str | Path) -> dict[str, StructuredReview]:
    reviews: dict[str, StructuredReview] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            reviews[str(record["paper_id"])] = StructuredReview.from_dict(record["review"])
    return reviews
