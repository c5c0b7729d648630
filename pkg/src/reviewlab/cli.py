"""Command-line interface.

Subcommands mirror the pipeline stages: ``ingest`` builds the benchmark,
``rubrics`` instantiates and stores paper rubrics, ``review`` runs the
generation pipeline (and only that; it has no rubric-store argument at all),
``evaluate`` judges candidates, ``attack`` runs the robustness harness, and
``report`` renders a summary for humans.

Exit codes: 0 success, 1 completed with per-paper failures, 2 bad usage,
configuration, or input data.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .attacks import load_attack_specs, robustness_report
from .evaluator import evaluate_review
from .gateway import Gateway, HttpBackend, ScriptedBackend
from .ingest import (
    load_papers_only,
    read_instances_jsonl,
    read_raw_records,
    write_drop_report_csv,
    write_instances_jsonl,
)
from .metrics import alignment_metrics
from .model import rational_to_json
from .pipeline import (
    ReviewRunner,
    RunConfig,
    build_gateway,
    build_rubrics_for_corpus,
    read_reviews_jsonl,
    run_evaluation,
    run_ingest,
    write_json,
    write_reviews_jsonl,
)
from .rubrics import RubricStore, load_meta_rubrics, meta_fingerprint
from .scholar import RerankClient, ScholarClient

logger = logging.getLogger(__name__)


class CliError(Exception):
    pass


def _load_config(args: argparse.Namespace) -> RunConfig:
    if args.config:
        return RunConfig.from_file(args.config)
    config = RunConfig.default()
    problems = config.validate()
    if problems:
        raise CliError("invalid default config: " + "; ".join(problems))
    return config


def _build_gateway(args: argparse.Namespace, config: RunConfig) -> Gateway:
    if args.transcript:
        backend = ScriptedBackend.from_jsonl(args.transcript)
    else:
        endpoints = {role.role: role.endpoint for role in config.roles}
        if not any(endpoints.values()):
            raise CliError(
                "no backend available: pass --transcript for offline replay or "
                "configure role endpoints in the config file"
            )
        backend = HttpBackend()
    return build_gateway(config, backend, cache_dir=args.cache_dir)


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _check_overwrite(paths: list[Path], force: bool) -> None:
    existing = [str(p) for p in paths if p.exists()]
    if existing and not force:
        raise CliError(
            "refusing to overwrite existing artifacts (use --force): " + ", ".join(existing)
        )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_ingest(args: argparse.Namespace) -> int:
    config = _load_config(args)
    gateway = _build_gateway(args, config)
    out = _out_dir(args)
    bench_path = out / "bench.jsonl"
    drops_path = out / "drop_report.csv"
    summary_path = out / "ingest_summary.json"
    _check_overwrite([bench_path, drops_path, summary_path], args.force)

    records = read_raw_records(args.records)
    build = run_ingest(config, gateway, records)
    write_instances_jsonl(build.instances, bench_path)
    write_drop_report_csv(build.dropped, drops_path)
    write_json(
        summary_path,
        {
            "config_hash": config.config_hash,
            "records_in": len(records),
            "instances": len(build.instances),
            "dropped": [
                {"paper_id": pid, "reason": reason.value} for pid, reason in build.dropped
            ],
            "warnings": sorted(build.warnings),
        },
    )
    print(f"ingested {len(build.instances)} instances ({len(build.dropped)} dropped) -> {bench_path}")
    return 0


def cmd_rubrics(args: argparse.Namespace) -> int:
    config = _load_config(args)
    gateway = _build_gateway(args, config)
    out = _out_dir(args)
    summary_path = out / "rubrics_summary.json"
    _check_overwrite([summary_path], args.force)

    instances = read_instances_jsonl(args.bench)
    store = RubricStore(args.store)
    summary = build_rubrics_for_corpus(config, gateway, instances, store, meta_path=args.meta)
    summary["config_hash"] = config.config_hash
    write_json(summary_path, summary)
    print(
        f"rubrics: built {summary['built']}, reused {summary['reused']} "
        f"(meta {summary['meta_fingerprint'][:12]}) -> {store.root}"
    )
    return 0


def cmd_review(args: argparse.Namespace) -> int:
    config = _load_config(args)
    gateway = _build_gateway(args, config)
    out = _out_dir(args)
    reviews_path = out / "reviews.jsonl"
    summary_path = out / "summary.json"
    _check_overwrite([reviews_path, summary_path], args.force)

    papers = load_papers_only(args.bench)
    scholar = ScholarClient(
        cache_dir=args.scholar_cache,
        offline=config.offline or args.transcript is not None,
    )
    rerank = RerankClient(args.rerank_url) if args.rerank_url else None
    runner = ReviewRunner(config, gateway, scholar_client=scholar, rerank_client=rerank)
    result = runner.review_corpus(papers)

    write_reviews_jsonl(result.reviews, reviews_path)
    traces_dir = out / "traces"
    traces_dir.mkdir(exist_ok=True)
    for paper_id in sorted(result.traces):
        write_json(traces_dir / f"{paper_id}.json", result.traces[paper_id])
    write_json(summary_path, result.to_summary_dict(config))
    print(
        f"reviewed {len(result.reviews)}/{len(papers)} papers -> {reviews_path}"
        + (f" ({len(result.failures)} failed)" if result.failures else "")
    )
    return 1 if result.failures else 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = _load_config(args)
    gateway = _build_gateway(args, config)
    out = _out_dir(args)
    summary_path = out / "evaluation.json"
    _check_overwrite([summary_path], args.force)

    instances = read_instances_jsonl(args.bench)
    candidates = read_reviews_jsonl(args.reviews)
    store = RubricStore(args.store)
    evaluation = run_evaluation(
        config, gateway, instances, candidates, store, meta_path=args.meta
    )
    summary = evaluation.to_summary_dict()
    summary["config_hash"] = config.config_hash
    if args.human_scores:
        annotations = json.loads(Path(args.human_scores).read_text("utf-8"))
        paired = [
            (float(row.overall), float(annotations[row.paper_id]))
            for row in evaluation.rows
            if row.paper_id in annotations
        ]
        if paired:
            auto, human = zip(*paired)
            summary["alignment"] = alignment_metrics(list(auto), list(human)).to_dict()
        else:
            summary["alignment"] = None
    write_json(summary_path, summary)
    print(
        f"evaluated {summary['evaluated']} papers, overall mean "
        f"{summary['overall_mean']} -> {summary_path}"
    )
    return 0


def cmd_attack(args: argparse.Namespace) -> int:
    config = _load_config(args)
    gateway = _build_gateway(args, config)
    out = _out_dir(args)
    report_path = out / "attack_report.json"
    _check_overwrite([report_path], args.force)

    instances = read_instances_jsonl(args.bench)
    papers = [inst.paper for inst in instances]
    store = RubricStore(args.store)
    metas = load_meta_rubrics(args.meta)
    fingerprint = meta_fingerprint(metas)
    roles = config.roles_by_name()
    scholar = ScholarClient(
        cache_dir=args.scholar_cache,
        offline=config.offline or args.transcript is not None,
    )
    runner = ReviewRunner(config, gateway, scholar_client=scholar)
    specs = load_attack_specs(args.attacks)

    def review_fn(paper):
        review, _ = runner.review_paper(paper)
        return review

    def score_fn(paper, candidate):
        vector, _ = evaluate_review(
            gateway,
            roles["dimension_judge"],
            paper,
            candidate,
            store.load(paper.id, fingerprint),
            metas,
            max_workers=config.judge_workers,
        )
        return vector

    report = robustness_report(papers, specs, review_fn, score_fn, seed=config.seed)
    report["config_hash"] = config.config_hash
    write_json(report_path, report)
    print(f"attack report for {len(papers)} papers, {len(specs)} attacks -> {report_path}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    summary = json.loads(Path(args.summary).read_text("utf-8"))
    metas = load_meta_rubrics(None)
    means = summary.get("dimension_means_float")
    print(f"papers evaluated: {summary.get('evaluated')}")
    if means:
        width = max(len(m.name) for m in metas)
        for meta, value in zip(metas, means):
            print(f"  {meta.name:<{width}}  {value: .4f}")
        print(f"  {'Overall':<{width}}  {summary['overall_mean_float']: .4f}")
    numeric = summary.get("numeric_float")
    if numeric:
        print(
            "rating MSE {mse:.4f}  MAE {mae:.4f}  decision ACC {acc:.4f}  F1 {f1:.4f}".format(
                **numeric
            )
        )
    alignment = summary.get("alignment")
    if alignment:
        def fmt(value):
            return "n/a" if value is None else f"{value:.4f}"

        print(
            f"alignment: MAE(norm) {fmt(alignment['mae_normalized'])}  "
            f"Pearson {fmt(alignment['pearson'])}  Spearman {fmt(alignment['spearman'])}  "
            f"pairwise error {fmt(alignment['pairwise_error'])}"
        )
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reviewlab",
        description="Rubric-guided benchmark construction, review generation, and evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="run config JSON (defaults to built-in offline config)")
        p.add_argument("--transcript", help="scripted backend transcript (JSONL) for offline runs")
        p.add_argument("--cache-dir", help="gateway response cache directory")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--force", action="store_true", help="overwrite existing artifacts")
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("ingest", help="build benchmark instances from raw records")
    common(p)
    p.add_argument("--records", required=True, help="raw corpus JSONL")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("rubrics", help="instantiate paper-specific rubrics")
    common(p)
    p.add_argument("--bench", required=True, help="benchmark JSONL from ingest")
    p.add_argument("--store", required=True, help="rubric store directory")
    p.add_argument("--meta", help="override meta-rubric table (JSON)")
    p.set_defaults(fn=cmd_rubrics)

    p = sub.add_parser("review", help="run the generation pipeline over a benchmark")
    common(p)
    p.add_argument("--bench", required=True, help="benchmark JSONL (papers only are read)")
    p.add_argument("--scholar-cache", help="retrieval cache directory")
    p.add_argument("--rerank-url", help="base URL of the rerank service, if deployed")
    p.set_defaults(fn=cmd_review)

    p = sub.add_parser("evaluate", help="judge candidate reviews against stored rubrics")
    common(p)
    p.add_argument("--bench", required=True)
    p.add_argument("--reviews", required=True, help="candidate reviews JSONL")
    p.add_argument("--store", required=True, help="rubric store directory")
    p.add_argument("--meta", help="override meta-rubric table (JSON)")
    p.add_argument("--human-scores", help="JSON map paper_id -> human overall score")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("attack", help="run the adversarial robustness harness")
    common(p)
    p.add_argument("--bench", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--meta", help="override meta-rubric table (JSON)")
    p.add_argument("--attacks", help="override attack templates (JSON)")
    p.add_argument("--scholar-cache", help="retrieval cache directory")
    p.set_defaults(fn=cmd_attack)

    p = sub.add_parser("report", help="pretty-print an evaluation summary")
    p.add_argument("--summary", required=True, help="evaluation.json produced by evaluate")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        logger.debug("unhandled failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
