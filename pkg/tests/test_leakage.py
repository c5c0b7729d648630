"""Anti-leakage wall tests.

The generation side (agent runtime, review runner, the review subcommand)
must never see rubrics, reference reviews, or ground truth. Two layers pin
this: a static scan of the generation modules for forbidden identifiers, and
a runtime audit asserting that a full review run never opens a file inside
the rubric store.
"""

import ast
import json
import sys
from pathlib import Path

import reviewlab.agents
import reviewlab.cli
import reviewlab.pipeline
from reviewlab import cli
from reviewlab.gateway import FunctionBackend
from reviewlab.ingest import read_raw_records
from reviewlab.pipeline import RunConfig, build_gateway, build_rubrics_for_corpus, run_ingest
from reviewlab.rubrics import RubricStore, load_meta_rubrics, meta_fingerprint

from conftest import RecordingBackend, make_raw_record_fields, synth_response

FORBIDDEN_NAMES = {
    # benchmark-side types and helpers the generation code must not name
    "PaperRubrics",
    "PaperRubricDimension",
    "RubricRequirement",
    "MetaRubric",
    "RubricStore",
    "instantiate_rubrics",
    "load_meta_rubrics",
    "meta_fingerprint",
    "evaluate_review",
    "evaluate_corpus",
    "DimensionJudgment",
    "reference_review",
    "GroundTruth",
    "build_benchmark",
}

FORBIDDEN_MODULES = {"rubrics", "evaluator", "ingest"}


def identifiers_of(node: ast.AST) -> set[str]:
    names = set()
    for child in ast.walk(node):
        if isinstance(child, ast.Name):
            names.add(child.id)
        elif isinstance(child, ast.Attribute):
            names.add(child.attr)
        elif isinstance(child, ast.ImportFrom):
            if child.module:
                names.update(child.module.split("."))
            names.update(alias.name for alias in child.names)
        elif isinstance(child, ast.Import):
            for alias in child.names:
                names.update(alias.name.split("."))
        elif isinstance(child, ast.FunctionDef):
            names.add(child.name)
    return names


def module_tree(module) -> ast.Module:
    return ast.parse(Path(module.__file__).read_text("utf-8"))


def class_def(tree: ast.Module, name: str) -> ast.ClassDef:
    for node in tree.body:
        if isinstance(node, ast.ClassDef) and node.name == name:
            return node
    raise AssertionError(f"class {name} not found")


def function_def(tree: ast.Module, name: str) -> ast.FunctionDef:
    for node in tree.body:
        if isinstance(node, ast.FunctionDef) and node.name == name:
            return node
    raise AssertionError(f"function {name} not found")


class TestStaticWall:
    def test_agent_module_is_blind(self):
        tree = module_tree(reviewlab.agents)
        names = identifiers_of(tree)
        overlap = names & (FORBIDDEN_NAMES | FORBIDDEN_MODULES)
        assert overlap == set(), f"generation code references benchmark side: {overlap}"

    def test_review_runner_is_blind(self):
        tree = module_tree(reviewlab.pipeline)
        names = identifiers_of(class_def(tree, "ReviewRunner"))
        names |= identifiers_of(class_def(tree, "CorpusRunResult"))
        overlap = names & (FORBIDDEN_NAMES | FORBIDDEN_MODULES)
        assert overlap == set(), f"review runner references benchmark side: {overlap}"

    def test_review_subcommand_is_blind(self):
        tree = module_tree(reviewlab.cli)
        names = identifiers_of(function_def(tree, "cmd_review"))
        overlap = names & FORBIDDEN_NAMES
        assert overlap == set(), f"review subcommand references benchmark side: {overlap}"


# ---------------------------------------------------------------------------
# Runtime audit
# ---------------------------------------------------------------------------

_AUDIT = {"active": False, "paths": []}


def _hook(event: str, args: tuple) -> None:
    # audit hooks are permanent for the process; the flag keeps this one inert
    # outside the test that needs it
    if _AUDIT["active"] and event == "open" and args and args[0] is not None:
        _AUDIT["paths"].append(str(args[0]))


sys.addaudithook(_hook)


class TestRuntimeWall:
    def test_hook_sees_store_reads(self, tmp_path, config, gateway, raw_records):
        build = run_ingest(config, gateway, raw_records[:1])
        store = RubricStore(tmp_path / "store")
        build_rubrics_for_corpus(config, gateway, build.instances, store)
        fingerprint = meta_fingerprint(load_meta_rubrics())

        _AUDIT["active"], _AUDIT["paths"] = True, []
        try:
            store.load(build.instances[0].paper.id, fingerprint)
        finally:
            _AUDIT["active"] = False
        assert any(p.startswith(str(store.root)) for p in _AUDIT["paths"])

    def test_review_command_never_opens_rubric_store(self, tmp_path):
        records_path = tmp_path / "records.jsonl"
        with open(records_path, "w", encoding="utf-8") as handle:
            for i in range(1, 3):
                handle.write(json.dumps(make_raw_record_fields(i)) + "\n")

        config = RunConfig.default()
        recorder = RecordingBackend(FunctionBackend(synth_response))
        gateway = build_gateway(config, recorder)
        build = run_ingest(config, gateway, read_raw_records(records_path))
        store = RubricStore(tmp_path / "store")
        build_rubrics_for_corpus(config, gateway, build.instances, store)
        assert list(store.root.iterdir()), "store must hold rubrics for the audit to mean anything"

        from reviewlab.pipeline import ReviewRunner

        ReviewRunner(config, gateway).review_corpus([i.paper for i in build.instances])

        from reviewlab.ingest import write_instances_jsonl

        bench = tmp_path / "bench.jsonl"
        write_instances_jsonl(build.instances, bench)
        transcript = recorder.write_jsonl(tmp_path / "transcript.jsonl")

        _AUDIT["active"], _AUDIT["paths"] = True, []
        try:
            code = cli.main(
                ["review", "--bench", str(bench), "--out", str(tmp_path / "out"),
                 "--transcript", str(transcript)]
            )
        finally:
            _AUDIT["active"] = False

        assert code == 0
        touched = [p for p in _AUDIT["paths"] if p.startswith(str(store.root))]
        assert touched == [], f"review run opened rubric-store files: {touched}"
