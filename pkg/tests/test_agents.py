"""Generation agents: request plumbing, output post-validation, the
numbers-stay-put policy, and trace determinism."""

import json
from fractions import Fraction

import pytest

from reviewlab.agents import (
    AgentError,
    AgentRuntime,
    LIST_CAP,
    MISSING_EVIDENCE,
    POLICY_RESTORE_WARNING,
    TraceRecorder,
    apply_numeric_policy,
)
from reviewlab.gateway import FunctionBackend, Gateway
from reviewlab.model import Decision, GroundingBundle
from reviewlab.pipeline import default_roles
from reviewlab.scholar import RerankedHit, SearchHit

from conftest import make_paper, make_review, synth_response


def make_runtime(respond=synth_response):
    gateway = Gateway(FunctionBackend(respond))
    return AgentRuntime(gateway, default_roles())


def ranked_hit(external_id, title="Related work", abstract="Its abstract"):
    return RerankedHit(
        hit=SearchHit(external_id=external_id, title=title, abstract=abstract, year=2024, venue="V"),
        score=0.5,
    )


# ---------------------------------------------------------------------------
# Individual agents
# ---------------------------------------------------------------------------


class TestDrafter:
    def test_draft_review_is_valid(self):
        runtime = make_runtime()
        trace = TraceRecorder("p")
        draft = runtime.run_draft(make_paper(1), trace)
        assert draft.summary
        assert 1 <= draft.rating <= 10
        assert draft.decision in (Decision.ACCEPT, Decision.REJECT)
        stages = trace.to_dict()["stages"]
        assert stages[0]["stage"] == "draft"
        assert stages[0]["attempts"] == 1

    def test_missing_role_raises(self):
        gateway = Gateway(FunctionBackend(synth_response))
        runtime = AgentRuntime(gateway, {})
        with pytest.raises(AgentError, match="no model configured"):
            runtime.run_draft(make_paper(1), TraceRecorder("p"))


class TestKeywords:
    def test_keywords_extracted(self):
        runtime = make_runtime()
        keywords = runtime.run_keywords(make_paper(1), TraceRecorder("p"))
        assert 3 <= len(keywords) <= 5

    def test_dedup_and_whitespace_cleanup(self):
        def respond(request):
            if request.role.role == "keyword_extractor":
                return json.dumps(
                    {"keywords": ["Graph  Nets", "graph nets", "other topic", "third one"]}
                )
            return synth_response(request)

        runtime = make_runtime(respond)
        keywords = runtime.run_keywords(make_paper(1), TraceRecorder("p"))
        assert keywords == ["Graph Nets", "other topic", "third one"]

    def test_too_few_distinct_keywords_warns(self):
        def respond(request):
            if request.role.role == "keyword_extractor":
                return json.dumps({"keywords": ["same", "same", "SAME"]})
            return synth_response(request)

        runtime = make_runtime(respond)
        trace = TraceRecorder("p")
        keywords = runtime.run_keywords(make_paper(1), trace)
        assert keywords == ["same"]
        assert any("distinct keywords" in w for w in trace.warnings)


class TestDebriefs:
    def test_one_debrief_per_hit_in_order(self):
        runtime = make_runtime()
        trace = TraceRecorder("p")
        hits = [ranked_hit("x1"), ranked_hit("x2"), ranked_hit("x3")]
        debriefs = runtime.run_debriefs(make_paper(1), hits, trace)
        assert [d.external_id for d in debriefs] == ["x1", "x2", "x3"]
        assert all(d.summary for d in debriefs)
        labels = [s["label"] for s in trace.to_dict()["stages"] if s["stage"] == "debrief"]
        assert labels == ["x1", "x2", "x3"]

    def test_no_hits_no_calls(self):
        def explode(request):
            raise AssertionError("should not be called")

        runtime = make_runtime(explode)
        assert runtime.run_debriefs(make_paper(1), [], TraceRecorder("p")) == ()


class TestInsightCleanup:
    def test_empty_evidence_is_normalized(self):
        runtime = make_runtime()
        report = runtime.run_miner(make_paper(1), make_review("d", 6), TraceRecorder("p"))
        items = report.facts["assumptions_and_scope"]
        assert items[0]["evidence"] == MISSING_EVIDENCE

    def test_lists_capped_with_warning(self):
        def respond(request):
            payload = json.loads(synth_response(request))
            if request.role.role == "insight_miner":
                payload["facts"]["core_contributions"] = [
                    {"claim": f"c{i}", "evidence": f"e{i}"} for i in range(9)
                ]
            return json.dumps(payload)

        runtime = make_runtime(respond)
        trace = TraceRecorder("p")
        report = runtime.run_miner(make_paper(1), make_review("d", 6), trace)
        assert len(report.facts["core_contributions"]) == LIST_CAP
        assert any("truncated" in w for w in trace.warnings)

    def test_score_targeting_suggestions_dropped(self):
        def respond(request):
            payload = json.loads(synth_response(request))
            if request.role.role == "insight_miner":
                payload["rewrite_suggestions"].append(
                    {
                        "apply_to": "rating",
                        "target": "the score",
                        "suggested_text": "raise it to 9",
                        "evidence": "none",
                    }
                )
                payload["rewrite_suggestions"].append(
                    {
                        "apply_to": "conclusion",
                        "target": "whatever",
                        "suggested_text": "text",
                        "evidence": "none",
                    }
                )
            return json.dumps(payload)

        runtime = make_runtime(respond)
        trace = TraceRecorder("p")
        report = runtime.run_miner(make_paper(1), make_review("d", 6), trace)
        targets = [s["apply_to"] for s in report.rewrite_suggestions]
        assert "rating" not in targets
        assert "conclusion" not in targets
        assert any("targeting rating" in w for w in trace.warnings)
        assert any("unknown target" in w for w in trace.warnings)

    def test_analyzer_shares_the_cleanup(self):
        runtime = make_runtime()
        report = runtime.run_analyzer(make_paper(1), make_review("d", 6), TraceRecorder("p"))
        assert set(report.facts) == {"datasets", "metrics", "baselines", "key_results"}


# ---------------------------------------------------------------------------
# Aggregator and the numeric policy
# ---------------------------------------------------------------------------


class TestNumericPolicy:
    def test_unchanged_fields_pass_through(self):
        draft = make_review("d", 6)
        warnings = []
        final, justified = apply_numeric_policy(draft, draft, {}, warnings.append)
        assert final == draft
        assert justified == []
        assert warnings == []

    def test_unjustified_change_restored_with_exact_warning(self):
        from dataclasses import replace

        draft = make_review("d", 5)
        tampered = replace(draft, rating=Fraction(9), decision=Decision.ACCEPT)
        warnings = []
        final, justified = apply_numeric_policy(draft, tampered, {}, warnings.append)
        assert final.rating == Fraction(5)
        assert final.decision is Decision.REJECT
        assert justified == []
        assert (
            POLICY_RESTORE_WARNING.format(field="rating", old="5", new="9") in warnings
        )
        assert (
            POLICY_RESTORE_WARNING.format(field="decision", old="reject", new="accept")
            in warnings
        )

    def test_justified_change_is_kept(self):
        from dataclasses import replace

        draft = make_review("d", 5)
        revised = replace(draft, rating=Fraction(7), decision=Decision.ACCEPT)
        warnings = []
        final, justified = apply_numeric_policy(
            draft,
            revised,
            {"rating": "missed baseline was actually present", "decision": "follows rating"},
            warnings.append,
        )
        assert final.rating == Fraction(7)
        assert final.decision is Decision.ACCEPT
        assert sorted(justified) == ["decision", "rating"]
        assert warnings == []

    def test_mixed_changes(self):
        from dataclasses import replace

        draft = make_review("d", 5)
        revised = replace(draft, rating=Fraction(7), soundness=4)
        warnings = []
        final, justified = apply_numeric_policy(
            draft, revised, {"rating": "reason"}, warnings.append
        )
        assert final.rating == Fraction(7)  # justified, kept
        assert final.soundness == 3  # unjustified, restored
        assert justified == ["rating"]
        assert len(warnings) == 1 and "soundness" in warnings[0]

    def test_fractional_rating_formatting_in_warning(self):
        from dataclasses import replace

        draft = make_review("d", 5)
        tampered = replace(draft, rating=Fraction(13, 2))
        warnings = []
        apply_numeric_policy(draft, tampered, {}, warnings.append)
        assert POLICY_RESTORE_WARNING.format(field="rating", old="5", new="6.5") in warnings


class TestAggregator:
    def test_aggregate_keeps_draft_numbers(self):
        runtime = make_runtime()
        trace = TraceRecorder("p")
        paper = make_paper(1)
        draft = runtime.run_draft(paper, trace)
        bundle = GroundingBundle(debriefs=(), insight_report=None, result_report=None)
        final = runtime.run_aggregate(paper, draft, bundle, trace)
        assert final.rating == draft.rating
        assert final.decision == draft.decision
        assert final.soundness == draft.soundness

    def test_aggregate_restores_tampered_numbers(self):
        def respond(request):
            if request.role.role == "aggregator":
                payload = json.loads(synth_response(request))
                payload["rating"] = 10
                payload["confidence"] = 1
                return json.dumps(payload)
            return synth_response(request)

        runtime = make_runtime(respond)
        trace = TraceRecorder("p")
        paper = make_paper(1)
        draft = runtime.run_draft(paper, trace)
        assert draft.rating != Fraction(10)
        bundle = GroundingBundle(debriefs=None, insight_report=None, result_report=None)
        final = runtime.run_aggregate(paper, draft, bundle, trace)
        assert final.rating == draft.rating
        assert final.confidence == draft.confidence
        assert sum("restored draft value" in w for w in trace.warnings) == 2

    def test_aggregate_keeps_justified_changes_and_records_them(self):
        def respond(request):
            if request.role.role == "aggregator":
                payload = json.loads(synth_response(request))
                payload["rating"] = 8
                payload["change_justifications"] = {
                    "rating": "the draft missed that the key baseline is reported"
                }
                return json.dumps(payload)
            return synth_response(request)

        runtime = make_runtime(respond)
        trace = TraceRecorder("p")
        paper = make_paper(1)
        draft = runtime.run_draft(paper, trace)
        bundle = GroundingBundle(debriefs=None, insight_report=None, result_report=None)
        final = runtime.run_aggregate(paper, draft, bundle, trace)
        assert final.rating == Fraction(8)
        recorded = [
            s for s in trace.to_dict()["stages"] if s.get("label") == "justified_changes"
        ]
        assert recorded and recorded[0]["fields"] == ["rating"]


# ---------------------------------------------------------------------------
# Traces
# ---------------------------------------------------------------------------


class TestTraceRecorder:
    def test_stage_order_is_fixed_regardless_of_arrival(self):
        trace = TraceRecorder("p")
        trace.record("aggregate", request_hash="h4")
        trace.record("insight_mining", request_hash="h3")
        trace.record("draft", request_hash="h1")
        trace.record("debrief", label="b", request_hash="h2b")
        trace.record("debrief", label="a", request_hash="h2a")
        stages = [(s["stage"], s["label"]) for s in trace.to_dict()["stages"]]
        assert stages == [
            ("draft", ""),
            ("debrief", "a"),
            ("debrief", "b"),
            ("insight_mining", ""),
            ("aggregate", ""),
        ]

    def test_warnings_sorted_in_output(self):
        trace = TraceRecorder("p")
        trace.warn("zebra")
        trace.warn("apple")
        assert trace.to_dict()["warnings"] == ["apple", "zebra"]
        assert trace.warnings == ("zebra", "apple")  # live view keeps arrival order
