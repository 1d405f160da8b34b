"""Prompt catalog, sessions, budgets, backends, reply parsing."""

import json

import pytest

from scenemotif.llm import (
    Budget,
    BudgetExceededError,
    ChatSession,
    MissingFixtureError,
    PromptCatalog,
    PromptTemplate,
    RecordingBackend,
    ReplayBackend,
    TransportError,
    complete,
    conversation_digest,
    extract_json_block,
    strip_code_fences,
)

from helpers import ScriptedBackend

EXPECTED_TEMPLATES = {
    "system",
    "classify",
    "optimize_highlevel_count",
    "optimize_highlevel_general_pattern",
    "optimize_highlevel_xyz_pattern",
    "optimize_highlevel_xyz_displacements",
    "optimize_lowlevel",
    "validate_naive_listing",
    "optimize_lowlevel_feedback_syntax",
    "optimize_lowlevel_feedback_naive_listing",
    "optimize_lowlevel_feedback_num_objs",
    "optimize_lowlevel_feedback_centroids",
    "optimize_lowlevel_feedback_bounding_boxes",
    "generalize_high_level_commonalities",
    "generalize_high_level_differences",
    "generalize_high_level_motif_reason",
    "generalize_low_level_arguments",
    "generalize_low_level_structure",
    "generalize_low_level",
    "generalize_low_level_batch_recreate",
    "generalize_low_level_feedback",
    "generalize_refine_comments",
    "inference",
    "inference_feedback",
    "retrieval_mesh_rotations",
    "spatial_optimization_touch",
    "wnsynsetkeys",
    "invalid_response",
}


class TestCatalog:
    def test_bundled_catalog_is_complete(self):
        catalog = PromptCatalog.load_default()
        assert set(catalog.names()) == EXPECTED_TEMPLATES

    def test_system_prompt_defines_the_dsl(self):
        system = PromptCatalog.load_default().system
        for token in ("create(", "move(", "rotate(", "the y-axis is up"):
            assert token in system

    def test_render_substitutes_only_placeholders(self):
        template = PromptTemplate("t", "Hello <NAME>, see <NAME> and <OTHER>.")
        out = template.render(name="world", other="more")
        assert out == "Hello world, see world and more."

    def test_render_rejects_unknown_slot(self):
        template = PromptTemplate("t", "no slots here")
        with pytest.raises(KeyError):
            template.render(name="x")

    def test_render_rejects_unfilled_slot(self):
        template = PromptTemplate("t", "<A> and <B>")
        with pytest.raises(KeyError):
            template.render(a="x")

    def test_classify_lists_all_motif_types(self):
        body = PromptCatalog.load_default()["classify"].body
        for kind in (
            "stack", "pile", "row", "grid", "left_of", "in_front_of", "on_top",
            "surround", "wall_vertical_column", "wall_horizontal_row", "wall_grid",
            "letter", "rectangular_perimeter",
        ):
            assert kind in body


class TestSessionsAndBudget:
    def test_complete_appends_both_turns(self):
        backend = ScriptedBackend(["pong"])
        session = ChatSession(system_message="sys")
        reply = complete(backend, session, "ping")
        assert reply == "pong"
        assert session.turns == [
            {"role": "user", "content": "ping"},
            {"role": "assistant", "content": "pong"},
        ]

    def test_budget_accounting_is_monotone(self):
        backend = ScriptedBackend(["a", "bb"])
        session = ChatSession(system_message="sys")
        complete(backend, session, "12")
        first = (session.budget.calls, session.budget.prompt_chars, session.budget.reply_chars)
        complete(backend, session, "345")
        second = (session.budget.calls, session.budget.prompt_chars, session.budget.reply_chars)
        assert second == (2, 5, 3)
        assert all(b >= a for a, b in zip(first, second))

    def test_max_calls_enforced(self):
        backend = ScriptedBackend(["x", "y"])
        session = ChatSession(system_message="sys", budget=Budget(max_calls=1))
        complete(backend, session, "one")
        with pytest.raises(BudgetExceededError):
            complete(backend, session, "two")

    def test_transcript_save(self, tmp_path):
        session = ChatSession(system_message="sys", name="t")
        session.append("user", "hello")
        session.save(tmp_path / "t.json")
        data = json.loads((tmp_path / "t.json").read_text())
        assert data["system"] == "sys"
        assert data["turns"][0]["content"] == "hello"


class TestBackends:
    def test_digest_depends_on_all_parts(self):
        base = conversation_digest("s", [], "p")
        assert base == conversation_digest("s", [], "p")
        assert base != conversation_digest("s2", [], "p")
        assert base != conversation_digest("s", [{"role": "user", "content": "x"}], "p")
        assert base != conversation_digest("s", [], "p2")

    def test_record_then_replay_round_trip(self, tmp_path):
        recorder = RecordingBackend(ScriptedBackend(["answer"]), tmp_path)
        session = ChatSession(system_message="sys")
        live = complete(recorder, session, "question")
        replay_session = ChatSession(system_message="sys")
        replayed = complete(ReplayBackend(tmp_path), replay_session, "question")
        assert replayed == live

    def test_missing_fixture_error_carries_digest(self, tmp_path):
        backend = ReplayBackend(tmp_path)
        session = ChatSession(system_message="sys")
        with pytest.raises(MissingFixtureError) as err:
            complete(backend, session, "unseen")
        assert err.value.digest == conversation_digest("sys", [], "unseen")

    def test_transport_errors_are_retried_then_raised(self):
        class FlakyBackend:
            def __init__(self):
                self.calls = 0

            model_name = "flaky"

            def complete(self, system, turns, prompt):
                self.calls += 1
                raise ConnectionError("down")

        backend = FlakyBackend()
        session = ChatSession(system_message="sys")
        with pytest.raises(TransportError):
            complete(backend, session, "x", retries=3, backoff_s=0.0)
        assert backend.calls == 3
        assert session.turns == []  # failed calls must not pollute the session

    def test_transient_failure_then_success(self):
        class OnceFlaky:
            def __init__(self):
                self.calls = 0

            model_name = "flaky"

            def complete(self, system, turns, prompt):
                self.calls += 1
                if self.calls == 1:
                    raise ConnectionError("down")
                return "ok"

        session = ChatSession(system_message="sys")
        assert complete(OnceFlaky(), session, "x", backoff_s=0.0) == "ok"


class TestReplyParsing:
    def test_strip_code_fences_takes_last_block(self):
        reply = "intro\n```python\nfirst\n```\ntext\n```python\nsecond\n```\noutro"
        assert strip_code_fences(reply) == "second"

    def test_strip_code_fences_passthrough(self):
        assert strip_code_fences("  bare code  ") == "bare code"

    def test_extract_json_from_fenced_reply(self):
        reply = 'Here you go:\n```json\n{"plate": 7}\n```\nDone.'
        assert extract_json_block(reply) == {"plate": 7}

    def test_extract_json_tolerates_single_quotes(self):
        reply = "{'valid': 'yes', 'variable_names': []}\nExplanation follows."
        assert extract_json_block(reply) == {"valid": "yes", "variable_names": []}

    def test_extract_json_takes_last_object(self):
        reply = '{"a": 1} some text {"b": 2}'
        assert extract_json_block(reply) == {"b": 2}

    def test_extract_json_handles_nesting(self):
        reply = 'prose {"plate": {"correct": 0.8, "incorrect": 0.2}} prose'
        assert extract_json_block(reply) == {"plate": {"correct": 0.8, "incorrect": 0.2}}

    def test_extract_json_failure_raises(self):
        with pytest.raises(ValueError):
            extract_json_block("no structure here")
