"""Execution client: requests, digests, fixture replay, error mapping."""

import json

import pytest

from scenemotif.execution import (
    ExecError,
    ExecLimits,
    ExecRequest,
    ExecutionError,
    FixtureExecutor,
    MissingTraceFixtureError,
    RecordingExecutor,
    call_request,
    decode_response,
    program_request,
)

from helpers import GOLDEN_MOTIF_PROGRAM, InProcessExecutor


class TestRequests:
    def test_digest_is_stable_and_input_sensitive(self):
        a = program_request("objs = []\n")
        b = program_request("objs = []\n")
        c = program_request("objs = [1]\n")
        assert a.digest() == b.digest()
        assert a.digest() != c.digest()
        assert a.digest() != program_request("objs = []\n", rng_seed=1).digest()

    def test_call_entry_requires_call_source(self):
        with pytest.raises(ValueError):
            ExecRequest(source="x", entry="call")
        with pytest.raises(ValueError):
            ExecRequest(source="x", entry="program", call_source="f()")

    def test_limit_validation(self):
        with pytest.raises(ValueError):
            ExecLimits(timeout_s=0)
        with pytest.raises(ValueError):
            ExecLimits(max_objects=0)


class TestDecodeResponse:
    def test_ok_payload_round_trips(self):
        trace = InProcessExecutor().run(program_request(GOLDEN_MOTIF_PROGRAM))
        back = decode_response({"ok": True, "trace": trace.to_dict()})
        assert back.labels() == ["plate"] * 7

    def test_error_payload_raises_typed_error(self):
        with pytest.raises(ExecutionError) as err:
            decode_response(
                {"ok": False, "error": {"kind": "syntax", "message": "bad", "location": 3}}
            )
        assert err.value.error.kind == "syntax"
        assert err.value.error.location == 3

    def test_malformed_payload_is_protocol_error(self):
        with pytest.raises(ExecutionError) as err:
            decode_response({})
        assert err.value.error.kind == "protocol"

    def test_unknown_error_kind_rejected(self):
        with pytest.raises(ValueError):
            ExecError(kind="weird", message="x")


class TestFixtureReplay:
    def test_record_then_replay_round_trip(self, tmp_path):
        recorder = RecordingExecutor(InProcessExecutor(), tmp_path)
        request = program_request(GOLDEN_MOTIF_PROGRAM)
        live = recorder.run(request)
        replayed = FixtureExecutor(tmp_path).run(request)
        assert replayed.to_dict() == live.to_dict()

    def test_errors_are_recorded_and_replayed(self, tmp_path):
        recorder = RecordingExecutor(InProcessExecutor(), tmp_path)
        request = program_request("objs = [\n")
        with pytest.raises(ExecutionError):
            recorder.run(request)
        with pytest.raises(ExecutionError) as err:
            FixtureExecutor(tmp_path).run(request)
        assert err.value.error.kind == "syntax"

    def test_missing_fixture_carries_digest(self, tmp_path):
        request = program_request("objs = []\n")
        with pytest.raises(MissingTraceFixtureError) as err:
            FixtureExecutor(tmp_path).run(request)
        assert err.value.digest == request.digest()

    def test_fixture_file_is_named_by_digest(self, tmp_path):
        recorder = RecordingExecutor(InProcessExecutor(), tmp_path)
        request = call_request("def f():\n    create('a', [0.1, 0.1, 0.1])\n", "f()")
        recorder.run(request)
        path = tmp_path / f"{request.digest()}.json"
        assert path.exists()
        assert json.loads(path.read_text())["ok"] is True


class TestReferenceRunnerContract:
    """The trusted runner used to build fixtures honors the DSL contract."""

    def test_create_starts_at_origin_with_identity(self):
        trace = InProcessExecutor().run(program_request("o = create('x', [0.1, 0.2, 0.3])\n"))
        obj = trace.objects[0]
        assert obj.position == [0.0, 0.0, 0.0]
        assert obj.rotation == [1, 0, 0, 0, 1, 0, 0, 0, 1]

    def test_trace_preserves_creation_order(self):
        source = "a = create('a', [0.1, 0.1, 0.1])\nb = create('b', [0.1, 0.1, 0.1])\n"
        trace = InProcessExecutor().run(program_request(source))
        assert trace.labels() == ["a", "b"]

    def test_forbidden_import_detected(self):
        with pytest.raises(ExecutionError) as err:
            InProcessExecutor().run(program_request("import os\n"))
        assert err.value.error.kind == "forbidden-import"

    def test_runtime_error_reported(self):
        with pytest.raises(ExecutionError) as err:
            InProcessExecutor().run(program_request("move(1, 2, 3, 4)\n"))
        assert err.value.error.kind == "runtime"

    def test_object_limit_enforced(self):
        source = "for i in range(10):\n    create('x', [0.1, 0.1, 0.1])\n"
        with pytest.raises(ExecutionError) as err:
            InProcessExecutor().run(program_request(source, max_objects=5))
        assert err.value.error.kind == "object-limit"

    def test_seeded_randomness_is_deterministic(self):
        source = (
            "import random\n"
            "for i in range(3):\n"
            "    o = create('x', [0.1, 0.1, 0.1])\n"
            "    move(o, random.uniform(-1, 1), 0.0, 0.0)\n"
        )
        a = InProcessExecutor().run(program_request(source, rng_seed=7))
        b = InProcessExecutor().run(program_request(source, rng_seed=7))
        c = InProcessExecutor().run(program_request(source, rng_seed=8))
        assert a.to_dict() == b.to_dict()
        assert a.to_dict() != c.to_dict()
