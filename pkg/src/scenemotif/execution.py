"""Client-side view of DSL program execution.

Programs run out of process in an isolated worker speaking a line-delimited
protocol: the host writes one JSON request on the worker's stdin and reads
one JSON response ({"ok": bool, "trace"?, "error"?}) from its stdout.  For
offline, reproducible runs a fixture-backed executor replays recorded traces
keyed by a digest of the request.
"""

from __future__ import annotations

import hashlib
import json
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, Sequence

import numpy as np

from .core import InvalidArgumentError, SceneObject

DEFAULT_TIMEOUT_S = 10.0
DEFAULT_MAX_OBJECTS = 256

ERROR_KINDS = ("syntax", "runtime", "forbidden-import", "timeout", "object-limit", "protocol")


@dataclass(frozen=True)
class ExecLimits:
    timeout_s: float = DEFAULT_TIMEOUT_S
    max_objects: int = DEFAULT_MAX_OBJECTS
    rng_seed: int = 0

    def __post_init__(self):
        if self.timeout_s <= 0:
            raise InvalidArgumentError("timeout_s must be positive")
        if self.max_objects < 1:
            raise InvalidArgumentError("max_objects must be at least 1")


@dataclass(frozen=True)
class ExecRequest:
    source: str
    entry: str  # "program" | "call"
    call_source: Optional[str] = None
    limits: ExecLimits = field(default_factory=ExecLimits)

    def __post_init__(self):
        if self.entry not in ("program", "call"):
            raise InvalidArgumentError(f"bad entry kind: {self.entry!r}")
        if (self.entry == "call") != (self.call_source is not None):
            raise InvalidArgumentError("call_source is required exactly when entry is 'call'")

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "entry": self.entry,
            "call_source": self.call_source,
            "limits": {
                "timeout_s": self.limits.timeout_s,
                "max_objects": self.limits.max_objects,
                "rng_seed": self.limits.rng_seed,
            },
        }

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def program_request(source: str, rng_seed: int = 0, **limit_overrides) -> ExecRequest:
    return ExecRequest(
        source=source,
        entry="program",
        limits=ExecLimits(rng_seed=rng_seed, **limit_overrides),
    )


def call_request(source: str, call_source: str, rng_seed: int = 0, **limit_overrides) -> ExecRequest:
    return ExecRequest(
        source=source,
        entry="call",
        call_source=call_source,
        limits=ExecLimits(rng_seed=rng_seed, **limit_overrides),
    )


@dataclass
class TraceObject:
    label: str
    half_size: list[float]
    position: list[float]
    rotation: list[float]  # 9 values, row-major

    def to_scene_object(self, object_id: Optional[str] = None) -> SceneObject:
        kwargs = {} if object_id is None else {"id": object_id}
        return SceneObject(
            label=self.label,
            half_size=np.asarray(self.half_size, dtype=np.float64),
            position=np.asarray(self.position, dtype=np.float64),
            rotation=np.asarray(self.rotation, dtype=np.float64).reshape(3, 3),
            **kwargs,
        )


@dataclass
class ObjectTrace:
    """Final object states after executing a program, plus the event log."""

    objects: list[TraceObject]
    events: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "objects": [
                {
                    "label": o.label,
                    "half_size": o.half_size,
                    "position": o.position,
                    "rotation": o.rotation,
                }
                for o in self.objects
            ],
            "events": self.events,
        }

    @staticmethod
    def from_dict(d: dict) -> "ObjectTrace":
        return ObjectTrace(
            objects=[
                TraceObject(
                    label=o["label"],
                    half_size=[float(v) for v in o["half_size"]],
                    position=[float(v) for v in o["position"]],
                    rotation=[float(v) for v in o["rotation"]],
                )
                for o in d["objects"]
            ],
            events=list(d.get("events", [])),
        )

    def scene_objects(self) -> list[SceneObject]:
        return [o.to_scene_object(object_id=f"trace_{i}") for i, o in enumerate(self.objects)]

    def labels(self) -> list[str]:
        return [o.label for o in self.objects]


@dataclass
class ExecError:
    kind: str
    message: str
    location: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ERROR_KINDS:
            raise InvalidArgumentError(f"bad error kind: {self.kind!r}")
        if not self.message:
            raise InvalidArgumentError("error message must be non-empty")


class ExecutionError(RuntimeError):
    """Raised by executors when a program fails to run."""

    def __init__(self, error: ExecError):
        super().__init__(f"{error.kind}: {error.message}")
        self.error = error


class Executor(Protocol):
    def run(self, request: ExecRequest) -> ObjectTrace: ...


def decode_response(data: dict) -> ObjectTrace:
    if data.get("ok"):
        return ObjectTrace.from_dict(data["trace"])
    err = data.get("error") or {}
    raise ExecutionError(
        ExecError(
            kind=err.get("kind", "protocol"),
            message=err.get("message", "malformed worker response"),
            location=err.get("location"),
        )
    )


class WorkerClient:
    """Run each request in a freshly spawned worker process.

    ``command`` is the argv of the worker, e.g.
    ``[sys.executable, "-m", "motifexec"]``.  The worker receives one JSON
    line on stdin and must answer with exactly one JSON line.
    """

    def __init__(self, command: Sequence[str], spawn_grace_s: float = 20.0):
        self.command = list(command)
        self.spawn_grace_s = spawn_grace_s

    def run(self, request: ExecRequest) -> ObjectTrace:
        payload = json.dumps(request.to_dict()) + "\n"
        try:
            proc = subprocess.run(
                self.command,
                input=payload,
                capture_output=True,
                text=True,
                timeout=request.limits.timeout_s + self.spawn_grace_s,
            )
        except subprocess.TimeoutExpired:
            raise ExecutionError(
                ExecError(kind="timeout", message="worker did not respond in time")
            )
        except OSError as exc:
            raise ExecutionError(ExecError(kind="protocol", message=f"cannot spawn worker: {exc}"))
        line = proc.stdout.strip().splitlines()
        if not line:
            raise ExecutionError(
                ExecError(
                    kind="protocol",
                    message=f"worker emitted no response (exit {proc.returncode}): {proc.stderr[-500:]}",
                )
            )
        try:
            data = json.loads(line[-1])
        except json.JSONDecodeError as exc:
            raise ExecutionError(ExecError(kind="protocol", message=f"bad worker response: {exc}"))
        return decode_response(data)


class MissingTraceFixtureError(ExecutionError):
    def __init__(self, digest: str):
        super().__init__(
            ExecError(kind="protocol", message=f"no trace fixture for digest {digest}")
        )
        self.digest = digest


class FixtureExecutor:
    """Replay recorded execution responses keyed by the request digest."""

    def __init__(self, fixture_dir: str | Path):
        self.fixture_dir = Path(fixture_dir)

    def run(self, request: ExecRequest) -> ObjectTrace:
        path = self.fixture_dir / f"{request.digest()}.json"
        if not path.exists():
            raise MissingTraceFixtureError(request.digest())
        return decode_response(json.loads(path.read_text()))


class RecordingExecutor:
    """Wrap another executor and record its responses as replay fixtures."""

    def __init__(self, inner: Executor, fixture_dir: str | Path):
        self.inner = inner
        self.fixture_dir = Path(fixture_dir)
        self.fixture_dir.mkdir(parents=True, exist_ok=True)

    def _write(self, request: ExecRequest, data: dict) -> None:
        path = self.fixture_dir / f"{request.digest()}.json"
        path.write_text(json.dumps(data, indent=2) + "\n")

    def run(self, request: ExecRequest) -> ObjectTrace:
        try:
            trace = self.inner.run(request)
        except ExecutionError as exc:
            self._write(
                request,
                {
                    "ok": False,
                    "error": {
                        "kind": exc.error.kind,
                        "message": exc.error.message,
                        "location": exc.error.location,
                    },
                },
            )
            raise
        self._write(request, {"ok": True, "trace": trace.to_dict()})
        return trace
