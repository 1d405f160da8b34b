"""Learning and generation orchestration.

Learning turns an annotated arrangement into a validated motif program and
a generalized meta-program through observe-generate-validate loops with an
LLM backend.  Generation classifies a description, synthesizes a call to
the stored meta-program, executes it, binds retrieved assets, and runs the
geometry optimizer.  Every prompt sent is a bundled template with
placeholders substituted and nothing else.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .assets import AssetIndex, NoAssetFoundError, pick_asset, rank_assets
from .core import Arrangement, SceneObject
from .execution import ExecutionError, Executor, ObjectTrace, call_request, program_request
from .llm import (
    Budget,
    ChatSession,
    LlmBackend,
    PromptCatalog,
    complete,
    extract_json_block,
    strip_code_fences,
)
from .mesh import TriMesh, box_mesh, load_obj
from .optimize import GeoConfig, OptimizeResult, PlacedMesh, optimize_arrangement
from .programs import (
    MetaProgram,
    MotifType,
    ProgramLibrary,
    ProgramText,
    extract_naive_program,
    function_name_of,
)
from .validation import (
    CriterionResult,
    ValidationReport,
    validate_meta_program,
    validate_motif_program,
)

logger = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    max_rewrite_iters: int = 5
    max_meta_iters: int = 5
    max_call_iters: int = 3
    rng_seed: int = 0
    rescale_assets: bool = False
    transcript_dir: Optional[Path] = None
    max_calls_per_session: Optional[int] = None


class PipelineError(RuntimeError):
    """A pipeline stage failed; ``stage`` names where."""

    stage = "pipeline"

    def __init__(self, message: str, **context):
        super().__init__(f"[{self.stage}] {message}")
        self.context = context


class ClassificationError(PipelineError):
    stage = "classify"


class ObservationError(PipelineError):
    stage = "observe"


class LearningFailedError(PipelineError):
    stage = "learn"

    def __init__(self, message: str, report: Optional[ValidationReport] = None, **context):
        super().__init__(message, **context)
        self.report = report


class InferenceFailedError(PipelineError):
    stage = "inference"


class NoMetaProgramError(PipelineError):
    stage = "generate"


def _new_session(catalog: PromptCatalog, name: str, config: PipelineConfig) -> ChatSession:
    return ChatSession(
        system_message=catalog.system,
        budget=Budget(max_calls=config.max_calls_per_session),
        name=name,
    )


def _save_transcript(session: ChatSession, config: PipelineConfig) -> None:
    if config.transcript_dir is not None:
        config.transcript_dir.mkdir(parents=True, exist_ok=True)
        session.save(config.transcript_dir / f"{session.name}.json")


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------

_MOTIF_TOKEN_RE = re.compile(
    r"letter[_ ]?[A-Za-z]\b|stack|pile|row|grid|left_of|in_front_of|on_top|surround|"
    r"wall_vertical_column|wall_horizontal_row|wall_grid|rectangular_perimeter",
    re.IGNORECASE,
)


def _parse_motif_reply(reply: str) -> MotifType:
    try:
        return MotifType.parse(reply)
    except Exception:
        pass
    tokens = _MOTIF_TOKEN_RE.findall(reply)
    # Longer matches win so "wall_grid" is not read as "grid".
    tokens.sort(key=len)
    for token in reversed(tokens):
        try:
            return MotifType.parse(token)
        except Exception:
            continue
    raise ValueError(f"no motif type found in reply {reply!r}")


def classify_description(
    backend: LlmBackend,
    description: str,
    catalog: Optional[PromptCatalog] = None,
    session: Optional[ChatSession] = None,
    config: Optional[PipelineConfig] = None,
) -> MotifType:
    """Ask the backend to classify a description into a motif type.

    Runs inside ``session`` when given (during learning, after the
    observation turns) or in a fresh session otherwise.  An unparseable
    reply is re-asked once before failing.
    """
    catalog = catalog or PromptCatalog.load_default()
    config = config or PipelineConfig()
    if session is None:
        session = _new_session(catalog, "classify", config)
    prompt = catalog["classify"].render(description=description)
    reply = complete(backend, session, prompt)
    try:
        return _parse_motif_reply(reply)
    except ValueError:
        retry = catalog["invalid_response"].render(
            feedback=f'"{reply.strip()}" is not one of the listed motif types.'
        )
        reply = complete(backend, session, retry)
        try:
            return _parse_motif_reply(reply)
        except ValueError as exc:
            raise ClassificationError(str(exc))


# ---------------------------------------------------------------------------
# Observation
# ---------------------------------------------------------------------------

@dataclass
class Observations:
    counts: dict[str, int]
    general_pattern: str
    xyz_pattern: str
    displacements: str


def _parse_counts(reply: str) -> dict[str, int]:
    data = extract_json_block(reply)
    counts = {}
    for label, value in data.items():
        if not isinstance(label, str) or isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"counts must map labels to integers, got {label!r}: {value!r}")
        if value < 0:
            raise ValueError(f"negative count for {label!r}")
        counts[label] = value
    if not counts:
        raise ValueError("empty counts structure")
    return counts


def observe_arrangement(
    backend: LlmBackend,
    session: ChatSession,
    naive: ProgramText,
    description: str,
    catalog: Optional[PromptCatalog] = None,
) -> Observations:
    """Run the four observation prompts over a naive program, in order."""
    catalog = catalog or PromptCatalog.load_default()
    if not naive.source.strip():
        raise ObservationError("naive program is empty")
    count_reply = complete(
        backend,
        session,
        catalog["optimize_highlevel_count"].render(
            description=description, program=naive.source
        ),
    )
    try:
        counts = _parse_counts(count_reply)
    except ValueError as exc:
        retry = catalog["invalid_response"].render(
            feedback="Your response did not contain a json-like text structure "
            "with the object types as keys and integer counts as values."
        )
        count_reply = complete(backend, session, retry)
        try:
            counts = _parse_counts(count_reply)
        except ValueError as exc2:
            raise ObservationError(f"cannot parse object counts: {exc2}") from exc
    general = complete(
        backend,
        session,
        catalog["optimize_highlevel_general_pattern"].render(description=description),
    )
    xyz = complete(backend, session, catalog["optimize_highlevel_xyz_pattern"].body)
    displacements = complete(
        backend, session, catalog["optimize_highlevel_xyz_displacements"].body
    )
    return Observations(
        counts=counts,
        general_pattern=general,
        xyz_pattern=xyz,
        displacements=displacements,
    )


# ---------------------------------------------------------------------------
# Motif-program rewriting
# ---------------------------------------------------------------------------

def judge_hardcoded_listing(
    backend: LlmBackend,
    source: str,
    catalog: PromptCatalog,
    config: PipelineConfig,
) -> CriterionResult:
    """LLM-adjudicated check that no per-object attribute lists remain."""
    session = _new_session(catalog, "naive-listing-judge", config)
    reply = complete(
        backend, session, catalog["validate_naive_listing"].render(program=source)
    )
    try:
        data = extract_json_block(reply)
        valid = str(data.get("valid", "")).strip().lower() == "yes"
        names = [str(n) for n in data.get("variable_names", [])]
    except ValueError:
        # Treat an unreadable judgment as a pass: the mechanical criteria
        # still gate correctness and a bad parse must not wedge the loop.
        logger.warning("unparseable hardcode judgment, assuming pass: %r", reply[:200])
        return CriterionResult(criterion="no_hardcoded_attributes", passed=True)
    if valid:
        return CriterionResult(criterion="no_hardcoded_attributes", passed=True)
    return CriterionResult(
        criterion="no_hardcoded_attributes",
        passed=False,
        feedback="These variables list attributes of individual objects: "
        + ", ".join(names or ["(unnamed)"]),
        details=[{"variable_names": names}],
    )


_FEEDBACK_TEMPLATES = {
    "no_hardcoded_attributes": "optimize_lowlevel_feedback_naive_listing",
    "counts": "optimize_lowlevel_feedback_num_objs",
    "placements": "optimize_lowlevel_feedback_centroids",
    "extents": "optimize_lowlevel_feedback_bounding_boxes",
}


@dataclass
class RewriteResult:
    program: ProgramText
    report: ValidationReport
    trace: ObjectTrace
    iterations: int


def rewrite_to_motif(
    backend: LlmBackend,
    session: ChatSession,
    naive: ProgramText,
    reference: Arrangement,
    executor: Executor,
    catalog: Optional[PromptCatalog] = None,
    config: Optional[PipelineConfig] = None,
) -> RewriteResult:
    """Rewrite a naive program into one whose structure encodes the motif.

    Each candidate passes through the executor gate, the hardcoded-listing
    judge, and the mechanical validator; the first failing criterion picks
    the feedback template for the next iteration.
    """
    catalog = catalog or PromptCatalog.load_default()
    config = config or PipelineConfig()
    prompt = catalog["optimize_lowlevel"].body
    last_report: Optional[ValidationReport] = None
    for iteration in range(1, config.max_rewrite_iters + 1):
        reply = complete(backend, session, prompt)
        source = strip_code_fences(reply)
        try:
            trace = executor.run(program_request(source, rng_seed=config.rng_seed))
        except ExecutionError as exc:
            prompt = catalog["optimize_lowlevel_feedback_syntax"].render(
                feedback=exc.error.message
            )
            continue
        judgment = judge_hardcoded_listing(backend, source, catalog, config)
        report = validate_motif_program(trace, reference, judgment)
        last_report = report
        if report.passed:
            program = ProgramText(
                source=source,
                motif_type=naive.motif_type,
                description=naive.description,
                provenance="motif",
            )
            return RewriteResult(
                program=program, report=report, trace=trace, iterations=iteration
            )
        first_failing = report.failing()[0]
        template = _FEEDBACK_TEMPLATES[first_failing.criterion]
        prompt = catalog[template].render(feedback=first_failing.feedback)
    raise LearningFailedError(
        f"no valid motif program within {config.max_rewrite_iters} iterations",
        report=last_report,
    )


# ---------------------------------------------------------------------------
# Meta-program generalization
# ---------------------------------------------------------------------------

def _programs_block(programs: Sequence[ProgramText]) -> str:
    blocks = []
    for i, program in enumerate(programs, start=1):
        blocks.append(f"Program {i}:\n```python\n{program.source.rstrip()}\n```")
    return "\n".join(blocks)


def _parse_recreate_calls(reply: str, expected: int) -> list[str]:
    data = extract_json_block(reply)
    calls = []
    for ordinal in range(1, expected + 1):
        key = str(ordinal)
        if key not in data:
            raise ValueError(f"missing function call for example program {ordinal}")
        call = str(data[key]).strip()
        if not call:
            raise ValueError(f"empty function call for example program {ordinal}")
        calls.append(call)
    return calls


def _recreate_calls(
    backend: LlmBackend,
    session: ChatSession,
    catalog: PromptCatalog,
    expected: int,
) -> list[str]:
    prompt = catalog["generalize_low_level_batch_recreate"].body
    reply = complete(backend, session, prompt)
    try:
        return _parse_recreate_calls(reply, expected)
    except ValueError as exc:
        retry = catalog["invalid_response"].render(
            feedback=f"Your response could not be parsed: {exc}. "
            "Respond with a json-like text structure mapping the example "
            "program order integers to the function calls."
        )
        reply = complete(backend, session, retry)
        return _parse_recreate_calls(reply, expected)


def _check_recreation(
    meta_source: str,
    calls: list[str],
    motif_traces: list[ObjectTrace],
    executor: Executor,
    config: PipelineConfig,
) -> tuple[bool, list[str]]:
    """Execute each recreate call and compare with its motif trace.

    Returns (passed, feedback lines per failing example program).
    """
    call_traces: list[Optional[ObjectTrace]] = []
    exec_failures: dict[int, str] = {}
    for ordinal, call in enumerate(calls, start=1):
        try:
            call_traces.append(
                executor.run(call_request(meta_source, call, rng_seed=config.rng_seed))
            )
        except ExecutionError as exc:
            call_traces.append(None)
            exec_failures[ordinal] = (
                f"Example program {ordinal}: the function call could not be run "
                f"({exc.error.message})"
            )
    feedback = []
    ok_pairs = [
        (trace, motif)
        for trace, motif in zip(call_traces, motif_traces)
        if trace is not None
    ]
    if ok_pairs:
        # Ordinals must match the original example numbering even when some
        # calls failed to execute, so validate pair by pair.
        for ordinal, (trace, motif) in enumerate(zip(call_traces, motif_traces), start=1):
            if trace is None:
                feedback.append(exec_failures[ordinal])
                continue
            report = validate_meta_program([trace], [motif])
            if not report.passed:
                for result in report.failing():
                    feedback.append(
                        result.feedback.replace("Example program 1", f"Example program {ordinal}")
                    )
    else:
        feedback.extend(exec_failures.values())
    return (not feedback), feedback


@dataclass
class GeneralizeResult:
    meta: MetaProgram
    iterations: int


def generalize_to_meta(
    backend: LlmBackend,
    session: ChatSession,
    programs: Sequence[ProgramText],
    executor: Executor,
    prior: Optional[MetaProgram] = None,
    catalog: Optional[PromptCatalog] = None,
    config: Optional[PipelineConfig] = None,
) -> GeneralizeResult:
    """Generalize motif programs of one type into a documented meta-program.

    The observation and reasoning prompts run once; the generated candidate
    then loops through recreate-call validation with feedback until every
    example program is reproduced, and a final pass expands the docstring
    and comments.
    """
    catalog = catalog or PromptCatalog.load_default()
    config = config or PipelineConfig()
    if not programs:
        raise LearningFailedError("no motif programs to generalize")
    motif_type = programs[0].motif_type
    if any(p.motif_type != motif_type for p in programs):
        raise LearningFailedError("all programs must share one motif type")

    motif_traces = [
        executor.run(program_request(p.source, rng_seed=config.rng_seed)) for p in programs
    ]

    complete(
        backend,
        session,
        catalog["generalize_high_level_commonalities"].render(
            num_programs=str(len(programs)),
            motif_type=motif_type.value,
            all_programs=_programs_block(programs),
        ),
    )
    complete(backend, session, catalog["generalize_high_level_differences"].body)
    complete(
        backend,
        session,
        catalog["generalize_high_level_motif_reason"].render(motif_type=motif_type.value),
    )
    complete(
        backend,
        session,
        catalog["generalize_low_level_arguments"].render(motif_type=motif_type.value),
    )
    complete(
        backend,
        session,
        catalog["generalize_low_level_structure"].render(motif_type=motif_type.value),
    )
    reply = complete(
        backend,
        session,
        catalog["generalize_low_level"].render(
            motif_type=motif_type.value,
            past_meta_program=prior.source.rstrip() if prior else "None",
        ),
    )

    calls: list[str] = []
    for iteration in range(1, config.max_meta_iters + 1):
        meta_source = strip_code_fences(reply)
        try:
            calls = _recreate_calls(backend, session, catalog, len(programs))
        except ValueError as exc:
            raise LearningFailedError(f"cannot parse recreate calls: {exc}")
        passed, feedback = _check_recreation(
            meta_source, calls, motif_traces, executor, config
        )
        if passed:
            refined_reply = complete(
                backend,
                session,
                catalog["generalize_refine_comments"].render(motif_type=motif_type.value),
            )
            refined = strip_code_fences(refined_reply)
            # Comment refinement must not change behavior; keep the
            # validated source if the refined one no longer runs.
            try:
                executor.run(call_request(refined, calls[0], rng_seed=config.rng_seed))
                meta_source = refined
            except ExecutionError as exc:
                logger.warning("refined meta-program rejected: %s", exc)
            meta = MetaProgram(
                source=meta_source,
                function_name=function_name_of(meta_source),
                motif_type=motif_type,
                example_calls=calls,
                validated_against=[p.created_from or p.description for p in programs],
            )
            return GeneralizeResult(meta=meta, iterations=iteration)
        reply = complete(
            backend,
            session,
            catalog["generalize_low_level_feedback"].render(feedback="\n".join(feedback)),
        )
    raise LearningFailedError(
        f"no valid meta-program within {config.max_meta_iters} iterations"
    )


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------

def synthesize_call(
    backend: LlmBackend,
    meta: MetaProgram,
    description: str,
    executor: Executor,
    catalog: Optional[PromptCatalog] = None,
    config: Optional[PipelineConfig] = None,
) -> tuple[str, ObjectTrace]:
    """Ask for a meta-program call matching a description and execute it."""
    catalog = catalog or PromptCatalog.load_default()
    config = config or PipelineConfig()
    session = _new_session(catalog, "inference", config)
    prompt = catalog["inference"].render(
        motif_type=meta.motif_type.value,
        meta_program=meta.source.rstrip(),
        description=description,
    )
    last_error = "no call produced"
    for _ in range(config.max_call_iters):
        reply = complete(backend, session, prompt)
        call = strip_code_fences(reply)
        try:
            trace = executor.run(call_request(meta.source, call, rng_seed=config.rng_seed))
        except ExecutionError as exc:
            last_error = exc.error.message
            prompt = catalog["inference_feedback"].render(feedback=last_error)
            continue
        _save_transcript(session, config)
        return call, trace
    raise InferenceFailedError(
        f"no runnable call within {config.max_call_iters} iterations: {last_error}"
    )


# ---------------------------------------------------------------------------
# Commonsense verdicts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CommonsenseVerdict:
    """Probabilities parsed from a commonsense prompt, or the default."""

    probabilities: dict
    defaulted: bool = False


def _valid_probability_pair(pair: dict, keys: tuple[str, str]) -> bool:
    try:
        a, b = float(pair[keys[0]]), float(pair[keys[1]])
    except (KeyError, TypeError, ValueError):
        return False
    return 0.0 <= a <= 1.0 and 0.0 <= b <= 1.0 and abs(a + b - 1.0) <= 0.01


def ask_orientation_likelihood(
    backend: LlmBackend,
    description: str,
    labels: Sequence[str],
    catalog: Optional[PromptCatalog] = None,
    config: Optional[PipelineConfig] = None,
) -> CommonsenseVerdict:
    """Per-label probability that a retrieved mesh is already oriented right.

    Unparseable replies fall back to "correct", disabling rotation search:
    never re-orient meshes on bad data.
    """
    catalog = catalog or PromptCatalog.load_default()
    config = config or PipelineConfig()
    if not labels:
        raise PipelineError("orientation verdict requires at least one label")
    session = _new_session(catalog, "orientation", config)
    prompt = catalog["retrieval_mesh_rotations"].render(
        description=description, object_labels=", ".join(labels)
    )
    for attempt in range(2):
        reply = complete(backend, session, prompt)
        try:
            data = extract_json_block(reply)
        except ValueError:
            data = None
        if data is not None and all(
            isinstance(data.get(label), dict)
            and _valid_probability_pair(data[label], ("correct", "incorrect"))
            for label in labels
        ):
            return CommonsenseVerdict(
                probabilities={
                    label: {
                        "correct": float(data[label]["correct"]),
                        "incorrect": float(data[label]["incorrect"]),
                    }
                    for label in labels
                }
            )
        prompt = catalog["invalid_response"].render(
            feedback="Your response did not contain the expected json-like text "
            'structure with "correct" and "incorrect" probabilities for every label.'
        )
    return CommonsenseVerdict(
        probabilities={label: {"correct": 1.0, "incorrect": 0.0} for label in labels},
        defaulted=True,
    )


def rotation_search_enabled(verdict: CommonsenseVerdict, label: str) -> bool:
    pair = verdict.probabilities.get(label)
    return bool(pair) and pair["incorrect"] > 0.5


def ask_touch_likelihood(
    backend: LlmBackend,
    description: str,
    catalog: Optional[PromptCatalog] = None,
    config: Optional[PipelineConfig] = None,
) -> CommonsenseVerdict:
    """Probability that objects in the motif sit in tight contact.

    Unparseable replies default to no contact so the optimizer never pulls
    objects together on bad data.
    """
    catalog = catalog or PromptCatalog.load_default()
    config = config or PipelineConfig()
    session = _new_session(catalog, "touch", config)
    prompt = catalog["spatial_optimization_touch"].render(description=description)
    for attempt in range(2):
        reply = complete(backend, session, prompt)
        try:
            data = extract_json_block(reply)
        except ValueError:
            data = None
        if data is not None and _valid_probability_pair(data, ("touch", "no_touch")):
            return CommonsenseVerdict(
                probabilities={
                    "touch": float(data["touch"]),
                    "no_touch": float(data["no_touch"]),
                }
            )
        prompt = catalog["invalid_response"].render(
            feedback="Your response did not contain the expected json-like text "
            'structure with "touch" and "no_touch" probabilities.'
        )
    return CommonsenseVerdict(
        probabilities={"touch": 0.0, "no_touch": 1.0}, defaulted=True
    )


def touch_enabled(verdict: CommonsenseVerdict) -> bool:
    return verdict.probabilities.get("touch", 0.0) > 0.5


# ---------------------------------------------------------------------------
# End-to-end learning
# ---------------------------------------------------------------------------

@dataclass
class LearnResult:
    meta: MetaProgram
    motif_type: MotifType
    program_entry_id: str
    rewrite_iterations: int
    meta_iterations: int
    budgets: dict[str, Budget] = field(default_factory=dict)


def learn(
    backend: LlmBackend,
    arrangement: Arrangement,
    lib: ProgramLibrary,
    executor: Executor,
    catalog: Optional[PromptCatalog] = None,
    config: Optional[PipelineConfig] = None,
) -> LearnResult:
    """Learn a motif program and meta-program from one annotated arrangement."""
    catalog = catalog or PromptCatalog.load_default()
    config = config or PipelineConfig()
    naive = extract_naive_program(arrangement)

    session = _new_session(catalog, "learn", config)
    observe_arrangement(backend, session, naive, arrangement.description, catalog)
    motif_type = classify_description(
        backend, arrangement.description, catalog, session=session, config=config
    )
    naive = ProgramText(
        source=naive.source,
        motif_type=motif_type,
        description=naive.description,
        provenance="naive",
    )
    rewrite = rewrite_to_motif(
        backend, session, naive, arrangement, executor, catalog, config
    )
    program = rewrite.program
    entry_id = lib.store_motif_program(
        ProgramText(
            source=program.source,
            motif_type=motif_type,
            description=program.description,
            provenance="motif",
            created_from=arrangement.description,
        )
    )
    _save_transcript(session, config)

    programs = lib.list_motif_programs(motif_type)
    prior = lib.fetch_meta_program(motif_type)
    meta_session = _new_session(catalog, "generalize", config)
    generalize = generalize_to_meta(
        backend, meta_session, programs, executor, prior, catalog, config
    )
    lib.store_meta_program(generalize.meta)
    _save_transcript(meta_session, config)

    return LearnResult(
        meta=generalize.meta,
        motif_type=motif_type,
        program_entry_id=entry_id,
        rewrite_iterations=rewrite.iterations,
        meta_iterations=generalize.iterations,
        budgets={"learn": session.budget, "generalize": meta_session.budget},
    )


# ---------------------------------------------------------------------------
# End-to-end generation
# ---------------------------------------------------------------------------

@dataclass
class AssetBinding:
    object_id: str
    asset_id: str
    orientation: list[list[float]]
    score: float


@dataclass
class GenerateResult:
    arrangement: Arrangement
    motif_type: MotifType
    call: str
    touch: bool
    bindings: list[AssetBinding] = field(default_factory=list)
    optimize: Optional[OptimizeResult] = None


def _centered(mesh: TriMesh) -> TriMesh:
    lo, hi = mesh.aabb()
    return TriMesh(mesh.vertices - (lo + hi) / 2.0, mesh.triangles)


def _bind_mesh(
    obj: SceneObject,
    index: Optional[AssetIndex],
    allow_rotation: bool,
    rng_seed: int,
    rescale: bool,
) -> tuple[SceneObject, TriMesh, Optional[AssetBinding]]:
    """Retrieve a mesh for one object, falling back to its bounding box."""
    if index is not None:
        target = 2.0 * obj.half_size
        ranked = rank_assets(index, obj.label, target, allow_rotation=allow_rotation)
        if ranked:
            choice = pick_asset(ranked, rng_seed=rng_seed)
            mesh = load_obj(choice.record.mesh_path)
            mesh = _centered(mesh.transformed(choice.orientation, np.zeros(3)))
            if rescale:
                lo, hi = mesh.aabb()
                extent = np.max(hi - lo)
                if extent > 0:
                    scale = float(np.max(target) / extent)
                    mesh = TriMesh(mesh.vertices * scale, mesh.triangles)
            bound = SceneObject(
                label=obj.label,
                half_size=obj.half_size,
                position=obj.position,
                rotation=obj.rotation,
                id=obj.id,
                asset_id=choice.record.asset_id,
            )
            binding = AssetBinding(
                object_id=obj.id,
                asset_id=choice.record.asset_id,
                orientation=[[float(v) for v in row] for row in choice.orientation],
                score=choice.score,
            )
            return bound, mesh, binding
    return obj, box_mesh(obj.half_size), None


def generate(
    backend: LlmBackend,
    description: str,
    lib: ProgramLibrary,
    executor: Executor,
    assets: Optional[AssetIndex] = None,
    geo_config: Optional[GeoConfig] = None,
    catalog: Optional[PromptCatalog] = None,
    config: Optional[PipelineConfig] = None,
    touch_override: Optional[bool] = None,
) -> GenerateResult:
    """Generate a new arrangement from a text description.

    ``touch_override`` skips the commonsense touch query and forces the
    optimizer's contact mode on or off.
    """
    catalog = catalog or PromptCatalog.load_default()
    config = config or PipelineConfig()
    motif_type = classify_description(backend, description, catalog, config=config)
    meta = lib.fetch_meta_program(motif_type)
    if meta is None:
        raise NoMetaProgramError(
            f"no meta-program learned for motif type {motif_type.value!r}"
        )
    call, trace = synthesize_call(backend, meta, description, executor, catalog, config)

    objects = [
        traced.to_scene_object(object_id=f"obj_{i}")
        for i, traced in enumerate(trace.objects)
    ]
    labels = sorted({o.label for o in objects})
    orientation = (
        ask_orientation_likelihood(backend, description, labels, catalog, config)
        if assets is not None
        else CommonsenseVerdict(probabilities={}, defaulted=True)
    )

    placed = []
    bindings = []
    for i, obj in enumerate(objects):
        bound, mesh, binding = _bind_mesh(
            obj,
            assets,
            allow_rotation=rotation_search_enabled(orientation, obj.label),
            rng_seed=config.rng_seed + i,
            rescale=config.rescale_assets,
        )
        placed.append(PlacedMesh(bound, mesh))
        if binding is not None:
            bindings.append(binding)

    if touch_override is None:
        touch_verdict = ask_touch_likelihood(backend, description, catalog, config)
        touch = touch_enabled(touch_verdict)
    else:
        touch = touch_override
    result = optimize_arrangement(placed, touch, geo_config or GeoConfig())
    arrangement = Arrangement(
        description=description,
        objects=result.objects(),
        motif_type=motif_type.value,
    )
    return GenerateResult(
        arrangement=arrangement,
        motif_type=motif_type,
        call=call,
        touch=touch,
        bindings=bindings,
        optimize=result,
    )
