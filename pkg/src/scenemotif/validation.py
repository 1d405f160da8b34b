"""Mechanical checks of rewritten motif programs and meta-programs.

Motif programs are compared against their source arrangement (object
counts, placements, extents/orientation); meta-program recreate calls are
compared against the motif-program traces they should reproduce (counts
plus pairwise relative directions).  Every failed criterion carries
feedback text with concrete expected/actual values, ready to be injected
into an LLM refinement prompt.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import (
    DIRECTION_DEAD_ZONE,
    Arrangement,
    SceneObject,
    aabb_iou,
    relative_direction,
    world_aabb,
)
from .execution import ObjectTrace
from .programs import format_number, format_vector

# Per-object AABB IoU threshold: tolerant to sub-millimeter formatting
# noise, strict against displacements comparable to object extent.
OBJECT_IOU_THRESHOLD = 0.9

# Componentwise relative tolerance for half-extent comparison.
HALF_SIZE_RTOL = 1e-3


class InvalidStateError(RuntimeError):
    """A check was invoked before its prerequisite criterion passed."""


@dataclass
class CriterionResult:
    criterion: str
    passed: bool
    feedback: str = ""
    details: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if not self.passed and not self.feedback:
            raise ValueError("failed criteria must carry feedback")


@dataclass
class ValidationReport:
    target: str  # "motif" | "meta"
    results: list[CriterionResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def failing(self) -> list[CriterionResult]:
        return [r for r in self.results if not r.passed]

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "passed": self.passed,
            "results": [
                {
                    "criterion": r.criterion,
                    "passed": r.passed,
                    "feedback": r.feedback,
                    "details": r.details,
                }
                for r in self.results
            ],
        }


def _fmt_point(values) -> str:
    return "(" + ", ".join(format_number(v) for v in values) + ")"


def check_counts(trace: ObjectTrace, reference: Arrangement | ObjectTrace) -> CriterionResult:
    """Criterion: same number of objects per label."""
    actual = Counter(trace.labels())
    expected = Counter(reference.labels())
    if actual == expected:
        return CriterionResult(criterion="counts", passed=True)
    lines = []
    details = []
    for label in sorted(set(actual) | set(expected)):
        if actual[label] != expected[label]:
            lines.append(f"{label}: expected {expected[label]}, got {actual[label]}")
            details.append({"label": label, "expected": expected[label], "actual": actual[label]})
    return CriterionResult(
        criterion="counts",
        passed=False,
        feedback="Object counts differ per label: " + "; ".join(lines),
        details=details,
    )


def pair_objects(
    trace_objects: Sequence[SceneObject], reference_objects: Sequence[SceneObject]
) -> list[tuple[SceneObject, SceneObject]]:
    """Pair trace and reference objects per label by minimum-cost centroid assignment.

    Rewritten programs need not preserve object order, so pairing is an
    assignment problem per label rather than index matching.
    """
    by_label_trace: dict[str, list[SceneObject]] = {}
    by_label_ref: dict[str, list[SceneObject]] = {}
    for o in trace_objects:
        by_label_trace.setdefault(o.label, []).append(o)
    for o in reference_objects:
        by_label_ref.setdefault(o.label, []).append(o)
    if {k: len(v) for k, v in by_label_trace.items()} != {
        k: len(v) for k, v in by_label_ref.items()
    }:
        raise InvalidStateError("cannot pair objects with mismatched per-label counts")

    pairs: list[tuple[SceneObject, SceneObject]] = []
    for label, refs in by_label_ref.items():
        traced = by_label_trace[label]
        cost = np.array(
            [[np.linalg.norm(t.position - r.position) for r in refs] for t in traced]
        )
        rows, cols = linear_sum_assignment(cost)
        for ti, ri in zip(rows, cols):
            pairs.append((traced[ti], refs[ri]))
    return pairs


def check_placements(
    trace: ObjectTrace,
    reference: Arrangement,
    iou_threshold: float = OBJECT_IOU_THRESHOLD,
) -> CriterionResult:
    """Criterion: objects placed at the same locations.

    Requires the counts criterion to have passed.  Each paired object's
    world-AABB IoU against its reference must reach ``iou_threshold``.
    """
    pairs = pair_objects(trace.scene_objects(), reference.objects)
    failures = []
    details = []
    for traced, ref in pairs:
        iou = aabb_iou(world_aabb(traced), world_aabb(ref))
        details.append(
            {
                "label": ref.label,
                "actual_centroid": [float(v) for v in traced.position],
                "expected_centroid": [float(v) for v in ref.position],
                "iou": iou,
            }
        )
        if iou < iou_threshold:
            failures.append(
                f"object '{ref.label}' placed at {_fmt_point(traced.position)}, "
                f"expected {_fmt_point(ref.position)}"
            )
    if not failures:
        return CriterionResult(criterion="placements", passed=True, details=details)
    return CriterionResult(
        criterion="placements",
        passed=False,
        feedback="Incorrectly placed objects: " + "; ".join(failures),
        details=details,
    )


def check_extents(
    trace: ObjectTrace,
    reference: Arrangement,
    iou_threshold: float = OBJECT_IOU_THRESHOLD,
) -> CriterionResult:
    """Criterion: objects scaled and oriented the same.

    Half extents must match componentwise within a relative tolerance, and
    the world-AABB IoU acts as the orientation proxy (a rotation of an
    anisotropic object changes its world AABB).
    """
    pairs = pair_objects(trace.scene_objects(), reference.objects)
    failures = []
    details = []
    for traced, ref in pairs:
        size_ok = np.allclose(traced.half_size, ref.half_size, rtol=HALF_SIZE_RTOL, atol=0.0)
        # Cancel the centroid difference so this criterion sees only size
        # and orientation; misplacement is the placement criterion's job.
        recentered = replace(traced, position=ref.position)
        iou = aabb_iou(world_aabb(recentered), world_aabb(ref))
        details.append(
            {
                "label": ref.label,
                "actual_half_size": [float(v) for v in traced.half_size],
                "expected_half_size": [float(v) for v in ref.half_size],
                "iou": iou,
            }
        )
        if not size_ok:
            failures.append(
                f"object '{ref.label}' has half size {format_vector(traced.half_size)}, "
                f"expected {format_vector(ref.half_size)}"
            )
        elif iou < iou_threshold:
            failures.append(
                f"object '{ref.label}' is oriented differently "
                f"(bounding-box overlap {iou:.3f} below {iou_threshold})"
            )
    if not failures:
        return CriterionResult(criterion="extents", passed=True, details=details)
    return CriterionResult(
        criterion="extents",
        passed=False,
        feedback="Incorrectly sized or oriented objects: " + "; ".join(failures),
        details=details,
    )


def _sorted_by_label(objects: list[SceneObject]) -> list[SceneObject]:
    return [o for _, o in sorted(enumerate(objects), key=lambda t: (t[1].label, t[0]))]


def check_pairwise_directions(
    trace: ObjectTrace,
    reference_trace: ObjectTrace,
    dead_zone: float = DIRECTION_DEAD_ZONE,
) -> CriterionResult:
    """Criterion: relative directions between all ordered object pairs match.

    Objects are matched by index after a stable label-wise sort of each
    trace.  Requires equal object counts.
    """
    a_objs = _sorted_by_label(trace.scene_objects())
    b_objs = _sorted_by_label(reference_trace.scene_objects())
    if len(a_objs) != len(b_objs):
        raise InvalidStateError("pairwise direction check requires equal object counts")
    failures = []
    details = []
    n = len(a_objs)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            got = relative_direction(a_objs[i], a_objs[j], dead_zone).as_tuple()
            want = relative_direction(b_objs[i], b_objs[j], dead_zone).as_tuple()
            if got != want:
                failures.append(f"pair ({i}, {j}): got {got}, expected {want}")
                details.append({"pair": [i, j], "actual": list(got), "expected": list(want)})
    if not failures:
        return CriterionResult(criterion="pairwise_directions", passed=True)
    return CriterionResult(
        criterion="pairwise_directions",
        passed=False,
        feedback="Relative directions between object pairs differ: " + "; ".join(failures),
        details=details,
    )


def validate_motif_program(
    trace: ObjectTrace,
    reference: Arrangement,
    hardcode_judgment: CriterionResult,
    iou_threshold: float = OBJECT_IOU_THRESHOLD,
) -> ValidationReport:
    """Aggregate the mechanical motif-program criteria into one report.

    ``hardcode_judgment`` is the LLM-adjudicated no-hardcoded-attributes
    criterion produced upstream; the executor's syntax gate runs before any
    trace exists.  Placement and extent checks require matching counts and
    are reported as blocked when counts differ, so feedback stays complete.
    """
    results = [hardcode_judgment]
    counts = check_counts(trace, reference)
    results.append(counts)
    if counts.passed:
        results.append(check_placements(trace, reference, iou_threshold))
        results.append(check_extents(trace, reference, iou_threshold))
    else:
        blocked = "Not evaluated: object counts differ from the original program."
        results.append(CriterionResult("placements", False, blocked))
        results.append(CriterionResult("extents", False, blocked))
    return ValidationReport(target="motif", results=results)


def validate_meta_program(
    call_traces: list[ObjectTrace],
    motif_traces: list[ObjectTrace],
    dead_zone: float = DIRECTION_DEAD_ZONE,
) -> ValidationReport:
    """Check meta-program recreate calls against their motif-program traces.

    Lists are aligned one-to-one (one call per motif program); feedback is
    indexed by the example-program ordinal.
    """
    if len(call_traces) != len(motif_traces):
        raise ValueError(
            f"expected one call per motif program, got {len(call_traces)} calls "
            f"for {len(motif_traces)} programs"
        )
    results = []
    for ordinal, (call_trace, motif_trace) in enumerate(zip(call_traces, motif_traces), start=1):
        counts = check_counts(call_trace, motif_trace)
        if not counts.passed:
            results.append(
                CriterionResult(
                    criterion=f"example_{ordinal}_counts",
                    passed=False,
                    feedback=f"Example program {ordinal}: {counts.feedback}",
                    details=counts.details,
                )
            )
            results.append(
                CriterionResult(
                    criterion=f"example_{ordinal}_pairwise_directions",
                    passed=False,
                    feedback=f"Example program {ordinal}: not evaluated, object counts differ.",
                )
            )
            continue
        results.append(CriterionResult(criterion=f"example_{ordinal}_counts", passed=True))
        directions = check_pairwise_directions(call_trace, motif_trace, dead_zone)
        results.append(
            CriterionResult(
                criterion=f"example_{ordinal}_pairwise_directions",
                passed=directions.passed,
                feedback=(
                    "" if directions.passed else f"Example program {ordinal}: {directions.feedback}"
                ),
                details=directions.details,
            )
        )
    return ValidationReport(target="meta", results=results)
