"""Motif program and meta-program model, plus the on-disk program library.

Programs are plain Python-based DSL source text built from three constructs
(``create``, ``move``, ``rotate``).  A naive program recreates an arrangement
statement by statement; a motif program expresses the same arrangement with
loops and arithmetic; a meta-program is a parameterized function generalizing
one or more motif programs of the same type.
"""

from __future__ import annotations

import json
import math
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from filelock import FileLock
from scipy.spatial.transform import Rotation as ScipyRotation

from .core import Arrangement, InvalidArgumentError

MOTIF_KINDS = (
    "stack",
    "pile",
    "row",
    "grid",
    "left_of",
    "in_front_of",
    "on_top",
    "surround",
    "wall_vertical_column",
    "wall_horizontal_row",
    "wall_grid",
    "rectangular_perimeter",
    "letter",
)

# Decimal precision for numbers rendered into program text.  Fixed so that
# identical arrangements always produce byte-identical source.
NUM_DECIMALS = 5


@dataclass(frozen=True)
class MotifType:
    kind: str
    letter: Optional[str] = None

    def __post_init__(self):
        if self.kind not in MOTIF_KINDS:
            raise InvalidArgumentError(f"unknown motif kind: {self.kind!r}")
        if (self.kind == "letter") != (self.letter is not None):
            raise InvalidArgumentError("letter is required exactly when kind is 'letter'")
        if self.letter is not None and not re.fullmatch(r"[A-Z]", self.letter):
            raise InvalidArgumentError(f"letter must be a single uppercase character: {self.letter!r}")

    @property
    def value(self) -> str:
        """Storage key, e.g. ``stack`` or ``letter_A``."""
        if self.kind == "letter":
            return f"letter_{self.letter}"
        return self.kind

    @staticmethod
    def parse(text: str) -> "MotifType":
        token = text.strip().strip(".").lower()
        m = re.fullmatch(r"letter[_ ]?([a-z])", token)
        if m:
            return MotifType("letter", m.group(1).upper())
        if token in MOTIF_KINDS and token != "letter":
            return MotifType(token)
        raise InvalidArgumentError(f"cannot parse motif type from {text!r}")

    def __str__(self) -> str:
        return self.value


@dataclass
class ProgramText:
    """Source text of a naive or motif DSL program."""

    source: str
    motif_type: MotifType
    description: str
    provenance: str  # "naive" | "motif"
    created_from: Optional[str] = None

    def __post_init__(self):
        if not self.source.strip():
            raise InvalidArgumentError("program source must be non-empty")
        if self.provenance not in ("naive", "motif"):
            raise InvalidArgumentError(f"bad provenance: {self.provenance!r}")


@dataclass
class MetaProgram:
    """A generalized, documented motif function plus its recreate calls."""

    source: str
    function_name: str
    motif_type: MotifType
    example_calls: list[str] = field(default_factory=list)
    validated_against: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.source.strip():
            raise InvalidArgumentError("meta-program source must be non-empty")


def function_name_of(source: str) -> str:
    """Name of the single top-level function defined in meta-program source."""
    names = re.findall(r"^def\s+([A-Za-z_]\w*)\s*\(", source, flags=re.MULTILINE)
    if len(names) != 1:
        raise InvalidArgumentError(
            f"meta-program must define exactly one top-level function, found {names}"
        )
    return names[0]


# ---------------------------------------------------------------------------
# Naive program extraction
# ---------------------------------------------------------------------------

def format_number(value: float) -> str:
    """Render a number rounded to 5 decimals without trailing zeros.

    A tiny negative value rounds to ``-0.0`` so extracted programs keep the
    sign the source data carried.
    """
    r = round(float(value), NUM_DECIMALS)
    if r == 0.0 and math.copysign(1.0, value) < 0:
        return "-0.0"
    return repr(r)


def format_vector(values) -> str:
    return "[" + ", ".join(format_number(v) for v in values) + "]"


def _euler_zyx_degrees(rotation: np.ndarray) -> tuple[float, float, float]:
    """Intrinsic z-y-x Euler angles (degrees) with R = Rz @ Ry @ Rx."""
    with warnings.catch_warnings():
        # Gimbal lock only collapses a redundant degree of freedom here;
        # any valid decomposition reproduces the same rotation.
        warnings.simplefilter("ignore", UserWarning)
        angles = ScipyRotation.from_matrix(rotation).as_euler("ZYX", degrees=True)
    return float(angles[0]), float(angles[1]), float(angles[2])


def extract_naive_program(arrangement: Arrangement) -> ProgramText:
    """Deterministically write a flat DSL program recreating ``arrangement``.

    Per object: a half-size binding, a centroid binding, a ``create``, a
    ``move``, and (when the rotation is not the identity) ``rotate`` calls
    decomposed into local-axis rotations.  Objects are emitted in input
    order and numbers are rendered at fixed precision, so identical
    arrangements yield byte-identical source.
    """
    if not arrangement.objects:
        raise InvalidArgumentError("cannot extract a program from an empty arrangement")

    lines = [
        f"# Description: {arrangement.description}",
        "# Naive program extracted from input arrangement",
        "objs = []",
    ]
    for i, obj in enumerate(arrangement.objects, start=1):
        name = f"obj_{i}"
        lines.append(f"{name}_half_size = {format_vector(obj.half_size)}")
        lines.append(f"{name}_centroid = {format_vector(obj.position)}")
        lines.append(f"{name} = create('{obj.label}', {name}_half_size)")
        lines.append(
            f"move({name}, {name}_centroid[0], {name}_centroid[1], {name}_centroid[2])"
        )
        if not np.allclose(obj.rotation, np.eye(3), atol=1e-9):
            z, y, x = _euler_zyx_degrees(obj.rotation)
            for axis, angle in (("z", z), ("y", y), ("x", x)):
                if abs(round(angle, NUM_DECIMALS)) > 0.0:
                    lines.append(f"rotate({name}, '{axis}', {format_number(angle)})")
        lines.append(f"objs.append({name})")

    motif_type = (
        MotifType.parse(arrangement.motif_type) if arrangement.motif_type else MotifType("row")
    )
    return ProgramText(
        source="\n".join(lines) + "\n",
        motif_type=motif_type,
        description=arrangement.description,
        provenance="naive",
    )


# ---------------------------------------------------------------------------
# Program library
# ---------------------------------------------------------------------------

class LibraryError(OSError):
    """Raised when the program library cannot be read or written."""


class ProgramLibrary:
    """Directory-backed library of motif programs and meta-programs.

    Layout: one directory per motif type containing numbered program files
    (``program_001.py``, ...), a single ``meta.py``, and a ``manifest.json``
    with descriptions and ordering.  Writes take an advisory lock on the
    library root; program values are immutable once stored.
    """

    MANIFEST = "manifest.json"

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = FileLock(str(self.root / ".library.lock"))

    def _type_dir(self, motif_type: MotifType) -> Path:
        return self.root / motif_type.value

    def _load_manifest(self, motif_type: MotifType) -> dict:
        path = self._type_dir(motif_type) / self.MANIFEST
        if not path.exists():
            return {"motif_type": motif_type.value, "programs": [], "meta": None}
        try:
            return json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise LibraryError(f"cannot read manifest {path}: {exc}") from exc

    def _save_manifest(self, motif_type: MotifType, manifest: dict) -> None:
        path = self._type_dir(motif_type) / self.MANIFEST
        path.write_text(json.dumps(manifest, indent=2) + "\n")

    def store_motif_program(self, program: ProgramText) -> str:
        """Append a validated motif program under its motif type; returns the entry id."""
        if program.provenance != "motif":
            raise InvalidArgumentError("only motif programs are stored in the program library")
        with self._lock:
            tdir = self._type_dir(program.motif_type)
            tdir.mkdir(parents=True, exist_ok=True)
            manifest = self._load_manifest(program.motif_type)
            entry_id = f"program_{len(manifest['programs']) + 1:03d}"
            try:
                (tdir / f"{entry_id}.py").write_text(program.source)
            except OSError as exc:
                raise LibraryError(f"cannot store program: {exc}") from exc
            manifest["programs"].append(
                {
                    "id": entry_id,
                    "file": f"{entry_id}.py",
                    "description": program.description,
                    "created_from": program.created_from,
                }
            )
            self._save_manifest(program.motif_type, manifest)
        return entry_id

    def list_motif_programs(self, motif_type: MotifType) -> list[ProgramText]:
        """All stored programs of ``motif_type`` in insertion order."""
        manifest = self._load_manifest(motif_type)
        tdir = self._type_dir(motif_type)
        programs = []
        for entry in manifest["programs"]:
            source = (tdir / entry["file"]).read_text()
            programs.append(
                ProgramText(
                    source=source,
                    motif_type=motif_type,
                    description=entry.get("description", ""),
                    provenance="motif",
                    created_from=entry.get("created_from"),
                )
            )
        return programs

    def store_meta_program(self, meta: MetaProgram) -> None:
        """Store ``meta``, replacing any prior meta-program of the same type."""
        with self._lock:
            tdir = self._type_dir(meta.motif_type)
            tdir.mkdir(parents=True, exist_ok=True)
            manifest = self._load_manifest(meta.motif_type)
            try:
                (tdir / "meta.py").write_text(meta.source)
            except OSError as exc:
                raise LibraryError(f"cannot store meta-program: {exc}") from exc
            manifest["meta"] = {
                "file": "meta.py",
                "function_name": meta.function_name,
                "example_calls": meta.example_calls,
                "validated_against": meta.validated_against,
            }
            self._save_manifest(meta.motif_type, manifest)

    def fetch_meta_program(self, motif_type: MotifType) -> Optional[MetaProgram]:
        """The stored meta-program for ``motif_type``, or ``None`` when absent."""
        manifest = self._load_manifest(motif_type)
        if not manifest.get("meta"):
            return None
        entry = manifest["meta"]
        source = (self._type_dir(motif_type) / entry["file"]).read_text()
        return MetaProgram(
            source=source,
            function_name=entry["function_name"],
            motif_type=motif_type,
            example_calls=list(entry.get("example_calls", [])),
            validated_against=list(entry.get("validated_against", [])),
        )
