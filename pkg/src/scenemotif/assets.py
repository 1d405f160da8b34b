"""Asset indexing and retrieval by label and bounding-box dimensions.

The manifest is a JSONL file, one record per line:
``{"asset_id", "label", "wnsynset"?, "full_size": [x, y, z], "mesh_path"}``.
Candidates are ranked by the relative L1 difference between the (optionally
re-oriented) mesh extents and the requested dimensions.
"""

from __future__ import annotations

import itertools
import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import InvalidArgumentError, Mat3, Vec3, as_vec3

logger = logging.getLogger(__name__)

TOP_K = 5


class NoAssetFoundError(LookupError):
    pass


@dataclass(frozen=True)
class AssetRecord:
    asset_id: str
    label: str
    full_size: Vec3  # axis-aligned extents in canonical pose, meters
    mesh_path: Path
    wnsynset: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "full_size", as_vec3(self.full_size))
        object.__setattr__(self, "mesh_path", Path(self.mesh_path))
        if np.any(self.full_size <= 0):
            raise InvalidArgumentError(f"full_size must be positive: {self.full_size}")


@dataclass(frozen=True)
class RankedCandidate:
    record: AssetRecord
    orientation: Mat3  # axis-aligned re-orientation applied to the mesh
    score: float  # relative L1 dimension difference, lower is better


def axis_aligned_rotations() -> list[np.ndarray]:
    """The 24 proper rotations mapping axes onto axes (signed permutations, det +1)."""
    rotations = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((-1, 1), repeat=3):
            m = np.zeros((3, 3))
            for row, (col, sign) in enumerate(zip(perm, signs)):
                m[row, col] = sign
            if np.isclose(np.linalg.det(m), 1.0):
                rotations.append(m)
    assert len(rotations) == 24
    return rotations


_AXIS_ALIGNED_ROTATIONS = axis_aligned_rotations()


@dataclass
class AssetIndex:
    records: list[AssetRecord] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    _by_label: dict[str, list[AssetRecord]] = field(default_factory=dict)
    _by_wnsynset: dict[str, list[AssetRecord]] = field(default_factory=dict)

    def add(self, record: AssetRecord) -> None:
        existing = next((r for r in self.records if r.asset_id == record.asset_id), None)
        if existing is not None:
            self.warnings.append(f"duplicate asset_id {record.asset_id!r}: later row wins")
            self._remove(existing)
        self.records.append(record)
        self._by_label.setdefault(record.label.lower(), []).append(record)
        if record.wnsynset:
            self._by_wnsynset.setdefault(record.wnsynset, []).append(record)

    def _remove(self, record: AssetRecord) -> None:
        self.records.remove(record)
        self._by_label[record.label.lower()].remove(record)
        if record.wnsynset:
            self._by_wnsynset[record.wnsynset].remove(record)

    def lookup(self, label: str, wnsynset: Optional[str] = None) -> list[AssetRecord]:
        """Records for a label; synset matches take precedence when available."""
        if wnsynset and self._by_wnsynset.get(wnsynset):
            return list(self._by_wnsynset[wnsynset])
        return list(self._by_label.get(label.lower(), []))

    def __len__(self) -> int:
        return len(self.records)


def build_index(manifest_path: str | Path) -> AssetIndex:
    """Index all well-formed manifest rows; malformed rows become warnings."""
    path = Path(manifest_path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise IOError(f"cannot read asset manifest {path}: {exc}") from exc

    index = AssetIndex()
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            row = json.loads(line)
            record = AssetRecord(
                asset_id=row["asset_id"],
                label=row["label"],
                full_size=as_vec3(row["full_size"]),
                mesh_path=Path(row["mesh_path"]),
                wnsynset=row.get("wnsynset"),
            )
        except (KeyError, TypeError, ValueError, InvalidArgumentError) as exc:
            index.warnings.append(f"line {lineno}: malformed record ({exc})")
            continue
        mesh_path = record.mesh_path
        if not mesh_path.is_absolute():
            mesh_path = path.parent / mesh_path
        if not mesh_path.exists():
            index.warnings.append(f"line {lineno}: mesh path {mesh_path} not resolvable")
            continue
        record = AssetRecord(
            asset_id=record.asset_id,
            label=record.label,
            full_size=record.full_size,
            mesh_path=mesh_path,
            wnsynset=record.wnsynset,
        )
        index.add(record)
    for warning in index.warnings:
        logger.warning("asset manifest: %s", warning)
    return index


def _oriented_extents(full_size: Vec3, rotation: np.ndarray) -> Vec3:
    # Axis-aligned rotations permute (and sign-flip) the extents.
    return np.abs(rotation) @ full_size


def dimension_score(full_size: Vec3, target_full_size: Vec3) -> float:
    """Relative L1 difference across axes; 0 means an exact match."""
    return float(np.sum(np.abs(full_size - target_full_size) / target_full_size))


def rank_assets(
    index: AssetIndex,
    label: str,
    target_full_size,
    allow_rotation: bool = False,
    wnsynset: Optional[str] = None,
) -> list[RankedCandidate]:
    """Rank all assets of ``label`` by dimension difference to the target.

    With ``allow_rotation`` the score is minimized over the 24 axis-aligned
    re-orientations; otherwise only the canonical pose is considered.
    Ordering is ascending score with ties broken by asset id.
    """
    target = as_vec3(target_full_size)
    if np.any(target <= 0):
        raise InvalidArgumentError("target_full_size must be positive")
    orientations = _AXIS_ALIGNED_ROTATIONS if allow_rotation else [np.eye(3)]
    candidates = []
    for record in index.lookup(label, wnsynset):
        best_score = np.inf
        best_orientation = np.eye(3)
        for rotation in orientations:
            score = dimension_score(_oriented_extents(record.full_size, rotation), target)
            if score < best_score - 1e-12:
                best_score = score
                best_orientation = rotation
        candidates.append(
            RankedCandidate(record=record, orientation=best_orientation, score=float(best_score))
        )
    candidates.sort(key=lambda c: (c.score, c.record.asset_id))
    return candidates


def pick_asset(ranked: list[RankedCandidate], k: int = TOP_K, rng_seed: int = 0) -> RankedCandidate:
    """Uniformly pick one of the top ``min(k, len)`` candidates, seeded."""
    if not ranked:
        raise NoAssetFoundError("no candidate assets to pick from")
    rng = random.Random(rng_seed)
    return ranked[rng.randrange(min(k, len(ranked)))]
