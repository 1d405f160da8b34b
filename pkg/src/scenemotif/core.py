"""Geometric foundation: object poses, axis-aligned bounds, volumetric IoU,
and relative-direction signatures.

Conventions used throughout the package:

- Units are meters, angles are degrees (converted to radians only inside
  trig calls).
- Right-handed, y-up world: +x right, +y up, +z toward the viewer.
- An object's ``position`` is the centroid of its bounding box.
- ``rotate`` composes by post-multiplication, i.e. rotation happens about
  the object's *current local* axis and about its centroid.
"""

from __future__ import annotations

import json
import math
import uuid
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

Vec3 = np.ndarray  # shape (3,), float64
Mat3 = np.ndarray  # shape (3, 3), float64, row-major

AXES = ("x", "y", "z")

# Default dead zone for relative-direction signatures: below typical
# placement jitter, above float noise.
DIRECTION_DEAD_ZONE = 0.005

ORTHONORMAL_TOL = 1e-6


class InvalidArgumentError(ValueError):
    """Raised when an operation receives arguments that violate its contract."""


def vec3(x: float, y: float, z: float) -> Vec3:
    v = np.array([x, y, z], dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise InvalidArgumentError(f"non-finite vector components: {v}")
    return v


def as_vec3(value: Sequence[float]) -> Vec3:
    v = np.asarray(value, dtype=np.float64)
    if v.shape != (3,):
        raise InvalidArgumentError(f"expected 3 components, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidArgumentError(f"non-finite vector components: {v}")
    return v


def identity_rotation() -> Mat3:
    return np.eye(3, dtype=np.float64)


def rotation_about_axis(axis: str, angle_deg: float) -> Mat3:
    """Rotation matrix for a right-handed rotation about a principal axis."""
    if axis not in AXES:
        raise InvalidArgumentError(f"axis must be one of {AXES}, got {axis!r}")
    a = math.radians(float(angle_deg))
    c, s = math.cos(a), math.sin(a)
    if axis == "x":
        m = [[1, 0, 0], [0, c, -s], [0, s, c]]
    elif axis == "y":
        m = [[c, 0, s], [0, 1, 0], [-s, 0, c]]
    else:
        m = [[c, -s, 0], [s, c, 0], [0, 0, 1]]
    return np.array(m, dtype=np.float64)


def is_orthonormal(m: Mat3, tol: float = ORTHONORMAL_TOL) -> bool:
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3):
        return False
    if np.linalg.norm(m.T @ m - np.eye(3)) > tol:
        return False
    return abs(np.linalg.det(m) - 1.0) <= tol


def orthonormalize(m: Mat3) -> Mat3:
    """Project a near-rotation matrix back onto SO(3) via SVD."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=np.float64))
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] *= -1
        r = u @ vt
    return r


@dataclass(frozen=True)
class SceneObject:
    """An oriented box-modeled object.

    ``half_size`` holds per-local-axis half extents; ``position`` is the
    world-space centroid of the bounding box.
    """

    label: str
    half_size: Vec3
    position: Vec3
    rotation: Mat3
    id: str = field(default_factory=lambda: uuid.uuid4().hex[:12])
    asset_id: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "half_size", as_vec3(self.half_size))
        object.__setattr__(self, "position", as_vec3(self.position))
        rot = np.asarray(self.rotation, dtype=np.float64)
        if rot.shape != (3, 3):
            raise InvalidArgumentError(f"rotation must be 3x3, got {rot.shape}")
        object.__setattr__(self, "rotation", rot)
        if np.any(self.half_size <= 0):
            raise InvalidArgumentError(f"half_size must be positive: {self.half_size}")
        if not is_orthonormal(self.rotation):
            raise InvalidArgumentError("rotation matrix is not orthonormal")

    @staticmethod
    def create(label: str, half_size: Sequence[float], object_id: Optional[str] = None) -> "SceneObject":
        """Instantiate an object at the scene origin with identity rotation."""
        kwargs = {} if object_id is None else {"id": object_id}
        return SceneObject(
            label=label,
            half_size=as_vec3(half_size),
            position=np.zeros(3),
            rotation=identity_rotation(),
            **kwargs,
        )


def apply_move(obj: SceneObject, target: Sequence[float]) -> SceneObject:
    """Return a copy of ``obj`` with its centroid placed at ``target``."""
    return replace(obj, position=as_vec3(target))


def apply_rotate(obj: SceneObject, axis: str, angle_deg: float) -> SceneObject:
    """Rotate ``obj`` about its current local ``axis`` by ``angle_deg`` degrees.

    Composition is by post-multiplication, so the rotation axis is
    interpreted in the object's local frame and the pivot is the centroid.
    Position and half extents are unchanged.
    """
    rot = obj.rotation @ rotation_about_axis(axis, angle_deg)
    if not is_orthonormal(rot):
        rot = orthonormalize(rot)
    return replace(obj, rotation=rot)


@dataclass(frozen=True)
class Aabb:
    min: Vec3
    max: Vec3

    def __post_init__(self):
        object.__setattr__(self, "min", as_vec3(self.min))
        object.__setattr__(self, "max", as_vec3(self.max))
        if np.any(self.min > self.max):
            raise InvalidArgumentError(f"aabb min {self.min} exceeds max {self.max}")

    @property
    def size(self) -> Vec3:
        return self.max - self.min

    @property
    def volume(self) -> float:
        return float(np.prod(self.size))

    @property
    def center(self) -> Vec3:
        return (self.min + self.max) / 2.0


_CORNER_SIGNS = np.array(
    [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
    dtype=np.float64,
)


def box_corners(obj: SceneObject) -> np.ndarray:
    """World-space coordinates of the 8 local-box corners, shape (8, 3)."""
    local = _CORNER_SIGNS * obj.half_size
    return local @ obj.rotation.T + obj.position


def world_aabb(obj: SceneObject) -> Aabb:
    """Tight axis-aligned hull of the object's rotated local box."""
    corners = box_corners(obj)
    return Aabb(min=corners.min(axis=0), max=corners.max(axis=0))


def aabb_intersection_volume(a: Aabb, b: Aabb) -> float:
    overlap = np.minimum(a.max, b.max) - np.maximum(a.min, b.min)
    if np.any(overlap <= 0):
        return 0.0
    return float(np.prod(overlap))


def aabb_iou(a: Aabb, b: Aabb) -> float:
    """Volumetric intersection-over-union of two axis-aligned boxes.

    Degenerate (zero-volume) boxes score 0 unless the boxes are identical,
    in which case the result is 1.
    """
    if np.array_equal(a.min, b.min) and np.array_equal(a.max, b.max):
        return 1.0
    inter = aabb_intersection_volume(a, b)
    union = a.volume + b.volume - inter
    if union <= 0.0:
        return 0.0
    return inter / union


@dataclass(frozen=True)
class DirectionSignature:
    sx: int
    sy: int
    sz: int

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.sx, self.sy, self.sz)

    def __neg__(self) -> "DirectionSignature":
        return DirectionSignature(-self.sx, -self.sy, -self.sz)


def relative_direction(
    a: SceneObject, b: SceneObject, dead_zone: float = DIRECTION_DEAD_ZONE
) -> DirectionSignature:
    """Per-axis sign of ``b.position - a.position`` with a dead zone.

    Components whose absolute displacement is within ``dead_zone`` map to 0.
    """
    if dead_zone < 0:
        raise InvalidArgumentError("dead_zone must be non-negative")
    delta = b.position - a.position
    signs = [0 if abs(d) <= dead_zone else (1 if d > 0 else -1) for d in delta]
    return DirectionSignature(*signs)


@dataclass
class Arrangement:
    """A described set of labeled, posed objects."""

    description: str
    objects: list[SceneObject]
    motif_type: Optional[str] = None

    def __post_init__(self):
        ids = [o.id for o in self.objects]
        if len(ids) != len(set(ids)):
            raise InvalidArgumentError("object ids must be unique within an arrangement")

    def labels(self) -> list[str]:
        return [o.label for o in self.objects]


# ---------------------------------------------------------------------------
# Canonical arrangement file format (JSON)
# ---------------------------------------------------------------------------

def object_to_dict(obj: SceneObject) -> dict:
    return {
        "id": obj.id,
        "label": obj.label,
        "half_size": [float(v) for v in obj.half_size],
        "position": [float(v) for v in obj.position],
        "rotation": [float(v) for v in obj.rotation.reshape(9)],
        **({"asset_id": obj.asset_id} if obj.asset_id else {}),
    }


def object_from_dict(d: dict) -> SceneObject:
    rotation = np.asarray(d["rotation"], dtype=np.float64).reshape(3, 3)
    return SceneObject(
        id=d["id"],
        label=d["label"],
        half_size=as_vec3(d["half_size"]),
        position=as_vec3(d["position"]),
        rotation=rotation,
        asset_id=d.get("asset_id"),
    )


def arrangement_to_dict(arr: Arrangement) -> dict:
    return {
        "description": arr.description,
        "motif_type": arr.motif_type,
        "objects": [object_to_dict(o) for o in arr.objects],
    }


def arrangement_from_dict(d: dict) -> Arrangement:
    return Arrangement(
        description=d["description"],
        motif_type=d.get("motif_type"),
        objects=[object_from_dict(o) for o in d["objects"]],
    )


def save_arrangement(arr: Arrangement, path: str | Path) -> None:
    Path(path).write_text(json.dumps(arrangement_to_dict(arr), indent=2) + "\n")


def load_arrangement(path: str | Path) -> Arrangement:
    return arrangement_from_dict(json.loads(Path(path).read_text()))
