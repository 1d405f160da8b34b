"""Geometry-aware placement optimization.

Turns an executed motif (abstract boxes bound to retrieved meshes) into a
physically plausible arrangement: resolve interpenetration, optionally
close gaps to contact via damped ray casting, and enforce support against
other objects or the ground plane.  Objects are settled one at a time in
order; previously settled poses never move.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .core import SceneObject, as_vec3
from .mesh import TriMesh, meshes_intersect, sample_surface

EPS = 1e-12


@dataclass
class GeoConfig:
    contact_eps: float = 0.002  # meters; gap below this counts as contact
    margin: float = 0.002  # meters; separation added when resolving overlap
    max_contact_iters: int = 10
    n_surface_rays: int = 64
    n_support_rays: int = 16
    ground_y: float = 0.0
    max_resolve_steps: int = 32


class OptimizationFailedError(RuntimeError):
    pass


class PlacedMesh:
    """A scene object bound to a triangle mesh, posed in world space."""

    def __init__(self, obj: SceneObject, mesh: TriMesh):
        self.obj = obj
        self.mesh = mesh
        self._world: Optional[TriMesh] = None

    @property
    def world(self) -> TriMesh:
        if self._world is None:
            self._world = self.mesh.transformed(self.obj.rotation, self.obj.position)
        return self._world

    @property
    def centroid(self) -> np.ndarray:
        return self.obj.position

    def translated(self, delta) -> "PlacedMesh":
        delta = as_vec3(delta)
        moved = replace(self.obj, position=self.obj.position + delta)
        return PlacedMesh(moved, self.mesh)


def ray_mesh_intersect(origin, direction, targets: Sequence[PlacedMesh]) -> Optional[float]:
    """Nearest hit distance of one ray against a set of placed meshes."""
    origin = as_vec3(origin)
    direction = as_vec3(direction)
    best = np.inf
    for target in targets:
        best = min(best, target.world.bvh.raycast(origin, direction))
    return None if np.isinf(best) else float(best)


def _interval_on_axis(mesh: TriMesh, direction: np.ndarray) -> tuple[float, float]:
    projections = mesh.vertices @ direction
    return float(projections.min()), float(projections.max())


def mesh_penetration(a: PlacedMesh, b: PlacedMesh) -> Optional[dict]:
    """Penetration of ``a`` into ``b``: separation direction and depth.

    Direction points from ``b``'s centroid toward ``a``'s (the way ``a``
    must move to separate); depth is the overlap of the two meshes'
    projections onto that direction.  Exactness is not required: the
    resolve loop re-tests triangles after every step.
    """
    if not meshes_intersect(a.world, b.world):
        return None
    direction = a.centroid - b.centroid
    norm = np.linalg.norm(direction)
    if norm < EPS:
        direction = np.array([0.0, 1.0, 0.0])  # coincident centroids: push up
    else:
        direction = direction / norm
    a_lo, a_hi = _interval_on_axis(a.world, direction)
    b_lo, b_hi = _interval_on_axis(b.world, direction)
    depth = min(a_hi, b_hi) - max(a_lo, b_lo)
    return {"depth": max(float(depth), 0.0), "direction": direction}


def resolve_intersection(
    moving: PlacedMesh, fixed: Sequence[PlacedMesh], cfg: GeoConfig
) -> PlacedMesh:
    """Translate ``moving`` until it penetrates none of the fixed meshes."""
    for _ in range(cfg.max_resolve_steps):
        hit = None
        for other in fixed:
            hit = mesh_penetration(moving, other)
            if hit is not None:
                break
        if hit is None:
            return moving
        moving = moving.translated(hit["direction"] * (hit["depth"] + cfg.margin))
    raise OptimizationFailedError(
        f"could not separate object {moving.obj.id!r} within {cfg.max_resolve_steps} steps"
    )


def _facing_samples(moving: PlacedMesh, direction: np.ndarray, n: int):
    points, normals = sample_surface(moving.world, n)
    keep = normals @ direction > EPS
    return points[keep]


def approach_until_contact(
    moving: PlacedMesh, neighbor: PlacedMesh, cfg: GeoConfig
) -> PlacedMesh:
    """Move ``moving`` toward ``neighbor`` until the surfaces nearly touch.

    Rays start at surface samples facing the neighbor and travel along the
    centroid-to-centroid direction; each step advances by the minimum hit
    distance damped harmonically, so steps shrink as contact nears.  A
    final separation pass undoes any overshoot.
    """
    for k in range(cfg.max_contact_iters):
        direction = neighbor.centroid - moving.centroid
        norm = np.linalg.norm(direction)
        if norm < EPS:
            break
        direction = direction / norm
        origins = _facing_samples(moving, direction, cfg.n_surface_rays)
        if not len(origins):
            break
        # Back the ray origins off the surface: a ray starting exactly on a
        # touching face would skim through it and report the far side.
        back = cfg.contact_eps
        hits = [
            neighbor.world.bvh.raycast(origin - direction * back, direction)
            for origin in origins
        ]
        d = min(hits) - back
        if np.isinf(d) or d <= cfg.contact_eps:
            break
        moving = moving.translated(direction * (d / (1 + k)))
    if meshes_intersect(moving.world, neighbor.world):
        moving = resolve_intersection(moving, [neighbor], cfg)
    return moving


def settle_support(
    moving: PlacedMesh, others: Sequence[PlacedMesh], cfg: GeoConfig
) -> PlacedMesh:
    """Drop ``moving`` onto whatever lies below it, or onto the ground."""
    down = np.array([0.0, -1.0, 0.0])
    points, normals = sample_surface(moving.world, cfg.n_surface_rays)
    facing = normals[:, 1] < -EPS
    origins = points[facing]
    if not len(origins):
        origins = points
    # Restrict to the lowest samples: support comes from the underside.
    order = np.argsort(origins[:, 1], kind="stable")
    origins = origins[order[: cfg.n_support_rays]]

    gaps = [origin[1] - cfg.ground_y for origin in origins]
    lowest_vertex = float(moving.world.vertices[:, 1].min())
    gaps.append(lowest_vertex - cfg.ground_y)
    if others:
        # Back the origins off the underside so rays from a surface already
        # in contact report the supporting face instead of skimming past it.
        back = cfg.contact_eps
        up = np.array([0.0, back, 0.0])
        for origin in origins:
            hit = ray_mesh_intersect(origin + up, down, others)
            if hit is not None:
                gaps.append(hit - back)
    drop = min(gaps)
    if drop <= cfg.contact_eps:
        return moving
    candidate = moving.translated(down * drop)
    # The support rays can miss a narrow sliver of an object below; if the
    # landing penetrates anything, bisect the drop back to contact.  The
    # undropped pose is collision-free (separation ran before settling).
    if others and any(meshes_intersect(candidate.world, o.world) for o in others):
        free, hit = 0.0, drop
        for _ in range(24):
            mid = (free + hit) / 2
            trial = moving.translated(down * mid)
            if any(meshes_intersect(trial.world, o.world) for o in others):
                hit = mid
            else:
                free = mid
        candidate = moving.translated(down * free)
    return candidate


@dataclass
class OptimizeResult:
    placed: list[PlacedMesh]
    failures: list[dict] = field(default_factory=list)

    @property
    def succeeded(self) -> bool:
        return not self.failures

    def objects(self) -> list[SceneObject]:
        return [p.obj for p in self.placed]


def optimize_arrangement(
    placed: Sequence[PlacedMesh], touch: bool, cfg: Optional[GeoConfig] = None
) -> OptimizeResult:
    """Settle objects one at a time against everything settled before them.

    The first object is only dropped to support.  Each later object is
    separated from the settled set, optionally pulled to contact with its
    nearest settled neighbor, then dropped to support.  Failures are
    recorded per object and the partial result is still returned.
    """
    cfg = cfg or GeoConfig()
    settled: list[PlacedMesh] = []
    failures: list[dict] = []
    for current in placed:
        try:
            if settled:
                current = resolve_intersection(current, settled, cfg)
                if touch:
                    nearest = min(
                        settled,
                        key=lambda p: float(np.linalg.norm(p.centroid - current.centroid)),
                    )
                    current = approach_until_contact(current, nearest, cfg)
                    current = resolve_intersection(current, settled, cfg)
            current = settle_support(current, settled, cfg)
        except OptimizationFailedError as exc:
            failures.append({"object_id": current.obj.id, "reason": str(exc)})
        settled.append(current)
    return OptimizeResult(placed=settled, failures=failures)


def merged_mesh(placed: Sequence[PlacedMesh]) -> TriMesh:
    """Concatenate world-space meshes into one mesh for export."""
    vertices = []
    triangles = []
    offset = 0
    for p in placed:
        world = p.world
        vertices.append(world.vertices)
        triangles.append(world.triangles + offset)
        offset += len(world.vertices)
    if not vertices:
        return TriMesh(np.empty((0, 3)), np.empty((0, 3), dtype=np.int64))
    return TriMesh(np.vstack(vertices), np.vstack(triangles))
