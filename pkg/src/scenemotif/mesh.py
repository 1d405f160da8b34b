"""Triangle meshes, ray casting through a bounding-volume hierarchy, and
triangle-level intersection tests.

Meshes are loaded from Wavefront OBJ files (positions and triangle faces
only; polygon faces are fan-triangulated).  Degenerate triangles are
dropped at load time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import InvalidArgumentError

DEGENERATE_AREA = 1e-12
RAY_EPS = 1e-12
BVH_LEAF_SIZE = 4


def triangle_vertices(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Per-triangle vertex array, shape (M, 3, 3)."""
    return vertices[triangles]


def triangle_areas(tri_verts: np.ndarray) -> np.ndarray:
    cross = np.cross(tri_verts[:, 1] - tri_verts[:, 0], tri_verts[:, 2] - tri_verts[:, 0])
    return 0.5 * np.linalg.norm(cross, axis=1)


def triangle_normals(tri_verts: np.ndarray) -> np.ndarray:
    cross = np.cross(tri_verts[:, 1] - tri_verts[:, 0], tri_verts[:, 2] - tri_verts[:, 0])
    norms = np.linalg.norm(cross, axis=1, keepdims=True)
    return cross / np.maximum(norms, 1e-300)


@dataclass
class _BvhNode:
    aabb_min: np.ndarray
    aabb_max: np.ndarray
    left: Optional[int] = None
    right: Optional[int] = None
    triangle_ids: Optional[np.ndarray] = None  # leaves only


class Bvh:
    """Median-split bounding-volume hierarchy over triangles."""

    def __init__(self, tri_verts: np.ndarray):
        self.tri_verts = tri_verts
        self.nodes: list[_BvhNode] = []
        if len(tri_verts):
            centroids = tri_verts.mean(axis=1)
            self.root = self._build(np.arange(len(tri_verts)), centroids)
        else:
            self.root = None

    def _build(self, ids: np.ndarray, centroids: np.ndarray) -> int:
        verts = self.tri_verts[ids]
        node = _BvhNode(
            aabb_min=verts.reshape(-1, 3).min(axis=0),
            aabb_max=verts.reshape(-1, 3).max(axis=0),
        )
        index = len(self.nodes)
        self.nodes.append(node)
        if len(ids) <= BVH_LEAF_SIZE:
            node.triangle_ids = ids
            return index
        cents = centroids[ids]
        axis = int(np.argmax(cents.max(axis=0) - cents.min(axis=0)))
        order = np.argsort(cents[:, axis], kind="stable")
        half = len(ids) // 2
        node.left = self._build(ids[order[:half]], centroids)
        node.right = self._build(ids[order[half:]], centroids)
        return index

    def raycast(self, origin: np.ndarray, direction: np.ndarray) -> float:
        """Nearest positive hit distance, or ``inf`` when the ray misses."""
        if self.root is None:
            return np.inf
        inv_dir = np.where(direction != 0, 1.0 / np.where(direction == 0, 1.0, direction), np.inf)
        best = np.inf
        stack = [self.root]
        while stack:
            node = self.nodes[stack.pop()]
            t_entry = _slab_entry(origin, inv_dir, node.aabb_min, node.aabb_max)
            if t_entry is None or t_entry > best:
                continue
            if node.triangle_ids is not None:
                hits = ray_triangle_distances(origin, direction, self.tri_verts[node.triangle_ids])
                if hits.size:
                    best = min(best, float(hits.min()))
            else:
                stack.append(node.left)
                stack.append(node.right)
        return best


def _slab_entry(origin, inv_dir, box_min, box_max) -> Optional[float]:
    t1 = (box_min - origin) * inv_dir
    t2 = (box_max - origin) * inv_dir
    t_near = np.minimum(t1, t2).max()
    t_far = np.maximum(t1, t2).min()
    if t_far < max(t_near, 0.0):
        return None
    return max(t_near, 0.0)


def ray_triangle_distances(
    origin: np.ndarray, direction: np.ndarray, tri_verts: np.ndarray
) -> np.ndarray:
    """Positive hit distances for one ray against many triangles (no culling)."""
    if not len(tri_verts):
        return np.empty(0)
    v0 = tri_verts[:, 0]
    e1 = tri_verts[:, 1] - v0
    e2 = tri_verts[:, 2] - v0
    pvec = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    valid = np.abs(det) > RAY_EPS
    inv_det = np.where(valid, 1.0 / np.where(valid, det, 1.0), 0.0)
    tvec = origin - v0
    u = np.einsum("ij,ij->i", tvec, pvec) * inv_det
    qvec = np.cross(tvec, e1)
    v = np.einsum("j,ij->i", direction, qvec) * inv_det
    t = np.einsum("ij,ij->i", e2, qvec) * inv_det
    hit = valid & (u >= -RAY_EPS) & (v >= -RAY_EPS) & (u + v <= 1.0 + RAY_EPS) & (t > RAY_EPS)
    return t[hit]


class TriMesh:
    """An indexed triangle mesh in its local frame with a lazy BVH."""

    def __init__(self, vertices, triangles):
        self.vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
        triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
        if triangles.size and (triangles.min() < 0 or triangles.max() >= len(self.vertices)):
            raise InvalidArgumentError("triangle indices out of range")
        # Drop degenerate triangles up front so area-weighted sampling and
        # normal computation stay well defined.
        tv = triangle_vertices(self.vertices, triangles)
        keep = triangle_areas(tv) > DEGENERATE_AREA if triangles.size else np.empty(0, dtype=bool)
        self.triangles = triangles[keep]
        self._bvh: Optional[Bvh] = None

    @property
    def tri_verts(self) -> np.ndarray:
        return triangle_vertices(self.vertices, self.triangles)

    @property
    def bvh(self) -> Bvh:
        if self._bvh is None:
            self._bvh = Bvh(self.tri_verts)
        return self._bvh

    def transformed(self, rotation: np.ndarray, translation: np.ndarray) -> "TriMesh":
        return TriMesh(self.vertices @ np.asarray(rotation).T + translation, self.triangles)

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def box_mesh(half_size) -> TriMesh:
    """Axis-aligned box centered at the origin with outward-facing triangles."""
    hx, hy, hz = np.asarray(half_size, dtype=np.float64)
    v = np.array(
        [
            [-hx, -hy, -hz], [hx, -hy, -hz], [hx, hy, -hz], [-hx, hy, -hz],
            [-hx, -hy, hz], [hx, -hy, hz], [hx, hy, hz], [-hx, hy, hz],
        ]
    )
    f = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # -z
            [4, 5, 6], [4, 6, 7],  # +z
            [0, 1, 5], [0, 5, 4],  # -y
            [3, 7, 6], [3, 6, 2],  # +y
            [0, 4, 7], [0, 7, 3],  # -x
            [1, 2, 6], [1, 6, 5],  # +x
        ]
    )
    return TriMesh(v, f)


# ---------------------------------------------------------------------------
# OBJ interchange
# ---------------------------------------------------------------------------

def load_obj(path: str | Path) -> TriMesh:
    """Minimal Wavefront OBJ loader: ``v`` and (fan-triangulated) ``f`` records.

    Vertex indices may carry ``/vt/vn`` suffixes and may be negative
    (relative).  All other record types are ignored.
    """
    vertices: list[list[float]] = []
    faces: list[list[int]] = []
    for raw in Path(path).read_text().splitlines():
        parts = raw.split()
        if not parts:
            continue
        if parts[0] == "v":
            vertices.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = []
            for token in parts[1:]:
                i = int(token.split("/")[0])
                idx.append(i - 1 if i > 0 else len(vertices) + i)
            for k in range(1, len(idx) - 1):
                faces.append([idx[0], idx[k], idx[k + 1]])
    if not vertices:
        raise InvalidArgumentError(f"no vertices found in {path}")
    return TriMesh(np.array(vertices), np.array(faces, dtype=np.int64).reshape(-1, 3))


def save_obj(mesh: TriMesh, path: str | Path, comment: str = "") -> None:
    lines = []
    if comment:
        lines.append(f"# {comment}")
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.6f} {v[1]:.6f} {v[2]:.6f}")
    for f in mesh.triangles:
        lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Triangle-triangle intersection
# ---------------------------------------------------------------------------

TRI_EPS = 1e-9


def _plane_distances(tris: np.ndarray, normals: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    return np.einsum("pij,pj->pi", tris, normals) + offsets[:, None]


def _line_interval(proj: np.ndarray, dist: np.ndarray) -> np.ndarray:
    """Interval of each triangle on the intersection line of two planes.

    Edges whose endpoints lie on opposite sides contribute their crossing
    point; vertices exactly on the plane (zero distance after clamping)
    contribute their projection directly.  For a triangle that genuinely
    straddles the plane this always yields exactly two endpoints.
    """
    candidates = []
    valid = []
    for i, j in ((0, 1), (1, 2), (2, 0)):
        di, dj = dist[:, i], dist[:, j]
        cross = (di * dj) < 0
        denom = np.where(cross, di - dj, 1.0)
        candidates.append(proj[:, i] + (proj[:, j] - proj[:, i]) * di / denom)
        valid.append(cross)
    for i in range(3):
        candidates.append(proj[:, i])
        valid.append(dist[:, i] == 0)
    cand = np.stack(candidates, axis=1)
    mask = np.stack(valid, axis=1)
    lo = np.where(mask, cand, np.inf).min(axis=1)
    hi = np.where(mask, cand, -np.inf).max(axis=1)
    return np.stack([lo, hi], axis=1)


def triangles_intersect(tris_a: np.ndarray, tris_b: np.ndarray, eps: float = TRI_EPS) -> np.ndarray:
    """Pairwise interval test for triangle penetration.

    ``tris_a`` and ``tris_b`` have shape (P, 3, 3); the result is a boolean
    mask of pairs whose triangles cross with positive overlap.  Touching or
    coplanar configurations (any vertex within ``eps`` of the other plane)
    count as contact, not penetration.
    """
    tris_a = np.asarray(tris_a, dtype=np.float64)
    tris_b = np.asarray(tris_b, dtype=np.float64)
    n_b = np.cross(tris_b[:, 1] - tris_b[:, 0], tris_b[:, 2] - tris_b[:, 0])
    d_b = -np.einsum("pj,pj->p", n_b, tris_b[:, 0])
    dist_a = _plane_distances(tris_a, n_b, d_b)
    n_a = np.cross(tris_a[:, 1] - tris_a[:, 0], tris_a[:, 2] - tris_a[:, 0])
    d_a = -np.einsum("pj,pj->p", n_a, tris_a[:, 0])
    dist_b = _plane_distances(tris_b, n_a, d_a)

    # Scale the tolerance by triangle size so the test is unit-independent.
    scale_a = np.linalg.norm(n_a, axis=1)
    scale_b = np.linalg.norm(n_b, axis=1)
    tol_a = eps * np.maximum(scale_b, 1e-30)[:, None]
    tol_b = eps * np.maximum(scale_a, 1e-30)[:, None]

    # Clamp near-plane vertices to exactly zero; a triangle crosses the
    # other plane only if it has vertices strictly on both sides.  Touching
    # or coplanar configurations therefore read as contact, not penetration.
    dist_a = np.where(np.abs(dist_a) <= tol_a, 0.0, dist_a)
    dist_b = np.where(np.abs(dist_b) <= tol_b, 0.0, dist_b)
    crosses = (
        (dist_a > 0).any(axis=1)
        & (dist_a < 0).any(axis=1)
        & (dist_b > 0).any(axis=1)
        & (dist_b < 0).any(axis=1)
    )
    result = np.zeros(len(tris_a), dtype=bool)
    if not crosses.any():
        return result

    idx = np.nonzero(crosses)[0]
    line_dir = np.cross(n_a[idx], n_b[idx])
    axis = np.argmax(np.abs(line_dir), axis=1)
    rows = np.arange(len(idx))
    proj_a = tris_a[idx][rows[:, None], :, axis[:, None]].reshape(len(idx), 3)
    proj_b = tris_b[idx][rows[:, None], :, axis[:, None]].reshape(len(idx), 3)
    int_a = _line_interval(proj_a, dist_a[idx])
    int_b = _line_interval(proj_b, dist_b[idx])
    overlap = np.minimum(int_a[:, 1], int_b[:, 1]) - np.maximum(int_a[:, 0], int_b[:, 0])
    result[idx] = overlap > eps
    return result


# Generic (non-axis-aligned) parity-test direction, chosen so rays from
# lattice-aligned points do not graze shared edges of axis-aligned meshes.
_PARITY_DIR = np.array([0.29387, 0.62159, 0.74625])


def _point_inside(point: np.ndarray, mesh: TriMesh) -> bool:
    """Ray-parity containment test against a closed mesh."""
    hits = ray_triangle_distances(point, _PARITY_DIR, mesh.tri_verts)
    return len(hits) % 2 == 1


def meshes_intersect(mesh_a: TriMesh, mesh_b: TriMesh, eps: float = TRI_EPS) -> bool:
    """True when two world-space meshes penetrate.

    Detects both surface crossings (triangle-level interval test) and full
    containment of one mesh inside the other (ray parity on the AABB
    centroid).  Surfaces that only touch or slide coplanar count as
    contact.
    """
    amin, amax = mesh_a.aabb()
    bmin, bmax = mesh_b.aabb()
    if np.any(amin > bmax) or np.any(bmin > amax):
        return False
    ta = mesh_a.tri_verts
    tb = mesh_b.tri_verts
    # Per-triangle AABB prune before the exact pairwise test.
    a_min, a_max = ta.min(axis=1), ta.max(axis=1)
    b_min, b_max = tb.min(axis=1), tb.max(axis=1)
    pair_mask = np.all(a_min[:, None] <= b_max[None, :], axis=2) & np.all(
        b_min[None, :] <= a_max[:, None], axis=2
    )
    ai, bi = np.nonzero(pair_mask)
    if len(ai) and triangles_intersect(ta[ai], tb[bi], eps).any():
        return True
    # No surface crossing: one mesh may still sit entirely inside the other.
    if _point_inside((amin + amax) / 2, mesh_b):
        return True
    return _point_inside((bmin + bmax) / 2, mesh_a)


# ---------------------------------------------------------------------------
# Deterministic surface sampling
# ---------------------------------------------------------------------------

def _halton(index: np.ndarray, base: int) -> np.ndarray:
    result = np.zeros(len(index), dtype=np.float64)
    f = 1.0 / base
    i = index.astype(np.int64) + 1
    while np.any(i > 0):
        result += f * (i % base)
        i //= base
        f /= base
    return result


def sample_surface(mesh: TriMesh, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Area-weighted low-discrepancy surface samples with triangle normals.

    Uses a fixed Halton sequence rather than an RNG so results are
    deterministic for a given mesh and sample count.
    """
    tv = mesh.tri_verts
    areas = triangle_areas(tv)
    cdf = np.cumsum(areas)
    cdf /= cdf[-1]
    idx = np.arange(n)
    tri_ids = np.searchsorted(cdf, _halton(idx, 2), side="right").clip(0, len(tv) - 1)
    r1 = np.sqrt(_halton(idx, 3))
    r2 = _halton(idx, 5)
    a, b, c = tv[tri_ids, 0], tv[tri_ids, 1], tv[tri_ids, 2]
    points = (1 - r1)[:, None] * a + (r1 * (1 - r2))[:, None] * b + (r1 * r2)[:, None] * c
    normals = triangle_normals(tv)[tri_ids]
    return points, normals
