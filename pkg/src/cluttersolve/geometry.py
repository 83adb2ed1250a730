"""Particle clouds and the distance, sweep and support-polygon queries built on them."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from . import kernels

UP = np.array([0.0, 0.0, 1.0])


class GeometryError(ValueError):
    pass


def vec3(x, y=None, z=None) -> np.ndarray:
    v = np.asarray([x, y, z] if y is not None else x, dtype=float).reshape(3)
    if not np.all(np.isfinite(v)):
        raise GeometryError(f"non-finite vector {v}")
    return v


def unit(v) -> np.ndarray:
    """Normalize ``v`` to a unit direction."""
    v = vec3(v)
    n = float(np.sqrt(v @ v))
    if n == 0.0:
        raise GeometryError("zero-length direction")
    return v / n


def angle_between(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.arccos(np.clip(np.dot(a, b), -1.0, 1.0)))


@dataclass(frozen=True)
class ParticleCloud:
    points: np.ndarray
    spacing_h: float = 0.01

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=float).reshape(-1, 3))
        object.__setattr__(self, "points", pts)
        if self.spacing_h <= 0:
            raise GeometryError("spacing_h must be positive")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def aabb(self) -> "Aabb":
        return Aabb.from_points(self.points)

    def translated(self, t) -> "ParticleCloud":
        return ParticleCloud(self.points + vec3(t), self.spacing_h)


CloudLike = Union[ParticleCloud, np.ndarray, Sequence]


def as_points(cloud: CloudLike) -> np.ndarray:
    if isinstance(cloud, ParticleCloud):
        return cloud.points
    return np.ascontiguousarray(np.asarray(cloud, dtype=float).reshape(-1, 3))


@dataclass(frozen=True)
class Aabb:
    min_corner: np.ndarray
    max_corner: np.ndarray

    @classmethod
    def from_points(cls, pts: np.ndarray) -> "Aabb":
        pts = as_points(pts)
        if len(pts) == 0:
            raise GeometryError("empty input cloud")
        return cls(pts.min(axis=0), pts.max(axis=0))

    def expanded(self, r: float) -> "Aabb":
        return Aabb(self.min_corner - r, self.max_corner + r)

    def overlaps(self, other: "Aabb") -> bool:
        return bool(np.all(self.min_corner <= other.max_corner)
                    and np.all(other.min_corner <= self.max_corner))

    def distance(self, other: "Aabb") -> float:
        """Lower bound on the distance between anything inside the two boxes."""
        gap = np.maximum(0.0, np.maximum(self.min_corner - other.max_corner,
                                         other.min_corner - self.max_corner))
        return float(np.sqrt(gap @ gap))

    @property
    def diagonal(self) -> float:
        e = self.max_corner - self.min_corner
        return float(np.sqrt(e @ e))


def farthest_point_sample(cloud: CloudLike, r: int, seed_index: int = 0) -> ParticleCloud:
    """Greedy max-min subsample of ``cloud`` down to ``min(r, len(cloud))`` points.

    The first pick is ``seed_index``; every later pick is the point whose
    distance to the already selected set is largest (lowest index on ties).
    """
    h = cloud.spacing_h if isinstance(cloud, ParticleCloud) else 0.01
    pts = as_points(cloud)
    if len(pts) == 0:
        raise GeometryError("empty input cloud")
    if r < 1:
        raise GeometryError("r must be >= 1")
    if not 0 <= seed_index < len(pts):
        raise GeometryError("seed_index out of range")
    idx = kernels.farthest_point_indices(pts, int(r), int(seed_index))
    return ParticleCloud(pts[idx], h)


def farthest_point_indices(pts: np.ndarray, r: int, seed_index: int = 0) -> np.ndarray:
    pts = as_points(pts)
    if len(pts) == 0:
        raise GeometryError("empty input cloud")
    return kernels.farthest_point_indices(pts, int(r), int(seed_index))


def min_pair_distance(a: CloudLike, b: CloudLike) -> float:
    """Exact minimum Euclidean distance over all cross pairs."""
    pa, pb = as_points(a), as_points(b)
    if len(pa) == 0 or len(pb) == 0:
        raise GeometryError("empty input cloud")
    return float(kernels.min_pair_distance(pa, pb))


def min_pair_distance_below(a: CloudLike, b: CloudLike, bound: float) -> float:
    """Like :func:`min_pair_distance` but returns ``inf`` early when the boxes
    are already ``bound`` apart.  Results below ``bound`` are exact."""
    pa, pb = as_points(a), as_points(b)
    if len(pa) == 0 or len(pb) == 0:
        raise GeometryError("empty input cloud")
    if Aabb.from_points(pa).distance(Aabb.from_points(pb)) >= bound:
        return math.inf
    return float(kernels.min_pair_distance(pa, pb))


def sweep_contact(mover: CloudLike, obstacle: CloudLike, d, step_delta: float,
                  max_len: float, margin: float) -> Optional[float]:
    """Travel distance of the first step at which ``mover`` comes within ``margin``.

    The mover is translated along ``d`` by ``k * step_delta`` for
    ``k = 0, 1, ...`` while the travel stays within ``max_len``; the first ``k``
    whose minimum pair distance is below ``margin`` is reported.  Returns
    ``None`` when no step makes contact.
    """
    if step_delta <= 0:
        raise GeometryError("step_delta must be positive")
    if max_len < 0 or margin < 0:
        raise GeometryError("max_len and margin must be non-negative")
    pm, po = as_points(mover), as_points(obstacle)
    if len(pm) == 0 or len(po) == 0:
        raise GeometryError("empty input cloud")
    kmax = int(math.floor(max_len / step_delta + 1e-9))
    k = sweep_first_step(pm, po, unit(d), step_delta, kmax, margin)
    return None if k < 0 else k * step_delta


def sweep_first_step(pm: np.ndarray, po: np.ndarray, d: np.ndarray, delta: float,
                     kmax: int, margin: float) -> int:
    """Step-index form of :func:`sweep_contact` with a cheap corridor prune.

    Only particles that can come within ``margin`` of the other cloud are
    kept: along ``d`` inside the travel window, across ``d`` inside the
    other cloud's projected box (both conservative).
    """
    proj_m = pm @ d
    proj_o = po @ d
    travel = kmax * delta
    if proj_o.max() < proj_m.min() - margin or proj_o.min() > proj_m.max() + travel + margin:
        return -1
    lat_m = pm - np.outer(proj_m, d)
    lat_o = po - np.outer(proj_o, d)
    lo_m, hi_m = lat_m.min(axis=0) - margin, lat_m.max(axis=0) + margin
    lo_o, hi_o = lat_o.min(axis=0) - margin, lat_o.max(axis=0) + margin
    keep_o = (np.all((lat_o >= lo_m) & (lat_o <= hi_m), axis=1)
              & (proj_o >= proj_m.min() - margin) & (proj_o <= proj_m.max() + travel + margin))
    if not keep_o.any():
        return -1
    keep_m = (np.all((lat_m >= lo_o) & (lat_m <= hi_o), axis=1)
              & (proj_m <= proj_o.max() + margin) & (proj_m >= proj_o.min() - travel - margin))
    if not keep_m.any():
        return -1
    pm = np.ascontiguousarray(pm[keep_m])
    po = np.ascontiguousarray(po[keep_o])
    return int(kernels.first_contact_step(pm, po, np.ascontiguousarray(d, dtype=float),
                                          float(delta), int(kmax), float(margin)))


def convex_hull_2d(points: np.ndarray) -> np.ndarray:
    """Counter-clockwise hull vertices starting at the lexicographically smallest; collinear points dropped."""
    pts = np.unique(np.asarray(points, dtype=float).reshape(-1, 2), axis=0)
    if len(pts) <= 2:
        return pts
    try:
        hull = pts[ConvexHull(pts).vertices]
    except QhullError:
        return _monotone_chain(pts)
    k = int(np.lexsort((hull[:, 1], hull[:, 0]))[0])
    return np.roll(hull, -k, axis=0)


def _monotone_chain(pts: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain on sorted unique points (handles degenerate input)."""

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def _point_segment_distance(p, a, b) -> float:
    ab = b - a
    L2 = float(ab @ ab)
    if L2 == 0.0:
        return float(np.hypot(*(p - a)))
    t = min(1.0, max(0.0, float((p - a) @ ab) / L2))
    return float(np.hypot(*(p - (a + t * ab))))


def point_in_hull_2d(p, hull: np.ndarray, tol: float) -> bool:
    """True iff ``p`` is inside the CCW ``hull`` or within ``tol`` of it."""
    p = np.asarray(p, dtype=float).reshape(2)
    n = len(hull)
    if n == 0:
        return False
    if n == 1:
        return float(np.hypot(*(p - hull[0]))) <= tol
    if n == 2:
        return _point_segment_distance(p, hull[0], hull[1]) <= tol
    inside = True
    for i in range(n):
        a, b = hull[i], hull[(i + 1) % n]
        if (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) < 0:
            inside = False
            break
    if inside:
        return True
    return min(_point_segment_distance(p, hull[i], hull[(i + 1) % n]) for i in range(n)) <= tol


def support_polygon_contains(com_xy, contact_points_xy, tol: float = 1e-6) -> bool:
    """Quasi-static stability test: is the COM projection over the contact hull?

    Fewer than three non-collinear contacts degrade to a segment or point, each
    with a ``tol`` band.  Points within ``tol`` of the boundary count as inside.
    """
    pts = np.asarray(contact_points_xy, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return False
    return point_in_hull_2d(com_xy, convex_hull_2d(pts), tol)


def hull_margin_2d(p, hull: np.ndarray) -> float:
    """Signed distance from ``p`` to the hull boundary, positive inside."""
    p = np.asarray(p, dtype=float).reshape(2)
    n = len(hull)
    if n < 3:
        if n == 0:
            return -math.inf
        if n == 1:
            return -float(np.hypot(*(p - hull[0])))
        return -_point_segment_distance(p, hull[0], hull[1])
    dists = []
    inside = True
    for i in range(n):
        a, b = hull[i], hull[(i + 1) % n]
        e = b - a
        cr = e[0] * (p[1] - a[1]) - e[1] * (p[0] - a[0])
        if cr < 0:
            inside = False
        dists.append(_point_segment_distance(p, a, b))
    m = min(dists)
    return m if inside else -m


def polygon_area(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def clip_convex(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman intersection of two CCW convex polygons."""
    out = [np.asarray(p, dtype=float) for p in subject]
    n = len(clip)
    if n < 3:
        return np.zeros((0, 2))
    for i in range(n):
        if not out:
            break
        a, b = clip[i], clip[(i + 1) % n]
        e = b - a

        def side(p):
            return e[0] * (p[1] - a[1]) - e[1] * (p[0] - a[0])

        inp, out = out, []
        for j in range(len(inp)):
            cur, prev = inp[j], inp[j - 1]
            sc, sp = side(cur), side(prev)
            if sc >= 0:
                if sp < 0:
                    out.append(prev + (cur - prev) * (sp / (sp - sc)))
                out.append(cur)
            elif sp >= 0:
                out.append(prev + (cur - prev) * (sp / (sp - sc)))
    return np.array(out).reshape(-1, 2)


def polygons_overlap(a: np.ndarray, b: np.ndarray) -> bool:
    """Separating-axis test for two convex polygons (touching counts as overlap)."""
    for poly in (a, b):
        n = len(poly)
        for i in range(n):
            e = poly[(i + 1) % n] - poly[i]
            axis = np.array([-e[1], e[0]])
            pa, pb = a @ axis, b @ axis
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True


def polygon_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance between two convex polygons, 0 when they overlap."""
    if polygons_overlap(a, b):
        return 0.0
    best = math.inf
    for p, q in ((a, b), (b, a)):
        s0 = q
        e = np.roll(q, -1, axis=0) - s0
        L2 = np.einsum("ij,ij->i", e, e)
        rel = p[:, None, :] - s0[None, :, :]
        t = np.clip(np.einsum("kij,ij->ki", rel, e) / np.where(L2 > 0, L2, 1.0), 0.0, 1.0)
        d = rel - t[:, :, None] * e[None, :, :]
        best = min(best, float(np.sqrt(np.einsum("kij,kij->ki", d, d).min())))
    return best


def yaw_matrix(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def frame_from_axis(axis: np.ndarray, roll: float = 0.0) -> np.ndarray:
    """Rotation whose third column is ``axis`` (unit), rolled about it by ``roll``."""
    z = unit(axis)
    ref = np.array([1.0, 0.0, 0.0]) if abs(z[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    x = ref - (ref @ z) * z
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    c, s = math.cos(roll), math.sin(roll)
    xr = c * x + s * y
    yr = -s * x + c * y
    return np.column_stack([xr, yr, z])
