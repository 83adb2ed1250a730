"""Ground-truth world model: convex prisms on a plane, with canonical JSON I/O."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from .geometry import Aabb, ParticleCloud, yaw_matrix

SCENE_FORMAT = "cluttersolve.scene"
SCENE_VERSION = 1
DEFAULT_H = 0.01


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class Shape:
    """Convex polygon in the local xy plane, extruded by ``height`` about z=0.

    Vertices are counter-clockwise and centred on their area centroid, so the
    centre of mass sits at the local origin.
    """

    vertices: Tuple[Tuple[float, float], ...]
    height: float
    kind: str = "prism"

    @classmethod
    def box(cls, hx: float, hy: float, hz: float) -> "Shape":
        if min(hx, hy, hz) <= 0:
            raise SceneError("box half extents must be positive")
        v = ((-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy))
        return cls(v, 2.0 * hz, "box")

    @classmethod
    def prism(cls, vertices, height: float) -> "Shape":
        from .geometry import convex_hull_2d, polygon_area

        hull = convex_hull_2d(np.asarray(vertices, dtype=float))
        if len(hull) < 3 or height <= 0:
            raise SceneError("prism needs >= 3 non-collinear vertices and positive height")
        a = polygon_area(hull)
        x, y = hull[:, 0], hull[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cr = x * yn - xn * y
        cx = float(((x + xn) * cr).sum() / (6 * a))
        cy = float(((y + yn) * cr).sum() / (6 * a))
        v = tuple((round(px - cx, 6), round(py - cy, 6)) for px, py in hull)
        return cls(v, float(height), "prism")

    @property
    def half_extents(self) -> Tuple[float, float, float]:
        v = np.asarray(self.vertices)
        return (float(v[:, 0].max()), float(v[:, 1].max()), self.height / 2)

    def to_json(self) -> dict:
        if self.kind == "box":
            return {"kind": "box", "half_extents": [_fmt(x) for x in self.half_extents]}
        return {"kind": "prism", "height": _fmt(self.height),
                "vertices": [[_fmt(x), _fmt(y)] for x, y in self.vertices]}

    @classmethod
    def from_json(cls, d: dict) -> "Shape":
        if d["kind"] == "box":
            hx, hy, hz = (float(x) for x in d["half_extents"])
            return cls.box(hx, hy, hz)
        if d["kind"] == "prism":
            # stored vertices are already centred; re-centring would drift by rounding
            verts = tuple((float(a), float(b)) for a, b in d["vertices"])
            return cls(verts, float(d["height"]), "prism")
        raise SceneError(f"unknown shape kind {d['kind']!r}")


@lru_cache(maxsize=4096)
def _local_particles(shape: Shape, h: float) -> Tuple[np.ndarray, np.ndarray]:
    """Surface particles in the shape frame and a mask of the bottom layer."""
    verts = np.asarray(shape.vertices, dtype=float)
    nv = len(verts)
    perimeter = []
    for i in range(nv):
        a, b = verts[i], verts[(i + 1) % nv]
        n = max(1, math.ceil(float(np.hypot(*(b - a))) / h - 1e-9))
        for k in range(n):
            perimeter.append(a + (b - a) * (k / n))
    perimeter = np.asarray(perimeter)
    nz = max(1, math.ceil(shape.height / h - 1e-9))
    zs = np.linspace(-shape.height / 2, shape.height / 2, nz + 1)
    walls = np.concatenate([np.column_stack([perimeter, np.full(len(perimeter), z)]) for z in zs])

    lo, hi = verts.min(axis=0), verts.max(axis=0)
    mx = int(math.ceil(max(abs(lo[0]), abs(hi[0])) / h))
    my = int(math.ceil(max(abs(lo[1]), abs(hi[1])) / h))
    gx, gy = np.meshgrid(np.arange(-mx, mx + 1) * h, np.arange(-my, my + 1) * h, indexing="ij")
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    keep = np.ones(len(grid), dtype=bool)
    for i in range(nv):
        a, b = verts[i], verts[(i + 1) % nv]
        e = b - a
        inward = (e[0] * (grid[:, 1] - a[1]) - e[1] * (grid[:, 0] - a[0])) / np.hypot(*e)
        keep &= inward >= h / 2 - 1e-12
    face = grid[keep]
    bottom = np.column_stack([face, np.full(len(face), -shape.height / 2)])
    top = np.column_stack([face, np.full(len(face), shape.height / 2)])
    pts = np.concatenate([walls, bottom, top])
    is_bottom = np.concatenate([
        np.abs(walls[:, 2] + shape.height / 2) < 1e-12,
        np.ones(len(bottom), dtype=bool),
        np.zeros(len(top), dtype=bool),
    ])
    pts.setflags(write=False)
    is_bottom.setflags(write=False)
    return pts, is_bottom


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    z: float
    yaw: float = 0.0

    @property
    def t(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def shifted(self, dv) -> "Pose":
        return Pose(self.x + float(dv[0]), self.y + float(dv[1]), self.z + float(dv[2]), self.yaw)

    def rounded(self, nd: int = 6) -> "Pose":
        return Pose(round(self.x, nd), round(self.y, nd), round(self.z, nd), round(self.yaw, nd))


@dataclass(frozen=True, eq=False)
class RigidObject:
    id: int
    shape: Shape
    pose: Pose
    category: str = "box"
    h: float = DEFAULT_H
    particles: np.ndarray = field(init=False, repr=False)
    bottom_mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        local, mask = _local_particles(self.shape, self.h)
        R = yaw_matrix(self.pose.yaw)
        world = local @ R.T + self.pose.t
        world.setflags(write=False)
        object.__setattr__(self, "particles", world)
        object.__setattr__(self, "bottom_mask", mask)

    @property
    def com(self) -> np.ndarray:
        return self.pose.t

    @property
    def cloud(self) -> ParticleCloud:
        return ParticleCloud(self.particles, self.h)

    @property
    def aabb(self) -> Aabb:
        return Aabb.from_points(self.particles)

    @property
    def bottom_z(self) -> float:
        return self.pose.z - self.shape.height / 2

    @property
    def top_z(self) -> float:
        return self.pose.z + self.shape.height / 2

    def footprint(self) -> np.ndarray:
        """World-frame xy polygon (CCW)."""
        R = yaw_matrix(self.pose.yaw)[:2, :2]
        return np.asarray(self.shape.vertices) @ R.T + self.pose.t[:2]

    def moved_to(self, pose: Pose) -> "RigidObject":
        return RigidObject(self.id, self.shape, pose, self.category, self.h)

    def translated(self, dv) -> "RigidObject":
        return self.moved_to(self.pose.shifted(dv))

    def to_json(self) -> dict:
        p = self.pose
        return {
            "id": self.id,
            "category": self.category,
            "shape": self.shape.to_json(),
            "pose": {"xyz": [_fmt(p.x), _fmt(p.y), _fmt(p.z)], "yaw": _fmt(p.yaw)},
        }


@dataclass
class SceneState:
    objects: Dict[int, RigidObject]
    target_id: int
    rng_seed: int = 0
    removed: frozenset = frozenset()
    h: float = DEFAULT_H
    preset: str = "scripted"
    borderline: Dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        self.objects = dict(sorted(self.objects.items()))
        if self.objects and self.target_id not in self.objects:
            raise SceneError(f"target {self.target_id} not among objects")

    def clone(self) -> "SceneState":
        return replace(self, objects=dict(self.objects), borderline=dict(self.borderline))

    def state_key(self) -> tuple:
        """Cheap hashable fingerprint of the physical state (poses of active objects)."""
        return tuple((i, o.pose) for i, o in self.objects.items() if i not in self.removed)

    @property
    def active_ids(self) -> List[int]:
        return [i for i in self.objects if i not in self.removed]

    def active(self) -> Iterable[RigidObject]:
        return (o for i, o in self.objects.items() if i not in self.removed)

    def get(self, oid: int) -> RigidObject:
        if oid not in self.objects or oid in self.removed:
            raise SceneError(f"unknown object id {oid}")
        return self.objects[oid]

    def bounds(self) -> Optional[Aabb]:
        objs = list(self.active())
        if not objs:
            return None
        boxes = [o.aabb for o in objs]
        return Aabb(np.min([b.min_corner for b in boxes], axis=0),
                    np.max([b.max_corner for b in boxes], axis=0))

    def to_json(self) -> dict:
        return {
            "format": SCENE_FORMAT,
            "version": SCENE_VERSION,
            "preset": self.preset,
            "seed": int(self.rng_seed),
            "particle_spacing": _fmt(self.h),
            "target_id": int(self.target_id),
            "removed": sorted(int(i) for i in self.removed),
            "borderline": {str(k): v for k, v in sorted(self.borderline.items())},
            "objects": [o.to_json() for o in self.objects.values()],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, separators=(",", ": ")) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()

    @classmethod
    def from_json(cls, d: dict) -> "SceneState":
        if d.get("format") != SCENE_FORMAT:
            raise SceneError("not a scene file (bad format tag)")
        if d.get("version") != SCENE_VERSION:
            raise SceneError(f"unsupported scene version {d.get('version')}")
        h = float(d.get("particle_spacing", DEFAULT_H))
        objs = {}
        for od in d["objects"]:
            x, y, z = (float(v) for v in od["pose"]["xyz"])
            pose = Pose(x, y, z, float(od["pose"]["yaw"]))
            o = RigidObject(int(od["id"]), Shape.from_json(od["shape"]), pose, od.get("category", "box"), h)
            if o.id in objs:
                raise SceneError(f"duplicate object id {o.id}")
            objs[o.id] = o
        return cls(objs, int(d["target_id"]), int(d.get("seed", 0)), frozenset(d.get("removed", [])),
                   h, d.get("preset", "scripted"),
                   {int(k): v for k, v in d.get("borderline", {}).items()})

    @classmethod
    def loads(cls, text: str) -> "SceneState":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise SceneError(f"malformed scene file: line {e.lineno} column {e.colno}: {e.msg}") from e
        try:
            return cls.from_json(d)
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, SceneError):
                raise
            raise SceneError(f"malformed scene file: {e!r}") from e

    def save(self, path) -> str:
        with open(path, "w") as fh:
            fh.write(self.dumps())
        return self.digest()

    @classmethod
    def load(cls, path) -> "SceneState":
        with open(path) as fh:
            return cls.loads(fh.read())


@dataclass(frozen=True)
class MovementRecord:
    object_id: int
    displacement: float
    rotation_change: float = 0.0


def _fmt(x: float) -> str:
    # fixed decimals keep digests stable; -0.000000 is normalised
    s = f"{float(x):.6f}"
    return "0.000000" if s == "-0.000000" else s
