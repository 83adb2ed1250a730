"""Partial, instance-labelled particle observations from a pinhole camera.

Every pixel casts one ray; the first particle sphere (radius h) it meets is
visible.  Objects with fewer than ``v_min`` visible particles are treated as
occluded and left out of the observation.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set

import numpy as np

from . import kernels
from .geometry import Aabb, ParticleCloud, min_pair_distance_below, unit, vec3
from .scene import SceneState, _fmt

V_MIN = 10
EPS_ADJ_H = 3.0


class ObservationError(KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "observation error"


@dataclass(frozen=True)
class CameraConfig:
    position: tuple = (0.0, -0.75, 0.85)
    look_at: tuple = (0.0, 0.0, 0.05)
    width: int = 192
    height: int = 160
    fov_deg: float = 50.0
    max_range: float = 5.0

    def __post_init__(self):
        p, t = vec3(self.position), vec3(self.look_at)
        if np.allclose(p, t):
            raise ValueError("camera position must differ from look_at")
        if self.width < 32 or self.height < 32:
            raise ValueError("camera resolution must be at least 32x32")
        if not 0 < self.fov_deg < 180:
            raise ValueError("fov_deg must lie in (0, 180)")

    def intrinsics(self):
        """(basis rows right/down/forward, fx, fy, cx, cy)."""
        fwd = unit(vec3(self.look_at) - vec3(self.position))
        up = np.array([0.0, 0.0, 1.0]) if abs(fwd[2]) < 0.999 else np.array([0.0, 1.0, 0.0])
        right = np.cross(fwd, up)
        right /= np.linalg.norm(right)
        down = np.cross(fwd, right)
        f = (self.width / 2) / math.tan(math.radians(self.fov_deg) / 2)
        return np.ascontiguousarray([right, down, fwd]), f, f, self.width / 2, self.height / 2

    def ray_dirs(self) -> np.ndarray:
        return _ray_dirs(self)


_RAY_CACHE: Dict[CameraConfig, np.ndarray] = {}


def _ray_dirs(cam: CameraConfig) -> np.ndarray:
    hit = _RAY_CACHE.get(cam)
    if hit is not None:
        return hit
    basis, fx, fy, cx, cy = cam.intrinsics()
    vv, uu = np.mgrid[0:cam.height, 0:cam.width]
    x = ((uu + 0.5 - cx) / fx).ravel()
    y = ((vv + 0.5 - cy) / fy).ravel()
    d = x[:, None] * basis[0] + y[:, None] * basis[1] + basis[2]
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    d = np.ascontiguousarray(d)
    d.setflags(write=False)
    _RAY_CACHE[cam] = d
    return d


@dataclass(frozen=True)
class ObservedObject:
    id: int
    visible_points: ParticleCloud
    visibility_ratio: float
    indices: np.ndarray = field(repr=False, default=None)

    @property
    def com_z(self) -> float:
        return float(self.visible_points.points[:, 2].mean())

    @property
    def aabb(self) -> Aabb:
        return self.visible_points.aabb


@dataclass
class Observation:
    objects: Dict[int, ObservedObject]
    step: int = 0
    h: float = 0.01
    hidden: Dict[int, int] = field(default_factory=dict)  # id -> visible count below v_min
    _adj: Dict[tuple, Set[int]] = field(default_factory=dict, repr=False)
    _fps: Dict[tuple, ParticleCloud] = field(default_factory=dict, repr=False)
    _prelim: Dict[tuple, np.ndarray] = field(default_factory=dict, repr=False)

    def __contains__(self, oid: int) -> bool:
        return oid in self.objects

    @property
    def ids(self) -> List[int]:
        return sorted(self.objects)

    def get(self, oid: int) -> ObservedObject:
        try:
            return self.objects[oid]
        except KeyError:
            raise ObservationError(f"object {oid} not in observation") from None

    def points(self, oid: int) -> np.ndarray:
        return self.get(oid).visible_points.points

    def to_json(self) -> dict:
        return {
            "format": "cluttersolve.observation",
            "version": 1,
            "step": self.step,
            "particle_spacing": _fmt(self.h),
            "objects": [
                {"id": o.id, "visibility_ratio": _fmt(o.visibility_ratio),
                 "points": [[_fmt(v) for v in p] for p in o.visible_points.points]}
                for o in (self.objects[i] for i in self.ids)
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), separators=(",", ":")) + "\n"


def observe(scene: SceneState, cam: Optional[CameraConfig] = None, step: int = 0,
            v_min: int = V_MIN) -> Observation:
    cam = cam or CameraConfig()
    ids = scene.active_ids
    if not ids:
        return Observation({}, step, scene.h)
    clouds = [scene.objects[i].particles for i in ids]
    sizes = np.array([len(c) for c in clouds])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    pts = np.ascontiguousarray(np.concatenate(clouds))
    basis, fx, fy, cx, cy = cam.intrinsics()
    idbuf = kernels.splat_nearest(pts, float(scene.h), np.ascontiguousarray(vec3(cam.position)), basis,
                                  fx, fy, cx, cy, cam.width, cam.height, float(cam.max_range), _ray_dirs(cam))
    seen = np.unique(idbuf[idbuf >= 0])
    owner = np.searchsorted(offsets, seen, side="right") - 1
    objs, hidden = {}, {}
    for k, oid in enumerate(ids):
        local = seen[owner == k] - offsets[k]
        if len(local) < v_min:
            hidden[oid] = int(len(local))
            continue
        objs[oid] = ObservedObject(oid, ParticleCloud(clouds[k][local], scene.h),
                                   float(len(local) / sizes[k]), local)
    return Observation(objs, step, scene.h, hidden)


def observe_full(scene: SceneState, step: int = 0) -> Observation:
    """Idealised observation in which every particle is visible."""
    objs = {}
    for o in scene.active():
        objs[o.id] = ObservedObject(o.id, ParticleCloud(o.particles, scene.h), 1.0,
                                    np.arange(len(o.particles)))
    return Observation(objs, step, scene.h)


def adjacency(obs: Observation, oid: int, eps_adj: Optional[float] = None) -> Set[int]:
    """Ids whose visible clouds come closer than ``eps_adj`` to ``oid``'s visible cloud."""
    eps = EPS_ADJ_H * obs.h if eps_adj is None else float(eps_adj)
    key = (oid, eps)
    hit = obs._adj.get(key)
    if hit is not None:
        return set(hit)
    me = obs.get(oid)
    box = me.aabb
    out = set()
    for j in obs.ids:
        if j == oid:
            continue
        other = obs.objects[j]
        if box.distance(other.aabb) >= eps:
            continue
        if min_pair_distance_below(me.visible_points.points, other.visible_points.points, eps) < eps:
            out.add(j)
    obs._adj[key] = frozenset(out)
    return out
