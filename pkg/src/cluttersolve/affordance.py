"""Grasp point scoring (preliminary graspability minus neighbour influence) and grasp selection."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
from scipy.spatial import cKDTree

from .geometry import frame_from_axis, unit, vec3
from .observation import Observation, ObservationError
from .scene import _fmt

log = logging.getLogger(__name__)


class UnreachableError(RuntimeError):
    pass


@dataclass(frozen=True)
class AffordanceConfig:
    eps_x: float = 0.05
    sigma: Optional[float] = None  # defaults to eps_x / 3
    w_g: float = 0.08
    g_r: float = 0.015
    g_l: float = 0.12
    pose_samples: int = 32
    normal_radius_h: float = 2.0

    def __post_init__(self):
        for name in ("eps_x", "w_g", "g_r", "g_l"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.sigma is not None and self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.pose_samples < 1:
            raise ValueError("pose_samples must be >= 1")

    @property
    def sig(self) -> float:
        return self.eps_x / 3.0 if self.sigma is None else self.sigma


@dataclass(frozen=True)
class GraspPoint:
    position: np.ndarray
    score: float


@dataclass(frozen=True)
class GraspPose:
    orientation: np.ndarray  # columns: finger axis, palm axis, approach axis
    radius: float
    length: float

    @property
    def approach(self) -> np.ndarray:
        return self.orientation[:, 2]


@dataclass(frozen=True)
class Action:
    object_id: int
    grasp_point: np.ndarray
    grasp: GraspPose
    direction: np.ndarray

    def to_json(self) -> dict:
        return {
            "object_id": self.object_id,
            "grasp_point": [_fmt(v) for v in self.grasp_point],
            "approach": [_fmt(v) for v in self.grasp.approach],
            "direction": [_fmt(v) for v in self.direction],
        }


def influence_score(p, p_j, cfg: AffordanceConfig = AffordanceConfig()) -> float:
    d = float(np.linalg.norm(vec3(p) - vec3(p_j)))
    return math.exp(-d / cfg.sig)


def _object_points(obs: Observation, object_id: int) -> np.ndarray:
    try:
        return obs.points(object_id)
    except ObservationError:
        raise ObservationError(f"unknown object {object_id}") from None


def _preliminary_all(pts: np.ndarray, h: float, cfg: AffordanceConfig) -> np.ndarray:
    """Preliminary score of every point of one object cloud."""
    out = np.zeros(len(pts))
    if len(pts) < 3:
        log.warning("degenerate cloud (%d points): normal undefined, score 0", len(pts))
        return out
    tree = cKDTree(pts)
    centroid = pts.mean(axis=0)
    nbrs = tree.query_ball_point(pts, cfg.normal_radius_h * h + 1e-9)
    for i, idx in enumerate(nbrs):
        if len(idx) < 3:
            continue
        local = pts[idx] - pts[idx].mean(axis=0)
        _, vecs = np.linalg.eigh(local.T @ local)
        n = vecs[:, 0]
        if (pts[i] - centroid) @ n < 0:
            n = -n
        thickness = float(((pts[i] - pts) @ n).max())
        out[i] = min(1.0, max(0.0, 1.0 - thickness / cfg.w_g))
    return out


def preliminary_score(obs: Observation, object_id: int, p, cfg: AffordanceConfig = AffordanceConfig()) -> float:
    """clamp(1 - local thickness / gripper width), with the normal from local PCA."""
    pts = _object_points(obs, object_id)
    p = vec3(p)
    hit = np.nonzero(np.all(pts == p, axis=1))[0]
    if len(hit) == 0:
        raise ValueError("point is not part of the object's visible cloud")
    if len(pts) < 3:
        log.warning("degenerate cloud (%d points): normal undefined, score 0", len(pts))
        return 0.0
    return float(_preliminary_cached(obs, object_id, cfg)[hit[0]])


def _preliminary_cached(obs: Observation, object_id: int, cfg: AffordanceConfig) -> np.ndarray:
    cache = obs._prelim
    key = (object_id, cfg)
    if key not in cache:
        cache[key] = _preliminary_all(_object_points(obs, object_id), obs.h, cfg)
    return cache[key]


def _others(obs: Observation, object_id: int) -> np.ndarray:
    rest = [obs.points(j) for j in obs.ids if j != object_id]
    return np.concatenate(rest) if rest else np.zeros((0, 3))


def affordance_scores(obs: Observation, object_id: int, cfg: AffordanceConfig = AffordanceConfig()) -> np.ndarray:
    """Per visible point: preliminary score minus the strongest influence within eps_x."""
    pts = _object_points(obs, object_id)
    s = _preliminary_cached(obs, object_id, cfg).copy()
    others = _others(obs, object_id)
    if len(others):
        dist, _ = cKDTree(others).query(pts, k=1, distance_upper_bound=cfg.eps_x)
        near = dist < cfg.eps_x
        s[near] -= np.exp(-dist[near] / cfg.sig)
    return s


def affordance_map(obs: Observation, object_id: int, cfg: AffordanceConfig = AffordanceConfig()) -> List[GraspPoint]:
    pts = _object_points(obs, object_id)
    s = affordance_scores(obs, object_id, cfg)
    order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0], -s))
    return [GraspPoint(pts[i].copy(), float(s[i])) for i in order]


def _approach_axes(d: np.ndarray, n: int, seed: int) -> np.ndarray:
    """Approach axes: exactly -d and -z first, then jittered cones around both."""
    rng = np.random.default_rng(seed)
    base = [-d, np.array([0.0, 0.0, -1.0])]
    axes = [unit(b) for b in base]
    k = 0
    while len(axes) < n:
        centre = base[k % 2]
        k += 1
        tilt = math.radians(rng.uniform(5.0, 35.0))
        az = rng.uniform(0.0, 2 * math.pi)
        R = frame_from_axis(centre)
        local = np.array([math.sin(tilt) * math.cos(az), math.sin(tilt) * math.sin(az), math.cos(tilt)])
        axes.append(unit(R @ local))
    return np.asarray(axes[:n])


def corridor_clear(p: np.ndarray, approach: np.ndarray, others: np.ndarray, g_r: float, g_l: float) -> bool:
    """No point inside the cylinder from p back along -approach (radius g_r, length g_l)."""
    if len(others) == 0:
        return True
    rel = others - p
    t = -(rel @ approach)
    radial = rel + np.outer(t, approach)
    r2 = np.einsum("ij,ij->i", radial, radial)
    return not bool(np.any((t >= 0.0) & (t <= g_l) & (r2 < g_r * g_r)))


def select_grasp(obs: Observation, object_id: int, retrieval_dir, cfg: AffordanceConfig = AffordanceConfig(),
                 seed: int = 0) -> Action:
    d = unit(retrieval_dir)
    gmap = affordance_map(obs, object_id, cfg)
    if not gmap:
        raise UnreachableError("object unreachable")
    others = _others(obs, object_id)
    tree = cKDTree(others) if len(others) else None
    axes = _approach_axes(d, cfg.pose_samples, seed)
    reach = math.hypot(cfg.g_l, cfg.g_r)
    for gp in gmap:
        local = others
        if tree is not None:
            local = others[tree.query_ball_point(gp.position, reach + 1e-9)]
        for a in axes:
            if corridor_clear(gp.position, a, local, cfg.g_r, cfg.g_l):
                return Action(object_id, gp.position, GraspPose(frame_from_axis(a), cfg.g_r, cfg.g_l), d)
    raise UnreachableError("object unreachable")


def dump_affordance(obs: Observation, cfg: AffordanceConfig = AffordanceConfig()) -> str:
    """Per-point scores for every observed object, as canonical JSON."""
    out: Dict[str, list] = {}
    for oid in obs.ids:
        out[str(oid)] = [[_fmt(v) for v in g.position] + [_fmt(g.score)] for g in affordance_map(obs, oid, cfg)]
    return json.dumps({"format": "cluttersolve.affordance", "version": 1, "step": obs.step, "objects": out},
                      separators=(",", ":")) + "\n"
