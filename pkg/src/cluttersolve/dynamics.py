"""Local dynamics prediction: will the neighbour move if the mover is retrieved along d?

``GeometricPredictor`` looks only at the two (downsampled) clouds and the
direction.  ``OracleBackedPredictor`` answers from the simulator and exists to
test the planner independently of prediction error.
"""
from __future__ import annotations

import hashlib
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from . import kernels
from .geometry import ParticleCloud, clip_convex, convex_hull_2d, farthest_point_indices, polygon_area, unit
from .observation import Observation, adjacency
from .physics import DEFAULT_SIM, SimParams, oracle_movement, removal_movement
from .scene import SceneState

DEFAULT_R = 256


class NonLocalQuery(ValueError):
    pass


@dataclass(frozen=True)
class DynamicsQuery:
    mover_id: int
    neighbor_id: int
    direction: np.ndarray
    mover_cloud: ParticleCloud
    neighbor_cloud: ParticleCloud

    def __post_init__(self):
        if self.mover_id == self.neighbor_id:
            raise ValueError("mover and neighbour must differ")


@dataclass(frozen=True)
class MovementPrediction:
    moves: bool
    magnitude: float

    @classmethod
    def of(cls, magnitude: float, th_move: float) -> "MovementPrediction":
        return cls(bool(magnitude > th_move), float(magnitude))


def downsample(obs: Observation, oid: int, r: int) -> ParticleCloud:
    pts = obs.points(oid)
    if len(pts) <= r:
        return ParticleCloud(pts, obs.h)
    return ParticleCloud(pts[farthest_point_indices(pts, r, 0)], obs.h)


def make_query(obs: Observation, mover_id: int, neighbor_id: int, d, r: int = DEFAULT_R,
               eps_adj: Optional[float] = None, check_adjacent: bool = True) -> DynamicsQuery:
    """Pair query with both clouds farthest-point sampled to at most ``r`` points."""
    if check_adjacent and neighbor_id not in adjacency(obs, mover_id, eps_adj):
        raise NonLocalQuery(f"non-local query refused: {neighbor_id} is not adjacent to {mover_id}")
    cache = obs._fps
    for oid in (mover_id, neighbor_id):
        if (oid, r) not in cache:
            cache[(oid, r)] = downsample(obs, oid, r)
    return DynamicsQuery(mover_id, neighbor_id, unit(d), cache[(mover_id, r)], cache[(neighbor_id, r)])


class DynamicsPredictor:
    """Interface: ``predict`` for one direction, ``predict_dirs`` for many."""

    th_move: float = DEFAULT_SIM.th_move

    def bind(self, scene: SceneState) -> None:
        """Called by the planner with the current world state (ignored by local predictors)."""

    def predict(self, q: DynamicsQuery) -> MovementPrediction:
        raise NotImplementedError

    def support(self, q: DynamicsQuery) -> MovementPrediction:
        """Direction-free relation: does the neighbour move if the mover simply vanishes?"""
        raise NotImplementedError

    def magnitudes(self, q: DynamicsQuery, dirs: np.ndarray) -> np.ndarray:
        out = np.empty(len(dirs))
        for k, d in enumerate(dirs):
            out[k] = self.predict(_with_dir(q, d)).magnitude
        return out


def _with_dir(q: DynamicsQuery, d) -> DynamicsQuery:
    return DynamicsQuery(q.mover_id, q.neighbor_id, np.asarray(d, dtype=float), q.mover_cloud, q.neighbor_cloud)


def _cloud_key(c: ParticleCloud) -> bytes:
    return hashlib.blake2b(c.points.tobytes(), digest_size=16).digest()


class _Lru(OrderedDict):
    def __init__(self, size):
        super().__init__()
        self.size = size

    def put(self, k, v):
        self[k] = v
        if len(self) > self.size:
            self.popitem(last=False)


@dataclass(frozen=True)
class _Hull:
    normals: np.ndarray
    offsets: np.ndarray


def _inflated_hull(pts: np.ndarray, h: float) -> _Hull:
    """Convex hull of the points dilated by h/2 along each axis (the particle extent)."""
    off = np.vstack([np.zeros(3), np.eye(3) * (h / 2), -np.eye(3) * (h / 2)])
    cloud = (pts[:, None, :] + off[None, :, :]).reshape(-1, 3)
    try:
        hull = ConvexHull(cloud)
    except QhullError:
        hull = ConvexHull(cloud, qhull_options="QJ")
    eq = hull.equations
    return _Hull(np.ascontiguousarray(eq[:, :3]), np.ascontiguousarray(-eq[:, 3]))


def _outside_distance(pts: np.ndarray, hull: np.ndarray) -> np.ndarray:
    """Largest outward edge distance of each point from a CCW convex polygon (<= 0 inside)."""
    a = hull
    e = np.roll(hull, -1, axis=0) - a
    n = np.stack([e[:, 1], -e[:, 0]], axis=1) / np.linalg.norm(e, axis=1)[:, None]
    return ((pts[:, None, :] - a[None, :, :]) * n[None, :, :]).sum(axis=2).max(axis=1)


class GeometricPredictor(DynamicsPredictor):
    """Support loss from stacked footprints plus a swept-hull push test.

    Support loss: the neighbour's lowest visible point sits one particle gap
    above the mover's highest point and the footprints overlap by at least
    ``rho`` of the smaller one.  The predicted drop is the
    mover's height (capped).  Push: the dilated mover hull swept along ``d``
    meets the dilated neighbour hull within ``sweep_len``; magnitude is the
    remaining travel.  A neighbour resting on the mover's top is met at once
    by every rising direction.
    """

    def __init__(self, th_move: float = DEFAULT_SIM.th_move, rho: float = 0.5, gap_cap: float = 0.3,
                 sweep_len: float = 0.75, h: float = 0.01, z_tol_h: float = 0.75, lateral_tol_h: float = 1.5):
        self.th_move = th_move
        self.rho = rho
        self.gap_cap = gap_cap
        self.sweep_len = sweep_len
        self.h = h
        self.z_tol = z_tol_h * h
        self.lateral_tol = lateral_tol_h * h
        self._pair = _Lru(8192)
        self._hulls = _Lru(2048)

    def _hull(self, c: ParticleCloud, key: bytes) -> _Hull:
        hit = self._hulls.get(key)
        if hit is None:
            hit = _inflated_hull(c.points, self.h)
            self._hulls.put(key, hit)
        return hit

    def contact(self, mover: np.ndarray, nb: np.ndarray) -> Tuple[bool, float, bool]:
        """(resting, support fraction, touching) for a neighbour above the mover.

        Resting: the neighbour's base sits one particle gap above the mover's
        highest visible point.  When every top-layer point of the mover lies
        under the neighbour, the true top face is hidden and may be up to one
        particle higher, so a gap of two particles also counts.

        Support fraction: the footprint overlap relative to the smaller
        footprint, or the share of the mover's top-layer points lying under
        the neighbour (a covered mover shows only its side faces).

        Touching: resting with any footprint contact; the mover's extent
        under the neighbour is unknown, so any rising motion lifts it.
        """
        gap = float(nb[:, 2].min()) - float(mover[:, 2].max()) - self.h
        if not -self.z_tol <= gap <= self.z_tol + self.h:
            return False, 0.0, False
        nb_fp = convex_hull_2d(nb[:, :2])
        if len(nb_fp) < 3:
            return False, 0.0, False
        top = mover[mover[:, 2] >= mover[:, 2].max() - self.h / 2, :2]
        near = _outside_distance(top, nb_fp) <= self.lateral_tol
        covered = float(np.mean(near))
        if gap > self.z_tol and covered < 1.0:
            return False, 0.0, False
        mv_fp = convex_hull_2d(mover[:, :2])
        frac = 0.0
        if len(mv_fp) >= 3:
            area = min(polygon_area(nb_fp), polygon_area(mv_fp))
            if area > 0.0:
                frac = polygon_area(clip_convex(nb_fp, mv_fp)) / area
        return True, max(frac, covered), bool(frac > 0.0 or near.any())

    def support_fraction(self, mover: np.ndarray, nb: np.ndarray) -> float:
        return self.contact(mover, nb)[1]

    def support_magnitude(self, mover: np.ndarray, nb: np.ndarray, contact=None) -> float:
        resting, frac, _ = contact or self.contact(mover, nb)
        if not resting or frac < self.rho:
            return 0.0
        return min(self.gap_cap, max(float(nb[:, 2].min()) - float(mover[:, 2].min()), 2 * self.th_move))

    def touches_top(self, mover: np.ndarray, nb: np.ndarray) -> bool:
        return self.contact(mover, nb)[2]

    def _pair_state(self, q: DynamicsQuery):
        km, kn = _cloud_key(q.mover_cloud), _cloud_key(q.neighbor_cloud)
        key = (km, kn)
        st = self._pair.get(key)
        if st is None:
            m, n = q.mover_cloud.points, q.neighbor_cloud.points
            c = self.contact(m, n)
            st = (self.support_magnitude(m, n, c), self._hull(q.mover_cloud, km), self._hull(q.neighbor_cloud, kn), c[2])
            self._pair.put(key, st)
        return st

    def sweep_distance(self, q: DynamicsQuery, dirs: np.ndarray) -> np.ndarray:
        """Travel along each direction before the two dilated hulls meet (inf if never)."""
        _, hm, hn, resting = self._pair_state(q)
        dirs = np.ascontiguousarray(dirs, dtype=float).reshape(-1, 3)
        a = kernels.hull_sweep(q.mover_cloud.points, hn.normals, hn.offsets, dirs, self.sweep_len)
        b = kernels.hull_sweep(q.neighbor_cloud.points, hm.normals, hm.offsets,
                               np.ascontiguousarray(-dirs), self.sweep_len)
        s = np.minimum(a, b)
        if resting:
            s[dirs[:, 2] > 0.0] = 0.0
        return s

    def magnitudes(self, q: DynamicsQuery, dirs: np.ndarray) -> np.ndarray:
        sup = self._pair_state(q)[0]
        s = self.sweep_distance(q, dirs)
        push = np.where(np.isfinite(s), self.sweep_len - s, 0.0)
        return np.maximum(push, sup)

    def predict(self, q: DynamicsQuery) -> MovementPrediction:
        return MovementPrediction.of(float(self.magnitudes(q, q.direction[None, :])[0]), self.th_move)

    def support(self, q: DynamicsQuery) -> MovementPrediction:
        return MovementPrediction.of(self._pair_state(q)[0], self.th_move)


class OracleBackedPredictor(DynamicsPredictor):
    """Answers each query with the simulated displacement of the neighbour."""

    def __init__(self, scene: Optional[SceneState] = None, params: SimParams = DEFAULT_SIM):
        self.scene = scene
        self.params = params
        self.th_move = params.th_move
        self._memo = _Lru(4096)

    def bind(self, scene: SceneState) -> None:
        self.scene = scene

    def movement(self, mover_id: int, d) -> Dict[int, float]:
        if self.scene is None:
            raise RuntimeError("oracle predictor has no scene bound")
        d = unit(d)
        key = (self.scene.state_key(), mover_id, d.tobytes())
        hit = self._memo.get(key)
        if hit is None:
            hit = oracle_movement(self.scene, mover_id, d, self.params)
            self._memo.put(key, hit)
        return hit

    def predict(self, q: DynamicsQuery) -> MovementPrediction:
        return MovementPrediction.of(self.movement(q.mover_id, q.direction).get(q.neighbor_id, 0.0),
                                     self.th_move)

    def support(self, q: DynamicsQuery) -> MovementPrediction:
        if self.scene is None:
            raise RuntimeError("oracle predictor has no scene bound")
        return MovementPrediction.of(removal_movement(self.scene, q.mover_id, self.params).get(q.neighbor_id, 0.0),
                                     self.th_move)
