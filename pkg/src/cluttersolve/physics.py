"""Quasi-static ground-truth dynamics: settle, kinematic retrieval, and oracles.

Objects never rotate.  An object is stable when the projection of its centre
of mass lies inside the hull of its bottom particles that have a supporter
particle (or the ground) within the contact margin directly below.  Unstable
objects drop straight down in ``delta_settle`` steps; a retrieved object is
swept along its direction and carries whatever it touches.
"""
from __future__ import annotations

import logging
import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Set, Tuple

import numpy as np

from .geometry import Aabb, convex_hull_2d, hull_margin_2d, point_in_hull_2d, sweep_first_step, unit
from .graph import SupportGraph
from .scene import MovementRecord, RigidObject, SceneError, SceneState

log = logging.getLogger(__name__)


class SettleDivergence(RuntimeError):
    pass


@dataclass(frozen=True)
class SimParams:
    th_move: float = 0.005
    delta_settle: float = 0.005
    delta_sweep: float = 0.005
    contact_margin_h: float = 1.5
    push_margin_h: float = 0.5
    lateral_tol_h: float = 0.75
    support_tol: float = 1e-6
    max_passes: int = 400


DEFAULT_SIM = SimParams()


def _xy_overlap(a: Aabb, b: Aabb, pad: float) -> bool:
    return bool(a.min_corner[0] - pad <= b.max_corner[0] and b.min_corner[0] <= a.max_corner[0] + pad
                and a.min_corner[1] - pad <= b.max_corner[1] and b.min_corner[1] <= a.max_corner[1] + pad)


def _support_pairs(scene: SceneState, o: RigidObject, params: SimParams, zmin: float = -math.inf):
    """(bottom index, supporter z, owner id) for particles under o's bottom layer.

    Only supporter particles at least h/2 below the bottom layer and within the
    lateral tolerance count.  The ground is a virtual layer at z = -h/2 with
    owner id -1.
    """
    h = scene.h
    lat = params.lateral_tol_h * h
    bottom = o.particles[o.bottom_mask]
    bz = o.bottom_z
    bmin = bottom[:, :2].min(axis=0) - lat
    bmax = bottom[:, :2].max(axis=0) + lat
    idx_l, z_l, own_l = [np.arange(len(bottom))], [np.full(len(bottom), -h / 2)], [np.full(len(bottom), -1)]
    for other in scene.active():
        if other.id == o.id or other.bottom_z >= bz:
            continue
        q = other.particles
        sel = ((q[:, 2] <= bz - h / 2 + 1e-12) & (q[:, 2] >= zmin)
               & (q[:, 0] >= bmin[0]) & (q[:, 0] <= bmax[0]) & (q[:, 1] >= bmin[1]) & (q[:, 1] <= bmax[1]))
        if not sel.any():
            continue
        q = q[sel]
        dx = bottom[:, None, 0] - q[None, :, 0]
        dy = bottom[:, None, 1] - q[None, :, 1]
        bi, qi = np.nonzero(dx * dx + dy * dy <= lat * lat)
        if len(bi):
            idx_l.append(bi)
            z_l.append(q[qi, 2])
            own_l.append(np.full(len(bi), other.id))
    return bottom, np.concatenate(idx_l), np.concatenate(z_l), np.concatenate(own_l)


def support_contacts(scene: SceneState, o: RigidObject, params: SimParams = DEFAULT_SIM):
    """Bottom particles of ``o`` currently in supporting contact, and their supporter ids."""
    h = scene.h
    margin = params.contact_margin_h * h
    bottom, bi, qz, own = _support_pairs(scene, o, params, zmin=o.bottom_z - margin - 1e-9)
    gap = o.bottom_z - qz
    act = (gap >= h / 2 - 1e-9) & (gap <= margin + 1e-9)
    return bottom[np.unique(bi[act])], sorted(set(int(x) for x in own[act]))


def is_stable(scene: SceneState, o: RigidObject, params: SimParams = DEFAULT_SIM) -> bool:
    pts, _ = support_contacts(scene, o, params)
    if len(pts) == 0:
        return False
    return point_in_hull_2d(o.com[:2], convex_hull_2d(pts[:, :2]), params.support_tol)


def stability_margin(scene: SceneState, o: RigidObject, params: SimParams = DEFAULT_SIM) -> float:
    """Signed distance of the COM projection to the support hull boundary."""
    pts, _ = support_contacts(scene, o, params)
    if len(pts) == 0:
        return -math.inf
    return hull_margin_2d(o.com[:2], convex_hull_2d(pts[:, :2]))


def drop_steps(scene: SceneState, o: RigidObject, params: SimParams = DEFAULT_SIM) -> int:
    """Number of settle steps until ``o`` lands stably (or on the ground).

    Equivalent to stepping down by ``delta_settle`` and testing stability at
    every step: stability can only be gained when a new contact enters the
    margin window, so only those step indices are examined.  Contacts whose
    window has been passed are fallen through.
    """
    h = scene.h
    margin = params.contact_margin_h * h
    delta = params.delta_settle
    bottom, bi, qz, _ = _support_pairs(scene, o, params)
    g0 = o.bottom_z - qz
    k_in = np.ceil((g0 - margin) / delta - 1e-9).astype(np.int64)
    k_out = np.floor((g0 - h / 2) / delta + 1e-9).astype(np.int64)
    com = o.com[:2]
    for k in np.unique(np.maximum(k_in, 1)):
        act = (k_in <= k) & (k_out >= k)
        if not act.any():
            continue
        pts = bottom[np.unique(bi[act]), :2]
        if point_in_hull_2d(com, convex_hull_2d(pts), params.support_tol):
            return int(k)
    # unreachable in practice: the ground window always yields a full footprint
    return int(max(1, k_in.max()))


def settle(scene: SceneState, params: SimParams = DEFAULT_SIM,
           dirty: Optional[Iterable[int]] = None) -> Tuple[SceneState, List[MovementRecord]]:
    """Drop unstable objects until every active object is stable.

    ``dirty`` restricts the initial check to the given ids; anything whose
    footprint overlaps a dropped object is re-checked on the next pass.
    """
    s = scene.clone()
    active = set(s.active_ids)
    pending = active if dirty is None else set(dirty) & active
    start = {i: s.objects[i].pose.t for i in active}
    lat = params.lateral_tol_h * s.h
    for _ in range(params.max_passes):
        if not pending:
            break
        order = sorted(pending, key=lambda i: (s.objects[i].bottom_z, i))
        pending = set()
        for oid in order:
            o = s.objects[oid]
            if is_stable(s, o, params):
                continue
            k = drop_steps(s, o, params)
            s.objects[oid] = o.translated((0.0, 0.0, -k * params.delta_settle))
            box = s.objects[oid].aabb
            for other in s.active():
                if other.id != oid and other.bottom_z > s.objects[oid].bottom_z \
                        and _xy_overlap(box, other.aabb, lat):
                    pending.add(other.id)
    else:
        raise SettleDivergence(f"settle divergence after {params.max_passes} passes")
    records = []
    for i in sorted(active):
        dv = s.objects[i].pose.t - start[i]
        d = float(np.sqrt(dv @ dv))
        if d > 0.0:
            records.append(MovementRecord(i, d, 0.0))
    return s, records


def _clear_steps(mover: Aabb, statics: Optional[Aabb], d: np.ndarray, delta: float, margin: float) -> int:
    """Steps until the mover's box no longer overlaps the scene box."""
    if statics is None:
        return 0
    s_end = math.inf
    for a in range(3):
        if d[a] > 1e-12:
            s_end = min(s_end, (statics.max_corner[a] + margin - mover.min_corner[a]) / d[a])
        elif d[a] < -1e-12:
            s_end = min(s_end, (mover.max_corner[a] - statics.min_corner[a] + margin) / -d[a])
        elif mover.min_corner[a] > statics.max_corner[a] + margin or mover.max_corner[a] < statics.min_corner[a] - margin:
            s_end = 0.0
    s_end = max(0.0, s_end)
    return int(math.ceil(s_end / delta - 1e-9))


def _union_box(objs: List[RigidObject]) -> Optional[Aabb]:
    if not objs:
        return None
    boxes = [o.aabb for o in objs]
    return Aabb(np.min([b.min_corner for b in boxes], axis=0), np.max([b.max_corner for b in boxes], axis=0))


def sweep_phase(scene: SceneState, object_id: int, d, params: SimParams = DEFAULT_SIM
                ) -> Tuple[SceneState, List[int]]:
    """Translate the object along ``d`` until it clears the scene; touched objects ride along.

    Returns the scene after the sweep (mover still present) and the ids pushed.
    """
    s = scene.clone()
    mover = s.get(object_id)
    d = unit(d)
    delta = params.delta_sweep
    margin = params.push_margin_h * s.h
    group = [object_id]
    # the scene box is fixed before the sweep; carried objects do not extend it
    k_end = _clear_steps(mover.aabb, _union_box([o for o in s.active() if o.id != object_id]),
                         d, delta, margin)
    done = 0
    while done < k_end:
        statics = [o for o in s.active() if o.id not in group]
        left = k_end - done
        gboxes = [s.objects[g].aabb for g in group]
        swept = Aabb(np.min([b.min_corner for b in gboxes], axis=0) + np.minimum(0, d * left * delta),
                     np.max([b.max_corner for b in gboxes], axis=0) + np.maximum(0, d * left * delta))
        best, hits = left + 1, []
        for st in statics:
            if not swept.expanded(margin).overlaps(st.aabb):
                continue
            k_o = -1
            for g in group:
                k = sweep_first_step(s.objects[g].particles, st.particles, d, delta, min(left, best), margin)
                if k >= 0 and (k_o < 0 or k < k_o):
                    k_o = k
            if k_o < 0:
                continue
            if k_o < best:
                best, hits = k_o, [st.id]
            elif k_o == best:
                hits.append(st.id)
        step = left if not hits or best >= left else best
        if step > 0:
            shift = d * (step * delta)
            for g in group:
                s.objects[g] = s.objects[g].translated(shift)
            done += step
        if not hits or best >= left:
            break
        group.extend(sorted(hits))
    return s, group[1:]


def execute_retrieval(scene: SceneState, object_id: int, d, params: SimParams = DEFAULT_SIM
                      ) -> Tuple[SceneState, List[MovementRecord]]:
    """Sweep ``object_id`` out of the scene along ``d``, then settle the rest.

    Returns the new scene (object marked removed, left at its initial pose) and
    one movement record for every other active object.
    """
    if object_id not in scene.objects or object_id in scene.removed:
        raise SceneError(f"unknown object id {object_id}")
    swept, pushed = sweep_phase(scene, object_id, d, params)
    swept.objects[object_id] = scene.objects[object_id]
    swept.removed = scene.removed | {object_id}
    dirty = _dirty_after_removal(swept, scene.objects[object_id], params) | set(pushed)
    peak = {i: swept.objects[i] for i in pushed}
    settled, _ = settle(swept, params, dirty)
    return settled, _records(scene, settled, exclude=object_id, peak=peak)


def _dirty_after_removal(scene: SceneState, gone: RigidObject, params: SimParams) -> Set[int]:
    box = gone.aabb
    lat = params.lateral_tol_h * scene.h
    return {o.id for o in scene.active() if o.bottom_z > gone.bottom_z and _xy_overlap(box, o.aabb, lat)}


def _records(before: SceneState, after: SceneState, exclude: int,
             peak: Optional[Dict[int, RigidObject]] = None) -> List[MovementRecord]:
    """Displacement per object: final offset, or the carried distance if larger.

    An object lifted by the sweep and dropped back in place still moved.
    """
    out = []
    for i in after.active_ids:
        if i == exclude:
            continue
        t0 = before.objects[i].pose.t
        dv = after.objects[i].pose.t - t0
        dist = float(np.sqrt(dv @ dv))
        if peak and i in peak:
            dp = peak[i].pose.t - t0
            dist = max(dist, float(np.sqrt(dp @ dp)))
        out.append(MovementRecord(i, dist, 0.0))
    return out


def remove_in_place(scene: SceneState, object_id: int, params: SimParams = DEFAULT_SIM
                    ) -> Tuple[SceneState, List[MovementRecord]]:
    """Delete an object without sweeping it and settle the rest."""
    gone = scene.get(object_id)
    s = scene.clone()
    s.removed = scene.removed | {object_id}
    settled, _ = settle(s, params, _dirty_after_removal(s, gone, params))
    return settled, _records(scene, settled, exclude=object_id)


class _LRU(OrderedDict):
    def __init__(self, size: int):
        super().__init__()
        self.size = size

    def put(self, k, v):
        self[k] = v
        self.move_to_end(k)
        while len(self) > self.size:
            self.popitem(last=False)


_removal_cache = _LRU(4096)


def oracle_movement(scene: SceneState, mover_id: int, d, params: SimParams = DEFAULT_SIM) -> Dict[int, float]:
    """Displacement of every other active object if ``mover_id`` were retrieved along ``d``.

    Pure: the input scene is not modified.  When the sweep touches nothing the
    outcome equals plain removal, which is memoised per scene state.
    """
    if mover_id not in scene.objects or mover_id in scene.removed:
        raise SceneError(f"unknown object id {mover_id}")
    swept, pushed = sweep_phase(scene, mover_id, d, params)
    if not pushed:
        key = (scene.state_key(), scene.h, mover_id, params)
        hit = _removal_cache.get(key)
        if hit is None:
            _, recs = remove_in_place(scene, mover_id, params)
            hit = {r.object_id: r.displacement for r in recs}
            _removal_cache.put(key, hit)
        return dict(hit)
    swept.objects[mover_id] = scene.objects[mover_id]
    swept.removed = scene.removed | {mover_id}
    dirty = _dirty_after_removal(swept, scene.objects[mover_id], params) | set(pushed)
    peak = {i: swept.objects[i] for i in pushed}
    settled, _ = settle(swept, params, dirty)
    return {r.object_id: r.displacement for r in _records(scene, settled, exclude=mover_id, peak=peak)}


def removal_movement(scene: SceneState, object_id: int, params: SimParams = DEFAULT_SIM) -> Dict[int, float]:
    key = (scene.state_key(), scene.h, object_id, params)
    hit = _removal_cache.get(key)
    if hit is None:
        _, recs = remove_in_place(scene, object_id, params)
        hit = {r.object_id: r.displacement for r in recs}
        _removal_cache.put(key, hit)
    return dict(hit)


def oracle_support_graph(scene: SceneState, params: SimParams = DEFAULT_SIM) -> SupportGraph:
    """Brute-force support relations: i -> j iff deleting i and settling moves j."""
    g = SupportGraph(target=scene.target_id if scene.target_id not in scene.removed else None,
                     nodes=set(scene.active_ids))
    for i in scene.active_ids:
        for j, disp in sorted(removal_movement(scene, i, params).items()):
            if disp > params.th_move:
                g.edges.add((i, j))
    return g
