"""Procedural tabletop clutter: sequential vertical-drop placement with stability checks."""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .geometry import (clip_convex, min_pair_distance_below, point_in_hull_2d, polygon_distance,
                       polygons_overlap)
from .physics import DEFAULT_SIM, SimParams, settle, stability_margin
from .scene import DEFAULT_H, Pose, RigidObject, SceneError, SceneState, Shape


class GenerationOverflow(SceneError):
    pass


@dataclass(frozen=True)
class GeneratorPreset:
    name: str
    half_x: Tuple[float, float]
    aspect: Tuple[float, float]
    half_z: Tuple[float, float]
    prism_prob: float = 0.0
    stack_bias: float = 0.45
    count_mean: int = 15
    count_range: Tuple[int, int] = (8, 22)
    workspace: float = 0.26
    max_height: float = 0.4

    def __post_init__(self):
        for lo, hi in (self.half_x, self.aspect, self.half_z):
            if not 0 < lo <= hi:
                raise ValueError(f"preset {self.name}: ranges must be positive and ordered")
        if not (0 <= self.prism_prob <= 1 and 0 <= self.stack_bias <= 1):
            raise ValueError(f"preset {self.name}: probabilities must lie in [0, 1]")

    def sample_count(self, rng: np.random.Generator) -> int:
        lo, hi = self.count_range
        return int(rng.integers(lo, hi + 1))

    def sample_shape(self, rng: np.random.Generator, cap: float = math.inf) -> Tuple[Shape, str]:
        """Random box or prism; ``cap`` bounds the larger half extent (used when stacking)."""
        hx = _q(min(rng.uniform(*self.half_x), cap))
        hy = _q(hx * rng.uniform(*self.aspect))
        hz = _q(rng.uniform(*self.half_z))
        if rng.random() < self.prism_prob:
            k = int(rng.integers(5, 9))
            ang = (np.arange(k) + rng.uniform(-0.25, 0.25, k)) * (2 * math.pi / k)
            verts = np.column_stack([hx * np.cos(ang), hy * np.sin(ang)])
            return Shape.prism(verts, 2 * hz), "prism"
        return Shape.box(hx, hy, hz), "box"


PRESETS: Dict[str, GeneratorPreset] = {
    "kitchen": GeneratorPreset("kitchen", (0.03, 0.07), (0.6, 1.0), (0.012, 0.045), prism_prob=0.35, stack_bias=0.5),
    "desk": GeneratorPreset("desk", (0.035, 0.075), (0.45, 0.9), (0.008, 0.03), prism_prob=0.1, stack_bias=0.55),
    "food": GeneratorPreset("food", (0.025, 0.055), (0.5, 1.0), (0.02, 0.06), prism_prob=0.25, stack_bias=0.4),
    "sundries": GeneratorPreset("sundries", (0.02, 0.06), (0.4, 1.0), (0.01, 0.05), prism_prob=0.5, stack_bias=0.45),
}


def get_preset(name: str) -> GeneratorPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise SceneError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None


def _q(x: float) -> float:
    return round(float(x), 6)


def scene_rng(preset: str, n_objects: int, seed: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & (2**63 - 1), zlib.crc32(preset.encode()), int(n_objects)])


def _landing(obj: RigidObject, placed: List[RigidObject], h: float):
    """Bottom height after a vertical drop, the supporters, and whether the drop is rejected.

    A drop is rejected when the new footprint hangs over a lower object that
    is not shielded by a supporter, or when it would rest on something it
    only grazes at the rim.
    """
    fp = obj.footprint()
    under = [o for o in placed if polygon_distance(fp, o.footprint()) < h]
    z = h / 2
    for o in under:
        z = max(z, o.top_z + h)
    level = [o for o in under if abs(o.top_z + h - z) < 1e-9]
    supporters = [o for o in level if polygons_overlap(fp, o.footprint())]
    if len(supporters) != len(level):
        return z, supporters, True
    sup_fps = [o.footprint() for o in supporters]
    for o in under:
        if o in level:
            continue
        shadow = clip_convex(o.footprint(), fp)
        if len(shadow) == 0:
            continue
        probes = np.vstack([shadow, shadow.mean(axis=0)])
        if not all(any(point_in_hull_2d(p, sf, h / 2) for sf in sup_fps) for p in probes):
            return z, supporters, True
    return z, supporters, False


def generate_clutter(preset: GeneratorPreset | str, n_objects: int, seed: int,
                     h: float = DEFAULT_H, params: SimParams = DEFAULT_SIM,
                     max_tries: int = 400) -> SceneState:
    """Place ``n_objects`` one by one; each must land stably without touching anything sideways."""
    if isinstance(preset, str):
        preset = get_preset(preset)
    if n_objects < 1:
        raise SceneError("n_objects must be >= 1")
    rng = scene_rng(preset.name, n_objects, seed)
    placed: List[RigidObject] = []
    supports: Dict[int, List[int]] = {}
    level: Dict[int, int] = {}
    drift: Dict[int, Tuple[float, float]] = {}
    min_margin = 2 * h
    W = preset.workspace
    for oid in range(n_objects):
        for _ in range(max_tries):
            base = None
            if placed and rng.random() < preset.stack_bias:
                # favour already-stacked bases so that support chains form
                w = np.array([(1.0 + level[o.id]) ** 3 for o in placed])
                base = placed[int(rng.choice(len(placed), p=w / w.sum()))]
            if base is not None:
                bx, by, _ = base.shape.half_extents
                shape, cat = preset.sample_shape(rng, cap=max(2 * h, 1.1 * max(bx, by)))
                ox, oy = rng.uniform(-0.9, 0.9, 2)
                lean = drift.get(base.id)
                if lean is not None:
                    # piles fan out: keep leaning the way the base leans on its own supporter
                    ox = math.copysign(rng.uniform(0.4, 0.9), lean[0])
                    oy = math.copysign(rng.uniform(0.4, 0.9), lean[1])
                x = base.pose.x + ox * bx
                y = base.pose.y + oy * by
            else:
                shape, cat = preset.sample_shape(rng)
                reach = max(abs(v) for xy in shape.vertices for v in xy)
                x = rng.uniform(-W + reach, W - reach)
                y = rng.uniform(-W + reach, W - reach)
            yaw = _q(rng.uniform(0, math.pi))
            probe = RigidObject(oid, shape, Pose(_q(x), _q(y), 0.0, yaw), cat, h)
            bottom, sup, bad = _landing(probe, placed, h)
            if bad:
                continue
            obj = probe.moved_to(Pose(probe.pose.x, probe.pose.y, _q(bottom + shape.height / 2), yaw))
            if obj.top_z > preset.max_height:
                continue
            trial = SceneState({o.id: o for o in placed + [obj]}, oid, seed, h=h, preset=preset.name)
            if stability_margin(trial, obj, params) < min_margin:
                continue
            sup_ids = {o.id for o in sup}
            if any(min_pair_distance_below(obj.particles, o.particles, h) < h
                   for o in placed if o.id not in sup_ids):
                continue
            _, recs = settle(trial, params, dirty=[oid])
            if recs:
                continue
            placed.append(obj)
            supports[oid] = sorted(sup_ids)
            level[oid] = 1 + max((level[i] for i in sup_ids), default=-1)
            if base is not None:
                drift[oid] = (obj.pose.x - base.pose.x, obj.pose.y - base.pose.y)
            break
        else:
            raise GenerationOverflow(f"generation overflow: could not place object {oid} "
                                     f"(preset={preset.name}, seed={seed})")
    # targets sit under piles: weight each object by the depth of the pile it carries
    above: Dict[int, List[int]] = {}
    for j, ss in supports.items():
        for i in ss:
            above.setdefault(i, []).append(j)
    depth: Dict[int, int] = {}
    for o in reversed(placed):
        depth[o.id] = 1 + max((depth[j] for j in above.get(o.id, [])), default=-1)
    ids = [o.id for o in placed]
    w = np.array([depth[i] ** 4 for i in ids], dtype=float)
    if w.sum() == 0.0:
        w[:] = 1.0
    target = int(ids[int(rng.choice(len(ids), p=w / w.sum()))])
    scene = SceneState({o.id: o for o in placed}, target, int(seed), h=h, preset=preset.name)
    scene.borderline = borderline_flags(scene, supports, params)
    return scene


def borderline_flags(scene: SceneState, supports: Dict[int, List[int]],
                     params: SimParams = DEFAULT_SIM) -> Dict[int, str]:
    """Objects whose support is close to a stability boundary.

    Either the centre of mass sits within 3h of the support hull edge, or the
    object bridges several supporters so that losing one may or may not topple it.
    """
    out: Dict[int, str] = {}
    for o in scene.active():
        if not supports.get(o.id):
            continue
        if stability_margin(scene, o, params) < 3 * scene.h:
            out[o.id] = "low_margin"
        elif len(supports.get(o.id, [])) > 1:
            out[o.id] = "multi_support"
    return out


def sample_scene(preset: str, seed: int, n_range: Optional[Tuple[int, int]] = None) -> SceneState:
    """Scene with a preset-drawn object count (deterministic in ``seed``)."""
    p = get_preset(preset)
    rng = scene_rng(preset, 0, seed)
    lo, hi = n_range if n_range else p.count_range
    n = int(rng.integers(lo, hi + 1))
    return generate_clutter(p, n, seed)
