"""Scripted scenes: towers, overhangs and occlusion set-ups with known answers.

Every fixture is built from a few boxes placed by hand.  ``load_fixture``
reads the shipped JSON copy; ``build_fixture`` rebuilds it from code so that
tests can check the two agree.
"""
from __future__ import annotations

import os
from typing import Callable, Dict, List, Optional

import numpy as np

from .scene import DEFAULT_H, Pose, RigidObject, SceneError, SceneState, Shape

FIXTURE_DIR = os.path.join(os.path.dirname(__file__), "fixtures")


class _Builder:
    """Places boxes bottom-up: on the ground, or one particle gap above a supporter's top."""

    def __init__(self, h: float = DEFAULT_H):
        self.h = h
        self.objects: List[RigidObject] = []

    def ground(self) -> float:
        return self.h / 2

    def on(self, *supporters: RigidObject) -> float:
        return max(s.top_z for s in supporters) + self.h

    def box(self, x: float, y: float, bottom: float, hx: float, hy: float, hz: float,
            yaw: float = 0.0, category: str = "box") -> RigidObject:
        shape = Shape.box(round(hx, 6), round(hy, 6), round(hz, 6))
        pose = Pose(round(x, 6), round(y, 6), round(bottom + shape.height / 2, 6), round(yaw, 6))
        o = RigidObject(len(self.objects), shape, pose, category, self.h)
        self.objects.append(o)
        return o

    def scene(self, target: RigidObject, name: str) -> SceneState:
        return SceneState({o.id: o for o in self.objects}, target.id, 0, h=self.h, preset=name)


def tower(n: int = 3, h: float = DEFAULT_H) -> SceneState:
    """``n`` boxes stacked straight up; the target is the bottom one.

    The blocks are 5 cm tall so that only vertically neighbouring blocks are
    within the adjacency radius.
    """
    if n < 2:
        raise SceneError("a tower needs at least two blocks")
    b = _Builder(h)
    below = b.box(0.0, 0.0, b.ground(), 0.04, 0.035, 0.025, category="block")
    first = below
    for k in range(1, n):
        below = b.box(0.0, 0.0, b.on(below), 0.04 - 0.004 * k, 0.035 - 0.003 * k, 0.025, category="block")
    b.box(0.15, 0.05, b.ground(), 0.03, 0.03, 0.02)
    return b.scene(first, "tower")


def overhang(k: int = 0, h: float = DEFAULT_H) -> SceneState:
    """A low box under the edge of a plank that rests on a pillar to its -x side.

    The plank covers the box's -x edge by ``overlap`` with a vertical gap of
    2-2.5 particles, so lifting straight up strikes the plank while directions
    tilted towards +x slide out from under it.  ``k`` selects a member of the
    scripted family; ``k = 0`` is the shipped fixture.
    """
    rng = np.random.default_rng([k, 0x0f3a])
    tx = rng.uniform(0.03, 0.05)
    ty = rng.uniform(0.03, 0.05)
    tz = rng.uniform(0.015, 0.03)
    gap = rng.uniform(0.02, 0.025)
    overlap = rng.uniform(0.01, 0.035)
    bx = rng.uniform(0.06, 0.09)
    bz = rng.uniform(0.006, 0.012)
    px = max(0.015, min(bx - overlap - 0.035, rng.uniform(0.015, 0.04)))
    b = _Builder(h)
    target = b.box(0.0, 0.0, b.ground(), tx, ty, tz, category="box")
    bcx = -tx + overlap - bx
    plank_bottom = target.top_z + gap
    pillar_h = plank_bottom - h - b.ground()
    pillar = b.box(bcx, 0.0, b.ground(), px, ty, pillar_h / 2, category="pillar")
    b.box(bcx, 0.0, b.on(pillar), bx, ty + 0.002, bz, category="plank")
    return b.scene(target, "overhang")


def fig3(h: float = DEFAULT_H) -> SceneState:
    """Occlusion hand-over: a mug-like base carries a tall box in front and a thin envelope behind it.

    From the default camera the envelope is hidden by the tall box.  Once the
    box is lifted away the envelope shows up on the target and must be taken
    off before the target can leave.
    """
    b = _Builder(h)
    mug = b.box(0.0, 0.0, b.ground(), 0.06, 0.06, 0.02, category="mug")
    b.box(0.0, -0.032, b.on(mug), 0.05, 0.025, 0.06, category="box")
    b.box(0.0, 0.033, b.on(mug), 0.042, 0.024, 0.005, category="envelope")
    b.box(0.17, -0.02, b.ground(), 0.035, 0.03, 0.025, category="box")
    b.box(-0.17, 0.04, b.ground(), 0.03, 0.045, 0.02, category="box")
    return b.scene(mug, "fig3")


def double_occlusion(h: float = DEFAULT_H) -> SceneState:
    """As ``fig3`` but the hidden envelope carries a second hidden object that leans off the back."""
    b = _Builder(h)
    mug = b.box(0.0, 0.0, b.ground(), 0.06, 0.06, 0.02, category="mug")
    b.box(0.0, -0.032, b.on(mug), 0.05, 0.025, 0.07, category="box")
    env = b.box(0.0, 0.035, b.on(mug), 0.042, 0.025, 0.005, category="envelope")
    b.box(0.0, 0.05, b.on(env), 0.03, 0.02, 0.006, category="card")
    b.box(0.17, -0.02, b.ground(), 0.035, 0.03, 0.025, category="box")
    return b.scene(mug, "double_occlusion")


BUILDERS: Dict[str, Callable[[], SceneState]] = {
    "tower": tower,
    "overhang": overhang,
    "fig3": fig3,
    "double_occlusion": double_occlusion,
}


def build_fixture(name: str) -> SceneState:
    try:
        return BUILDERS[name]()
    except KeyError:
        raise SceneError(f"unknown fixture {name!r}; choose from {', '.join(BUILDERS)}") from None


def fixture_path(name: str) -> str:
    return os.path.join(FIXTURE_DIR, f"{name}.json")


def load_fixture(name: str) -> SceneState:
    if name not in BUILDERS:
        raise SceneError(f"unknown fixture {name!r}; choose from {', '.join(BUILDERS)}")
    return SceneState.load(fixture_path(name))


def write_fixtures(directory: Optional[str] = None) -> List[str]:
    """Regenerate the JSON copies (used when a builder changes)."""
    directory = directory or FIXTURE_DIR
    os.makedirs(directory, exist_ok=True)
    out = []
    for name in BUILDERS:
        path = os.path.join(directory, f"{name}.json")
        build_fixture(name).save(path)
        out.append(path)
    return out
