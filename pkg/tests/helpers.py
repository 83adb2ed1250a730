"""Scene and cloud builders shared by the tests."""
from __future__ import annotations

import numpy as np

from cluttersolve.fixtures import _Builder


def stack(*layers, ground_extra=(), target=0, name="scripted"):
    """Scene from ((x, y, hx, hy, hz), ...) layers, each resting on the one below.

    ``ground_extra`` boxes stand on the ground.  ``target`` indexes the
    created objects in order.
    """
    b = _Builder()
    objs = []
    below = None
    for x, y, hx, hy, hz in layers:
        bottom = b.ground() if below is None else b.on(below)
        below = b.box(x, y, bottom, hx, hy, hz)
        objs.append(below)
    for x, y, hx, hy, hz in ground_extra:
        objs.append(b.box(x, y, b.ground(), hx, hy, hz))
    return b.scene(objs[target], name)


def builder():
    return _Builder()


def random_cloud(rng: np.random.Generator, n: int, scale: float = 0.1) -> np.ndarray:
    return np.ascontiguousarray(rng.uniform(-scale, scale, (n, 3)))
