"""Backend selection for the particle kernels.

The compiled extension is preferred; the numpy twin is used when it cannot be
imported or when ``CLUTTERSOLVE_PURE=1`` is set in the environment.
"""
from __future__ import annotations

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("CLUTTERSOLVE_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels

min_pair_distance = _impl.min_pair_distance
farthest_point_indices = _impl.farthest_point_indices
first_contact_step = _impl.first_contact_step
splat_nearest = _impl.splat_nearest
hull_sweep = _impl.hull_sweep

__all__ = [
    "BACKEND",
    "min_pair_distance",
    "farthest_point_indices",
    "first_contact_step",
    "splat_nearest",
    "hull_sweep",
]
