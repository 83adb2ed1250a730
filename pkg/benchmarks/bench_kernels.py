"""Time the compiled particle kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--csv out.csv] [--episode]

Each kernel is run on the same inputs under both backends; the outputs are
checked for agreement before anything is timed.
"""
from __future__ import annotations

import argparse
import csv
import os
import subprocess
import sys
import time
import timeit

import numpy as np

from cluttersolve import _pykernels
from cluttersolve.observation import CameraConfig

try:
    from cluttersolve import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _box_cloud(rng, n, centre, half):
    return np.ascontiguousarray(centre + rng.uniform(-1, 1, (n, 3)) * half)


def workloads(rng):
    """(name, callable taking a backend module) pairs."""
    a = _box_cloud(rng, 600, np.zeros(3), np.array([0.05, 0.04, 0.03]))
    b = _box_cloud(rng, 600, np.array([0.0, 0.0, 0.08]), np.array([0.05, 0.04, 0.03]))
    far = _box_cloud(rng, 2000, np.zeros(3), np.array([0.2, 0.2, 0.1]))
    up = np.array([0.0, 0.0, 1.0])
    cam = CameraConfig()
    basis, fx, fy, cx, cy = cam.intrinsics()
    rays = cam.ray_dirs()
    scene_pts = _box_cloud(rng, 1500, np.array([0.0, 0.0, 0.05]), np.array([0.2, 0.2, 0.05]))
    cam_pos = np.asarray(cam.position, dtype=float)
    g = np.random.default_rng(1)
    dirs = g.normal(size=(64, 3))
    dirs[:, 2] = np.abs(dirs[:, 2])
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    normals = np.ascontiguousarray(np.vstack([np.eye(3), -np.eye(3)]))
    offsets = np.array([0.05, 0.04, 0.11, 0.05, 0.04, -0.05])
    return [
        ("min_pair_distance", lambda k: k.min_pair_distance(a, b)),
        ("farthest_point_indices", lambda k: k.farthest_point_indices(far, 256, 0)),
        ("first_contact_step", lambda k: k.first_contact_step(a, b, up, 0.005, 60, 0.015)),
        ("splat_nearest", lambda k: k.splat_nearest(scene_pts, 0.005, cam_pos, basis, fx, fy, cx, cy,
                                                    cam.width, cam.height, cam.max_range, rays)),
        ("hull_sweep", lambda k: k.hull_sweep(a, normals, offsets, dirs, 0.3)),
    ]


def _same(x, y) -> bool:
    return bool(np.array_equal(np.asarray(x), np.asarray(y)) or np.allclose(x, y, rtol=1e-12, atol=1e-12))


_EPISODE = ("from cluttersolve import kernels, fixtures, solver; "
            "r = solver.run_episode(fixtures.load_fixture('double_occlusion')); "
            "print(kernels.BACKEND, r.success)")


def time_episode(pure: bool) -> float:
    """Wall time of one fixture episode in a fresh interpreter (backend is fixed at import)."""
    env = dict(os.environ, CLUTTERSOLVE_PURE="1" if pure else "0")
    t = time.perf_counter()
    subprocess.run([sys.executable, "-c", _EPISODE], env=env, check=True, capture_output=True)
    return time.perf_counter() - t


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--csv", help="also write results here")
    ap.add_argument("--episode", action="store_true", help="also time a whole fixture episode per backend")
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; nothing to compare", file=sys.stderr)
        return 1
    rng = np.random.default_rng(0)
    rows = []
    print(f"{'kernel':<24}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, fn in workloads(rng):
        if not _same(fn(_pykernels), fn(_ckernels)):
            print(f"{name}: backends disagree", file=sys.stderr)
            return 1
        tp = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat)) * 1e3
        tc = min(timeit.repeat(lambda: fn(_ckernels), number=1, repeat=args.repeat)) * 1e3
        rows.append((name, tp, tc, tp / tc if tc > 0 else float("inf")))
        print(f"{name:<24}{tp:>12.3f}{tc:>12.3f}{rows[-1][3]:>9.1f}x")
    if args.episode:
        tp, tc = time_episode(True), time_episode(False)
        rows.append(("episode_double_occlusion", tp * 1e3, tc * 1e3, tp / tc))
        print(f"{'episode (s)':<24}{tp:>12.3f}{tc:>12.3f}{tp / tc:>9.1f}x")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kernel", "python_ms", "cython_ms", "speedup"])
            for r in rows:
                w.writerow([r[0], f"{r[1]:.3f}", f"{r[2]:.3f}", f"{r[3]:.2f}"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
