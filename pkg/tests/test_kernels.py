"""Both kernel backends against brute-force numpy oracles."""
from __future__ import annotations

import numpy as np
import pytest

from cluttersolve import _pykernels, kernels
from cluttersolve.observation import CameraConfig

from helpers import random_cloud


def brute_min_distance(a, b):
    return float(np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)).min())


def brute_fps(pts, r, seed):
    chosen = [seed]
    d = np.linalg.norm(pts - pts[seed], axis=1)
    while len(chosen) < min(r, len(pts)):
        i = int(np.argmax(d))
        chosen.append(i)
        d = np.minimum(d, np.linalg.norm(pts - pts[i], axis=1))
    return np.array(chosen)


def brute_first_step(pm, po, d, delta, kmax, margin):
    for k in range(kmax + 1):
        if brute_min_distance(pm + k * delta * d, po) < margin:
            return k
    return -1


def test_backend_is_reported():
    assert kernels.BACKEND in ("python", "cython")


@pytest.mark.parametrize("seed", range(5))
def test_min_pair_distance(backend, seed):
    rng = np.random.default_rng(seed)
    a = random_cloud(rng, 40)
    b = random_cloud(rng, 30) + 0.05
    assert backend.min_pair_distance(a, b) == pytest.approx(brute_min_distance(a, b), abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_farthest_point_indices(backend, seed):
    rng = np.random.default_rng(seed)
    pts = random_cloud(rng, 120)
    np.testing.assert_array_equal(backend.farthest_point_indices(pts, 30, seed), brute_fps(pts, 30, seed))


@pytest.mark.parametrize("seed", range(8))
def test_first_contact_step(backend, seed):
    rng = np.random.default_rng(seed)
    pm = random_cloud(rng, 25, 0.03)
    po = random_cloud(rng, 25, 0.03) + rng.uniform(-0.1, 0.1, 3)
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    got = backend.first_contact_step(pm, po, d, 0.005, 40, 0.01)
    assert got == brute_first_step(pm, po, d, 0.005, 40, 0.01)


def test_hull_sweep_backends_agree(backend):
    rng = np.random.default_rng(3)
    pts = random_cloud(rng, 50, 0.03)
    normals = np.ascontiguousarray(np.vstack([np.eye(3), -np.eye(3)]))
    offsets = np.array([0.05, 0.05, 0.12, 0.05, 0.05, -0.06])
    dirs = rng.normal(size=(16, 3))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    dirs = np.ascontiguousarray(dirs)
    ref = _pykernels.hull_sweep(pts, normals, offsets, dirs, 0.5)
    np.testing.assert_allclose(backend.hull_sweep(pts, normals, offsets, dirs, 0.5), ref, rtol=0, atol=1e-12)


def test_hull_sweep_straight_up_matches_gap(backend):
    # unit-ish box slab from z=0.06 to 0.12 over the whole xy range of the points
    pts = np.ascontiguousarray([[0.0, 0.0, 0.0], [0.01, 0.0, 0.02]])
    normals = np.ascontiguousarray(np.vstack([np.eye(3), -np.eye(3)]))
    offsets = np.array([1.0, 1.0, 0.12, 1.0, 1.0, -0.06])
    out = backend.hull_sweep(pts, normals, offsets, np.ascontiguousarray([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]), 1.0)
    assert out[0] == pytest.approx(0.04)
    assert np.isinf(out[1])


def test_splat_nearest_backends_agree(backend):
    rng = np.random.default_rng(5)
    cam = CameraConfig(width=48, height=40)
    basis, fx, fy, cx, cy = cam.intrinsics()
    pts = np.ascontiguousarray(rng.uniform([-0.1, -0.1, 0.0], [0.1, 0.1, 0.1], (200, 3)))
    args = (pts, 0.005, np.asarray(cam.position, dtype=float), basis, fx, fy, cx, cy,
            cam.width, cam.height, cam.max_range, cam.ray_dirs())
    np.testing.assert_array_equal(backend.splat_nearest(*args), _pykernels.splat_nearest(*args))


def test_splat_nearest_picks_front_particle(backend):
    cam = CameraConfig(width=32, height=32)
    basis, fx, fy, cx, cy = cam.intrinsics()
    pos = np.asarray(cam.position, dtype=float)
    fwd = basis[2]
    front = pos + 0.5 * fwd
    back = pos + 0.8 * fwd
    pts = np.ascontiguousarray([back, front])
    ids = backend.splat_nearest(pts, 0.03, pos, basis, fx, fy, cx, cy, 32, 32, 5.0, cam.ray_dirs())
    hit = set(ids[ids >= 0].tolist())
    assert hit == {1}


def test_pure_env_selects_fallback():
    import subprocess
    import sys

    out = subprocess.run([sys.executable, "-c", "from cluttersolve import kernels; print(kernels.BACKEND)"],
                         env={**__import__("os").environ, "CLUTTERSOLVE_PURE": "1"},
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
