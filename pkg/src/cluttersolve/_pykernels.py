"""Pure numpy implementations of the particle kernels.

These mirror ``_ckernels.pyx`` one for one and are used whenever the compiled
extension is missing or ``CLUTTERSOLVE_PURE=1`` is set.  Arithmetic is written
in the same order as the Cython code so that both backends agree bit for bit
on ordinary inputs.
"""
from __future__ import annotations

import math

import numpy as np

_CHUNK = 1 << 18


def min_pair_distance(a: np.ndarray, b: np.ndarray) -> float:
    best = math.inf
    step = max(1, _CHUNK // max(1, len(b)))
    for i in range(0, len(a), step):
        blk = a[i:i + step]
        dx = blk[:, None, 0] - b[None, :, 0]
        dy = blk[:, None, 1] - b[None, :, 1]
        dz = blk[:, None, 2] - b[None, :, 2]
        d2 = dx * dx + dy * dy + dz * dz
        best = min(best, float(d2.min()))
    return math.sqrt(best)


def farthest_point_indices(pts: np.ndarray, r: int, seed: int) -> np.ndarray:
    n = len(pts)
    k = min(r, n)
    out = np.empty(k, dtype=np.intp)
    out[0] = seed
    dx = pts[:, 0] - pts[seed, 0]
    dy = pts[:, 1] - pts[seed, 1]
    dz = pts[:, 2] - pts[seed, 2]
    dist = dx * dx + dy * dy + dz * dz
    for j in range(1, k):
        nxt = int(np.argmax(dist))
        out[j] = nxt
        dx = pts[:, 0] - pts[nxt, 0]
        dy = pts[:, 1] - pts[nxt, 1]
        dz = pts[:, 2] - pts[nxt, 2]
        np.minimum(dist, dx * dx + dy * dy + dz * dz, out=dist)
    return out


def _hit_at(p, q, d, s, m2):
    ex = p[..., 0] + s * d[0] - q[..., 0]
    ey = p[..., 1] + s * d[1] - q[..., 1]
    ez = p[..., 2] + s * d[2] - q[..., 2]
    return ex * ex + ey * ey + ez * ez < m2


def first_contact_step(mover: np.ndarray, obstacle: np.ndarray, d: np.ndarray,
                       delta: float, kmax: int, margin: float) -> int:
    """Smallest k in [0, kmax] with min distance < margin after k steps, else -1."""
    m2 = margin * margin
    best = kmax + 1
    step = max(1, _CHUNK // max(1, len(obstacle)))
    for i in range(0, len(mover), step):
        p = mover[i:i + step, None, :]
        q = obstacle[None, :, :]
        wx = q[..., 0] - p[..., 0]
        wy = q[..., 1] - p[..., 1]
        wz = q[..., 2] - p[..., 2]
        b = wx * d[0] + wy * d[1] + wz * d[2]
        c = wx * wx + wy * wy + wz * wz - m2
        disc = b * b - c
        ok = disc > 0.0
        if not ok.any():
            continue
        pi, qi = np.nonzero(ok)
        root = np.sqrt(disc[ok])
        lo = b[ok] - root
        hi = b[ok] + root
        keep = hi > 0.0
        pi, qi, lo = pi[keep], qi[keep], lo[keep]
        if len(pi) == 0:
            continue
        k = np.where(lo < 0.0, 0, np.floor(lo / delta) + 1).astype(np.int64)
        k = np.maximum(k, 0)
        pp = mover[i:i + step][pi]
        qq = obstacle[qi]
        # exact re-check of the analytic step against direct stepping
        km1 = np.maximum(k - 1, 0)
        hit_prev = (k > 0) & _hit_at(pp, qq, d, km1 * delta, m2)
        hit_k = _hit_at(pp, qq, d, k * delta, m2)
        hit_next = _hit_at(pp, qq, d, (k + 1) * delta, m2)
        cand = np.where(hit_prev, km1, np.where(hit_k, k, np.where(hit_next, k + 1, kmax + 1)))
        cand = cand[cand <= kmax]
        if len(cand):
            best = min(best, int(cand.min()))
    return best if best <= kmax else -1


def splat_nearest(points: np.ndarray, radius: float, cam_pos: np.ndarray, basis: np.ndarray,
                  fx: float, fy: float, cx: float, cy: float, width: int, height: int,
                  max_range: float, ray_dirs: np.ndarray) -> np.ndarray:
    """Index of the nearest particle sphere hit by each pixel ray (-1 for none)."""
    npix = width * height
    zbuf = np.full(npix, np.inf)
    idbuf = np.full(npix, -1, dtype=np.intp)
    rel = points - cam_pos
    zc = rel[:, 0] * basis[2, 0] + rel[:, 1] * basis[2, 1] + rel[:, 2] * basis[2, 2]
    r2 = radius * radius
    for i in np.nonzero(zc > radius)[0]:
        c = rel[i]
        z = zc[i]
        u = fx * (c[0] * basis[0, 0] + c[1] * basis[0, 1] + c[2] * basis[0, 2]) / z + cx
        v = fy * (c[0] * basis[1, 0] + c[1] * basis[1, 1] + c[2] * basis[1, 2]) / z + cy
        rp = math.ceil(2.0 * max(fx, fy) * radius / (z - radius)) + 1
        u0 = max(0, int(math.floor(u)) - rp)
        u1 = min(width - 1, int(math.floor(u)) + rp)
        v0 = max(0, int(math.floor(v)) - rp)
        v1 = min(height - 1, int(math.floor(v)) + rp)
        if u0 > u1 or v0 > v1:
            continue
        vv, uu = np.mgrid[v0:v1 + 1, u0:u1 + 1]
        pix = (vv * width + uu).ravel()
        w = ray_dirs[pix]
        bd = w[:, 0] * c[0] + w[:, 1] * c[1] + w[:, 2] * c[2]
        cc = c[0] * c[0] + c[1] * c[1] + c[2] * c[2] - r2
        disc = bd * bd - cc
        okd = disc >= 0.0
        t = np.full(len(pix), np.inf)
        t[okd] = bd[okd] - np.sqrt(disc[okd])
        upd = (t > 0.0) & (t < max_range) & (t < zbuf[pix])
        zbuf[pix[upd]] = t[upd]
        idbuf[pix[upd]] = i
    return idbuf


def hull_sweep(pts: np.ndarray, normals: np.ndarray, offsets: np.ndarray,
               dirs: np.ndarray, max_len: float) -> np.ndarray:
    """Earliest travel at which any point, moved along each direction, is inside the hull."""
    out = np.full(len(dirs), np.inf)
    npt = (normals[:, 0, None] * pts[None, :, 0] + normals[:, 1, None] * pts[None, :, 1]
           + normals[:, 2, None] * pts[None, :, 2])
    slack = offsets[:, None] - npt  # (F, M), >= 0 inside
    for qi in range(len(dirs)):
        d = dirs[qi]
        nd = normals[:, 0] * d[0] + normals[:, 1] * d[1] + normals[:, 2] * d[2]
        s_in = np.zeros(pts.shape[0])
        s_out = np.full(pts.shape[0], max_len)
        ok = np.ones(pts.shape[0], dtype=bool)
        for f in range(len(nd)):
            if abs(nd[f]) < 1e-12:
                ok &= slack[f] >= 0.0
            elif nd[f] > 0.0:
                np.minimum(s_out, slack[f] / nd[f], out=s_out)
            else:
                np.maximum(s_in, slack[f] / nd[f], out=s_in)
        ok &= s_in <= s_out
        if ok.any():
            out[qi] = float(s_in[ok].min())
    return out
