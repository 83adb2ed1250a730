# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled particle kernels.  Semantics match ``_pykernels`` exactly."""
import numpy as np

from libc.math cimport sqrt, floor, ceil, fabs, INFINITY


def min_pair_distance(const double[:, ::1] a, const double[:, ::1] b):
    cdef Py_ssize_t i, j, na = a.shape[0], nb = b.shape[0]
    cdef double best = INFINITY, dx, dy, dz, d2
    with nogil:
        for i in range(na):
            for j in range(nb):
                dx = a[i, 0] - b[j, 0]
                dy = a[i, 1] - b[j, 1]
                dz = a[i, 2] - b[j, 2]
                d2 = dx * dx + dy * dy + dz * dz
                if d2 < best:
                    best = d2
    return sqrt(best)


def farthest_point_indices(const double[:, ::1] pts, Py_ssize_t r, Py_ssize_t seed):
    cdef Py_ssize_t n = pts.shape[0]
    cdef Py_ssize_t k = r if r < n else n
    out_arr = np.empty(k, dtype=np.intp)
    dist_arr = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t[::1] out = out_arr
    cdef double[::1] dist = dist_arr
    cdef Py_ssize_t i, j, cur = seed, nxt
    cdef double dx, dy, dz, d2, best
    with nogil:
        out[0] = seed
        for i in range(n):
            dx = pts[i, 0] - pts[cur, 0]
            dy = pts[i, 1] - pts[cur, 1]
            dz = pts[i, 2] - pts[cur, 2]
            dist[i] = dx * dx + dy * dy + dz * dz
        for j in range(1, k):
            best = -1.0
            nxt = 0
            for i in range(n):
                if dist[i] > best:
                    best = dist[i]
                    nxt = i
            out[j] = nxt
            for i in range(n):
                dx = pts[i, 0] - pts[nxt, 0]
                dy = pts[i, 1] - pts[nxt, 1]
                dz = pts[i, 2] - pts[nxt, 2]
                d2 = dx * dx + dy * dy + dz * dz
                if d2 < dist[i]:
                    dist[i] = d2
    return out_arr


cdef inline bint _hit_at(double px, double py, double pz, double qx, double qy, double qz,
                         double dx, double dy, double dz, double s, double m2) nogil:
    cdef double ex = px + s * dx - qx
    cdef double ey = py + s * dy - qy
    cdef double ez = pz + s * dz - qz
    return ex * ex + ey * ey + ez * ez < m2


def first_contact_step(const double[:, ::1] mover, const double[:, ::1] obstacle,
                       const double[::1] d, double delta, long kmax, double margin):
    cdef Py_ssize_t i, j, nm = mover.shape[0], no = obstacle.shape[0]
    cdef double m2 = margin * margin
    cdef double dx = d[0], dy = d[1], dz = d[2]
    cdef double wx, wy, wz, b, c, disc, root, lo, hi
    cdef long best = kmax + 1, k, cand
    with nogil:
        for i in range(nm):
            for j in range(no):
                wx = obstacle[j, 0] - mover[i, 0]
                wy = obstacle[j, 1] - mover[i, 1]
                wz = obstacle[j, 2] - mover[i, 2]
                b = wx * dx + wy * dy + wz * dz
                c = wx * wx + wy * wy + wz * wz - m2
                disc = b * b - c
                if disc <= 0.0:
                    continue
                root = sqrt(disc)
                hi = b + root
                if hi <= 0.0:
                    continue
                lo = b - root
                if lo < 0.0:
                    k = 0
                else:
                    k = <long>floor(lo / delta) + 1
                if k < 0:
                    k = 0
                if k >= best + 1:
                    continue
                if k > 0 and _hit_at(mover[i, 0], mover[i, 1], mover[i, 2],
                                     obstacle[j, 0], obstacle[j, 1], obstacle[j, 2],
                                     dx, dy, dz, (k - 1) * delta, m2):
                    cand = k - 1
                elif _hit_at(mover[i, 0], mover[i, 1], mover[i, 2],
                             obstacle[j, 0], obstacle[j, 1], obstacle[j, 2],
                             dx, dy, dz, k * delta, m2):
                    cand = k
                elif _hit_at(mover[i, 0], mover[i, 1], mover[i, 2],
                             obstacle[j, 0], obstacle[j, 1], obstacle[j, 2],
                             dx, dy, dz, (k + 1) * delta, m2):
                    cand = k + 1
                else:
                    continue
                if cand <= kmax and cand < best:
                    best = cand
    return best if best <= kmax else -1


def splat_nearest(const double[:, ::1] points, double radius, const double[::1] cam_pos,
                  const double[:, ::1] basis, double fx, double fy, double cx, double cy,
                  int width, int height, double max_range, const double[:, ::1] ray_dirs):
    cdef Py_ssize_t npix = width * height
    zbuf_arr = np.full(npix, np.inf)
    idbuf_arr = np.full(npix, -1, dtype=np.intp)
    cdef double[::1] zbuf = zbuf_arr
    cdef Py_ssize_t[::1] idbuf = idbuf_arr
    cdef Py_ssize_t i, n = points.shape[0], pix
    cdef int rp, u0, u1, v0, v1, uu, vv, ui, vi
    cdef double c0, c1, c2, z, u, v, r2 = radius * radius, bd, cc, disc, t, fmax
    fmax = fx if fx > fy else fy
    with nogil:
        for i in range(n):
            c0 = points[i, 0] - cam_pos[0]
            c1 = points[i, 1] - cam_pos[1]
            c2 = points[i, 2] - cam_pos[2]
            z = c0 * basis[2, 0] + c1 * basis[2, 1] + c2 * basis[2, 2]
            if not (z > radius):
                continue
            u = fx * (c0 * basis[0, 0] + c1 * basis[0, 1] + c2 * basis[0, 2]) / z + cx
            v = fy * (c0 * basis[1, 0] + c1 * basis[1, 1] + c2 * basis[1, 2]) / z + cy
            rp = <int>ceil(2.0 * fmax * radius / (z - radius)) + 1
            ui = <int>floor(u)
            vi = <int>floor(v)
            u0 = ui - rp
            if u0 < 0:
                u0 = 0
            u1 = ui + rp
            if u1 > width - 1:
                u1 = width - 1
            v0 = vi - rp
            if v0 < 0:
                v0 = 0
            v1 = vi + rp
            if v1 > height - 1:
                v1 = height - 1
            if u0 > u1 or v0 > v1:
                continue
            cc = c0 * c0 + c1 * c1 + c2 * c2 - r2
            for vv in range(v0, v1 + 1):
                for uu in range(u0, u1 + 1):
                    pix = vv * width + uu
                    bd = ray_dirs[pix, 0] * c0 + ray_dirs[pix, 1] * c1 + ray_dirs[pix, 2] * c2
                    disc = bd * bd - cc
                    if disc < 0.0:
                        continue
                    t = bd - sqrt(disc)
                    if t > 0.0 and t < max_range and t < zbuf[pix]:
                        zbuf[pix] = t
                        idbuf[pix] = i
    return idbuf_arr


def hull_sweep(const double[:, ::1] pts, const double[:, ::1] normals, const double[::1] offsets,
               const double[:, ::1] dirs, double max_len):
    cdef Py_ssize_t nq = dirs.shape[0], nm = pts.shape[0], nf = normals.shape[0]
    out_arr = np.full(nq, np.inf)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t q, i, f
    cdef double s_in, s_out, nd, slack, best
    cdef bint ok
    with nogil:
        for q in range(nq):
            best = INFINITY
            for i in range(nm):
                s_in = 0.0
                s_out = max_len
                ok = True
                for f in range(nf):
                    nd = normals[f, 0] * dirs[q, 0] + normals[f, 1] * dirs[q, 1] + normals[f, 2] * dirs[q, 2]
                    slack = offsets[f] - (normals[f, 0] * pts[i, 0] + normals[f, 1] * pts[i, 1]
                                          + normals[f, 2] * pts[i, 2])
                    if fabs(nd) < 1e-12:
                        if slack < 0.0:
                            ok = False
                            break
                    elif nd > 0.0:
                        if slack / nd < s_out:
                            s_out = slack / nd
                    else:
                        if slack / nd > s_in:
                            s_in = slack / nd
                    if s_in > s_out or s_in >= best:
                        ok = False
                        break
                if ok and s_in < best:
                    best = s_in
                    if best == 0.0:
                        break
            out[q] = best
    return out_arr
