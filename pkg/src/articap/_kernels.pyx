# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: exact clamped nearest-vertex search and farthest point sampling."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, floor, ceil, cbrt

cnp.import_array()

ctypedef cnp.float64_t f64
ctypedef cnp.int64_t i64


cdef inline Py_ssize_t _clip(Py_ssize_t v, Py_ssize_t lo, Py_ssize_t hi) noexcept nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


cdef inline Py_ssize_t _imax(Py_ssize_t a, Py_ssize_t b) noexcept nogil:
    return a if a > b else b


cdef inline Py_ssize_t _iabs(Py_ssize_t a) noexcept nogil:
    return a if a >= 0 else -a


cdef inline void _scan_cell(const f64[:, ::1] tgt, const i64[::1] order,
                            const i64[::1] start, Py_ssize_t cell,
                            double qx, double qy, double qz, double* best) noexcept nogil:
    cdef Py_ssize_t p, j
    cdef double dx, dy, dz, d2
    for p in range(start[cell], start[cell + 1]):
        j = order[p]
        dx = qx - tgt[j, 0]
        dy = qy - tgt[j, 1]
        dz = qz - tgt[j, 2]
        d2 = dx * dx + dy * dy + dz * dz
        if d2 < best[0]:
            best[0] = d2


def nearest_distances(const f64[:, ::1] source, const f64[:, ::1] target, double d_max):
    """Distance from each source point to its nearest target point, clamped at d_max.

    Uses a uniform grid over the target with shell-by-shell search; the search stops
    once every unvisited cell is provably farther than the best hit or than d_max,
    so the result is exact.
    """
    cdef Py_ssize_t ns = source.shape[0], nt = target.shape[0]
    cdef Py_ssize_t i, j, a
    cdef double lo[3]
    cdef double hi[3]
    cdef Py_ssize_t dims[3]
    cdef double h, vol, ext

    out = np.empty(ns, dtype=np.float64)
    cdef f64[::1] res = out

    for a in range(3):
        lo[a] = target[0, a]
        hi[a] = target[0, a]
    for j in range(1, nt):
        for a in range(3):
            if target[j, a] < lo[a]:
                lo[a] = target[j, a]
            if target[j, a] > hi[a]:
                hi[a] = target[j, a]

    # ~2 points per cell, at most 128 cells per axis
    vol = 1.0
    for a in range(3):
        ext = hi[a] - lo[a]
        vol *= ext if ext > 1e-12 else 1e-12
    h = cbrt(2.0 * vol / nt)
    for a in range(3):
        ext = (hi[a] - lo[a]) / 128.0
        if h < ext:
            h = ext
    if h < 1e-9:
        h = 1e-9
    for a in range(3):
        dims[a] = <Py_ssize_t>floor((hi[a] - lo[a]) / h) + 1

    cdef Py_ssize_t ncell = dims[0] * dims[1] * dims[2]
    start_arr = np.zeros(ncell + 1, dtype=np.int64)
    order_arr = np.empty(nt, dtype=np.int64)
    cell_arr = np.empty(nt, dtype=np.int64)
    cdef i64[::1] start = start_arr
    cdef i64[::1] order = order_arr
    cdef i64[::1] cell_of = cell_arr
    cdef Py_ssize_t cx, cy, cz, c
    for j in range(nt):
        cx = _clip(<Py_ssize_t>floor((target[j, 0] - lo[0]) / h), 0, dims[0] - 1)
        cy = _clip(<Py_ssize_t>floor((target[j, 1] - lo[1]) / h), 0, dims[1] - 1)
        cz = _clip(<Py_ssize_t>floor((target[j, 2] - lo[2]) / h), 0, dims[2] - 1)
        c = (cx * dims[1] + cy) * dims[2] + cz
        cell_of[j] = c
        start[c + 1] += 1
    for c in range(ncell):
        start[c + 1] += start[c]
    fill_arr = start_arr[:ncell].copy()
    cdef i64[::1] fill = fill_arr
    for j in range(nt):
        c = cell_of[j]
        order[fill[c]] = j
        fill[c] += 1

    cdef double qx, qy, qz, best, bound, gap2, margin, t, INF = float('inf')
    cdef Py_ssize_t qc[3]
    cdef Py_ssize_t k, k0, kmax, ix, iy, iz, x0, x1, y0, y1, z0, z1
    cdef bint edge_x, edge_y
    # shells beyond kmax lie entirely past d_max
    kmax = <Py_ssize_t>ceil(d_max / h) + 1
    with nogil:
        for i in range(ns):
            qx = source[i, 0]
            qy = source[i, 1]
            qz = source[i, 2]
            qc[0] = <Py_ssize_t>floor((qx - lo[0]) / h)
            qc[1] = <Py_ssize_t>floor((qy - lo[1]) / h)
            qc[2] = <Py_ssize_t>floor((qz - lo[2]) / h)
            # nothing within d_max of the target's bounding box: clamp directly
            gap2 = 0.0
            for a in range(3):
                t = source[i, a]
                if t < lo[a]:
                    gap2 += (lo[a] - t) * (lo[a] - t)
                elif t > hi[a]:
                    gap2 += (t - hi[a]) * (t - hi[a])
            if gap2 >= d_max * d_max:
                res[i] = d_max
                continue
            k0 = 0
            margin = h
            for a in range(3):
                if qc[a] < 0:
                    k0 = _imax(k0, -qc[a])
                elif qc[a] > dims[a] - 1:
                    k0 = _imax(k0, qc[a] - (dims[a] - 1))
                t = source[i, a] - lo[a] - qc[a] * h
                if t < margin:
                    margin = t
                if h - t < margin:
                    margin = h - t
            if margin < 0:
                margin = 0
            best = INF
            k = k0
            while True:
                # points in shell k are at least (k - 1) * h + margin away
                if k > 0:
                    bound = (k - 1) * h + margin
                    if bound * bound >= best or bound >= d_max:
                        break
                if k > kmax + k0:
                    break
                x0 = _clip(qc[0] - k, 0, dims[0] - 1)
                x1 = _clip(qc[0] + k, 0, dims[0] - 1)
                y0 = _clip(qc[1] - k, 0, dims[1] - 1)
                y1 = _clip(qc[1] + k, 0, dims[1] - 1)
                z0 = qc[2] - k
                z1 = qc[2] + k
                if qc[0] - k <= dims[0] - 1 and qc[0] + k >= 0 and \
                        qc[1] - k <= dims[1] - 1 and qc[1] + k >= 0 and \
                        z0 <= dims[2] - 1 and z1 >= 0:
                    for ix in range(x0, x1 + 1):
                        edge_x = _iabs(ix - qc[0]) == k
                        for iy in range(y0, y1 + 1):
                            edge_y = _iabs(iy - qc[1]) == k
                            if edge_x or edge_y:
                                for iz in range(_clip(z0, 0, dims[2] - 1), _clip(z1, 0, dims[2] - 1) + 1):
                                    _scan_cell(target, order, start, (ix * dims[1] + iy) * dims[2] + iz,
                                               qx, qy, qz, &best)
                            else:
                                if 0 <= z0 <= dims[2] - 1:
                                    _scan_cell(target, order, start, (ix * dims[1] + iy) * dims[2] + z0,
                                               qx, qy, qz, &best)
                                if k > 0 and 0 <= z1 <= dims[2] - 1:
                                    _scan_cell(target, order, start, (ix * dims[1] + iy) * dims[2] + z1,
                                               qx, qy, qz, &best)
                k += 1
            bound = sqrt(best)
            res[i] = bound if bound < d_max else d_max
    return out


def farthest_point_sampling(const f64[:, ::1] points, Py_ssize_t k, Py_ssize_t start):
    """Greedy max-min selection; ties resolved towards the lowest index."""
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t i, s, cur, arg
    cdef double dx, dy, dz, d2, far, INF = float("inf")
    out = np.empty(k, dtype=np.int64)
    cdef i64[::1] sel = out
    mind_arr = np.empty(n, dtype=np.float64)
    cdef f64[::1] mind = mind_arr
    if k == 0:
        return out
    with nogil:
        for i in range(n):
            mind[i] = INF
        cur = start
        sel[0] = cur
        mind[cur] = -1.0
        for s in range(1, k):
            far = -1.0
            arg = -1
            for i in range(n):
                dx = points[i, 0] - points[cur, 0]
                dy = points[i, 1] - points[cur, 1]
                dz = points[i, 2] - points[cur, 2]
                d2 = dx * dx + dy * dy + dz * dz
                if d2 < mind[i]:
                    mind[i] = d2
                if mind[i] > far:
                    far = mind[i]
                    arg = i
            cur = arg
            sel[s] = cur
            mind[cur] = -1.0
    return out
