# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops; results agree with _kernels_py up to summation-order rounding."""

import numpy as np
from cython.parallel cimport prange

IMPLEMENTATION = "cython"


def stencil_apply(const double[:, :, ::1] cx,
                  const double[:, :, ::1] cy,
                  const double[:, :, ::1] cz,
                  const double[:, :, ::1] x,
                  double[:, :, ::1] out,
                  int num_threads=1):
    """out[n] = sum over edges e at n of c_e * (x[n] - x[other end of e])."""
    cdef Py_ssize_t n0 = x.shape[0], n1 = x.shape[1], n2 = x.shape[2]
    cdef Py_ssize_t i, j, k
    cdef double v, acc
    for i in prange(n0, nogil=True, num_threads=num_threads, schedule="static"):
        for j in range(n1):
            for k in range(n2):
                v = x[i, j, k]
                acc = 0.0
                if i > 0:
                    acc = acc + cx[i - 1, j, k] * (v - x[i - 1, j, k])
                if i < n0 - 1:
                    acc = acc + cx[i, j, k] * (v - x[i + 1, j, k])
                if j > 0:
                    acc = acc + cy[i, j - 1, k] * (v - x[i, j - 1, k])
                if j < n1 - 1:
                    acc = acc + cy[i, j, k] * (v - x[i, j + 1, k])
                if k > 0:
                    acc = acc + cz[i, j, k - 1] * (v - x[i, j, k - 1])
                if k < n2 - 1:
                    acc = acc + cz[i, j, k] * (v - x[i, j, k + 1])
                out[i, j, k] = acc
    return np.asarray(out)


def ball_oscillation(const double[:, :, ::1] u,
                     const double[::1] xs,
                     const double[::1] ys,
                     const double[::1] zs,
                     const Py_ssize_t[:, ::1] centers,
                     const double[::1] radii,
                     int num_threads=1):
    """For every centre and radius: (sum of squared deviation from the ball mean, node count)."""
    cdef Py_ssize_t m = centers.shape[0], nr = radii.shape[0]
    cdef Py_ssize_t n0 = u.shape[0], n1 = u.shape[1], n2 = u.shape[2]
    sq_arr = np.zeros((m, nr))
    cnt_arr = np.zeros((m, nr), dtype=np.int64)
    cdef double[:, ::1] sq = sq_arr
    cdef long long[:, ::1] cnt = cnt_arr
    cdef Py_ssize_t c, r, i, j, k
    cdef Py_ssize_t i0, i1, j0, j1, k0, k1
    cdef double cx, cy, cz, rr, dx2, dy2, dz2, s, mean, dev, acc
    cdef long long count
    for c in prange(m, nogil=True, num_threads=num_threads, schedule="dynamic"):
        cx = xs[centers[c, 0]]
        cy = ys[centers[c, 1]]
        cz = zs[centers[c, 2]]
        for r in range(nr):
            rr = radii[r] * radii[r]
            # index window containing the ball (coordinates are sorted)
            i0 = 0
            while i0 < n0 and xs[i0] < cx - radii[r]:
                i0 = i0 + 1
            i1 = n0
            while i1 > 0 and xs[i1 - 1] > cx + radii[r]:
                i1 = i1 - 1
            j0 = 0
            while j0 < n1 and ys[j0] < cy - radii[r]:
                j0 = j0 + 1
            j1 = n1
            while j1 > 0 and ys[j1 - 1] > cy + radii[r]:
                j1 = j1 - 1
            k0 = 0
            while k0 < n2 and zs[k0] < cz - radii[r]:
                k0 = k0 + 1
            k1 = n2
            while k1 > 0 and zs[k1 - 1] > cz + radii[r]:
                k1 = k1 - 1
            # one extra layer so rounding at the ball surface cannot drop a node
            i0 = i0 - 1 if i0 > 0 else 0
            j0 = j0 - 1 if j0 > 0 else 0
            k0 = k0 - 1 if k0 > 0 else 0
            i1 = i1 + 1 if i1 < n0 else n0
            j1 = j1 + 1 if j1 < n1 else n1
            k1 = k1 + 1 if k1 < n2 else n2
            s = 0.0
            count = 0
            for i in range(i0, i1):
                dx2 = (xs[i] - cx) * (xs[i] - cx)
                for j in range(j0, j1):
                    dy2 = (ys[j] - cy) * (ys[j] - cy)
                    for k in range(k0, k1):
                        dz2 = (zs[k] - cz) * (zs[k] - cz)
                        if dx2 + dy2 + dz2 <= rr:
                            s = s + u[i, j, k]
                            count = count + 1
            acc = 0.0
            if count > 0:
                mean = s / count
                for i in range(i0, i1):
                    dx2 = (xs[i] - cx) * (xs[i] - cx)
                    for j in range(j0, j1):
                        dy2 = (ys[j] - cy) * (ys[j] - cy)
                        for k in range(k0, k1):
                            dz2 = (zs[k] - cz) * (zs[k] - cz)
                            if dx2 + dy2 + dz2 <= rr:
                                dev = u[i, j, k] - mean
                                acc = acc + dev * dev
            sq[c, r] = acc
            cnt[c, r] = count
    return sq_arr, cnt_arr
