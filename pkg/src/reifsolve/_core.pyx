# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: kernel cell masses and polyline distances."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, pow

BACKEND = "cython"


cdef inline double _factor(double y0, double r2, int code, double[::1] params) nogil:
    if code == 0:
        return 1.0
    if code == 1:
        return params[0] + params[1] * (2.0 * y0 * y0 / r2 - 1.0)
    if r2 < params[0] * params[0]:
        return params[1]
    return params[2]


def cell_integrals(centers, double width, int code, params, double s, int order, int moment=-1):
    cdef double[:, ::1] c = np.ascontiguousarray(centers, dtype=np.float64)
    cdef double[::1] prm = np.ascontiguousarray(params, dtype=np.float64)
    cdef Py_ssize_t m = c.shape[0], n = c.shape[1]
    g, w = np.polynomial.legendre.leggauss(order)
    cdef double[::1] gg = np.ascontiguousarray(0.5 * width * g)
    cdef double[::1] ww = np.ascontiguousarray(0.5 * width * w)
    cdef Py_ssize_t q = order, nq = q ** n
    out_arr = np.zeros(m)
    cdef double[::1] out = out_arr
    cdef double p = -(n + 2.0 * s) / 2.0
    cdef Py_ssize_t i, j, k, idx
    cdef double acc, wt, r2, yk, val, ym
    cdef double y[8]
    if n > 8:
        raise ValueError("dimension above 8 not supported")
    with nogil:
        for i in range(m):
            acc = 0.0
            for j in range(nq):
                idx = j
                wt = 1.0
                r2 = 0.0
                for k in range(n):
                    yk = c[i, k] + gg[idx % q]
                    wt = wt * ww[idx % q]
                    idx = idx // q
                    y[k] = yk
                    r2 = r2 + yk * yk
                val = _factor(y[0], r2, code, prm) * pow(r2, p)
                if moment >= 0:
                    ym = y[moment]
                    val = val * ym * ym
                acc = acc + wt * val
            out[i] = acc
    return out_arr


def segment_distance(points, a, b):
    cdef double[:, ::1] p = np.ascontiguousarray(points, dtype=np.float64)
    cdef double[:, ::1] aa = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[:, ::1] bb = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t m = p.shape[0], ns = aa.shape[0], i, j
    out_arr = np.empty(m)
    cdef double[::1] out = out_arr
    cdef double px, py, dx, dy, dd, t, ex, ey, best, e
    with nogil:
        for i in range(m):
            best = 1e300
            for j in range(ns):
                dx = bb[j, 0] - aa[j, 0]
                dy = bb[j, 1] - aa[j, 1]
                px = p[i, 0] - aa[j, 0]
                py = p[i, 1] - aa[j, 1]
                dd = dx * dx + dy * dy
                if dd > 0:
                    t = (px * dx + py * dy) / dd
                    if t < 0:
                        t = 0
                    elif t > 1:
                        t = 1
                else:
                    t = 0
                ex = px - t * dx
                ey = py - t * dy
                e = ex * ex + ey * ey
                if e < best:
                    best = e
            out[i] = sqrt(best)
    return out_arr
