# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for quadratic instances.

Regularizer codes match the ``KERNEL_*`` constants in ``vrpg.prox``.
"""

import numpy as np
from libc.math cimport sqrt, fabs
from libc.stdlib cimport qsort

DEF EPS4 = 8.881784197001252e-16  # 4 * machine epsilon


cdef int _cmp_desc(const void* a, const void* b) noexcept nogil:
    cdef double da = (<double*>a)[0]
    cdef double db = (<double*>b)[0]
    if da < db:
        return 1
    if da > db:
        return -1
    return 0


cdef void _project(double[::1] x, int code, const double[::1] p1, const double[::1] p2,
                   double s, double step, double[::1] work) noexcept nogil:
    cdef Py_ssize_t d = x.shape[0]
    cdef Py_ssize_t i, rho
    cdef double nrm, t, css, tau, viol, sq
    if code == 0:
        return
    elif code == 1:  # box
        for i in range(d):
            if x[i] < p1[i]:
                x[i] = p1[i]
            elif x[i] > p2[i]:
                x[i] = p2[i]
    elif code == 2:  # ball2: center p1, radius s
        nrm = 0.0
        for i in range(d):
            nrm += (x[i] - p1[i]) * (x[i] - p1[i])
        nrm = sqrt(nrm)
        if nrm > s * (1.0 + EPS4):
            t = s / nrm
            for i in range(d):
                x[i] = p1[i] + t * (x[i] - p1[i])
    elif code == 3:  # orthant
        for i in range(d):
            if x[i] < 0.0:
                x[i] = 0.0
    elif code == 4:  # simplex of scale s
        for i in range(d):
            work[i] = x[i]
        qsort(&work[0], d, sizeof(double), _cmp_desc)
        css = 0.0
        rho = 0
        tau = 0.0
        for i in range(d):
            css += work[i]
            if work[i] - (css - s) / (i + 1.0) > 0:
                rho = i
                tau = (css - s) / (i + 1.0)
        for i in range(d):
            t = x[i] - tau
            x[i] = t if t > 0.0 else 0.0
    elif code == 5:  # l1 with weight s
        t = step * s
        for i in range(d):
            if x[i] > t:
                x[i] = x[i] - t
            elif x[i] < -t:
                x[i] = x[i] + t
            else:
                x[i] = 0.0
    elif code == 6:  # single halfspace a = p1, b = s
        viol = -s
        sq = 0.0
        t = fabs(s)
        for i in range(d):
            viol += p1[i] * x[i]
            sq += p1[i] * p1[i]
            t += fabs(p1[i] * x[i])
        if viol > EPS4 * t:
            t = viol / sq
            for i in range(d):
                x[i] = x[i] - t * p1[i]


def project(x, int code, p1, p2, double s, double step=1.0):
    """Project a copy of ``x`` with the compiled routine (testing aid)."""
    cdef double[::1] out = np.array(x, dtype=float, copy=True)
    cdef double[::1] work = np.empty(out.shape[0])
    _project(out, code, np.ascontiguousarray(p1, dtype=float),
             np.ascontiguousarray(p2, dtype=float), s, step, work)
    return np.asarray(out)


def vrpg_epoch_quadratic(const double[:, ::1] A, const double[::1] Aa, const double[::1] gbar,
                         const double[:, ::1] zs, const double[::1] x0, double step,
                         int code, const double[::1] p1, const double[::1] p2, double s):
    """K recentered proximal steps for ``grad f(x, z) = A x - z``.

    ``Aa`` is ``A @ anchor``; row ``k`` of ``zs`` is the k-th step's sample.
    """
    cdef Py_ssize_t d = x0.shape[0]
    cdef Py_ssize_t K = zs.shape[0]
    cdef Py_ssize_t k, i, j
    cdef double acc, g
    x_arr = np.array(x0, dtype=float, copy=True)
    cdef double[::1] x = x_arr
    cdef double[::1] y = np.empty(d)
    cdef double[::1] work = np.empty(d)
    with nogil:
        for k in range(K):
            for i in range(d):
                acc = 0.0
                for j in range(d):
                    acc += A[i, j] * x[j]
                g = ((acc - zs[k, i]) - (Aa[i] - zs[k, i])) + gbar[i]
                y[i] = x[i] - step * g
            _project(y, code, p1, p2, s, step, work)
            for i in range(d):
                x[i] = y[i]
    return x_arr


def sgd_pr_quadratic(const double[:, ::1] A, const double[:, ::1] zs, const double[::1] x0,
                     const double[::1] alphas, int code, const double[::1] p1,
                     const double[::1] p2, double s):
    """Projected SGD with Polyak-Ruppert averaging over ``x_1 .. x_{n+1}``."""
    cdef Py_ssize_t d = x0.shape[0]
    cdef Py_ssize_t n = zs.shape[0]
    cdef Py_ssize_t k, i, j
    cdef double acc, t, yv
    x_arr = np.array(x0, dtype=float, copy=True)
    cdef double[::1] x = x_arr
    cdef double[::1] y = np.empty(d)
    cdef double[::1] work = np.empty(d)
    cdef double[::1] tot = np.array(x0, dtype=float, copy=True)
    cdef double[::1] comp = np.zeros(d)
    with nogil:
        for k in range(n):
            for i in range(d):
                acc = 0.0
                for j in range(d):
                    acc += A[i, j] * x[j]
                y[i] = x[i] - alphas[k] * (acc - zs[k, i])
            _project(y, code, p1, p2, s, alphas[k], work)
            for i in range(d):
                x[i] = y[i]
                # Neumaier summation of the iterates
                yv = y[i]
                t = tot[i] + yv
                if fabs(tot[i]) >= fabs(yv):
                    comp[i] += (tot[i] - t) + yv
                else:
                    comp[i] += (yv - t) + tot[i]
                tot[i] = t
    avg = (np.asarray(tot) + np.asarray(comp)) / (n + 1.0)
    return x_arr, avg


def compensated_column_mean(const double[:, ::1] rows):
    """Column means with Neumaier-compensated sums."""
    cdef Py_ssize_t n = rows.shape[0]
    cdef Py_ssize_t d = rows.shape[1]
    cdef Py_ssize_t r, i
    cdef double t, v
    cdef double[::1] tot = np.zeros(d)
    cdef double[::1] comp = np.zeros(d)
    with nogil:
        for r in range(n):
            for i in range(d):
                v = rows[r, i]
                t = tot[i] + v
                if fabs(tot[i]) >= fabs(v):
                    comp[i] += (tot[i] - t) + v
                else:
                    comp[i] += (v - t) + tot[i]
                tot[i] = t
    return (np.asarray(tot) + np.asarray(comp)) / n
