# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled damped fixed-point iteration for the free-convolution transform.

Must mirror _fixed_point_py.fp_batch exactly: same seeding, same damping
schedule, same stopping rule, so the two backends agree to solver tolerance.
"""
import numpy as np

cimport numpy as cnp

cnp.import_array()


def fp_batch(
    cnp.complex128_t[::1] zs,
    cnp.float64_t[::1] d,
    double q,
    double t,
    double tol,
    int itmax,
    bint warm_start,
):
    cdef Py_ssize_t mpts = zs.shape[0]
    cdef Py_ssize_t pdim = d.shape[0]
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] out = np.empty(mpts, dtype=np.complex128)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] res_out = np.empty(mpts, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] it_out = np.empty(mpts, dtype=np.int64)
    cdef double complex z, m, b, zeta, rhs, acc, m_new
    cdef double om, res, res_prev
    cdef Py_ssize_t i, j
    cdef int it, used
    cdef bint have_prev = False
    cdef double complex prev = 0

    for i in range(mpts):
        z = zs[i]
        if warm_start and have_prev:
            m = prev
        else:
            acc = 0
            for j in range(pdim):
                acc = acc + 1.0 / (d[j] - z)
            m = acc / pdim
        om = 0.5
        res_prev = 1e308
        res = 1e308
        used = 0
        for it in range(itmax):
            used = it + 1
            b = 1.0 + t * q * m
            zeta = b * b * z - t * (1.0 - q) * b
            acc = 0
            for j in range(pdim):
                acc = acc + b / (d[j] - zeta)
            rhs = acc / pdim
            res = abs(rhs - m)
            m_new = (1.0 - om) * m + om * rhs
            if z.imag > 0 and m_new.imag <= 0:
                om = om * 0.5
                if om < 1e-6:
                    break
                continue
            if res > res_prev and om > 1e-3:
                om = om * 0.5
            m = m_new
            res_prev = res
            if res < tol * max(1.0, abs(m)):
                break
        out[i] = m
        res_out[i] = res
        it_out[i] = used
        prev = m
        have_prev = True
    return out, res_out, it_out
