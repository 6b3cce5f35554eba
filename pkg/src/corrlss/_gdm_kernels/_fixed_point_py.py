"""NumPy fallback for the free-convolution fixed point.

Semantics must match _fixed_point.pyx exactly (seeding, damping schedule,
stopping rule); only the inner sum is vectorized.
"""
from __future__ import annotations

import numpy as np


def fp_batch(zs, d, q, t, tol, itmax, warm_start):
    zs = np.asarray(zs, dtype=complex)
    d = np.asarray(d, dtype=float)
    pdim = d.size
    out = np.empty(zs.size, dtype=complex)
    res_out = np.empty(zs.size, dtype=float)
    it_out = np.empty(zs.size, dtype=np.int64)
    prev = None
    for i, z in enumerate(zs):
        if warm_start and prev is not None:
            m = prev
        else:
            m = np.mean(1.0 / (d - z))
        om = 0.5
        res_prev = np.inf
        res = np.inf
        used = 0
        for it in range(itmax):
            used = it + 1
            b = 1.0 + t * q * m
            zeta = b * b * z - t * (1.0 - q) * b
            rhs = np.mean(b / (d - zeta))
            res = abs(rhs - m)
            m_new = (1.0 - om) * m + om * rhs
            if z.imag > 0 and m_new.imag <= 0:
                om *= 0.5
                if om < 1e-6:
                    break
                continue
            if res > res_prev and om > 1e-3:
                om *= 0.5
            m = m_new
            res_prev = res
            if res < tol * max(1.0, abs(m)):
                break
        out[i] = m
        res_out[i] = res
        it_out[i] = used
        prev = m
    return out, res_out, it_out
