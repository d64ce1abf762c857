"""Optional numba kernels for the per-step hot loops.

Everything here has a pure numpy/scipy fallback; numba only removes the
per-call dispatch overhead that dominates once meshes reach a few
thousand tets. Kernels are single-threaded with a fixed evaluation
order, so results stay bit-reproducible across runs.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:                                    # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap


@njit(cache=True)
def assemble_rotated(ke, rot, slots, nnz):
    """CSR data of sum_e P_e K_e P_e^T, P_e = blockdiag(R_e x4).

    `slots` maps each of the E*144 element entries to its CSR slot.
    """
    e_count = ke.shape[0]
    data = np.zeros(nnz)
    t = np.empty((12, 12))
    buf = np.empty((12, 12))
    for e in range(e_count):
        r = rot[e]
        k = ke[e]
        # T = K_e P^T (right-multiply each 3-column block by R^T)
        for a in range(12):
            for lnode in range(4):
                c = 3 * lnode
                k0 = k[a, c]
                k1 = k[a, c + 1]
                k2 = k[a, c + 2]
                t[a, c] = k0 * r[0, 0] + k1 * r[0, 1] + k2 * r[0, 2]
                t[a, c + 1] = k0 * r[1, 0] + k1 * r[1, 1] + k2 * r[1, 2]
                t[a, c + 2] = k0 * r[2, 0] + k1 * r[2, 1] + k2 * r[2, 2]
        # buf = P T (left-multiply each 3-row block by R)
        for knode in range(4):
            c = 3 * knode
            for b in range(12):
                t0 = t[c, b]
                t1 = t[c + 1, b]
                t2 = t[c + 2, b]
                buf[c, b] = r[0, 0] * t0 + r[0, 1] * t1 + r[0, 2] * t2
                buf[c + 1, b] = r[1, 0] * t0 + r[1, 1] * t1 + r[1, 2] * t2
                buf[c + 2, b] = r[2, 0] * t0 + r[2, 1] * t1 + r[2, 2] * t2
        base = e * 144
        for a in range(12):
            for b in range(12):
                data[slots[base + a * 12 + b]] += buf[a, b]
    return data
