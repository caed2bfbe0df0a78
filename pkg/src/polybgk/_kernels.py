"""Compiled inner loops for the solver (transport sweep and fused relaxation update)."""

import numba
import numpy as np

# TBB in this environment is too old and warns on every launch
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

LIMITERS = {"none": 0, "minmod": 1, "vanleer": 2}


@numba.njit(inline="always")
def _limited_slope(dm, dp, kind):
    if kind == 0:
        return 0.0
    if kind == 1:
        if dm * dp <= 0.0:
            return 0.0
        return dm if abs(dm) < abs(dp) else dp
    prod = dm * dp
    if prod <= 0.0:
        return 0.0
    return 2.0 * prod / (dm + dp)


@numba.njit(parallel=True, cache=True)
def transport_sweep(F, out, courant, kind):
    """One finite-volume step of f_t + v1 f_x = 0 on a periodic mesh.

    ``F`` and ``out`` have shape (nx, nv, M) where axis 1 indexes v1 and
    ``courant[a] = v1[a] * dt / dx``.  Face values use the limited
    Lax-Wendroff correction (1 - |c|)/2 * slope on the upwind side.
    """
    nx, nv, M = F.shape
    for a in numba.prange(nv):
        c = courant[a]
        half = 0.5 * (1.0 - abs(c))
        face = np.empty((nx, M))
        for i in range(nx):
            im = (i - 1) % nx
            ip = (i + 1) % nx
            ipp = (i + 2) % nx
            for k in range(M):
                if c >= 0.0:
                    s = _limited_slope(F[i, a, k] - F[im, a, k], F[ip, a, k] - F[i, a, k], kind)
                    face[i, k] = F[i, a, k] + half * s
                else:
                    s = _limited_slope(F[ipp, a, k] - F[ip, a, k], F[ip, a, k] - F[i, a, k], kind)
                    face[i, k] = F[ip, a, k] - half * s
        for i in range(nx):
            im = (i - 1) % nx
            for k in range(M):
                out[i, a, k] = F[i, a, k] - c * (face[i, k] - face[im, k])


@numba.njit(parallel=True, cache=True)
def relax_update(F, Mv, MI, keep, gain, out):
    """out[x] = keep[x] * F[x] + gain[x] * Mv[x] (x) MI[x].

    Shapes: F, out (nx, nv3, ni); Mv (nx, nv3); MI (nx, ni).
    """
    nx, nv3, ni = F.shape
    for x in numba.prange(nx):
        a = keep[x]
        b = gain[x]
        for j in range(nv3):
            bm = b * Mv[x, j]
            for k in range(ni):
                out[x, j, k] = a * F[x, j, k] + bm * MI[x, k]
