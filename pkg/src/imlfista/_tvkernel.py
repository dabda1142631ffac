"""Compiled dual FISTA loop for the prox of ``gamma * lam * TV``.

Fuses ``D^T``, ``D`` and the ball projection into two sweeps per inner
iteration. Arithmetic follows :func:`imlfista.proxsmooth.inexact_prox`
step for step; only the summation order of the stopping norms differs.
"""

import math

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None


def _dual_tv_loop(x, u, v, step, radius, tol, max_inner):
    rows, cols = x.shape
    q = np.empty((rows, cols))
    t = 1.0
    it = 0
    capped = True
    while it < max_inner:
        it += 1
        # q = x - D^T v
        for i in range(rows):
            for j in range(cols):
                s = 0.0
                if j < cols - 1:
                    s += v[0, i, j]
                if j > 0:
                    s -= v[0, i, j - 1]
                if i < rows - 1:
                    s += v[1, i, j]
                if i > 0:
                    s -= v[1, i - 1, j]
                q[i, j] = x[i, j] - s
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        c = (t - 1.0) / t_new
        dn2 = 0.0
        un2 = 0.0
        for i in range(rows):
            for j in range(cols):
                gh = 0.0
                if j < cols - 1:
                    gh = q[i, j] - q[i, j + 1]
                gv = 0.0
                if i < rows - 1:
                    gv = q[i, j] - q[i + 1, j]
                gh = gh * step + v[0, i, j]
                gv = gv * step + v[1, i, j]
                nrm = math.sqrt(gh * gh + gv * gv)
                scale = radius / max(nrm, radius)
                nh = gh * scale
                nv = gv * scale
                dh = nh - u[0, i, j]
                dv = nv - u[1, i, j]
                dn2 += dh * dh + dv * dv
                un2 += nh * nh + nv * nv
                u[0, i, j] = nh
                u[1, i, j] = nv
                v[0, i, j] = nh + dh * c
                v[1, i, j] = nv + dv * c
        t = t_new
        un = math.sqrt(un2)
        if math.sqrt(dn2) <= tol * un or un == 0.0:
            capped = False
            break
    return t, it, capped


if numba is not None:
    _dual_tv_loop = numba.njit(cache=True, nogil=True)(_dual_tv_loop)


def available() -> bool:
    return numba is not None


def dual_tv(x, u0, step, radius, tol, max_inner):
    """Run the loop from dual point ``u0`` (already feasible).

    Returns ``(u, v, t, iterations, capped)`` with ``u`` and ``v`` as
    ``(rows, cols, 2)`` views of direction-major storage.
    """
    u = np.ascontiguousarray(np.moveaxis(u0, -1, 0), dtype=np.float64).copy()
    v = u.copy()
    t, it, capped = _dual_tv_loop(np.ascontiguousarray(x, dtype=np.float64), u, v,
                                  float(step), float(radius), float(tol), int(max_inner))
    return np.moveaxis(u, 0, -1), np.moveaxis(v, 0, -1), t, it, capped
