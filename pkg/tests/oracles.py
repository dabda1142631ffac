"""Straight-line reference implementations used by the solver tests."""

import math

import numpy as np


def tv(x):
    out = np.zeros(x.shape + (2,))
    out[:, :-1, 0] = -np.diff(x, axis=1)
    out[:-1, :, 1] = -np.diff(x, axis=0)
    return out


def tv_t(p):
    h, v = p[..., 0].copy(), p[..., 1].copy()
    h[:, -1] = 0.0
    v[-1, :] = 0.0
    out = h.copy()
    out[:, 1:] -= h[:, :-1]
    out += v
    out[1:, :] -= v[:-1, :]
    return out


def dual_prox(x, radius, L, u, tol, max_inner):
    """Dual FISTA for prox of radius*TV; stops on relative dual change."""
    u = u * np.minimum(1.0, radius / np.maximum(np.sqrt((u**2).sum(-1, keepdims=True)), 1e-300))
    v, t = u, 1.0
    for _ in range(max_inner):
        w = v + tv(x - tv_t(v)) / L
        nrm = np.sqrt((w**2).sum(-1, keepdims=True))
        u_new = w * (radius / np.maximum(nrm, radius))
        t_new = (1 + math.sqrt(1 + 4 * t * t)) / 2
        v = u_new + (t - 1) / t_new * (u_new - u)
        done = np.linalg.norm(u_new - u) <= tol * np.linalg.norm(u_new)
        u, t = u_new, t_new
        if done:
            break
    return x - tv_t(u), u


def objective(Ac, Ar, z, lam, x):
    r = Ac @ x @ Ar.T - z
    return 0.5 * np.sum(r * r) + lam * np.sum(np.sqrt((tv(x) ** 2).sum(-1)))


def inertial_fb(Ac, Ar, z, lam, x0, tau, L_D, iters, d=1.0, a=4.0, tol=1e-8, max_inner=500):
    """FB (d=0) or FISTA-type (d>0) loop with warm-started inexact TV prox and SIP."""
    x = y = x0.copy()
    u = np.zeros(x0.shape + (2,))
    xs, fs = [x0.copy()], [objective(Ac, Ar, z, lam, x0)]
    t = 1.0
    for k in range(iters):
        w = y - tau * (Ac.T @ (Ac @ y @ Ar.T - z) @ Ar)
        x_new, u = dual_prox(w, tau * lam, L_D, u, tol, max_inner)
        t_next = ((k + a) / a) ** d
        alpha = (t - 1) / t_next
        y = x_new + alpha * (x_new - x)
        x, t = x_new, t_next
        f = objective(Ac, Ar, z, lam, x)
        if f > fs[-1]:
            tol = max(tol / 10, 1e-16)
        xs.append(x.copy())
        fs.append(f)
    return xs, fs
