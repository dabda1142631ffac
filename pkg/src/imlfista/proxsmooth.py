"""Group-norm regularizers, Moreau smoothing and the inexact prox of ``g o D``.

``g(u) = lam * sum_i ||u^i||_2`` where the groups ``u^i`` live on the last
axis of a difference field. The prox of ``gamma * g o D`` has no closed
form; it is approximated by FISTA on the dual problem (a ball-constrained
least squares), warm-started across calls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

from . import _tvkernel
from .imgcore import group_norms

TOL_FLOOR = 1e-16
DEFAULT_MAX_INNER = 500


@dataclass(frozen=True)
class GroupNorm:
    lam: float
    p: int = 2

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.p != 2:
            raise NotImplementedError("only the l2 inner norm is supported")

    def value(self, u: np.ndarray) -> float:
        if self.lam == 0.0:
            return 0.0
        return self.lam * float(np.sum(group_norms(u)))


def group_prox(u: np.ndarray, theta: float) -> np.ndarray:
    """Block soft-thresholding ``(1 - theta/||u^i||)_+ u^i``."""
    if theta == 0.0:
        return np.array(u, copy=True)
    scale = group_norms(u)
    np.maximum(scale, theta, out=scale)
    np.divide(theta, scale, out=scale)
    np.subtract(1.0, scale, out=scale)
    return u * scale[..., None]


def ball_project(u: np.ndarray, radius: float) -> np.ndarray:
    """Projection on ``{||u^i|| <= radius}``, i.e. ``u - group_prox(u, radius)``."""
    if radius == 0.0:
        return np.zeros_like(u)
    scale = group_norms(u)
    np.maximum(scale, radius, out=scale)
    np.divide(radius, scale, out=scale)
    return u * scale[..., None]


def moreau_value(g: GroupNorm, gamma: float, u: np.ndarray) -> float:
    """Moreau envelope of ``g`` with parameter ``gamma`` evaluated at ``u``."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if g.lam == 0.0:
        return 0.0
    p = group_prox(u, gamma * g.lam)
    r = u - p
    return g.value(p) + float(np.vdot(r, r)) / (2.0 * gamma)


def moreau_grad_composed(g: GroupNorm, gamma: float, D, x: np.ndarray) -> np.ndarray:
    """Gradient of ``x -> env_gamma(g)(D x)``, ``(||D||^2/gamma)``-Lipschitz."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if g.lam == 0.0:
        return np.zeros(x.shape)
    dx = D.apply(x)
    return D.adjoint(dx - group_prox(dx, gamma * g.lam)) / gamma


@dataclass(frozen=True)
class ProxTolerance:
    tol: float = 1e-8
    max_inner: int = DEFAULT_MAX_INNER

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if self.max_inner < 1:
            raise ValueError("max_inner must be >= 1")


def sip_update(tol: ProxTolerance, f_curr: float, f_prev: float) -> ProxTolerance:
    """Divide the tolerance by 10 when the outer objective went up."""
    if f_curr > f_prev:
        return replace(tol, tol=max(tol.tol / 10.0, TOL_FLOOR))
    return tol


@dataclass
class DualState:
    u: np.ndarray
    v: np.ndarray
    t: float = 1.0

    @classmethod
    def zeros(cls, shape) -> "DualState":
        return cls(np.zeros(shape), np.zeros(shape), 1.0)


class ProxResult(NamedTuple):
    z: np.ndarray
    state: Optional[DualState]
    inner_iters: int
    capped: bool


def inexact_prox(x: np.ndarray, D, g: GroupNorm, gamma: float, tol: ProxTolerance,
                 warm: Optional[DualState] = None, compiled: Optional[bool] = None) -> ProxResult:
    """Approximate ``prox_{gamma g o D}(x)`` as ``x - D^T u`` with dual FISTA.

    The dual iterate is kept feasible by the ball projection, so the output
    is a type-2 approximation. Iterations stop once the relative change of
    consecutive dual iterates drops below ``tol.tol``; reaching
    ``tol.max_inner`` sets ``capped`` instead of raising.

    For single-channel TV the loop runs in a compiled kernel when numba is
    available (``compiled=None`` picks it automatically, ``False`` forces
    the NumPy loop).
    """
    if g.lam == 0.0:
        return ProxResult(np.array(x, copy=True), warm, 0, False)
    radius = gamma * g.lam
    step = 1.0 / D.norm_sq()
    u = warm.u if warm is not None else np.zeros(D.apply(x).shape)
    if u.shape != x.shape + (D.k_dirs,):
        raise ValueError(f"warm dual state has shape {u.shape}, expected {x.shape + (D.k_dirs,)}")
    u = ball_project(u, radius)
    if compiled is None:
        compiled = _tvkernel.available()
    if compiled and type(D).__name__ == "TvOperator" and x.ndim == 2:
        u, v, t, it, capped = _tvkernel.dual_tv(x, u, step, radius, tol.tol, tol.max_inner)
        return ProxResult(x - D.adjoint(u), DualState(u, v, t), it, capped)
    v = u
    t = 1.0
    capped = True
    it = 0
    while it < tol.max_inner:
        it += 1
        grad = D.apply(x - D.adjoint(v))
        grad *= step
        grad += v
        u_new = ball_project(grad, radius)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        diff = np.subtract(u_new, u, out=grad)
        dn = float(np.linalg.norm(diff))
        un = float(np.linalg.norm(u_new))
        diff *= (t - 1.0) / t_new
        v = np.add(u_new, diff, out=diff)
        u, t = u_new, t_new
        if dn <= tol.tol * un or un == 0.0:
            capped = False
            break
    return ProxResult(x - D.adjoint(u), DualState(u, v, t), it, capped)


def prox_gap(x: np.ndarray, D, g: GroupNorm, gamma: float, u: np.ndarray) -> float:
    """Duality gap of the prox problem at dual point ``u``, in units of ``R``.

    With ``z = x - D^T u`` this bounds ``R(z) + ||z - x||^2/(2 gamma)`` minus
    its minimum, hence ``||z - prox(x)|| <= sqrt(2 gamma * gap)``.
    """
    z = x - D.adjoint(u)
    r = z - x
    primal = gamma * g.value(D.apply(z)) + 0.5 * float(np.vdot(r, r))
    dual = 0.5 * float(np.vdot(x, x)) - 0.5 * float(np.vdot(z, z))
    return max(primal - dual, 0.0) / gamma
