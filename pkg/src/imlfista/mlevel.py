"""Multilevel machinery: transfer operators, coarse models and V-cycles.

A :class:`Hierarchy` holds one :class:`LevelProblem` per resolution (index
0 is the fine level) and the restriction between consecutive levels. A
coarse correction restricts the current fine point, adds the linear shift
that makes the coarse gradient coherent with the smoothed fine gradient,
runs a few inertial gradient steps (after recursing to the next coarser
level), prolongs the displacement and scales it so the smoothed fine
objective does not increase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import singledispatch
from typing import Optional

import numpy as np

from .filters import QmfFilter, get_filter
from .imgcore import ConfigError, DimensionError, objective
from .linops import (Identity, InpaintMask, LinearMap, NltvOperator, SeparableBlur,
                     TvOperator, nltv_build)
from .proxsmooth import GroupNorm, moreau_grad_composed, moreau_value

DEFAULT_GAMMA = 1e-2
TAU_BAR_HALVINGS = 10


# --------------------------------------------------------------------------
# transfer operators

def decimated_toeplitz(coeffs, n: int, offset: int = 0, boundary: str = "periodic") -> np.ndarray:
    """Every other row of the ``n x n`` Toeplitz matrix generated by ``coeffs``.

    Row ``i`` carries ``coeffs[k]`` in column ``2i + offset + k``. Columns
    outside ``[0, n)`` wrap around (``periodic``) or are dropped (``zero``).
    """
    if n % 2:
        raise DimensionError(f"cannot decimate an odd dimension ({n})")
    if boundary not in ("periodic", "zero"):
        raise ConfigError(f"unknown boundary {boundary!r}")
    mat = np.zeros((n // 2, n))
    for i in range(n // 2):
        for k, c in enumerate(coeffs):
            j = 2 * i + offset + k
            if boundary == "periodic":
                mat[i, j % n] += c
            elif 0 <= j < n:
                mat[i, j] += c
    return mat


class TransferOperator(LinearMap):
    """Separable restriction ``R = R_r (x) R_c`` with prolongation ``nu R^T``.

    ``apply`` restricts and ``adjoint`` is the plain transpose; use
    :meth:`prolong` for the (possibly scaled) prolongation.
    """

    def __init__(self, row_factor, col_factor, nu: float = 1.0, filt: Optional[QmfFilter] = None):
        self.row_factor = np.asarray(row_factor, dtype=np.float64)
        self.col_factor = np.asarray(col_factor, dtype=np.float64)
        if nu <= 0:
            raise ValueError("nu must be positive")
        self.nu = nu
        self.filter = filt
        self.in_shape = (self.col_factor.shape[1], self.row_factor.shape[1])
        self.coarse_shape = (self.col_factor.shape[0], self.row_factor.shape[0])

    def _mul(self, x, left, right):
        xm = np.moveaxis(x, (0, 1), (-2, -1))
        return np.moveaxis(left @ xm @ right, (-2, -1), (0, 1))

    def apply(self, x):
        self._check(x)
        return self._mul(x, self.col_factor, self.row_factor.T)

    restrict = apply

    def adjoint(self, w):
        if tuple(w.shape[:2]) != self.coarse_shape:
            raise DimensionError(f"coarse array has shape {w.shape}, expected {self.coarse_shape}")
        return self._mul(w, self.col_factor.T, self.row_factor)

    def prolong(self, w):
        out = self.adjoint(w)
        return out if self.nu == 1.0 else self.nu * out

    @property
    def gain(self) -> float:
        """Scale applied to a constant image by one restriction."""
        return float(self.col_factor.sum(axis=1).mean() * self.row_factor.sum(axis=1).mean())


def build_transfer(filt, fine_dims, nu: float = 1.0, boundary: Optional[str] = None) -> TransferOperator:
    if isinstance(filt, str):
        filt = get_filter(filt)
    rows, cols = fine_dims[:2]
    if rows % 2 or cols % 2:
        raise DimensionError(f"fine dimensions {fine_dims} must be even")
    if filt.name == "dyadic":
        offset, boundary = -1, boundary or "zero"
    else:
        offset, boundary = 0, boundary or "periodic"
    rf = decimated_toeplitz(filt.coeffs, cols, offset, boundary)
    cf = decimated_toeplitz(filt.coeffs, rows, offset, boundary)
    return TransferOperator(rf, cf, nu=nu, filt=filt)


# --------------------------------------------------------------------------
# coarse operators

def coarsen_blur(blur: SeparableBlur, T: TransferOperator) -> SeparableBlur:
    """Galerkin coarse blur ``R A R^T``, still in Kronecker form."""
    rf = T.row_factor @ blur.row_factor @ T.row_factor.T
    cf = T.col_factor @ blur.col_factor @ T.col_factor.T
    return SeparableBlur(rf, cf)


def coarsen_mask(mask: InpaintMask, coarse_dims=None) -> InpaintMask:
    """Keep coarse pixel (i, j) iff fine pixel (2i, 2j) is observed."""
    rows, cols = mask.kept.shape
    if rows % 2 or cols % 2:
        raise DimensionError("mask dimensions must be even to decimate")
    kept = mask.kept[::2, ::2]
    if coarse_dims is not None and kept.shape != tuple(coarse_dims[:2]):
        raise DimensionError(f"decimated mask {kept.shape} does not match {coarse_dims}")
    return InpaintMask(kept)


@singledispatch
def coarsen_operator(op, T: TransferOperator) -> LinearMap:
    raise ConfigError(f"no coarse version defined for {type(op).__name__}")


@coarsen_operator.register
def _(op: SeparableBlur, T):
    return coarsen_blur(op, T)


@coarsen_operator.register
def _(op: InpaintMask, T):
    return coarsen_mask(op, T.coarse_shape)


@coarsen_operator.register
def _(op: Identity, T):
    return Identity(T.coarse_shape)


@coarsen_operator.register
def _(op: TvOperator, T):
    return TvOperator(*T.coarse_shape)


@coarsen_operator.register
def _(op: NltvOperator, T):
    if op.reference is None:
        raise ConfigError("NLTV operator has no reference image to coarsen")
    # undo the restriction gain so patch distances stay on the fine intensity scale
    ref = T.restrict(op.reference) / T.gain
    return nltv_build(ref, **op.params)


# --------------------------------------------------------------------------
# level problems

@dataclass
class LevelProblem:
    """``1/2 ||A x - z||^2 + lam ||D x||_{2,1}`` and its smoothed version.

    The smoothed regularizer is ``lam * env_gamma(||.||_{2,1})(D x)``: the
    envelope width ``gamma`` applies to the unit group norm, so it is a
    threshold in pixel-difference units and can be shared across levels
    while ``lam`` changes. In terms of the envelope of ``g = lam ||.||``
    this is parameter ``gamma / lam`` (see :attr:`smoothing`).
    """

    A: LinearMap
    D: LinearMap
    z: np.ndarray
    lam: float
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        self.z = np.asarray(self.z, dtype=np.float64)
        self.g = GroupNorm(self.lam)

    @property
    def shape(self):
        return self.z.shape

    @property
    def beta_data(self) -> float:
        return self.A.norm_sq()

    @property
    def smoothing(self) -> float:
        """Envelope parameter for ``g = lam ||.||_{2,1}``."""
        return self.gamma / self.lam

    @property
    def beta_total(self) -> float:
        """Lipschitz constant of the smoothed objective's gradient."""
        if self.lam == 0.0:
            return self.beta_data
        return self.beta_data + self.lam * self.D.norm_sq() / self.gamma

    @property
    def eta1(self) -> float:
        """Gap constant: ``R - eta1*gamma <= R_smooth <= R``."""
        return 0.5 * self.lam * self.z.size

    def objective(self, x) -> float:
        return objective(self, x)

    def data_grad(self, x):
        return self.A.adjoint(self.A.apply(x) - self.z)

    def smooth_value(self, x, v=None) -> float:
        r = self.A.apply(x) - self.z
        val = 0.5 * float(np.vdot(r, r))
        if self.lam != 0.0:
            val += moreau_value(self.g, self.smoothing, self.D.apply(x))
        if v is not None:
            val += float(np.vdot(v, x))
        return val

    def smooth_grad(self, x, v=None):
        grad = self.data_grad(x)
        if self.lam != 0.0:
            grad = grad + moreau_grad_composed(self.g, self.smoothing, self.D, x)
        if v is not None:
            grad = grad + v
        return grad


@dataclass
class Hierarchy:
    levels: list
    transfers: list = field(default_factory=list)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def fine(self) -> LevelProblem:
        return self.levels[0]

    def summary(self) -> str:
        lines = []
        for i, lv in enumerate(self.levels):
            lines.append(
                f"level {i}: shape={lv.shape} A={type(lv.A).__name__} D={type(lv.D).__name__} "
                f"lam={lv.lam:.4g} gamma={lv.gamma:.4g} |A|^2={lv.beta_data:.4g} "
                f"beta_total={lv.beta_total:.4g}"
            )
            if i < len(self.transfers):
                T = self.transfers[i]
                name = T.filter.name if T.filter is not None else "custom"
                lines.append(f"  transfer {name}: {T.in_shape} -> {T.coarse_shape}")
        return "\n".join(lines)


def build_hierarchy(fine: LevelProblem, levels: int, filt="sym10", gamma_coarse=None,
                    boundary: Optional[str] = None) -> Hierarchy:
    """Stack ``levels`` resolutions below and including ``fine``.

    Each coarse level uses ``z_H = R z_h``, the coarsened ``A``, ``D``
    rebuilt at the coarse size, ``lam_H = lam_h / 4`` and
    ``gamma_H = gamma_coarse`` (default: the fine ``gamma``).
    """
    if levels < 1:
        raise ConfigError("need at least one level")
    rows, cols = fine.shape[:2]
    div = 2 ** (levels - 1)
    if rows % div or cols % div:
        raise ConfigError(f"shape {fine.shape[:2]} not divisible by 2^{levels - 1}")
    if isinstance(filt, str):
        filt = get_filter(filt)
    gamma_coarse = fine.gamma if gamma_coarse is None else gamma_coarse
    out = [fine]
    transfers = []
    for _ in range(levels - 1):
        cur = out[-1]
        T = build_transfer(filt, cur.shape, boundary=boundary)
        out.append(LevelProblem(
            A=coarsen_operator(cur.A, T),
            D=coarsen_operator(cur.D, T),
            z=T.restrict(cur.z),
            lam=cur.lam / 4.0,
            gamma=gamma_coarse,
        ))
        transfers.append(T)
    return Hierarchy(out, transfers)


# --------------------------------------------------------------------------
# coarse corrections

@dataclass
class CoarseCall:
    s0: np.ndarray
    v: np.ndarray
    m: int
    coherence_residual: float = 0.0


def coherence_shift(fine: LevelProblem, coarse: LevelProblem, T: TransferOperator,
                    y_fine, m: int = 5, v_fine=None) -> CoarseCall:
    """Start point and linear shift making ``grad F_H(R y) = R grad F_h^smooth(y)``.

    ``v_fine`` is the fine level's own shift when it is itself a coarse
    model inside a V-cycle.
    """
    s0 = T.restrict(y_fine)
    target = T.restrict(fine.smooth_grad(y_fine, v_fine))
    v = target - coarse.smooth_grad(s0)
    res = coarse.smooth_grad(s0, v) - target
    denom = float(np.linalg.norm(target))
    rel = float(np.linalg.norm(res)) / denom if denom > 0 else float(np.linalg.norm(res))
    return CoarseCall(s0, v, m, rel)


def tau_bar_search(problem: LevelProblem, y, direction, v=None,
                   max_halvings: int = TAU_BAR_HALVINGS) -> float:
    """Largest ``2^-j`` (j <= max_halvings) not increasing the smoothed objective."""
    f0 = problem.smooth_value(y, v)
    tau = 1.0
    for _ in range(max_halvings + 1):
        f = problem.smooth_value(y + tau * direction, v)
        if math.isfinite(f) and f <= f0:
            return tau
        tau *= 0.5
    return 0.0


def coarse_cycle(hier: Hierarchy, level: int, call: CoarseCall, log=None) -> np.ndarray:
    """V-cycle at ``hier.levels[level]`` started from ``call.s0``.

    Recurses once to the next coarser level (if any), then performs
    ``call.m`` inertial gradient steps on the shifted smoothed model with
    step ``1/beta_total``. The lowest-objective iterate is returned, so the
    result never increases the coarse objective.
    """
    prob = hier.levels[level]
    s0 = call.s0
    if call.m <= 0:
        return s0
    f0 = prob.smooth_value(s0, call.v)
    if not math.isfinite(f0):
        return s0
    s = s0
    if level + 1 < hier.n_levels:
        T = hier.transfers[level]
        sub = coherence_shift(prob, hier.levels[level + 1], T, s, call.m, v_fine=call.v)
        sm = coarse_cycle(hier, level + 1, sub, log)
        d = T.prolong(sm - sub.s0)
        tb = tau_bar_search(prob, s, d, call.v)
        if log is not None:
            log.append(dict(level=level + 1, coherence=sub.coherence_residual, tau_bar=tb))
        if tb > 0:
            s = s + tb * d
    step = 1.0 / prob.beta_total
    best, f_best = s, prob.smooth_value(s, call.v)
    if not math.isfinite(f_best):
        return s0
    prev = s
    t = 1.0
    for _ in range(call.m):
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = s + ((t - 1.0) / t_next) * (s - prev)
        s_new = y - step * prob.smooth_grad(y, call.v)
        f_new = prob.smooth_value(s_new, call.v)
        if not math.isfinite(f_new):
            return s0
        if f_new <= f_best:
            best, f_best = s_new, f_new
        prev, s, t = s, s_new, t_next
    return best if f_best <= f0 else s0


@dataclass
class MLResult:
    y_bar: np.ndarray
    correction_norm: float
    tau_bar: float
    info: dict


def ml_step(hier: Hierarchy, y, m: int = 5, tau: Optional[float] = None) -> MLResult:
    """One multilevel correction of the fine point ``y``.

    ``info`` records the quantities needed to audit the step: fine
    objective before/after, smoothed objective before/after, the allowed
    increase ``eta1 * gamma``, the gradient-error norm ``||e||`` and its
    bound ``tau * tau_bar * (beta + 1/tau) * ||P(s_m - s_0)||`` (when the
    fine step ``tau`` is given).
    """
    if hier.n_levels < 2:
        return MLResult(y, 0.0, 0.0, {})
    fine = hier.fine
    T = hier.transfers[0]
    call = coherence_shift(fine, hier.levels[1], T, y, m)
    cycle_log = [dict(level=1, coherence=call.coherence_residual)]
    sm = coarse_cycle(hier, 1, call, cycle_log)
    d = T.prolong(sm - call.s0)
    tb = tau_bar_search(fine, y, d)
    y_bar = y + tb * d if tb > 0 else y
    corr = float(np.linalg.norm(d))
    info = dict(
        F_y=fine.objective(y), F_ybar=fine.objective(y_bar),
        Fs_y=fine.smooth_value(y), Fs_ybar=fine.smooth_value(y_bar),
        eta_gamma=fine.eta1 * fine.gamma, coherence=call.coherence_residual,
        cycle=cycle_log, tau_bar=tb, correction_norm=corr,
    )
    if tau is not None:
        e = tau * (fine.data_grad(y) - fine.data_grad(y_bar)) + (y_bar - y)
        info["e_norm"] = float(np.linalg.norm(e))
        info["e_bound"] = tau * tb * (fine.beta_data + 1.0 / tau) * corr
    return MLResult(y_bar, corr, tb, info)
