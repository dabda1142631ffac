"""Outer IML FISTA loop; FB, FISTA and IML FB are configurations of it."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .imgcore import ConfigError, check_shape, snr
from .mlevel import Hierarchy, ml_step
from .proxsmooth import ProxTolerance, inexact_prox, prox_gap, sip_update

TRACE_FIELDS = ["k", "objective", "seconds", "tol", "ml_used", "inner_iters", "snr"]


def first_iterations(k: int, r: int) -> bool:
    """Default trigger: coarse corrections on the first outer iterations."""
    return True


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of one run.

    ``a`` must exceed ``max(1, (2d)^(1/d))`` when ``d > 0``. ``tau=None``
    selects ``0.99 / ||A||^2``. Coarse corrections happen while fewer than
    ``p`` have been made and ``ml_condition(k, r)`` holds.
    """

    d: float = 1.0
    a: float = 4.0
    p: int = 2
    m: int = 5
    tau: Optional[float] = None
    tol0: float = 1e-8
    max_inner: int = 500
    max_outer: int = 100
    ml_enabled: bool = True
    seed: int = 0
    stop_rtol: float = 1e-12
    stop_window: int = 10
    track_gap: bool = False
    ml_condition: Callable[[int, int], bool] = first_iterations

    def __post_init__(self):
        if not 0.0 <= self.d <= 1.0:
            raise ConfigError("inertia exponent d must lie in [0, 1]")
        if self.d > 0 and not self.a > max(1.0, (2.0 * self.d) ** (1.0 / self.d)):
            raise ConfigError(f"a={self.a} must exceed max(1, (2d)^(1/d)) for d={self.d}")
        if self.p < 0 or self.m < 0 or self.max_outer < 0:
            raise ConfigError("p, m and max_outer must be nonnegative")

    @classmethod
    def fb(cls, **kw):
        return cls(d=0.0, a=2.0, ml_enabled=False, **kw)

    @classmethod
    def iml_fb(cls, **kw):
        return cls(d=0.0, a=2.0, ml_enabled=True, **kw)

    @classmethod
    def fista(cls, **kw):
        kw.setdefault("d", 1.0)
        return cls(ml_enabled=False, **kw)

    @classmethod
    def iml_fista(cls, **kw):
        kw.setdefault("d", 1.0)
        return cls(ml_enabled=True, **kw)

    def with_(self, **kw) -> "SolverConfig":
        return replace(self, **kw)


def inertia(k: int, cfg: SolverConfig):
    """``(t_{k+1}, alpha_k)`` for ``t_0 = 1``, ``t_j = ((j - 1 + a)/a)^d``."""
    if k < 0:
        raise ValueError("iteration index must be >= 0")
    t_k = 1.0 if k == 0 else ((k - 1 + cfg.a) / cfg.a) ** cfg.d
    t_next = ((k + cfg.a) / cfg.a) ** cfg.d
    return t_next, (t_k - 1.0) / t_next


@dataclass
class IterRecord:
    k: int
    objective: float
    seconds: float
    tol: float
    ml_used: bool = False
    inner_iters: int = 0
    snr: float = math.nan
    capped: bool = False
    prox_gap: float = math.nan


@dataclass
class RunTrace:
    records: list = field(default_factory=list)
    ml_log: list = field(default_factory=list)
    x: Optional[np.ndarray] = None
    status: str = "max_outer"

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    @property
    def tols(self) -> np.ndarray:
        return np.array([r.tol for r in self.records])

    @property
    def snrs(self) -> np.ndarray:
        return np.array([r.snr for r in self.records])

    def to_csv(self, path, extra: Optional[dict] = None) -> None:
        """Write one row per record; ``extra`` maps column name -> sequence."""
        extra = extra or {}
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_FIELDS + list(extra))
            for i, r in enumerate(self.records):
                w.writerow([r.k, repr(r.objective), repr(r.seconds), repr(r.tol),
                            int(r.ml_used), r.inner_iters, repr(r.snr)]
                           + [repr(float(v[i])) for v in extra.values()])


def read_trace_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run(hier: Hierarchy, cfg: SolverConfig, x0, reference=None) -> RunTrace:
    """Run ``cfg.max_outer`` iterations (or until the objective stalls).

    Each iteration: optional coarse correction of ``y``, gradient step on
    the data term, inexact prox of ``tau * g o D`` warm-started from the
    previous dual point, inertial extrapolation, then the tolerance update
    (divided by 10 when the objective increased).
    """
    fine = hier.fine
    x0 = np.asarray(x0, dtype=np.float64)
    check_shape(x0, fine.shape, "x0")
    beta = fine.beta_data
    tau = cfg.tau if cfg.tau is not None else 0.99 / beta
    if not 0.0 < tau < 1.0 / beta:
        raise ConfigError(f"step {tau} must lie in (0, 1/beta) with beta={beta}")

    trace = RunTrace()
    x = x0.copy()
    y = x0.copy()
    tol = ProxTolerance(cfg.tol0, cfg.max_inner)
    dual = None
    r = 0
    f_prev = fine.objective(x)
    trace.records.append(IterRecord(0, f_prev, 0.0, tol.tol,
                                    snr=snr(reference, x) if reference is not None else math.nan))
    start = time.perf_counter()
    for k in range(cfg.max_outer):
        ml_used = False
        y_bar = y
        if cfg.ml_enabled and hier.n_levels > 1 and r < cfg.p and cfg.ml_condition(k, r):
            res = ml_step(hier, y, cfg.m, tau)
            y_bar = res.y_bar
            r += 1
            ml_used = True
            res.info["k"] = k
            trace.ml_log.append(res.info)
        w = y_bar - tau * fine.data_grad(y_bar)
        used_tol = tol.tol
        px = inexact_prox(w, fine.D, fine.g, tau, tol, dual)
        dual = px.state if px.state is not None else dual
        t_next, alpha = inertia(k, cfg)
        x_new = px.z
        y = x_new + alpha * (x_new - x) if alpha != 0.0 else x_new
        x = x_new
        f = fine.objective(x)
        rec = IterRecord(k + 1, f, time.perf_counter() - start, used_tol, ml_used,
                         px.inner_iters, capped=px.capped)
        if reference is not None:
            rec.snr = snr(reference, x)
        if cfg.track_gap and px.state is not None:
            rec.prox_gap = prox_gap(w, fine.D, fine.g, tau, px.state.u)
        trace.records.append(rec)
        if not math.isfinite(f):
            trace.status = "non_finite"
            break
        tol = sip_update(tol, f, f_prev)
        f_prev = f
        if len(trace.records) > cfg.stop_window:
            f_old = trace.records[-1 - cfg.stop_window].objective
            if abs(f - f_old) <= cfg.stop_rtol * abs(f_old):
                trace.status = "stalled"
                break
    trace.x = x
    return trace


def rate_sequence(trace: RunTrace, f_star: float, d: float) -> np.ndarray:
    """``k^{2d} (F(x_k) - F*)`` for every record."""
    ks = np.array([r.k for r in trace.records], dtype=np.float64)
    return ks ** (2.0 * d) * (trace.objectives - f_star)


def rate_check(trace: RunTrace, f_star: float, d: float, k_min: int = 0,
               k_max: Optional[int] = None, slack: float = 1e-12) -> float:
    """``sup_k k^{2d} (F(x_k) - F*)`` over ``k_min <= k <= k_max``."""
    ks = np.array([r.k for r in trace.records])
    sel = (ks >= k_min) & (ks <= (k_max if k_max is not None else ks.max()))
    objs = trace.objectives[sel]
    if objs.size == 0:
        raise ValueError("no records in the requested range")
    if f_star > objs.min() + slack * max(1.0, abs(f_star)):
        raise ValueError(f"F* = {f_star} lies above the trajectory minimum {objs.min()}")
    return float(np.max(rate_sequence(trace, f_star, d)[sel]))
