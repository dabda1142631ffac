"""Inexact multilevel inertial proximal methods for image restoration."""

from .imgcore import ConfigError, DimensionError, objective, snr
from .linops import (Identity, InpaintMask, MatrixMap, NltvOperator, SeparableBlur,
                     TvOperator, gaussian_psf, nltv_build, op_norm_sq)
from .mlevel import (Hierarchy, LevelProblem, build_hierarchy, build_transfer,
                     coarse_cycle, coherence_shift, ml_step, tau_bar_search)
from .proxsmooth import (DualState, GroupNorm, ProxTolerance, group_prox, inexact_prox,
                         moreau_grad_composed, moreau_value, sip_update)
from .solver import RunTrace, SolverConfig, inertia, rate_check, run

__version__ = "0.1.0"
